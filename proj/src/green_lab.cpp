#include "cuspwalk/green_lab.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

namespace cuspwalk {

// --- ChainSpace -------------------------------------------------------------

ChainSpace::ChainSpace(const WeightedChain& chain) : chain_(&chain) {
  int nmax = chain.params().N_max;
  depth_probs_.resize(nmax + 1);
  for (int d = 0; d <= nmax; ++d) {
    const auto& c = chain.classes(d);
    DepthProbs p;
    p.cayley = d == 0 ? to_double(c.cayley_each) : 0;
    p.down = d > 0 ? to_double(c.down_each) : 0;
    p.lat = d > 0 ? to_double(c.lat_each) : 0;
    p.up = to_double(c.up_each);
    p.m = d == 0 ? to_double(chain.params().m0)
                 : 1.0 / double(chain.context().group().growth(0, chain.context().jump_radius(d)));
    depth_probs_[d] = p;
  }
}

const ChainSpace::DepthProbs& ChainSpace::probs(int depth) const {
  if (depth < 0 || depth >= int(depth_probs_.size()))
    throw CwError(ErrKind::Budget, "depth beyond horizon in chain space");
  return depth_probs_[depth];
}

double ChainSpace::m_of(uint32_t id) const { return probs(depth_of(id)).m; }

uint32_t ChainSpace::intern(const Vertex& v) {
  auto [it, fresh] = index_.emplace(vertex_key(v), uint32_t(keys_.size()));
  if (fresh) {
    keys_.push_back(&it->first);
    rows_.emplace_back();
  }
  return it->second;
}

ChainSpace::RowView ChainSpace::row(uint32_t id) {
  RowRef& ref = rows_[id];
  if (!ref.built) {
    const CuspContext& ctx = chain_->context();
    const GroupModel& G = ctx.group();
    Vertex v = vertex(id);
    const bool two_dim = (G.id() == GroupId::Z2FreeZ);
    std::vector<uint32_t> block;
    uint32_t n_cayley = 0, n_down = 0, n_lat = 0, n_up = 0;
    if (v.depth == 0) {
      for (const GroupElement& s : G.generators()) block.push_back(intern({G.mul(v.g, s), 0}));
      n_cayley = uint32_t(G.cayley_degree());
      GroupElement c = G.coset_of(v.g, 0);
      HVec h = G.parabolic_offset(v.g, 0);
      int64_t r = ctx.jump_radius(1);
      for (int64_t i = 0; i < l1_ball_size(r, two_dim); ++i) {
        HVec d = unrank_l1(i, r, two_dim);
        block.push_back(intern({G.attach_offset(c, {h.x + d.x, h.y + d.y}, 0), 1}));
        ++n_up;
      }
    } else {
      GroupElement c = G.coset_of(v.g, 0);
      HVec h = G.parabolic_offset(v.g, 0);
      int64_t rd = ctx.jump_radius(v.depth);
      std::vector<uint32_t> lat;
      for (int64_t i = 0; i < l1_ball_size(rd, two_dim); ++i) {
        HVec d = unrank_l1(i, rd, two_dim);
        HVec t{h.x + d.x, h.y + d.y};
        block.push_back(intern({G.attach_offset(c, t, 0), v.depth - 1}));
        ++n_down;
        if (!(d == HVec{0, 0})) lat.push_back(intern({G.attach_offset(c, t, 0), v.depth}));
      }
      for (uint32_t t : lat) block.push_back(t);
      n_lat = uint32_t(lat.size());
      int64_t ru = ctx.jump_radius(v.depth + 1);
      for (int64_t i = 0; i < l1_ball_size(ru, two_dim); ++i) {
        HVec d = unrank_l1(i, ru, two_dim);
        block.push_back(intern({G.attach_offset(c, {h.x + d.x, h.y + d.y}, 0), v.depth + 1}));
        ++n_up;
      }
    }
    // interning may have recursed into rows_? no: intern only appends; safe to
    // write the ref now (note rows_ may have grown, ref may dangle -> reindex)
    RowRef& ref2 = rows_[id];
    ref2.offset = arena_.size();
    ref2.n_cayley = n_cayley;
    ref2.n_down = n_down;
    ref2.n_lat = n_lat;
    ref2.n_up = n_up;
    arena_.insert(arena_.end(), block.begin(), block.end());
    ref2.built = true;
  }
  const RowRef& r = rows_[id];
  const DepthProbs& p = probs(depth_of(id));
  RowView out;
  out.tgt = arena_.data() + r.offset;
  out.n_cayley = r.n_cayley;
  out.n_down = r.n_down;
  out.n_lat = r.n_lat;
  out.n_up = r.n_up;
  out.p_cayley = p.cayley;
  out.p_down = p.down;
  out.p_lat = p.lat;
  out.p_up = p.up;
  return out;
}

// --- Propagator -------------------------------------------------------------

Propagator::Propagator(ChainSpace& S, const Vertex& origin, PropagationOptions opt)
    : S_(&S), opt_(opt) {
  origin_ = S.intern(origin);
  cur_.assign(S.size(), 0);
  if (origin_ >= cur_.size()) cur_.resize(origin_ + 1, 0);
  cur_[origin_] = 1;
  support_ = {origin_};
}

double Propagator::total_mass() const {
  long double t = 0;
  for (uint32_t id : support_) t += cur_[id];
  return double(t);
}

void Propagator::step() {
  std::sort(support_.begin(), support_.end());
  nsupport_.clear();
  if (nxt_.size() < cur_.size()) nxt_.resize(cur_.size(), 0);
  for (uint32_t id : support_) {
    long double w = cur_[id];
    if (w == 0) continue;
    ChainSpace::RowView r = S_->row(id);  // may grow the space
    if (nxt_.size() < S_->size()) nxt_.resize(S_->size(), 0);
    const uint32_t* t = r.tgt;
    auto push = [&](uint32_t tgt, long double add) {
      if (nxt_[tgt] == 0) nsupport_.push_back(tgt);
      nxt_[tgt] += add;
    };
    for (uint32_t i = 0; i < r.n_cayley; ++i) push(t[i], w * r.p_cayley);
    t += r.n_cayley;
    for (uint32_t i = 0; i < r.n_down; ++i) push(t[i], w * r.p_down);
    t += r.n_down;
    for (uint32_t i = 0; i < r.n_lat; ++i) push(t[i], w * r.p_lat);
    t += r.n_lat;
    for (uint32_t i = 0; i < r.n_up; ++i) push(t[i], w * r.p_up);
    cur_[id] = 0;
  }
  if (cur_.size() < nxt_.size()) cur_.resize(nxt_.size(), 0);
  cur_.swap(nxt_);
  support_.swap(nsupport_);
  ++steps_;
  if (absorbing_ >= 0 && size_t(absorbing_) < cur_.size() && cur_[absorbing_] != 0) {
    absorbed_ += cur_[absorbing_];
    cur_[absorbing_] = 0;
    support_.erase(std::remove(support_.begin(), support_.end(), uint32_t(absorbing_)),
                   support_.end());
  }
  prune();
}

void Propagator::prune() {
  std::vector<uint32_t> kept;
  kept.reserve(support_.size());
  for (uint32_t id : support_) {
    long double w = cur_[id];
    if (w == 0) continue;
    if (S_->depth_of(id) > opt_.depth_prune ||
        (opt_.mass_floor > 0 && w < (long double)opt_.mass_floor)) {
      lost_ += w;
      cur_[id] = 0;
      continue;
    }
    kept.push_back(id);
  }
  support_.swap(kept);
  if (support_.size() <= opt_.support_cap) return;
  std::nth_element(support_.begin(), support_.begin() + opt_.support_cap, support_.end(),
                   [&](uint32_t a, uint32_t b) { return cur_[a] > cur_[b]; });
  for (size_t i = opt_.support_cap; i < support_.size(); ++i) {
    lost_ += cur_[support_[i]];
    cur_[support_[i]] = 0;
  }
  support_.resize(opt_.support_cap);
}

// --- Green tables -----------------------------------------------------------

double GreenTable::tail_bound(double m_y) const {
  if (tail_delta >= 1 || tail_delta <= 0) return std::numeric_limits<double>::infinity();
  return m_y * tail_C * std::pow(tail_delta, steps_run + 1) / (1 - tail_delta);
}

SpectralFit fit_return_decay(const std::vector<double>& diag_even) {
  SpectralFit f;
  f.series = diag_even;
  std::vector<double> xs, ys;
  for (size_t n = 1; n <= diag_even.size(); ++n) {
    if (diag_even[n - 1] <= 0) continue;
    xs.push_back(2.0 * double(n));
    ys.push_back(std::log(diag_even[n - 1]));
  }
  if (xs.size() < 3) return f;  // delta_hat = 1 flags a failed/degenerate fit
  LineFit lf = fit_line(xs, ys);
  f.delta_hat = std::exp(lf.slope);
  f.C_hat = std::exp(lf.intercept);
  f.r2 = lf.r2;
  return f;
}

GreenTable build_green_table(ChainSpace& S, const Vertex& source, PropagationOptions opt,
                             const std::vector<uint32_t>& watched, double rel_tol) {
  GreenTable T;
  T.source = source;
  Propagator prop(S, source, opt);
  T.source_id = prop.origin_id();
  T.G.assign(S.size(), 0);
  if (T.source_id >= T.G.size()) T.G.resize(T.source_id + 1, 0);
  T.G[T.source_id] = 1;  // p^(0) term
  double msrc = S.m_of(T.source_id);
  const int check_every = 8, min_steps = 24;
  bool satisfied = false;
  while (prop.steps() < opt.max_steps && !satisfied) {
    prop.step();
    if (T.G.size() < S.size()) T.G.resize(S.size(), 0);
    for (uint32_t id : prop.support()) T.G[id] += double(prop.mass(id));
    if (prop.steps() % 2 == 0) T.diag_even.push_back(double(prop.mass(T.source_id)) / msrc);
    if (prop.steps() >= min_steps && prop.steps() % check_every == 0 && !watched.empty()) {
      SpectralFit fit = fit_return_decay(T.diag_even);
      if (fit.delta_hat < 1) {
        T.steps_run = prop.steps();
        T.tail_C = fit.C_hat;
        T.tail_delta = fit.delta_hat;
        satisfied = true;
        for (uint32_t w : watched) {
          double g = T.green(w);
          if (g <= 0 || T.tail_bound(S.m_of(w)) > rel_tol * g) {
            satisfied = false;
            break;
          }
        }
      }
    }
  }
  T.steps_run = prop.steps();
  T.lost_mass = prop.lost_mass();
  SpectralFit fit = fit_return_decay(T.diag_even);
  T.tail_C = fit.C_hat;
  T.tail_delta = fit.delta_hat;
  T.tail_r2 = fit.r2;
  return T;
}

// --- exact propagation --------------------------------------------------------

Rat ExactDistribution::total() const {
  Rat t = 0;
  for (auto& [v, w] : atoms) t += w;
  return t;
}

ExactDistribution nstep_exact(const WeightedChain& chain, const Vertex& origin, int n,
                              size_t support_budget) {
  const CuspContext& ctx = chain.context();
  std::map<std::string, Rat> cur;
  cur[vertex_key(origin)] = 1;
  for (int s = 0; s < n; ++s) {
    std::map<std::string, Rat> nxt;
    for (auto& [key, w] : cur) {
      Vertex v = vertex_from_key(key);
      const auto& c = chain.classes(v.depth);
      for (const Vertex& t : ctx.neighbors(v)) {
        Rat pr;
        if (v.depth == 0)
          pr = (t.depth == 0) ? c.cayley_each : c.up_each;
        else if (t.depth == v.depth - 1)
          pr = c.down_each;
        else if (t.depth == v.depth)
          pr = c.lat_each;
        else
          pr = c.up_each;
        nxt[vertex_key(t)] += w * pr;
      }
      if (nxt.size() > support_budget)
        throw CwError(ErrKind::Budget, "nstep_exact: support budget exceeded");
    }
    cur.swap(nxt);
  }
  ExactDistribution out;
  out.origin = origin;
  out.steps = n;
  out.atoms.reserve(cur.size());
  for (auto& [key, w] : cur) out.atoms.push_back({vertex_from_key(key), w});
  return out;
}

FloatDistribution nstep_distribution(ChainSpace& S, const Vertex& origin, int n,
                                     int rational_steps, PropagationOptions opt) {
  FloatDistribution out;
  out.origin = origin;
  out.steps = n;
  int exact_n = std::min(n, rational_steps);
  ExactDistribution ex = nstep_exact(S.chain(), origin, exact_n);
  if (n == exact_n) {
    for (auto& [v, w] : ex.atoms) out.atoms.push_back({v, to_double(w)});
    return out;
  }
  // continue in the float engine, seeded with the rounded exact state
  std::vector<long double> cur(S.size(), 0), nxt;
  std::vector<uint32_t> support;
  for (auto& [v, w] : ex.atoms) {
    uint32_t id = S.intern(v);
    if (id >= cur.size()) cur.resize(id + 1, 0);
    cur[id] = to_double(w);
    support.push_back(id);
  }
  long double lost = 0;
  for (int s = exact_n; s < n; ++s) {
    std::sort(support.begin(), support.end());
    std::vector<uint32_t> nsup;
    nxt.assign(std::max(cur.size(), S.size()), 0);
    for (uint32_t id : support) {
      long double w = cur[id];
      if (w == 0) continue;
      auto r = S.row(id);
      if (nxt.size() < S.size()) nxt.resize(S.size(), 0);
      const uint32_t* t = r.tgt;
      auto push = [&](uint32_t tgt, long double add) {
        if (nxt[tgt] == 0) nsup.push_back(tgt);
        nxt[tgt] += add;
      };
      for (uint32_t i = 0; i < r.n_cayley; ++i) push(t[i], w * r.p_cayley);
      t += r.n_cayley;
      for (uint32_t i = 0; i < r.n_down; ++i) push(t[i], w * r.p_down);
      t += r.n_down;
      for (uint32_t i = 0; i < r.n_lat; ++i) push(t[i], w * r.p_lat);
      t += r.n_lat;
      for (uint32_t i = 0; i < r.n_up; ++i) push(t[i], w * r.p_up);
    }
    if (cur.size() < nxt.size()) cur.resize(nxt.size(), 0);
    cur.swap(nxt);
    support.swap(nsup);
    std::vector<uint32_t> kept;
    for (uint32_t id : support) {
      if (cur[id] == 0) continue;
      if (S.depth_of(id) > opt.depth_prune) {
        lost += cur[id];
        cur[id] = 0;
        continue;
      }
      kept.push_back(id);
    }
    support.swap(kept);
    if (support.size() > opt.support_cap) {
      std::nth_element(support.begin(), support.begin() + opt.support_cap, support.end(),
                       [&](uint32_t a, uint32_t b) { return cur[a] > cur[b]; });
      for (size_t i = opt.support_cap; i < support.size(); ++i) {
        lost += cur[support[i]];
        cur[support[i]] = 0;
      }
      support.resize(opt.support_cap);
    }
  }
  std::sort(support.begin(), support.end());
  for (uint32_t id : support)
    if (cur[id] != 0) out.atoms.push_back({S.vertex(id), double(cur[id])});
  out.lost_mass = double(lost);
  return out;
}

// --- tube propagation -----------------------------------------------------------

TubeGreen::TubeGreen(const WeightedChain& chain, const Vertex& x, const Vertex& z,
                     int tube_radius, int depth_cap)
    : chain_(&chain), x_(x), z_(z) {
  const CuspContext& ctx = chain.context();
  auto path = ctx.geodesic(x, z);
  // multi-source BFS to radius tube_radius, capped in depth
  std::deque<std::pair<uint32_t, int>> q;
  auto intern = [&](const Vertex& v) -> uint32_t {
    auto [it, fresh] = index_.emplace(vertex_key(v), uint32_t(verts_.size()));
    if (fresh) verts_.push_back(v);
    return it->second;
  };
  for (const Vertex& v : path) {
    if (v.depth > depth_cap)
      throw CwError(ErrKind::Check, "tube: geodesic dives below the tube depth cap");
    size_t before = verts_.size();
    uint32_t id = intern(v);
    if (verts_.size() > before) q.push_back({id, 0});
  }
  while (!q.empty()) {
    auto [id, d] = q.front();
    q.pop_front();
    if (d == tube_radius) continue;
    Vertex v = verts_[id];
    if (v.depth >= depth_cap) continue;  // do not expand the depth shell
    for (const Vertex& w : ctx.neighbors(v)) {
      if (w.depth > depth_cap) continue;
      size_t before = verts_.size();
      uint32_t wid = intern(w);
      if (verts_.size() > before) q.push_back({wid, d + 1});
    }
  }
  // rows restricted to the tube, with per-edge probabilities
  start_.assign(verts_.size() + 1, 0);
  std::vector<std::pair<uint32_t, double>> tmp;
  std::vector<uint64_t> row_begin(verts_.size() + 1, 0);
  m_.resize(verts_.size());
  for (uint32_t id = 0; id < verts_.size(); ++id) {
    Vertex v = verts_[id];
    m_[id] = to_double(chain.m_weight(v));
    const auto& cls = chain.classes(v.depth);
    double p_cay = v.depth == 0 ? to_double(cls.cayley_each) : 0;
    double p_dn = v.depth > 0 ? to_double(cls.down_each) : 0;
    double p_lt = v.depth > 0 ? to_double(cls.lat_each) : 0;
    double p_up = to_double(cls.up_each);
    for (const Vertex& w : ctx.neighbors(v)) {
      auto it = index_.find(vertex_key(w));
      if (it == index_.end()) continue;
      double pr;
      if (v.depth == 0)
        pr = (w.depth == 0) ? p_cay : p_up;
      else if (w.depth == v.depth - 1)
        pr = p_dn;
      else if (w.depth == v.depth)
        pr = p_lt;
      else
        pr = p_up;
      tmp.push_back({it->second, pr});
    }
    row_begin[id + 1] = tmp.size();
  }
  adj_.resize(tmp.size());
  prob_.resize(tmp.size());
  for (size_t i = 0; i < tmp.size(); ++i) {
    adj_[i] = tmp[i].first;
    prob_[i] = tmp[i].second;
  }
  for (uint32_t id = 0; id <= verts_.size(); ++id) start_[id] = uint32_t(row_begin[id]);
}

void TubeGreen::propagate(const Vertex& from, double tail_C, double tail_delta, double rel_tol,
                          int max_steps) {
  auto it = index_.find(vertex_key(from));
  if (it == index_.end()) throw CwError(ErrKind::Check, "tube: source not in tube");
  uint32_t src = it->second;
  std::vector<long double> cur(verts_.size(), 0), nxt(verts_.size(), 0);
  cur[src] = 1;
  G_.assign(verts_.size(), 0);
  G_[src] = 1;
  lost_ = 0;
  uint32_t xw = index_.at(vertex_key(x_)), zw = index_.at(vertex_key(z_));
  long double lost = 0;
  int n = 0;
  while (n < max_steps) {
    long double outmass = 0;
    std::fill(nxt.begin(), nxt.end(), 0.0L);
    for (uint32_t id = 0; id < verts_.size(); ++id) {
      long double w = cur[id];
      if (w == 0) continue;
      long double kept = 0;
      for (uint32_t e = start_[id]; e < start_[id + 1]; ++e) {
        nxt[adj_[e]] += w * prob_[e];
        kept += w * prob_[e];
      }
      outmass += w - kept;
    }
    lost += outmass;
    cur.swap(nxt);
    ++n;
    for (uint32_t id = 0; id < verts_.size(); ++id) G_[id] += double(cur[id]);
    if (n >= 24 && n % 16 == 0 && tail_delta > 0 && tail_delta < 1) {
      double tb_x = m_[xw] * tail_C * std::pow(tail_delta, n + 1) / (1 - tail_delta);
      double tb_z = m_[zw] * tail_C * std::pow(tail_delta, n + 1) / (1 - tail_delta);
      double gx = G_[xw] > 0 ? G_[xw] : 1e-300, gz = G_[zw] > 0 ? G_[zw] : 1e-300;
      if (tb_x / gx < rel_tol && tb_z / gz < rel_tol) break;
    }
  }
  steps_ = n;
  lost_ = double(lost);
}

double TubeGreen::green(const Vertex& y) const {
  auto it = index_.find(vertex_key(y));
  if (it == index_.end() || G_.empty()) return 0;
  return G_[it->second];
}

// --- Green metric --------------------------------------------------------------

GreenMetric::GreenMetric(ChainSpace& S, Options opt) : S_(&S), opt_(opt) {}

std::pair<double, double> GreenMetric::decay_constants() {
  const GreenTable& T0 = table(0);
  return {T0.tail_C, T0.tail_delta};
}

const GreenTable& GreenMetric::table(int k, const std::vector<Vertex>& watched) {
  std::vector<uint32_t> wids;
  for (const Vertex& v : watched) wids.push_back(S_->intern(v));
  auto it = tables_.find(k);
  if (it != tables_.end()) {
    bool ok = true;
    for (uint32_t w : wids) {
      double g = it->second.green(w);
      if (g <= 0 || it->second.tail_bound(S_->m_of(w)) > opt_.rel_tol * g) {
        ok = false;
        break;
      }
    }
    if (ok) return it->second;
    tables_.erase(it);
  }
  Vertex src{S_->context().group().identity(), k};
  GreenTable T = build_green_table(*S_, src, opt_.prop, wids, opt_.rel_tol);
  return tables_.emplace(k, std::move(T)).first->second;
}

double GreenMetric::green_diag(int depth) {
  const GreenTable& T = table(depth);
  return T.green(T.source_id);
}

double GreenMetric::green(const Vertex& x, const Vertex& y, double* rel_tail) {
  if (rel_tail) *rel_tail = std::numeric_limits<double>::infinity();
  const GroupModel& G = S_->context().group();
  bool use_x = x.depth <= opt_.direct_depth;
  if (!use_x) {
    if (y.depth > opt_.direct_depth) return std::numeric_limits<double>::quiet_NaN();
    // reversibility: m(x) G(x,y) = m(y) G(y,x)
    double rt;
    double gyx = green(y, x, &rt);
    if (rel_tail) *rel_tail = rt;
    if (std::isnan(gyx)) return gyx;
    return gyx * S_->m_of(S_->intern(y)) / S_->m_of(S_->intern(x));
  }
  const GreenTable& T = table(x.depth);
  Vertex ty{G.mul(G.inverse(x.g), y.g), y.depth};
  uint32_t tid = S_->intern(ty);
  double g = T.green(tid);
  if (g <= 0) return std::numeric_limits<double>::quiet_NaN();
  if (rel_tail) *rel_tail = T.tail_bound(S_->m_of(tid)) / g;
  return g;
}

void GreenMetric::calibrate() {
  const CuspContext& ctx = S_->context();
  const GroupModel& G = ctx.group();
  Rng rng(opt_.seed);
  Vertex origin{G.identity(), 0};
  std::vector<Vertex> pts{origin};
  Vertex cur = origin;
  while (pts.size() < size_t(opt_.calibration_pairs)) {
    cur = S_->chain().sample_step(cur, rng);
    if (ctx.distance(origin, cur) > 7 || cur.depth > opt_.direct_depth) {
      cur = origin;
      continue;
    }
    pts.push_back(cur);
  }
  double sup = 1;
  auto green_over_m = [&](const Vertex& a, const Vertex& b) -> double {
    double rt;
    double g = (a == b) ? green_diag(a.depth) : green(a, b, &rt);
    if (std::isnan(g)) return 0;
    return g / S_->m_of(S_->intern(b));
  };
  for (size_t t = 0; t + 2 < pts.size(); t += 3) {
    const Vertex &x = pts[t], &y = pts[t + 1], &z = pts[t + 2];
    if (y == x || y == z) continue;
    double gxy_m = green_over_m(x, y);
    sup = std::max(sup, gxy_m);
    double gyz = (y == z) ? green_diag(y.depth) : green(y, z, nullptr);
    double gxz = (x == z) ? green_diag(x.depth) : green(x, z, nullptr);
    if (gxy_m > 0 && gyz > 0 && gxz > 0 && !std::isnan(gyz) && !std::isnan(gxz))
      sup = std::max(sup, gxy_m * gyz / gxz);
  }
  C_G_ = M_E * sup;
  calibrated_ = true;
  // in-horoball decay rate from direct values (tents kept shallow)
  std::vector<double> xs, ys;
  for (int d1 = 1; d1 <= std::min(opt_.direct_depth, 4); ++d1) {
    for (int64_t j : {1, 2, 3, 5, 8, 12, 20, 40}) {
      Vertex a{G.identity(), d1};
      Vertex b{G.attach_offset(G.identity(), {j, 0}, 0), d1};
      int64_t dxy = ctx.distance(a, b);
      if (dxy < 1 || dxy > 9) continue;
      try {
        double r = rho_direct(a, b);
        xs.push_back(double(dxy));
        ys.push_back(r);
      } catch (const CwError&) {
        continue;
      }
    }
  }
  if (xs.size() >= 4) {
    LineFit lf = fit_line(xs, ys);
    kappa_ = lf.slope;
    kappa_icpt_ = std::max(0.0, lf.intercept);
  } else {
    kappa_ = std::log(to_double(S_->chain().params().a)) *
             double(G.parabolic(0).growth_order);
    kappa_icpt_ = 0;
  }
}

double GreenMetric::rho_direct(const Vertex& x, const Vertex& y) {
  if (x == y) return 0;
  if (!calibrated_) throw CwError(ErrKind::Check, "green metric not calibrated");
  double rt;
  double g = green(x, y, &rt);
  if (std::isnan(g)) throw CwError(ErrKind::Check, "green metric: value unavailable");
  if (rt > opt_.rel_tol) throw CwError(ErrKind::Check, "green metric: not converged");
  return -std::log(g / (C_G_ * S_->m_of(S_->intern(y))));
}

double GreenMetric::rho_tube(const Vertex& x, const Vertex& y) {
  if (x == y) return 0;
  if (!calibrated_) throw CwError(ErrKind::Check, "green metric not calibrated");
  auto [tc, td] = decay_constants();
  TubeGreen tube(S_->chain(), x, y, opt_.tube_radius, opt_.tube_depth_cap);
  tube.propagate(x, tc, td, opt_.rel_tol, opt_.tube_max_steps);
  double g = tube.green(y);
  if (g <= 0) throw CwError(ErrKind::Check, "tube green: target unreached");
  return -std::log(g / (C_G_ * to_double(S_->chain().m_weight(y))));
}

double GreenMetric::rho(const Vertex& x, const Vertex& y) {
  if (x == y) return 0;
  // near pairs straight from the depth tables
  if (x.depth <= opt_.direct_depth && y.depth <= opt_.direct_depth &&
      S_->context().distance(x, y) <= opt_.segment_len) {
    try {
      return rho_direct(x, y);
    } catch (const CwError&) {
      // fall through to the tube route
    }
  }
  std::vector<Vertex> path = S_->context().geodesic(x, y);
  int max_depth = 0;
  for (const Vertex& v : path) max_depth = std::max(max_depth, v.depth);
  if (max_depth <= opt_.tube_depth_cap) {
    try {
      return rho_tube(x, y);
    } catch (const CwError&) {
      // fall through to chaining
    }
  }
  // chained evaluation: shallow stretches through tubes, deep in-horoball
  // arcs through the fitted growth-rate regime
  const int D = opt_.tube_depth_cap;
  double total = 0;
  size_t i = 0;
  const size_t last = path.size() - 1;
  while (i < last) {
    if (path[i].depth > D || path[i + 1].depth > D) {
      size_t j = i + 1;
      while (j < last && path[j].depth > D) ++j;
      total += kappa_ * double(j - i) + kappa_icpt_;
      i = j;
    } else {
      size_t j = i;
      while (j < last && path[j + 1].depth <= D) ++j;
      if (j == i) j = i + 1;
      try {
        total += (S_->context().distance(path[i], path[j]) <= opt_.segment_len)
                     ? rho_direct(path[i], path[j])
                     : rho_tube(path[i], path[j]);
      } catch (const CwError&) {
        total += kappa_ * double(j - i) + kappa_icpt_;
      }
      i = j;
    }
  }
  return total;
}

GreenMetric::TripleF GreenMetric::first_passage_triples(const Vertex& x, const Vertex& z,
                                                        const std::vector<Vertex>& ys) {
  auto [tc, td] = decay_constants();
  TubeGreen tube(S_->chain(), x, z, opt_.tube_radius, opt_.tube_depth_cap);
  tube.propagate(x, tc, td, opt_.rel_tol, opt_.tube_max_steps);
  TripleF out;
  double gz = tube.green(z);
  if (gz <= 0) throw CwError(ErrKind::Check, "tube: z unreached from x");
  out.fxz = gz / green_diag(z.depth);
  std::vector<double> g_from_x(ys.size());
  for (size_t i = 0; i < ys.size(); ++i) g_from_x[i] = tube.green(ys[i]);
  // second pass from z serves every F(y, z) through reversibility:
  // m(y) G(y,z) = m(z) G(z,y)
  TubeGreen back(S_->chain(), x, z, opt_.tube_radius, opt_.tube_depth_cap);
  back.propagate(z, tc, td, opt_.rel_tol, opt_.tube_max_steps);
  double mz = to_double(S_->chain().m_weight(z));
  for (size_t i = 0; i < ys.size(); ++i) {
    const Vertex& y = ys[i];
    double gy = g_from_x[i];
    out.fxy.push_back(gy > 0 ? gy / green_diag(y.depth) : 0);
    double gzy = back.green(y);
    double my = to_double(S_->chain().m_weight(y));
    double gyz = gzy > 0 ? gzy * mz / my : 0;
    out.fyz.push_back(gyz > 0 ? gyz / green_diag(z.depth) : 0);
  }
  return out;
}

double GreenMetric::product(const Vertex& u, const Vertex& v, const Vertex& base) {
  return 0.5 * (rho(base, u) + rho(base, v) - rho(u, v));
}

double GreenMetric::first_passage(const Vertex& x, const Vertex& y) {
  if (x == y) return 1.0;  // h_y = min{n >= 0}
  double g = green(x, y, nullptr);
  if (std::isnan(g)) throw CwError(ErrKind::Check, "first_passage: Green value unavailable");
  return g / green_diag(y.depth);
}

double first_passage_absorption(ChainSpace& S, const Vertex& x, const Vertex& y, int steps,
                                PropagationOptions opt) {
  if (x == y) return 1.0;
  Propagator prop(S, x, opt);
  prop.set_absorbing(S.intern(y));
  for (int n = 0; n < steps; ++n) prop.step();
  return prop.absorbed();
}

// --- verifiers ------------------------------------------------------------------

static std::vector<Vertex> walk_positions(GreenMetric& gm, size_t count, int max_dist,
                                          int max_depth, uint64_t seed) {
  const CuspContext& ctx = gm.space().context();
  const GroupModel& G = ctx.group();
  Rng rng(seed);
  Vertex origin{G.identity(), 0};
  Vertex cur = origin;
  std::vector<Vertex> out;
  while (out.size() < count) {
    cur = gm.space().chain().sample_step(cur, rng);
    if (ctx.distance(origin, cur) > max_dist) {
      cur = origin;
      continue;
    }
    if (cur.depth <= max_depth) out.push_back(cur);
  }
  return out;
}

static InequalityReport finish_report(std::string kind, std::vector<double>& wit) {
  InequalityReport rep;
  rep.kind = std::move(kind);
  rep.samples = wit.size();
  double mh = 0, mf = 0;
  for (size_t i = 0; i < wit.size(); ++i) {
    mf = std::max(mf, wit[i]);
    if (i < wit.size() / 2) mh = std::max(mh, wit[i]);
  }
  rep.max_constant = mf;
  rep.half_max_constant = mh;
  rep.stable = mf > 0 && (mf - mh) / mf < 0.20;
  rep.witnesses = std::move(wit);
  return rep;
}

InequalityReport verify_harnack1(GreenMetric& gm, size_t samples, uint64_t seed) {
  const CuspContext& ctx = gm.space().context();
  auto pts = walk_positions(gm, 3 * samples + 3, 8, gm.options().direct_depth, seed);
  std::vector<double> wit;
  for (size_t t = 0; t + 2 < pts.size() && wit.size() < samples; t += 3) {
    const Vertex &x = pts[t], &y = pts[t + 1], &z = pts[t + 2];
    if (x == y || x == z || z == y) continue;
    double gxy = gm.green(x, y, nullptr), gzy = gm.green(z, y, nullptr);
    if (std::isnan(gxy) || std::isnan(gzy) || gzy <= 0) continue;
    double d = double(ctx.distance(x, z));
    if (d < 1) continue;
    wit.push_back(std::pow(gxy / gzy, 1.0 / d));  // G(x,y) <= C^d(x,z) G(z,y)
  }
  return finish_report("harnack1", wit);
}

InequalityReport verify_harnack2(GreenMetric& gm, size_t samples, uint64_t seed) {
  const CuspContext& ctx = gm.space().context();
  auto pts = walk_positions(gm, 2 * samples + 2, 8, gm.options().direct_depth, seed);
  std::vector<double> wit;
  for (size_t t = 0; t + 1 < pts.size() && wit.size() < samples; t += 2) {
    Vertex x = pts[t], y = pts[t + 1];
    if (x == y) continue;
    double gxx = gm.green_diag(x.depth);
    double gyx = gm.green(y, x, nullptr);
    if (std::isnan(gyx) || gyx <= 0) continue;
    double d = double(ctx.distance(x, y));
    double mx = gm.space().m_of(gm.space().intern(x));
    wit.push_back(std::pow(mx * gxx / gyx, 1.0 / d));
  }
  return finish_report("harnack2", wit);
}

InequalityReport verify_triangle(GreenMetric& gm, size_t samples, uint64_t seed) {
  auto pts = walk_positions(gm, 3 * samples + 3, 8, gm.options().direct_depth, seed);
  std::vector<double> wit;
  for (size_t t = 0; t + 2 < pts.size() && wit.size() < samples; t += 3) {
    Vertex x = pts[t], y = pts[t + 1], z = pts[t + 2];
    if (y == x || y == z) continue;
    double fxy, fyz, fxz;
    try {
      fxy = gm.first_passage(x, y);
      fyz = gm.first_passage(y, z);
      fxz = gm.first_passage(x, z);
    } catch (const CwError&) {
      continue;
    }
    if (fxz <= 0) continue;
    double my = gm.space().m_of(gm.space().intern(y));
    wit.push_back(fxy * fyz / (my * fxz));
  }
  return finish_report("triangle", wit);
}

AnconaReport verify_ancona(GreenMetric& gm, const std::vector<int>& strata, size_t per_stratum,
                           int r, uint64_t seed) {
  const CuspContext& ctx = gm.space().context();
  const GroupModel& G = ctx.group();
  AnconaReport rep;
  rep.strata = strata;
  Rng rng(seed);
  Vertex origin{G.identity(), 0};
  int max_d = *std::max_element(strata.begin(), strata.end());
  const int dcap = gm.options().tube_depth_cap;
  for (int D : strata) {
    double mx = 0;
    size_t got = 0, tries = 0;
    while (got < per_stratum && tries < 60 * per_stratum) {
      ++tries;
      // random geodesic direction: walk far, take the geodesic toward it
      Vertex x = origin;
      Vertex far = origin;
      Rng walk_rng(derive_seed(seed, rng.next()));
      while (ctx.distance(x, far) < max_d + 4)
        far = gm.space().chain().sample_step(far, walk_rng);
      auto path = ctx.geodesic(x, far);
      if (int(path.size()) <= D + 1) continue;
      Vertex z = path[D];
      bool shallow = z.depth <= gm.options().direct_depth;
      for (int t = 0; t <= D && shallow; ++t)
        if (path[t].depth > dcap) shallow = false;
      if (!shallow) continue;
      // several y's along [x,z], jittered within distance r of the geodesic
      std::vector<Vertex> ys;
      size_t want = std::min<size_t>(4, per_stratum - got);
      for (size_t k = 0; k < want; ++k) {
        size_t ti = 2 + rng.below(uint64_t(D - 3));
        Vertex y = path[ti];
        if (r >= 1 && rng.below(2) == 0) {
          auto nbrs = ctx.neighbors(y);
          Vertex cand = nbrs[rng.below(nbrs.size())];
          if (cand.depth <= gm.options().direct_depth && !(cand == x) && !(cand == z)) y = cand;
        }
        if (y == x || y == z || y.depth > gm.options().direct_depth) continue;
        ys.push_back(y);
      }
      if (ys.empty()) continue;
      GreenMetric::TripleF f;
      try {
        f = gm.first_passage_triples(x, z, ys);
      } catch (const CwError&) {
        continue;
      }
      for (size_t k = 0; k < ys.size(); ++k) {
        if (f.fxy[k] <= 0 || f.fyz[k] <= 0 || f.fxz <= 0) continue;
        double my = gm.space().m_of(gm.space().intern(ys[k]));
        mx = std::max(mx, f.fxz * my / (f.fxy[k] * f.fyz[k]));
        ++got;
      }
    }
    rep.max_constant.push_back(mx);
    rep.counts.push_back(got);
  }
  double bottom = rep.max_constant.front(), top = rep.max_constant.back();
  rep.no_growth = bottom > 0 && top <= 1.3 * bottom;
  return rep;
}

IsoperimetricReport verify_isoperimetric(const WeightedChain& chain, const CuspedBall& ball,
                                         size_t sets, uint64_t seed) {
  Rng rng(seed);
  const GroupModel& G = chain.context().group();
  std::vector<uint32_t> interior;
  for (uint32_t i = 0; i < ball.size(); ++i)
    if (ball.interior(i)) interior.push_back(i);
  std::vector<char> in_set(ball.size(), 0);
  auto ratio_of = [&](const std::vector<uint32_t>& A) -> double {
    for (uint32_t id : A) in_set[id] = 1;
    Rat vol = 0, area = 0;
    bool ok = true;
    for (uint32_t id : A) {
      if (!ball.interior(id)) {
        ok = false;
        break;
      }
      Rat m = chain.m_weight(ball.vertex(id));
      vol += m;
      for (auto& [tgt, p] : chain.transition_row_exact(ball, id))
        if (!in_set[tgt]) area += m * p;
    }
    for (uint32_t id : A) in_set[id] = 0;
    if (!ok || area == 0) return -1;
    return to_double(vol / area);
  };
  std::vector<double> ratios;
  {  // the pinned single-vertex case: A = {(e,0)} has ratio exactly 1
    std::vector<uint32_t> A{ball.require({G.identity(), 0})};
    double r0 = ratio_of(A);
    if (r0 > 0) ratios.push_back(r0);
  }
  while (ratios.size() < sets) {
    int shape = int(rng.below(3));
    std::vector<uint32_t> A;
    if (shape == 0) {  // BFS ball
      uint32_t c = interior[rng.below(interior.size())];
      int rad = 1 + int(rng.below(3));
      auto dist = ball.bfs_all(c);
      for (uint32_t i = 0; i < ball.size(); ++i)
        if (dist[i] >= 0 && dist[i] <= rad) A.push_back(i);
    } else if (shape == 1) {  // horoball box over the center's coset
      int n1 = 1 + int(rng.below(3)), n2 = n1 + int(rng.below(3));
      int64_t J = 1 + int64_t(rng.below(6));
      for (int n = n1; n <= n2; ++n)
        for (int64_t j = -J; j <= J; ++j) {
          Vertex v{G.attach_offset(G.identity(), {j, 0}, 0), n};
          if (auto id = ball.find(v)) A.push_back(*id);
        }
    } else {  // random connected cluster
      uint32_t c = interior[rng.below(interior.size())];
      std::vector<uint32_t> frontier{c};
      std::vector<char> seen(ball.size(), 0);
      seen[c] = 1;
      A.push_back(c);
      size_t target = 5 + rng.below(150);
      size_t attempts = 0;
      while (!frontier.empty() && A.size() < target && attempts < 50 * target) {
        ++attempts;
        uint32_t v = frontier[rng.below(frontier.size())];
        auto [b, e] = ball.neighbors(v);
        uint32_t w = b[rng.below(size_t(e - b))];
        if (!seen[w]) {
          seen[w] = 1;
          A.push_back(w);
          frontier.push_back(w);
        }
      }
    }
    bool inside = !A.empty() && A.size() <= 4000;
    for (uint32_t id : A)
      if (!ball.interior(id)) inside = false;
    if (!inside) continue;
    double r = ratio_of(A);
    if (r > 0) ratios.push_back(r);
  }
  IsoperimetricReport rep;
  rep.sets = ratios.size();
  for (size_t i = 0; i < ratios.size(); ++i) {
    rep.kappa_hat = std::max(rep.kappa_hat, ratios[i]);
    if (i < ratios.size() / 2) rep.half_kappa_hat = std::max(rep.half_kappa_hat, ratios[i]);
  }
  rep.stable = rep.kappa_hat > 0 && (rep.kappa_hat - rep.half_kappa_hat) / rep.kappa_hat < 0.20;
  return rep;
}

}  // namespace cuspwalk
