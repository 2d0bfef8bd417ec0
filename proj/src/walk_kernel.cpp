#include "cuspwalk/walk_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cuspwalk {

static Rat growth_at(const GroupModel& G, const Rat& a, int n) {
  return Rat(G.growth(0, rat_pow(a, unsigned(n))));
}

WalkParams solve_params(const GroupModel& G, const Rat& a, const Rat& p, const Rat& q,
                        int N_max) {
  if (a <= 1) throw CwError(ErrKind::Config, "solve_params: need a > 1");
  if (p <= 1)
    throw CwError(ErrKind::Check, "infeasible-parameters: condition (1) unsatisfiable with p <= 1");
  WalkParams wp;
  wp.a = a;
  wp.p = p;
  wp.q = q;
  wp.N_max = N_max;
  Rat ga = growth_at(G, a, 1), ga2 = growth_at(G, a, 2);
  // (1): p0 = g(a) p / (g(a^2) (p-1))
  wp.p0 = ga * p / (ga2 * (p - 1));
  if (wp.p0 <= 1)
    throw CwError(ErrKind::Check, "infeasible-parameters: condition (1) gives p0 <= 1");
  // (4) with c == 1: p_n = q g(a^{n+1})^2 / (g(a^n) g(a^{n+2}))
  wp.p_n.assign(N_max + 1, Rat(0));
  for (int n = 1; n <= N_max; ++n) {
    Rat gn = growth_at(G, a, n), gn1 = growth_at(G, a, n + 1), gn2 = growth_at(G, a, n + 2);
    wp.p_n[n] = q * gn1 * gn1 / (gn * gn2);
  }
  // (3): m0 = p0 g(a^2) / (q g(a)^2)
  wp.m0 = wp.p0 * ga2 / (q * ga * ga);
  ConditionReport rep = validate_params(G, wp);
  wp.alpha = rep.alpha;
  wp.beta = rep.beta;
  if (!rep.all_pass) {
    for (auto& e : rep.entries)
      if (!e.pass)
        throw CwError(ErrKind::Check, "infeasible-parameters: condition (" +
                                          std::to_string(e.condition) + ") fails" +
                                          (e.fail_n >= 0 ? " at n=" + std::to_string(e.fail_n) : "") +
                                          "; " + e.witness);
  }
  // m-node guard: m must separate depths, so nodes stay depth-pure.
  for (int n = 1; n <= N_max; ++n) {
    if (wp.m0 == wp.c_n(n) / growth_at(G, a, n))
      throw CwError(ErrKind::Check,
                    "infeasible-parameters: m0 collides with depth-" + std::to_string(n) +
                        " weight (m-node ambiguity)");
    if (n > 1 && growth_at(G, a, n) == growth_at(G, a, n - 1))
      throw CwError(ErrKind::Check,
                    "infeasible-parameters: growth plateau at depth " + std::to_string(n) +
                        " (m-node ambiguity)");
  }
  return wp;
}

ConditionReport validate_params(const GroupModel& G, const WalkParams& wp) {
  ConditionReport rep;
  const Rat& a = wp.a;
  Rat ga = growth_at(G, a, 1), ga2 = growth_at(G, a, 2);
  auto add = [&](int cond, bool pass, int fail_n, const std::string& wit) {
    rep.entries.push_back({cond, pass, fail_n, wit});
  };

  {  // (1)
    bool ok = wp.p > 1 && wp.p0 > 0;
    Rat lhs = 0;
    if (ok) {
      lhs = Rat(1) / wp.p + ga / (wp.p0 * ga2);
      ok = (lhs == 1);
    }
    std::ostringstream w;
    w << "1/p + g(a)/(p0 g(a^2)) = " << (wp.p > 1 && wp.p0 > 0 ? rat_str(lhs) : "undefined (p <= 1)");
    add(1, ok, -1, w.str());
  }
  {  // (2)
    bool ok = true;
    int bad = -1;
    Rat worst = 0;
    for (int n = 1; n <= wp.N_max && n < int(wp.p_n.size()); ++n) {
      Rat lhs = Rat(1) / wp.q_n(n - 1) +
                growth_at(G, a, n + 1) / (wp.p_n[n] * growth_at(G, a, n + 2));
      if (lhs > worst) worst = lhs;
      if (lhs > 1 && ok) {
        ok = false;
        bad = n;
      }
    }
    std::ostringstream w;
    w << "max over n of 1/q_{n-1} + g(a^{n+1})/(p_n g(a^{n+2})) = " << rat_str(worst);
    add(2, ok, bad, w.str());
  }
  {  // (3)
    Rat lhs = wp.m0 / (wp.p0 * ga2);
    Rat rhs = wp.c_n(1) / (wp.q_n(0) * ga * ga);
    std::ostringstream w;
    w << "m0/(p0 g(a^2)) = " << rat_str(lhs) << " vs c_1/(q_0 g(a)^2) = " << rat_str(rhs);
    add(3, lhs == rhs, -1, w.str());
  }
  {  // (4)
    bool ok = true;
    int bad = -1;
    for (int n = 1; n + 1 <= wp.N_max && n < int(wp.p_n.size()); ++n) {
      Rat lhs = wp.c_n(n) / (growth_at(G, a, n) * wp.p_n[n] * growth_at(G, a, n + 2));
      Rat gn1 = growth_at(G, a, n + 1);
      Rat rhs = wp.c_n(n + 1) / (gn1 * gn1 * wp.q_n(n));
      if (!(lhs == rhs)) {
        ok = false;
        bad = n;
        break;
      }
    }
    add(4, ok, bad, ok ? "exact for all tabulated n" : "reversibility identity broken");
  }
  {  // (5)
    bool ok = true;
    int bad = -1;
    Rat alpha = wp.q;
    if (alpha < 1) alpha = 1;
    for (int n = 1; n <= wp.N_max && n < int(wp.p_n.size()); ++n) {
      if (wp.p_n[n] > alpha) alpha = wp.p_n[n];
      if (wp.q_n(n) > alpha) alpha = wp.q_n(n);
      if (!(wp.p_n[n] > 1 && wp.q_n(n) > 1)) {
        if (ok) bad = n;
        ok = false;
      }
    }
    rep.alpha = alpha;
    std::ostringstream w;
    w << "alpha = " << rat_str(alpha) << " bounds all p_n, q_n, c_n";
    add(5, ok, bad, w.str());
  }
  {  // (6)
    Rat beta = 0;
    for (int n = 1; n <= wp.N_max; ++n) {
      Rat r = wp.q_n(n - 1) * wp.c_n(n + 1) * growth_at(G, a, n) /
              (wp.q_n(n) * wp.c_n(n) * growth_at(G, a, n + 1));
      if (r > beta) beta = r;
    }
    rep.beta = beta;
    std::ostringstream w;
    w << "beta = max ratio = " << rat_str(beta);
    add(6, beta < 1, -1, w.str());
  }
  rep.all_pass = true;
  for (auto& e : rep.entries) rep.all_pass = rep.all_pass && e.pass;
  return rep;
}

std::string ConditionReport::to_string() const {
  std::ostringstream os;
  for (auto& e : entries) {
    os << "condition (" << e.condition << "): " << (e.pass ? "pass" : "FAIL");
    if (!e.pass && e.fail_n >= 0) os << " at n=" << e.fail_n;
    os << "  [" << e.witness << "]\n";
  }
  os << (all_pass ? "all conditions pass" : "validation FAILED") << "\n";
  return os.str();
}

// --- chain ------------------------------------------------------------

WeightedChain::WeightedChain(const CuspContext& ctx, WalkParams wp)
    : ctx_(&ctx), wp_(std::move(wp)) {
  cls_.resize(wp_.N_max + 1);
  for (int d = 0; d <= wp_.N_max; ++d) build_classes(d);
}

void WeightedChain::build_classes(int depth) const {
  const GroupModel& G = ctx_->group();
  DepthClasses c;
  if (depth == 0) {
    c.n_cayley = G.cayley_degree();
    c.cayley_each = Rat(1) / (wp_.p * c.n_cayley);
    c.n_up = G.growth(0, ctx_->jump_radius(1));
    c.up_each = Rat(1) / (wp_.p0 * G.growth(0, ctx_->jump_radius(2)));
    c.up_total = c.up_each * c.n_up;
    c.cum1 = to_double(Rat(1) / wp_.p);  // Cayley block first
    c.cum2 = 1.0;
  } else {
    int n = depth;
    c.n_down = G.growth(0, ctx_->jump_radius(n));
    c.down_each = Rat(1) / (wp_.q_n(n - 1) * c.n_down);
    c.down_total = Rat(1) / wp_.q_n(n - 1);
    c.n_up = G.growth(0, ctx_->jump_radius(n + 1));
    c.up_each = Rat(1) / (wp_.pn(n) * G.growth(0, ctx_->jump_radius(n + 2)));
    c.up_total = c.up_each * c.n_up;
    c.n_lat = c.n_down - 1;
    c.lat_total = 1 - c.down_total - c.up_total;
    if (c.lat_total < 0)
      throw CwError(ErrKind::Check,
                    "negative lateral remainder at depth " + std::to_string(n) +
                        " (condition (2) violated)");
    c.lat_each = c.n_lat > 0 ? c.lat_total / c.n_lat : Rat(0);
    c.cum1 = to_double(c.down_total);
    c.cum2 = to_double(c.down_total + c.up_total);
  }
  cls_[depth] = c;
}

const WeightedChain::DepthClasses& WeightedChain::classes(int depth) const {
  if (depth < 0 || depth > wp_.N_max)
    throw CwError(ErrKind::Budget, "depth beyond horizon N_max");
  return cls_[depth];
}

Rat WeightedChain::m_weight(const Vertex& v) const {
  if (v.depth > wp_.N_max) throw CwError(ErrKind::Budget, "m_weight: depth beyond horizon");
  if (v.depth == 0) return wp_.m0;
  return wp_.c_n(v.depth) / ctx_->group().growth(0, ctx_->jump_radius(v.depth));
}

double WeightedChain::m_weight_d(const Vertex& v) const { return to_double(m_weight(v)); }

std::vector<std::pair<uint32_t, Rat>> WeightedChain::transition_row_exact(
    const CuspedBall& ball, uint32_t id) const {
  if (!ball.interior(id))
    throw CwError(ErrKind::Check, "transition_row: neighborhood not fully inside ball");
  const Vertex& v = ball.vertex(id);
  const DepthClasses& c = classes(v.depth);
  std::vector<std::pair<uint32_t, Rat>> row;
  auto [b, e] = ball.neighbors(id);
  for (const uint32_t* p = b; p != e; ++p) {
    const Vertex& w = ball.vertex(*p);
    Rat pr;
    if (v.depth == 0)
      pr = (w.depth == 0) ? c.cayley_each : c.up_each;
    else if (w.depth == v.depth - 1)
      pr = c.down_each;
    else if (w.depth == v.depth)
      pr = c.lat_each;
    else
      pr = c.up_each;
    row.push_back({*p, pr});
  }
  return row;
}

std::vector<std::pair<Vertex, double>> WeightedChain::transition_row(const Vertex& v) const {
  const DepthClasses& c = classes(v.depth);
  std::vector<std::pair<Vertex, double>> row;
  double d_cay = v.depth == 0 ? to_double(c.cayley_each) : 0;
  double d_up = to_double(c.up_each);
  double d_down = to_double(c.down_each);
  double d_lat = to_double(c.lat_each);
  for (const Vertex& w : ctx_->neighbors(v)) {
    double pr;
    if (v.depth == 0)
      pr = (w.depth == 0) ? d_cay : d_up;
    else if (w.depth == v.depth - 1)
      pr = d_down;
    else if (w.depth == v.depth)
      pr = d_lat;
    else
      pr = d_up;
    row.push_back({w, pr});
  }
  return row;
}

std::vector<Vertex> WeightedChain::m_node(const Vertex& v) const {
  std::vector<Vertex> node{v};
  for (const Vertex& w : ctx_->neighbors(v))
    if (m_weight(w) == m_weight(v)) node.push_back(w);
  return node;
}

// --- l1 ball unranking -----------------------------------------------------

int64_t l1_ball_size(int64_t r, bool two_dim) { return two_dim ? 2 * r * r + 2 * r + 1 : 2 * r + 1; }

int64_t l1_center_rank(int64_t r, bool two_dim) { return two_dim ? r * r + r : r; }

static int64_t isqrt64(int64_t v) {
  int64_t s = int64_t(std::sqrt(double(v)));
  while (s > 0 && s * s > v) --s;
  while ((s + 1) * (s + 1) <= v) ++s;
  return s;
}

HVec unrank_l1(int64_t index, int64_t r, bool two_dim) {
  if (!two_dim) return {index - r, 0};
  int64_t half = (r + 1) * (r + 1);
  if (index >= half) {
    HVec m = unrank_l1(2 * r * r + 2 * r - index, r, true);
    return {-m.x, -m.y};
  }
  int64_t s = isqrt64(index);
  int64_t x = s - r;
  int64_t j = index - s * s;
  int64_t y = j - (r - std::llabs(x));
  return {x, y};
}

Vertex WeightedChain::sample_step(const Vertex& v, Rng& rng) const {
  const DepthClasses& c = classes(v.depth);
  const GroupModel& G = ctx_->group();
  const bool two_dim = (G.id() == GroupId::Z2FreeZ);
  double u = rng.uniform();
  if (v.depth == 0) {
    if (u < c.cum1) {
      const auto& gens = G.generators();
      return {G.mul(v.g, gens[rng.below(gens.size())]), 0};
    }
    GroupElement coset = G.coset_of(v.g, 0);
    HVec h = G.parabolic_offset(v.g, 0);
    int64_t r = ctx_->jump_radius(1);
    HVec d = unrank_l1(int64_t(rng.below(uint64_t(l1_ball_size(r, two_dim)))), r, two_dim);
    return {G.attach_offset(coset, {h.x + d.x, h.y + d.y}, 0), 1};
  }
  GroupElement coset = G.coset_of(v.g, 0);
  HVec h = G.parabolic_offset(v.g, 0);
  if (u < c.cum1) {  // down
    int64_t r = ctx_->jump_radius(v.depth);
    HVec d = unrank_l1(int64_t(rng.below(uint64_t(l1_ball_size(r, two_dim)))), r, two_dim);
    return {G.attach_offset(coset, {h.x + d.x, h.y + d.y}, 0), v.depth - 1};
  }
  if (u < c.cum2) {  // up
    int64_t r = ctx_->jump_radius(v.depth + 1);
    HVec d = unrank_l1(int64_t(rng.below(uint64_t(l1_ball_size(r, two_dim)))), r, two_dim);
    return {G.attach_offset(coset, {h.x + d.x, h.y + d.y}, 0), v.depth + 1};
  }
  // lateral, excluding the center
  int64_t r = ctx_->jump_radius(v.depth);
  int64_t i = int64_t(rng.below(uint64_t(l1_ball_size(r, two_dim) - 1)));
  if (i >= l1_center_rank(r, two_dim)) ++i;
  HVec d = unrank_l1(i, r, two_dim);
  return {G.attach_offset(coset, {h.x + d.x, h.y + d.y}, 0), v.depth};
}

int first_positive_step(const WeightedChain& chain, const CuspedBall& ball, uint32_t x, uint32_t y,
                        int max_n) {
  (void)chain;
  std::vector<char> cur(ball.size(), 0), nxt(ball.size(), 0);
  cur[x] = 1;
  if (x == y) return 0;
  for (int n = 1; n <= max_n; ++n) {
    std::fill(nxt.begin(), nxt.end(), 0);
    for (uint32_t v = 0; v < ball.size(); ++v) {
      if (!cur[v]) continue;
      if (!ball.interior(v)) continue;  // stay where rows are complete
      auto [b, e] = ball.neighbors(v);
      for (const uint32_t* p = b; p != e; ++p) nxt[*p] = 1;
    }
    if (nxt[y]) return n;
    cur.swap(nxt);
  }
  return -1;
}

}  // namespace cuspwalk
