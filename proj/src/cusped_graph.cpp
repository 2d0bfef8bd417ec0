#include "cuspwalk/cusped_graph.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>

namespace cuspwalk {

std::string vertex_key(const Vertex& v) {
  std::string k;
  k.push_back(char(v.depth + 1));
  k += element_key(v.g);
  return k;
}

static int64_t get_varint(const std::string& s, size_t& pos) {
  uint64_t u = 0;
  int shift = 0;
  while (true) {
    uint8_t b = uint8_t(s[pos++]);
    u |= uint64_t(b & 0x7f) << shift;
    if (!(b & 0x80)) break;
    shift += 7;
  }
  return int64_t(u >> 1) ^ -int64_t(u & 1);
}

Vertex vertex_from_key(const std::string& key) {
  Vertex v;
  v.depth = int(key[0]) - 1;
  size_t pos = 1;
  while (pos < key.size()) {
    Syllable s;
    s.factor = uint8_t(key[pos++]) - 1;
    s.x = get_varint(key, pos);
    s.y = get_varint(key, pos);
    v.g.w.push_back(s);
  }
  return v;
}

bool vertex_less(const Vertex& a, const Vertex& b, const GroupModel& G) {
  if (a.depth != b.depth) return a.depth < b.depth;
  int64_t la = G.word_length(a.g), lb = G.word_length(b.g);
  if (la != lb) return la < lb;
  return element_key(a.g) < element_key(b.g);
}

CuspContext::CuspContext(GroupId gid, const Rat& a, int depth_cap)
    : G_(gid), a_(a), depth_cap_(depth_cap) {
  if (a <= 1) throw CwError(ErrKind::Config, "cusped graph requires a > 1");
  const int64_t clamp = std::numeric_limits<int64_t>::max() / 8;
  Rat pw = 1;
  for (int n = 0; n <= depth_cap_ + 2; ++n) {
    if (n) pw *= a_;
    Rat lim(long(1));
    lim = clamp;
    jump_.push_back(pw >= lim ? clamp : rat_floor(pw));
  }
}

int64_t CuspContext::jump_radius(int n) const {
  if (n < 0) throw CwError(ErrKind::Internal, "jump_radius: negative depth");
  if (n < int(jump_.size())) return jump_[n];
  return jump_.back();  // clamped regime
}

int CuspContext::ceil_log_a(int64_t d) const {
  if (d <= 1) return 0;
  for (int k = 0; k < int(jump_.size()); ++k)
    if (jump_[k] >= d) return k;
  throw CwError(ErrKind::Budget, "ceil_log_a: separation beyond depth table");
}

// --- neighbor generation -------------------------------------------------

template <class Fn>
static void enum_l1_ball(HVec h, int64_t r, bool two_dim, Fn&& fn) {
  if (!two_dim) {
    for (int64_t dx = -r; dx <= r; ++dx) fn(HVec{h.x + dx, 0});
  } else {
    for (int64_t dx = -r; dx <= r; ++dx) {
      int64_t ry = r - std::llabs(dx);
      for (int64_t dy = -ry; dy <= ry; ++dy) fn(HVec{h.x + dx, h.y + dy});
    }
  }
}

std::vector<Vertex> CuspContext::neighbors(const Vertex& v) const {
  std::vector<Vertex> out;
  const bool two_dim = (G_.id() == GroupId::Z2FreeZ);
  if (v.depth == 0) {
    for (const GroupElement& s : G_.generators()) out.push_back({G_.mul(v.g, s), 0});
    GroupElement c = G_.coset_of(v.g, 0);
    HVec h = G_.parabolic_offset(v.g, 0);
    enum_l1_ball(h, jump_radius(1), two_dim,
                 [&](HVec t) { out.push_back({G_.attach_offset(c, t, 0), 1}); });
    return out;
  }
  if (v.depth >= depth_cap_)
    throw CwError(ErrKind::Budget, "depth cap exceeded at depth " + std::to_string(v.depth));
  GroupElement c = G_.coset_of(v.g, 0);
  HVec h = G_.parabolic_offset(v.g, 0);
  const int n = v.depth;
  enum_l1_ball(h, jump_radius(n), two_dim, [&](HVec t) {
    out.push_back({G_.attach_offset(c, t, 0), n - 1});             // down
    if (!(t == h)) out.push_back({G_.attach_offset(c, t, 0), n});  // lateral
  });
  enum_l1_ball(h, jump_radius(n + 1), two_dim,
               [&](HVec t) { out.push_back({G_.attach_offset(c, t, 0), n + 1}); });  // up
  return out;
}

int CuspContext::edge_rule(const Vertex& u, const Vertex& v) const {
  if (u == v) return 0;
  if (u.depth == 0 && v.depth == 0) {
    GroupElement d = G_.mul(G_.inverse(u.g), v.g);
    return G_.word_length(d) == 1 ? 1 : 0;
  }
  GroupElement cu = G_.coset_of(u.g, 0), cv = G_.coset_of(v.g, 0);
  if (!(cu == cv)) return 0;
  HVec hu = G_.parabolic_offset(u.g, 0), hv = G_.parabolic_offset(v.g, 0);
  int64_t sep = GroupModel::hvec_norm({hu.x - hv.x, hu.y - hv.y});
  if (u.depth == v.depth) return sep <= jump_radius(u.depth) ? 2 : 0;
  if (std::abs(u.depth - v.depth) == 1) {
    int lo = std::min(u.depth, v.depth);
    return sep <= jump_radius(lo + 1) ? 3 : 0;
  }
  return 0;
}

// --- exact metric ---------------------------------------------------------

int64_t CuspContext::horoball_distance(int64_t d, int m, int n) const {
  if (d < 0) throw CwError(ErrKind::Internal, "horoball_distance: negative separation");
  int64_t best = std::numeric_limits<int64_t>::max();
  for (int k = std::max(m, n); k <= depth_cap_ + 2; ++k) {
    int64_t climb = int64_t(k - m) + int64_t(k - n);
    if (climb >= best) break;
    int64_t budget = 0;  // lateral shift carried by the climb edges
    for (int i = m + 1; i <= k; ++i) budget += jump_radius(i);
    for (int i = n + 1; i <= k; ++i) budget += jump_radius(i);
    int64_t lack = d - budget;
    int64_t j = lack <= 0 ? 0 : (lack + jump_radius(k) - 1) / jump_radius(k);
    best = std::min(best, climb + j);
  }
  return best;
}

int64_t CuspContext::preferred_path_length(int64_t d, int m, int n) const {
  int k = std::max({m, n, ceil_log_a(d)});
  return int64_t(k - m) + (d > 0 ? 1 : 0) + int64_t(k - n);
}

// Itinerary: legs[0], bridge[0], legs[1], bridge[1], ..., legs[B]; every leg
// may be trivial. bridge_prefixes[i] holds the absolute element at the tail
// of bridge i (the edge is prefix -> prefix * t^{+-1}).
void CuspContext::decompose(const Vertex& u, const Vertex& v, std::vector<Leg>& legs,
                            std::vector<GroupElement>& bridge_prefixes, int64_t& bridges) const {
  legs.clear();
  bridge_prefixes.clear();
  bridges = 0;
  GroupElement r = G_.mul(G_.inverse(u.g), v.g);
  if (G_.in_parabolic(r, 0)) {
    legs.push_back({G_.parabolic_offset(u.g, 0), G_.parabolic_offset(v.g, 0), u.depth, v.depth,
                    G_.coset_of(u.g, 0)});
    return;
  }
  GroupElement prefix = u.g;  // absolute position before the current syllable
  HVec pos = G_.parabolic_offset(u.g, 0);
  int pos_depth = u.depth;
  for (size_t i = 0; i < r.w.size(); ++i) {
    const Syllable& s = r.w[i];
    const bool last = (i + 1 == r.w.size());
    if (s.factor == 0) {
      GroupElement coset = G_.coset_of(prefix, 0);
      GroupElement syl;
      syl.w.push_back(s);
      prefix = G_.mul(prefix, syl);
      HVec target = G_.parabolic_offset(prefix, 0);
      int target_depth = last ? v.depth : 0;
      legs.push_back({pos, target, pos_depth, target_depth, coset});
      pos = target;
      pos_depth = target_depth;
    } else {
      // A factor-1 syllable is preceded by a factor-0 leg ending at depth 0
      // except at the very start; keep legs and bridges strictly alternating.
      if (i == 0) legs.push_back({pos, pos, pos_depth, 0, G_.coset_of(prefix, 0)});
      GroupElement unit;
      unit.w.push_back({1, s.x > 0 ? int64_t(1) : int64_t(-1), 0});
      int64_t steps = std::llabs(s.x);
      for (int64_t t = 0; t < steps; ++t) {
        bridge_prefixes.push_back(prefix);
        prefix = G_.mul(prefix, unit);
        ++bridges;
        if (t + 1 < steps) {
          HVec mid = G_.parabolic_offset(prefix, 0);
          legs.push_back({mid, mid, 0, 0, G_.coset_of(prefix, 0)});
        }
      }
      // cancellation against u's word can land the bridge at a nonzero offset
      pos = G_.parabolic_offset(prefix, 0);
      pos_depth = 0;
      if (last) legs.push_back({pos, pos, 0, v.depth, G_.coset_of(prefix, 0)});
    }
  }
}

int64_t CuspContext::distance(const Vertex& u, const Vertex& v) const {
  if (u == v) return 0;
  std::vector<Leg> legs;
  std::vector<GroupElement> bp;
  int64_t bridges = 0;
  decompose(u, v, legs, bp, bridges);
  int64_t total = bridges;
  for (const Leg& L : legs) {
    int64_t sep = GroupModel::hvec_norm({L.from.x - L.to.x, L.from.y - L.to.y});
    total += horoball_distance(sep, L.depth_from, L.depth_to);
  }
  return total;
}

void CuspContext::append_leg_path(const Leg& leg, std::vector<Vertex>& path) const {
  int64_t sep = GroupModel::hvec_norm({leg.from.x - leg.to.x, leg.from.y - leg.to.y});
  const int m = leg.depth_from, n = leg.depth_to;
  if (sep == 0 && m == n) return;
  int64_t best = horoball_distance(sep, m, n);
  int k = std::max(m, n);
  int64_t j = 0;
  for (;; ++k) {  // recover the optimal tent peak
    int64_t budget = 0;
    for (int i = m + 1; i <= k; ++i) budget += jump_radius(i);
    for (int i = n + 1; i <= k; ++i) budget += jump_radius(i);
    int64_t lack = sep - budget;
    int64_t jj = lack <= 0 ? 0 : (lack + jump_radius(k) - 1) / jump_radius(k);
    if (int64_t(k - m) + int64_t(k - n) + jj == best) {
      j = jj;
      break;
    }
    if (k > depth_cap_ + 2) throw CwError(ErrKind::Internal, "leg path: tent recovery failed");
  }
  HVec cur = leg.from;
  auto shift_toward = [&](int64_t cap) {
    int64_t sx = std::min<int64_t>(std::llabs(leg.to.x - cur.x), cap);
    cur.x += (leg.to.x >= cur.x) ? sx : -sx;
    cap -= sx;
    int64_t sy = std::min<int64_t>(std::llabs(leg.to.y - cur.y), cap);
    cur.y += (leg.to.y >= cur.y) ? sy : -sy;
  };
  for (int i = m + 1; i <= k; ++i) {  // climb
    shift_toward(jump_radius(i));
    path.push_back({G_.attach_offset(leg.coset, cur, 0), i});
  }
  for (int64_t t = 0; t < j; ++t) {  // lateral at the peak
    shift_toward(jump_radius(k));
    path.push_back({G_.attach_offset(leg.coset, cur, 0), k});
  }
  for (int i = k; i > n; --i) {  // descend
    shift_toward(jump_radius(i));
    path.push_back({G_.attach_offset(leg.coset, cur, 0), i - 1});
  }
  if (!(cur == leg.to)) throw CwError(ErrKind::Internal, "leg path: did not land on target");
}

std::vector<Vertex> CuspContext::geodesic(const Vertex& u, const Vertex& v) const {
  std::vector<Vertex> path{u};
  if (u == v) return path;
  std::vector<Leg> legs;
  std::vector<GroupElement> bp;
  int64_t bridges = 0;
  decompose(u, v, legs, bp, bridges);
  size_t li = 0, bi = 0;
  // interleave: leg, bridge, leg, bridge, ..., leg
  while (li < legs.size() || bi < bp.size()) {
    if (li < legs.size()) append_leg_path(legs[li++], path);
    if (bi < size_t(bridges)) {
      const GroupElement& pre = bp[bi++];
      // direction: the bridge moves pre -> next coset along r; recover the
      // unit from the next leg's coset (or v itself for the final bridge)
      GroupElement tgt = (li < legs.size()) ? legs[li].coset : G_.coset_of(v.g, 0);
      GroupElement step = G_.mul(G_.inverse(pre), tgt);
      // step starts with t^{+-1}
      GroupElement unit;
      unit.w.push_back({1, step.w.front().x > 0 ? int64_t(1) : int64_t(-1), 0});
      path.push_back({G_.mul(pre, unit), 0});
    }
  }
  return path;
}

// --- frozen ball ----------------------------------------------------------

CuspedBall::CuspedBall(const CuspContext& ctx, const Vertex& center, int R, int margin,
                       size_t vertex_budget)
    : ctx_(&ctx), center_(center), R_(R), margin_(margin) {
  if (R < 0 || margin < 0) throw CwError(ErrKind::Config, "ball radius/margin must be >= 0");
  const int reach = R + margin;
  auto [it0, fresh0] = index_.emplace(vertex_key(center), 0u);
  keys_.push_back(&it0->first);
  center_dist_.push_back(0);
  // pass 1: intern vertices breadth-first
  std::deque<uint32_t> q{0};
  while (!q.empty()) {
    uint32_t id = q.front();
    q.pop_front();
    if (center_dist_[id] == reach) continue;
    Vertex v = vertex(id);
    for (const Vertex& w : ctx.neighbors(v)) {
      auto [it, fresh] = index_.emplace(vertex_key(w), uint32_t(keys_.size()));
      if (fresh) {
        if (keys_.size() >= vertex_budget)
          throw CwError(ErrKind::Budget, "ball budget exceeded at depth " +
                                             std::to_string(w.depth) + " (" +
                                             std::to_string(keys_.size()) + " vertices)");
        keys_.push_back(&it->first);
        center_dist_.push_back(int16_t(center_dist_[id] + 1));
        q.push_back(it->second);
      }
    }
  }
  // pass 2: collect edges once (u < v), then freeze into CSR
  std::vector<std::pair<uint32_t, uint32_t>> edges;
  for (uint32_t id = 0; id < keys_.size(); ++id) {
    if (center_dist_[id] == reach) continue;
    Vertex v = vertex(id);
    for (const Vertex& w : ctx.neighbors(v)) {
      auto it = index_.find(vertex_key(w));
      if (it == index_.end()) continue;  // cannot happen inside reach
      uint32_t wid = it->second;
      edges.push_back({std::min(id, wid), std::max(id, wid)});
    }
  }
  freeze(edges);
}

void CuspedBall::freeze(std::vector<std::pair<uint32_t, uint32_t>>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<uint32_t> deg(keys_.size(), 0);
  for (auto& [u, v] : edges) {
    ++deg[u];
    ++deg[v];
  }
  adj_start_.assign(keys_.size() + 1, 0);
  for (size_t i = 0; i < keys_.size(); ++i) adj_start_[i + 1] = adj_start_[i] + deg[i];
  adj_.assign(adj_start_.back(), 0);
  std::vector<uint32_t> fill(adj_start_.begin(), adj_start_.end() - 1);
  for (auto& [u, v] : edges) {
    adj_[fill[u]++] = v;
    adj_[fill[v]++] = u;
  }
  for (size_t i = 0; i < keys_.size(); ++i)
    std::sort(adj_.begin() + adj_start_[i], adj_.begin() + adj_start_[i + 1]);
}

std::optional<uint32_t> CuspedBall::find(const Vertex& v) const {
  auto it = index_.find(vertex_key(v));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

uint32_t CuspedBall::require(const Vertex& v) const {
  auto id = find(v);
  if (!id) throw CwError(ErrKind::Check, "vertex not in ball");
  return *id;
}

std::pair<const uint32_t*, const uint32_t*> CuspedBall::neighbors(uint32_t id) const {
  return {adj_.data() + adj_start_[id], adj_.data() + adj_start_[id + 1]};
}

std::vector<int> CuspedBall::bfs_all(uint32_t u) const {
  std::vector<int> dist(size(), -1);
  std::deque<uint32_t> q{u};
  dist[u] = 0;
  while (!q.empty()) {
    uint32_t x = q.front();
    q.pop_front();
    auto [b, e] = neighbors(x);
    for (const uint32_t* p = b; p != e; ++p)
      if (dist[*p] < 0) {
        dist[*p] = dist[x] + 1;
        q.push_back(*p);
      }
  }
  return dist;
}

int CuspedBall::bfs_distance(uint32_t u, uint32_t v) const {
  if (u == v) return 0;
  std::vector<int> dist(size(), -1);
  std::deque<uint32_t> q{u};
  dist[u] = 0;
  while (!q.empty()) {
    uint32_t x = q.front();
    q.pop_front();
    auto [b, e] = neighbors(x);
    for (const uint32_t* p = b; p != e; ++p) {
      if (dist[*p] < 0) {
        dist[*p] = dist[x] + 1;
        if (*p == v) return dist[*p];
        q.push_back(*p);
      }
    }
  }
  throw CwError(ErrKind::Check, "bfs_distance: target unreachable in ball");
}

std::vector<uint32_t> CuspedBall::bfs_geodesic(uint32_t u, uint32_t v) const {
  std::vector<int> dist = bfs_all(u);
  if (dist[v] < 0) throw CwError(ErrKind::Check, "bfs_geodesic: unreachable");
  std::vector<uint32_t> rev{v};
  uint32_t cur = v;
  while (cur != u) {
    auto [b, e] = neighbors(cur);
    uint32_t best = UINT32_MAX;
    for (const uint32_t* p = b; p != e; ++p) {
      if (dist[*p] != dist[cur] - 1) continue;
      if (best == UINT32_MAX || vertex_less(vertex(*p), vertex(best), ctx_->group())) best = *p;
    }
    if (best == UINT32_MAX) throw CwError(ErrKind::Internal, "bfs_geodesic: broken parent chain");
    cur = best;
    rev.push_back(cur);
  }
  std::reverse(rev.begin(), rev.end());
  return rev;
}

void CuspedBall::export_edges(std::ostream& os) const {
  const GroupModel& G = ctx_->group();
  os << "cuspwalk-ball v1\n";
  os << "group " << group_id_name(G.id()) << "\n";
  os << "a " << rat_str(ctx_->a()) << "\n";
  os << "center " << G.format(center_.g) << " " << center_.depth << "\n";
  os << "R " << R_ << " margin " << margin_ << "\n";
  os << "vertices " << size() << "\n";
  for (size_t i = 0; i < size(); ++i) {
    Vertex v = vertex(uint32_t(i));
    os << i << " " << v.depth << " " << G.format(v.g) << "\n";
  }
  std::vector<std::pair<uint32_t, uint32_t>> edges;
  for (uint32_t i = 0; i < size(); ++i) {
    auto [b, e] = neighbors(i);
    for (const uint32_t* p = b; p != e; ++p)
      if (i < *p) edges.push_back({i, *p});
  }
  std::sort(edges.begin(), edges.end());
  os << "edges " << edges.size() << "\n";
  for (auto& [x, y] : edges) os << x << "," << y << "\n";
}

CuspedBall CuspedBall::import_edges(const CuspContext& ctx, std::istream& is) {
  CuspedBall ball(ctx);
  const GroupModel& G = ctx.group();
  std::string line, word;
  std::getline(is, line);
  if (line != "cuspwalk-ball v1") throw CwError(ErrKind::Config, "bad ball file header");
  std::string gname, astr, celt;
  int cdepth;
  is >> word >> gname >> word >> astr;
  if (gname != group_id_name(G.id())) throw CwError(ErrKind::Config, "ball group mismatch");
  is >> word >> celt >> cdepth;
  ball.center_ = {G.parse(celt), cdepth};
  size_t nv, ne;
  is >> word >> ball.R_ >> word >> ball.margin_;
  is >> word >> nv;
  ball.keys_.resize(nv);
  ball.center_dist_.assign(nv, 0);
  for (size_t i = 0; i < nv; ++i) {
    size_t id;
    int d;
    std::string elt;
    is >> id >> d >> elt;
    Vertex v{G.parse(elt), d};
    auto [it, fresh] = ball.index_.emplace(vertex_key(v), uint32_t(id));
    if (!fresh) throw CwError(ErrKind::Config, "duplicate vertex in ball file");
    ball.keys_[id] = &it->first;
  }
  is >> word >> ne;
  std::vector<std::pair<uint32_t, uint32_t>> edges;
  edges.reserve(ne);
  for (size_t i = 0; i < ne; ++i) {
    std::string pair;
    is >> pair;
    auto comma = pair.find(',');
    uint32_t x = uint32_t(std::stoul(pair.substr(0, comma)));
    uint32_t y = uint32_t(std::stoul(pair.substr(comma + 1)));
    edges.push_back({std::min(x, y), std::max(x, y)});
  }
  ball.freeze(edges);
  auto dist = ball.bfs_all(ball.require(ball.center_));
  for (size_t i = 0; i < nv; ++i) ball.center_dist_[i] = int16_t(dist[i]);
  return ball;
}

// --- products, Busemann, delta -------------------------------------------

double gromov_product(const Vertex& u, const Vertex& v, const Vertex& base, const MetricFn& rho) {
  return 0.5 * (rho(base, u) + rho(base, v) - rho(u, v));
}

double busemann_proxy(const Vertex& x, const Vertex& y, const Vertex& z_far, const MetricFn& rho) {
  return rho(x, z_far) - rho(y, z_far);
}

HyperbolicityEstimate estimate_delta(const std::vector<Vertex>& points, const MetricFn& rho,
                                     size_t quadruple_samples, uint64_t seed, int radius_label) {
  if (points.size() < 4) throw CwError(ErrKind::Check, "estimate_delta: need >= 4 points");
  const size_t P = points.size();
  std::vector<double> dist(P * P, 0);
  for (size_t i = 0; i < P; ++i)
    for (size_t j = i + 1; j < P; ++j) {
      double d = rho(points[i], points[j]);
      dist[i * P + j] = dist[j * P + i] = d;
    }
  auto prod = [&](size_t i, size_t j, size_t y) {
    return 0.5 * (dist[y * P + i] + dist[y * P + j] - dist[i * P + j]);
  };
  Rng rng(seed);
  double dh = 0;
  for (size_t t = 0; t < quadruple_samples; ++t) {
    size_t y = rng.below(P), u = rng.below(P), v = rng.below(P), w = rng.below(P);
    double gap = std::min(prod(u, v, y), prod(v, w, y)) - prod(u, w, y);
    dh = std::max(dh, gap);
  }
  return {dh, quadruple_samples, radius_label};
}

std::vector<Vertex> delta_point_sample(const CuspedBall& ball, size_t count, uint64_t seed) {
  std::vector<uint32_t> core;
  for (uint32_t i = 0; i < ball.size(); ++i)
    if (ball.in_core(i)) core.push_back(i);
  Rng rng(seed);
  std::vector<Vertex> pts;
  if (core.size() <= count) {
    for (uint32_t id : core) pts.push_back(ball.vertex(id));
    return pts;
  }
  for (size_t t = 0; t < count; ++t) pts.push_back(ball.vertex(core[rng.below(core.size())]));
  return pts;
}

}  // namespace cuspwalk
