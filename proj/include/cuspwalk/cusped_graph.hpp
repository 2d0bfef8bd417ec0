// The cusped graph X_Gamma: vertex set Gamma x {0} plus coset-indexed
// horoballs gH x N, with edges
//   (1) Cayley edges at depth 0,
//   (2) same-depth edges (gh,n)~(gh',n) iff d(h,h') <= a^n,
//   (3) vertical edges (gh,n)~(gh',n+1) iff d(h,h') <= a^{n+1}.
// Depth-0 edges of type (2) coincide with Cayley edges inside the parabolic
// and are deduplicated.
//
// Distances come in two flavours: BFS inside a frozen ball, and an exact
// closed-form global metric that decomposes any pair into horoball-closure
// legs joined by forced bridge edges (the free-product structure makes every
// inter-coset edge a cut edge). The two are cross-checked in the tests.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cuspwalk/group_model.hpp"
#include "cuspwalk/util.hpp"

namespace cuspwalk {

struct Vertex {
  GroupElement g;
  int depth = 0;
  bool operator==(const Vertex&) const = default;
};

std::string vertex_key(const Vertex& v);
Vertex vertex_from_key(const std::string& key);

// Deterministic total order used for tie-breaking: (depth, word length, key).
bool vertex_less(const Vertex& a, const Vertex& b, const GroupModel& G);

// Shared geometry context: group oracle plus the integer ladder
// A[n] = floor(a^n) that drives the edge rules.
class CuspContext {
 public:
  CuspContext(GroupId gid, const Rat& a, int depth_cap = 24);

  const GroupModel& group() const { return G_; }
  const Rat& a() const { return a_; }
  int depth_cap() const { return depth_cap_; }
  // floor(a^n); clamped once a^n leaves the int64-safe range.
  int64_t jump_radius(int n) const;
  // smallest k >= 0 with a^k >= d (d >= 0 integer)
  int ceil_log_a(int64_t d) const;

  std::vector<Vertex> neighbors(const Vertex& v) const;
  // 0 = none, 1/2/3 = matching edge rule (after deduplication of depth-0
  // rule-2 edges into rule 1).
  int edge_rule(const Vertex& u, const Vertex& v) const;

  // Exact graph distance in the infinite graph.
  int64_t distance(const Vertex& u, const Vertex& v) const;
  // A geodesic realizing distance(); consecutive entries are edges.
  std::vector<Vertex> geodesic(const Vertex& u, const Vertex& v) const;
  // Exact depth of v's nearest depth-0 vertex (equals v.depth).
  static int distance_to_orbit(const Vertex& v) { return v.depth; }

  // Distance between two points of one horoball closure with lateral word
  // separation d and depths m, n (the "tent" minimization over peak depth).
  int64_t horoball_distance(int64_t d, int m, int n) const;
  // Preferred-path length (k - n_u) + [x0 != y0] + (k - n_v) with
  // k = max(n_u, n_v, ceil(log_a d)); an oracle, not the exact metric.
  int64_t preferred_path_length(int64_t d, int m, int n) const;

 private:
  GroupModel G_;
  Rat a_;
  int depth_cap_;
  std::vector<int64_t> jump_;  // jump_[n] = floor(a^n), clamped

  struct Leg {
    HVec from, to;
    int depth_from, depth_to;
    GroupElement coset;  // absolute coset of the leg
  };
  // legs/bridge count decomposition shared by distance() and geodesic()
  void decompose(const Vertex& u, const Vertex& v, std::vector<Leg>& legs,
                 std::vector<GroupElement>& bridge_prefixes, int64_t& bridges) const;
  void append_leg_path(const Leg& leg, std::vector<Vertex>& path) const;
};

// A frozen radius-R ball (plus margin) of the cusped graph.
class CuspedBall {
 public:
  CuspedBall(const CuspContext& ctx, const Vertex& center, int R, int margin,
             size_t vertex_budget = 5'000'000);

  const CuspContext& context() const { return *ctx_; }
  const Vertex& center() const { return center_; }
  int radius() const { return R_; }
  int margin() const { return margin_; }
  size_t size() const { return keys_.size(); }
  size_t edge_count() const { return adj_.size() / 2; }

  Vertex vertex(uint32_t id) const { return vertex_from_key(*keys_[id]); }
  int depth_of(uint32_t id) const { return int(keys_[id]->front()) - 1; }
  std::optional<uint32_t> find(const Vertex& v) const;
  uint32_t require(const Vertex& v) const;
  int dist_from_center(uint32_t id) const { return center_dist_[id]; }
  // Neighbor ids, sorted ascending.
  std::pair<const uint32_t*, const uint32_t*> neighbors(uint32_t id) const;
  bool in_core(uint32_t id) const { return center_dist_[id] <= R_; }
  // true if every neighbor of id (in the infinite graph) is present
  bool interior(uint32_t id) const { return center_dist_[id] < R_ + margin_; }

  // BFS distance from u to v; exact for the infinite graph when both lie in
  // the R-core (margin absorbs geodesic excursions; checked empirically).
  int bfs_distance(uint32_t u, uint32_t v) const;
  std::vector<int> bfs_all(uint32_t u) const;
  // BFS geodesic with deterministic (depth, normal form) parent tie-breaks.
  std::vector<uint32_t> bfs_geodesic(uint32_t u, uint32_t v) const;

  void export_edges(std::ostream& os) const;
  static CuspedBall import_edges(const CuspContext& ctx, std::istream& is);

 private:
  CuspedBall(const CuspContext& ctx) : ctx_(&ctx) {}
  const CuspContext* ctx_;
  Vertex center_;
  int R_ = 0, margin_ = 0;
  // keys live in the index map; keys_ points at them (node stability)
  std::unordered_map<std::string, uint32_t> index_;
  std::vector<const std::string*> keys_;
  std::vector<int16_t> center_dist_;
  std::vector<uint32_t> adj_;        // concatenated sorted neighbor lists
  std::vector<uint32_t> adj_start_;  // size()+1 offsets
  void freeze(std::vector<std::pair<uint32_t, uint32_t>>& edges);
};

using MetricFn = std::function<double(const Vertex&, const Vertex&)>;

double gromov_product(const Vertex& u, const Vertex& v, const Vertex& base, const MetricFn& rho);
double busemann_proxy(const Vertex& x, const Vertex& y, const Vertex& z_far, const MetricFn& rho);

struct HyperbolicityEstimate {
  double delta_hat = 0;
  size_t sample_size = 0;
  int radius = 0;
};

// Four-point condition scan: delta_hat = max over sampled quadruples
// (y,u,v,w) of min{(u|v)_y, (v|w)_y} - (u|w)_y, over a seeded point set with
// pairwise distances from `rho`.
HyperbolicityEstimate estimate_delta(const std::vector<Vertex>& points, const MetricFn& rho,
                                     size_t quadruple_samples, uint64_t seed, int radius_label);

// Point set for delta estimation: deterministic sample from the R-core.
std::vector<Vertex> delta_point_sample(const CuspedBall& ball, size_t count, uint64_t seed);

}  // namespace cuspwalk
