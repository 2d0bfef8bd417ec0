// Exact and floating n-step propagation, truncated Green values, the Green
// metric rho_G(x,y) = -log(G(x,y)/(C_G m(y))), spectral-radius decay fits,
// first passage, and empirical verifiers for the Harnack / triangle /
// Ancona / isoperimetric inequalities.
//
// Green values are served from depth-indexed tables: by Gamma-invariance,
// G(x, y) = G((e, depth(x)), x^{-1} y), so one propagation per source depth
// answers every query whose translated target lies in the table's converged
// region. Far pairs are evaluated by chaining table segments along a graph
// geodesic; arcs diving below the table depth use the fitted in-horoball
// decay rate (the growth-determined regime measured by the cusp-decay
// diagnostics).
#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "cuspwalk/walk_kernel.hpp"

namespace cuspwalk {

// Lazily generated chain workspace: vertex interner plus cached float rows
// stored as class blocks [cayley | down | lateral | up] over one arena.
class ChainSpace {
 public:
  explicit ChainSpace(const WeightedChain& chain);
  const WeightedChain& chain() const { return *chain_; }
  const CuspContext& context() const { return chain_->context(); }

  uint32_t intern(const Vertex& v);
  Vertex vertex(uint32_t id) const { return vertex_from_key(*keys_[id]); }
  int depth_of(uint32_t id) const { return int(keys_[id]->front()) - 1; }
  double m_of(uint32_t id) const;
  size_t size() const { return keys_.size(); }
  size_t row_arena_entries() const { return arena_.size(); }

  struct RowView {
    const uint32_t* tgt = nullptr;
    uint32_t n_cayley = 0, n_down = 0, n_lat = 0, n_up = 0;
    double p_cayley = 0, p_down = 0, p_lat = 0, p_up = 0;
    uint32_t total() const { return n_cayley + n_down + n_lat + n_up; }
  };
  RowView row(uint32_t id);

 private:
  const WeightedChain* chain_;
  std::unordered_map<std::string, uint32_t> index_;
  std::vector<const std::string*> keys_;
  struct RowRef {
    uint64_t offset = 0;
    uint32_t n_cayley = 0, n_down = 0, n_lat = 0, n_up = 0;
    bool built = false;
  };
  std::vector<RowRef> rows_;
  std::vector<uint32_t> arena_;
  struct DepthProbs {
    double cayley = 0, down = 0, lat = 0, up = 0, m = 0;
  };
  std::vector<DepthProbs> depth_probs_;
  const DepthProbs& probs(int depth) const;
};

struct PropagationOptions {
  int max_steps = 120;
  size_t support_cap = 800'000;
  int depth_prune = 8;     // drop (and count) atoms deeper than this
  double mass_floor = 0;   // absolute per-atom floor; 0 disables
};

// Dense-over-ids push engine for p^(n)(origin, .) with mass-rank pruning.
class Propagator {
 public:
  Propagator(ChainSpace& S, const Vertex& origin, PropagationOptions opt);
  void step();
  int steps() const { return steps_; }
  double mass(uint32_t id) const { return id < cur_.size() ? double(cur_[id]) : 0.0; }
  const std::vector<uint32_t>& support() const { return support_; }
  double lost_mass() const { return double(lost_); }
  double total_mass() const;
  uint32_t origin_id() const { return origin_; }
  ChainSpace& space() { return *S_; }
  // absorbing target: mass entering it is recorded and removed (first-passage)
  void set_absorbing(uint32_t id) { absorbing_ = int64_t(id); }
  double absorbed() const { return double(absorbed_); }

 private:
  ChainSpace* S_;
  PropagationOptions opt_;
  uint32_t origin_;
  int steps_ = 0;
  std::vector<long double> cur_, nxt_;
  std::vector<uint32_t> support_, nsupport_;
  long double lost_ = 0, absorbed_ = 0;
  int64_t absorbing_ = -1;
  void prune();
};

// One source's Green data: partial sums, even-step return series, tail fit.
struct GreenTable {
  Vertex source;
  uint32_t source_id = 0;
  int steps_run = 0;
  std::vector<double> G;          // indexed by ChainSpace id at build time
  std::vector<double> diag_even;  // p^(2n)(s,s)/m(s), n = 1, 2, ...
  double lost_mass = 0;
  double tail_C = 0, tail_delta = 1, tail_r2 = 0;
  double green(uint32_t id) const { return id < G.size() ? G[id] : 0.0; }
  // geometric bound on sum_{n > steps_run} p^(n)(s, y)
  double tail_bound(double m_y) const;
};

// Propagate until every watched target's relative tail bound drops below
// rel_tol (or max_steps); watched may be empty.
GreenTable build_green_table(ChainSpace& S, const Vertex& source, PropagationOptions opt,
                             const std::vector<uint32_t>& watched, double rel_tol);

// Least-squares fit of log(p^(2n)(x,x)/m(x)) against 2n.
struct SpectralFit {
  double C_hat = 0, delta_hat = 1, r2 = 0;
  std::vector<double> series;
};
SpectralFit fit_return_decay(const std::vector<double>& diag_even);

// Exact rational n-step distribution (no pruning; budget-guarded).
struct ExactDistribution {
  Vertex origin;
  int steps = 0;
  std::vector<std::pair<Vertex, Rat>> atoms;  // sorted by vertex key
  Rat total() const;
};
ExactDistribution nstep_exact(const WeightedChain& chain, const Vertex& origin, int n,
                              size_t support_budget = 2'000'000);

// Hybrid n-step: exact rationals for the first `rational_steps`, then the
// float engine seeded with the rounded exact state.
struct FloatDistribution {
  Vertex origin;
  int steps = 0;
  double lost_mass = 0;
  std::vector<std::pair<Vertex, double>> atoms;
};
FloatDistribution nstep_distribution(ChainSpace& S, const Vertex& origin, int n,
                                     int rational_steps = 12,
                                     PropagationOptions opt = {});

// Corridor propagation: the chain restricted to a radius-T tube around the
// geodesic [x, z]. Mass leaving the tube is counted as lost; Green values
// are lower bounds that stabilize quickly in T (checked by the tests).
class TubeGreen {
 public:
  TubeGreen(const WeightedChain& chain, const Vertex& x, const Vertex& z, int tube_radius,
            int depth_cap);
  size_t size() const { return verts_.size(); }
  bool contains(const Vertex& v) const { return index_.count(vertex_key(v)) > 0; }
  // Green sums from `from` (must lie in the tube); runs until the global
  // tail bound m(y) C delta^{N+1}/(1-delta) is below rel_tol * G at both
  // endpoints, or max_steps.
  void propagate(const Vertex& from, double tail_C, double tail_delta, double rel_tol,
                 int max_steps = 600);
  double green(const Vertex& y) const;  // 0 when absent/unreached
  double lost() const { return lost_; }
  int steps_run() const { return steps_; }
  const Vertex& endpoint_x() const { return x_; }
  const Vertex& endpoint_z() const { return z_; }

 private:
  const WeightedChain* chain_;
  Vertex x_, z_;
  std::vector<Vertex> verts_;
  std::unordered_map<std::string, uint32_t> index_;
  std::vector<uint32_t> adj_, start_;
  std::vector<double> prob_;   // per-edge probability
  std::vector<double> G_;
  std::vector<double> m_;
  double lost_ = 0;
  int steps_ = 0;
};

// Green metric facade over depth tables.
class GreenMetric {
 public:
  struct Options {
    int direct_depth = 6;          // depth tables (e,k), k = 0..direct_depth
    PropagationOptions prop;       // per-table propagation controls
    double rel_tol = 1e-3;         // convergence: tail bound / value
    int segment_len = 8;           // chaining stride along geodesics
    int tube_radius = 5;           // corridor half-width for far pairs
    int tube_depth_cap = 9;        // tents deeper than this fall back to chaining
    int tube_max_steps = 600;
    size_t tube_cache = 64;
    int calibration_pairs = 400;
    uint64_t seed = 1;
  };
  GreenMetric(ChainSpace& S, Options opt);

  // Build table k (idempotent); watched targets get the adaptive horizon.
  const GreenTable& table(int k, const std::vector<Vertex>& watched = {});

  // G(x,y) by translation into table depth(x); nan when unavailable or not
  // converged at rel_tol. rel_tail receives the relative tail bound.
  double green(const Vertex& x, const Vertex& y, double* rel_tail = nullptr);
  double green_diag(int depth);  // G(v,v) for depth(v) = depth

  // calibrate C_G and the in-horoball decay rate; must run before rho().
  void calibrate();
  double C_G() const { return C_G_; }
  double horoball_rate() const { return kappa_; }

  // direct Green metric; throws Check when not converged
  double rho_direct(const Vertex& x, const Vertex& y);
  // far pairs through a tube around the geodesic; throws when the geodesic
  // dives below tube_depth_cap
  double rho_tube(const Vertex& x, const Vertex& y);
  // tiered evaluator: direct -> tube -> chained with fitted deep-arc rate
  double rho(const Vertex& x, const Vertex& y);
  double product(const Vertex& u, const Vertex& v, const Vertex& base);

  // first passage F(x,y): Green-ratio route (and absorption oracle below)
  double first_passage(const Vertex& x, const Vertex& y);
  // F values for a geodesic-aligned family via two tube propagations:
  // returns (F(x,z), F(x,y_i), F(y_i,z)) for each listed y
  struct TripleF {
    double fxz = 0;
    std::vector<double> fxy, fyz;
  };
  TripleF first_passage_triples(const Vertex& x, const Vertex& z, const std::vector<Vertex>& ys);

  ChainSpace& space() { return *S_; }
  const Options& options() const { return opt_; }
  // canonical decay constants used for tube tail bounds (from table 0)
  std::pair<double, double> decay_constants();

 private:
  ChainSpace* S_;
  Options opt_;
  std::unordered_map<int, GreenTable> tables_;
  double C_G_ = M_E, kappa_ = 0, kappa_icpt_ = 0;
  bool calibrated_ = false;
};

// First-passage by absorption: the independent oracle for F(x,y).
double first_passage_absorption(ChainSpace& S, const Vertex& x, const Vertex& y, int steps,
                                PropagationOptions opt = {});

// --- inequality verifiers ---------------------------------------------------

struct InequalityReport {
  std::string kind;
  size_t samples = 0;
  double max_constant = 0;       // witnessed constant over the full sample
  double half_max_constant = 0;  // over the first half (stability probe)
  bool stable = false;           // |max - half_max| / max < 20%
  std::vector<double> witnesses;
};

InequalityReport verify_harnack1(GreenMetric& gm, size_t samples, uint64_t seed);
InequalityReport verify_harnack2(GreenMetric& gm, size_t samples, uint64_t seed);
InequalityReport verify_triangle(GreenMetric& gm, size_t samples, uint64_t seed);
// Witnessed F(x,z) m(y) / (F(x,y) F(y,z)) over geodesic-aligned triples with
// dist(y, [x,z]) <= r, one batch per requested stratum of rho_X(x,z).
struct AnconaReport {
  std::vector<int> strata;
  std::vector<double> max_constant;
  std::vector<size_t> counts;
  bool no_growth = false;  // top stratum <= 1.3 x bottom stratum
};
AnconaReport verify_ancona(GreenMetric& gm, const std::vector<int>& strata, size_t per_stratum,
                           int r, uint64_t seed);

// kappa_hat = max over sampled finite connected sets of m(A)/sigma(partial A),
// exact rational arithmetic inside a frozen ball.
struct IsoperimetricReport {
  double kappa_hat = 0;
  double half_kappa_hat = 0;
  bool stable = false;
  size_t sets = 0;
};
IsoperimetricReport verify_isoperimetric(const WeightedChain& chain, const CuspedBall& ball,
                                         size_t sets, uint64_t seed);

}  // namespace cuspwalk
