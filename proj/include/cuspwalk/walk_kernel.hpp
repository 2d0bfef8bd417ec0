// Walk construction: exact rational solutions of the six parameter
// conditions, the reversible chain (X, P, m), and step sampling.
//
// Conditions, for a > 1 and the parabolic growth function g = g_H:
//   (1) 1/p + g(a)/(p_0 g(a^2)) = 1
//   (2) 1/q_{n-1} + g(a^{n+1})/(p_n g(a^{n+2})) <= 1          (n >= 1)
//   (3) m_0/(p_0 g(a^2)) = c_1/(q_0 g(a)^2)
//   (4) c_n/(g(a^n) p_n g(a^{n+2})) = c_{n+1}/(g(a^{n+1})^2 q_n)
//   (5) alpha^{-1} <= c_n <= alpha, 1 < p_n <= alpha, 1 < q_n <= alpha
//   (6) q_{n-1} c_{n+1} g(a^n) / (q_n c_n g(a^{n+1})) < beta < 1
// The solver follows the constant-q, c == 1 recipe; the validator accepts
// arbitrary (possibly tampered) parameters and reports per-condition exact
// witnesses.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cuspwalk/cusped_graph.hpp"
#include "cuspwalk/group_model.hpp"
#include "cuspwalk/util.hpp"

namespace cuspwalk {

struct WalkParams {
  Rat a = 2, p = 2, q = 4;
  Rat p0 = 0, m0 = 0;
  std::vector<Rat> p_n;  // p_n[n] valid for n = 1..N_max (index 0 unused)
  Rat alpha = 1;         // witness for condition (5)
  Rat beta = 0;          // witness for condition (6): max ratio over n <= N_max
  int N_max = 24;

  Rat q_n(int) const { return q; }  // constant sequence by the recipe
  Rat c_n(int) const { return 1; }  // c == 1 by the recipe
  Rat pn(int n) const {
    if (n < 1 || n >= int(p_n.size()))
      throw CwError(ErrKind::Budget, "p_n beyond tabulated horizon");
    return p_n[n];
  }
};

struct ConditionReport {
  struct Entry {
    int condition = 0;
    bool pass = false;
    int fail_n = -1;  // first failing n where applicable
    std::string witness;
  };
  std::vector<Entry> entries;
  bool all_pass = false;
  Rat alpha, beta;
  std::string to_string() const;
};

WalkParams solve_params(const GroupModel& G, const Rat& a, const Rat& p, const Rat& q,
                        int N_max = 24);
ConditionReport validate_params(const GroupModel& G, const WalkParams& wp);

// The reversible chain itself. Rows split into move classes: at depth 0,
// Cayley moves (each (1/p)/deg) and up moves (each 1/(p_0 g(a^2)));
// at depth n >= 1, down moves (each 1/(q_{n-1} g(a^n))), up moves (each
// 1/(p_n g(a^{n+2}))), and the lateral remainder split uniformly over the
// g(a^n) - 1 same-depth neighbors.
class WeightedChain {
 public:
  WeightedChain(const CuspContext& ctx, WalkParams wp);

  const CuspContext& context() const { return *ctx_; }
  const WalkParams& params() const { return wp_; }

  Rat m_weight(const Vertex& v) const;
  double m_weight_d(const Vertex& v) const;

  struct DepthClasses {
    // exact per-edge weights
    Rat cayley_each, up_each, down_each, lat_each;
    Rat up_total, down_total, lat_total;
    int64_t n_cayley = 0, n_up = 0, n_down = 0, n_lat = 0;
    // double cumulative class boundaries for sampling
    double cum1 = 0, cum2 = 0;
  };
  const DepthClasses& classes(int depth) const;

  // Exact rational row for a ball vertex whose full neighborhood is present.
  std::vector<std::pair<uint32_t, Rat>> transition_row_exact(const CuspedBall& ball,
                                                             uint32_t id) const;
  // Float row in the infinite graph (targets materialized).
  std::vector<std::pair<Vertex, double>> transition_row(const Vertex& v) const;

  // m-node N_v = m^{-1}(m(v)) cap B(v,1): v plus its same-m neighbors.
  std::vector<Vertex> m_node(const Vertex& v) const;

  Vertex sample_step(const Vertex& v, Rng& rng) const;

 private:
  const CuspContext* ctx_;
  WalkParams wp_;
  mutable std::vector<DepthClasses> cls_;
  void build_classes(int depth) const;
};

// Uniform unranking of the l1 ball of radius r (1D for Z, 2D for Z^2):
// index -> lattice offset; inverse of a fixed enumeration order.
HVec unrank_l1(int64_t index, int64_t r, bool two_dim);
int64_t l1_ball_size(int64_t r, bool two_dim);
int64_t l1_center_rank(int64_t r, bool two_dim);

// Uniform-irreducibility probe: smallest n <= max_n with p^(n)(x,y) > 0
// (support-only DP inside the ball); -1 if none.
int first_positive_step(const WeightedChain& chain, const CuspedBall& ball, uint32_t x, uint32_t y,
                        int max_n);

}  // namespace cuspwalk
