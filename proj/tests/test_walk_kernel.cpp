#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "cuspwalk/walk_kernel.hpp"

using namespace cuspwalk;

static const Rat A2 = Rat(2), P2 = Rat(2), Q4 = Rat(4);

TEST_CASE("solved parameters for f2-rel-z, a=2, p=2, q=4") {
  GroupModel G(GroupId::F2RelZ);
  WalkParams wp = solve_params(G, A2, P2, Q4);
  CHECK(wp.p0 == Rat(10, 9));
  CHECK(wp.m0 == Rat(1, 10));
  CHECK(wp.p_n[1] == Rat(324, 85));
  CHECK(wp.beta == Rat(5, 9));
  auto rep = validate_params(G, wp);
  CHECK(rep.all_pass);
  for (auto& e : rep.entries) CHECK(e.pass);
}

TEST_CASE("q=1 is infeasible at condition (2), n=1") {
  GroupModel G(GroupId::F2RelZ);
  CHECK_THROWS_WITH_AS(solve_params(G, A2, P2, Rat(1)),
                       doctest::Contains("condition (2)"), CwError);
}

TEST_CASE("p=1 flags condition (1) unsatisfiable") {
  GroupModel G(GroupId::F2RelZ);
  CHECK_THROWS_WITH_AS(solve_params(G, A2, Rat(1), Q4), doctest::Contains("condition (1)"),
                       CwError);
}

TEST_CASE("tampered m0 fails condition (3) with witnesses") {
  GroupModel G(GroupId::F2RelZ);
  WalkParams wp = solve_params(G, A2, P2, Q4);
  wp.m0 = Rat(1, 7);
  auto rep = validate_params(G, wp);
  CHECK_FALSE(rep.all_pass);
  bool c3_failed = false;
  for (auto& e : rep.entries)
    if (e.condition == 3) {
      c3_failed = !e.pass;
      CHECK(e.witness.find("vs") != std::string::npos);
    }
  CHECK(c3_failed);
}

TEST_CASE("z2: p=2 leaves no depth-0 mass, p=5/4 solves") {
  GroupModel G(GroupId::Z2FreeZ);
  // condition (1) forces p < g(a^2)/(g(a^2)-g(a)) = 41/28 here
  CHECK_THROWS_WITH_AS(solve_params(G, A2, P2, Q4), doctest::Contains("condition (1)"), CwError);
  WalkParams wp = solve_params(G, A2, Rat(5, 4), Q4);
  CHECK(wp.p0 == Rat(65, 41));
  CHECK(wp.m0 == Rat(5, 52));
  for (int n = 1; n <= wp.N_max; ++n) {
    int64_t an = 1ll << n;
    Rat gn(G.growth(0, an)), gn1(G.growth(0, 2 * an)), gn2(G.growth(0, 4 * an));
    CHECK(wp.p_n[n] == Q4 * gn1 * gn1 / (gn * gn2));
    CHECK(wp.p_n[n] > 2);  // recipe requirement
  }
  CHECK(validate_params(G, wp).all_pass);
}

TEST_CASE("m weights") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WeightedChain chain(ctx, solve_params(G, A2, P2, Q4));
  CHECK(chain.m_weight({G.identity(), 0}) == Rat(1, 10));
  CHECK(chain.m_weight({G.identity(), 1}) == Rat(1, 5));
  CHECK(chain.m_weight({G.parse("b1.a3"), 2}) == Rat(1, 9));
  CHECK_THROWS_AS(chain.m_weight({G.identity(), 30}), CwError);
}

TEST_CASE("m-nodes are depth-pure unit balls") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WeightedChain chain(ctx, solve_params(G, A2, P2, Q4));
  auto node1 = chain.m_node({G.identity(), 1});
  CHECK(node1.size() == 5);  // (a^k,1), |k| <= 2
  for (auto& v : node1) CHECK(v.depth == 1);
  auto node0 = chain.m_node({G.parse("b1"), 0});
  CHECK(node0.size() == 5);  // depth-0 nodes are closed Cayley 1-balls
  for (auto& v : node0) CHECK(v.depth == 0);
}

TEST_CASE("exact transition rows from the reference configuration") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WeightedChain chain(ctx, solve_params(G, A2, P2, Q4));
  CuspedBall ball(ctx, {G.identity(), 0}, 3, 2);

  auto row0 = chain.transition_row_exact(ball, ball.require({G.identity(), 0}));
  std::map<std::string, int> counts;
  Rat sum = 0;
  for (auto& [id, pr] : row0) {
    sum += pr;
    counts[rat_str(pr)]++;
  }
  CHECK(sum == 1);
  CHECK(counts["1/8"] == 4);
  CHECK(counts["1/10"] == 5);

  auto row1 = chain.transition_row_exact(ball, ball.require({G.identity(), 1}));
  counts.clear();
  sum = 0;
  for (auto& [id, pr] : row1) {
    sum += pr;
    counts[rat_str(pr)]++;
  }
  CHECK(sum == 1);
  CHECK(counts["1/20"] == 5);
  CHECK(counts["5/324"] == 9);
  CHECK(counts["11/72"] == 4);
}

TEST_CASE("detailed balance holds exactly on every edge of a ball") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WeightedChain chain(ctx, solve_params(G, A2, P2, Q4));
  CuspedBall ball(ctx, {G.identity(), 0}, 3, 2);
  // the pinned spot value m(e,0) p((e,0),(a,1)) = 1/100
  uint32_t e0 = ball.require({G.identity(), 0});
  uint32_t a1 = ball.require({G.parse("a1"), 1});
  auto row = chain.transition_row_exact(ball, e0);
  for (auto& [id, pr] : row)
    if (id == a1) CHECK(chain.m_weight(ball.vertex(e0)) * pr == Rat(1, 100));

  size_t edges_checked = 0;
  for (uint32_t v = 0; v < ball.size(); ++v) {
    if (!ball.interior(v)) continue;
    auto rv = chain.transition_row_exact(ball, v);
    for (auto& [w, pvw] : rv) {
      if (!ball.interior(w)) continue;
      auto rw = chain.transition_row_exact(ball, w);
      for (auto& [u, pwu] : rw)
        if (u == v) {
          CHECK(chain.m_weight(ball.vertex(v)) * pvw == chain.m_weight(ball.vertex(w)) * pwu);
          ++edges_checked;
        }
    }
  }
  CHECK(edges_checked > 100);
}

TEST_CASE("gamma-invariance: row at gv is the pushforward of the row at v") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WeightedChain chain(ctx, solve_params(G, A2, P2, Q4));
  GroupElement gamma = G.parse("b1.a2.b-1");
  for (const Vertex& v : {Vertex{G.identity(), 0}, Vertex{G.parse("a1"), 1}, Vertex{G.parse("b1"), 2}}) {
    auto row = chain.transition_row(v);
    Vertex gv{G.mul(gamma, v.g), v.depth};
    auto grow = chain.transition_row(gv);
    REQUIRE(row.size() == grow.size());
    std::map<std::string, double> lhs, rhs;
    for (auto& [w, pr] : row) lhs[vertex_key({G.mul(gamma, w.g), w.depth})] = pr;
    for (auto& [w, pr] : grow) rhs[vertex_key(w)] = pr;
    CHECK(lhs == rhs);
  }
}

TEST_CASE("l1 unranking is a bijection") {
  for (int64_t r : {0, 1, 2, 5, 9}) {
    std::map<std::pair<int64_t, int64_t>, int> seen;
    for (int64_t i = 0; i < l1_ball_size(r, true); ++i) {
      HVec h = unrank_l1(i, r, true);
      CHECK(std::llabs(h.x) + std::llabs(h.y) <= r);
      seen[{h.x, h.y}]++;
    }
    CHECK(int64_t(seen.size()) == l1_ball_size(r, true));
    HVec c = unrank_l1(l1_center_rank(r, true), r, true);
    CHECK(c == HVec{0, 0});
    // 1D
    for (int64_t i = 0; i < l1_ball_size(r, false); ++i)
      CHECK(unrank_l1(i, r, false).x == i - r);
  }
}

TEST_CASE("sample_step: determinism and one-step law at the origin") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WeightedChain chain(ctx, solve_params(G, A2, P2, Q4));
  Vertex e0{G.identity(), 0};
  {
    Rng r1(42), r2(42);
    Vertex v1 = e0, v2 = e0;
    for (int i = 0; i < 100; ++i) {
      v1 = chain.sample_step(v1, r1);
      v2 = chain.sample_step(v2, r2);
      CHECK(v1 == v2);
    }
  }
  // frequency of up-moves from (e,0) is exactly 1/2; allow 3 sigma
  const int N = 1'000'000;
  Rng rng(7);
  int up = 0;
  std::map<std::string, int> atom;
  for (int i = 0; i < N; ++i) {
    Vertex w = chain.sample_step(e0, rng);
    if (w.depth == 1) ++up;
    atom[vertex_key(w)]++;
  }
  double sigma = std::sqrt(0.25 * N);
  CHECK(std::abs(up - N / 2.0) <= 3 * sigma);
  // each atom matches its exact row weight within 3 sigma
  auto row = chain.transition_row(e0);
  CHECK(row.size() == 9);
  for (auto& [w, pr] : row) {
    double exp = pr * N, sd = std::sqrt(pr * (1 - pr) * N);
    CHECK(std::abs(atom[vertex_key(w)] - exp) <= 3 * sd + 1);
  }
}

TEST_CASE("uniform irreducibility: some n <= d + 8 connects nearby pairs") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WeightedChain chain(ctx, solve_params(G, A2, P2, Q4));
  CuspedBall ball(ctx, {G.identity(), 0}, 3, 5);
  std::vector<uint32_t> core;
  for (uint32_t i = 0; i < ball.size(); ++i)
    if (ball.in_core(i)) core.push_back(i);
  Rng rng(13);
  int checked = 0;
  while (checked < 100) {
    uint32_t x = core[rng.below(core.size())], y = core[rng.below(core.size())];
    int d = ball.bfs_distance(x, y);
    if (d > 6) continue;
    int n = first_positive_step(chain, ball, x, y, d + 8);
    CHECK(n >= 0);
    CHECK(n <= d + 8);
    ++checked;
  }
}

TEST_CASE("negative remainder is impossible for solved params") {
  CuspContext ctx(GroupId::F2RelZ, A2);
  const GroupModel& G = ctx.group();
  WalkParams wp = solve_params(G, A2, P2, Q4);
  // force a violation of condition (2) by shrinking q_0's slack via p_1
  wp.p_n[1] = Rat(1, 100);
  CHECK_THROWS_AS(WeightedChain(ctx, wp), CwError);
}
