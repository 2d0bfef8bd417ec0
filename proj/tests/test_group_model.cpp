#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "cuspwalk/group_model.hpp"

using namespace cuspwalk;

TEST_CASE("free group multiplication and normal form") {
  GroupModel G(GroupId::F2RelZ);
  GroupElement a = G.parse("a1"), A = G.parse("a-1"), b = G.parse("b1");
  CHECK(G.mul(a, A) == G.identity());
  CHECK(G.mul(G.parse("a1.b1"), b) == G.parse("a1.b2"));
  CHECK(G.mul(G.parse("a1.b1.a2"), G.parse("a-2.b-1")) == G.parse("a1"));
  // inverse(inverse(g)) = g and g g^{-1} = e on a sample
  for (const auto& g : G.word_ball(3)) {
    CHECK(G.inverse(G.inverse(g)) == g);
    CHECK(G.mul(g, G.inverse(g)) == G.identity());
  }
}

TEST_CASE("z2-free-z multiplication stays in the abelian factor") {
  GroupModel G(GroupId::Z2FreeZ);
  GroupElement x = G.parse("p1,0"), y = G.parse("p0,1");
  CHECK(G.mul(x, y) == G.parse("p1,1"));
  CHECK(G.mul(G.parse("p1,1.t2"), G.parse("t-2.p-1,-1")) == G.identity());
  // associativity spot checks
  GroupElement t = G.parse("t1");
  auto lhs = G.mul(G.mul(x, t), y);
  auto rhs = G.mul(x, G.mul(t, y));
  CHECK(lhs == rhs);
}

TEST_CASE("word balls by BFS") {
  GroupModel G(GroupId::F2RelZ);
  CHECK(G.word_ball(0).size() == 1);
  CHECK(G.word_ball(1).size() == 5);
  CHECK(G.word_ball(2).size() == 17);
  CHECK(G.word_ball(3).size() == 53);  // 1 + 4 + 12 + 36
  // monotone nesting
  auto b2 = G.word_ball(2);
  std::set<std::string> keys;
  for (auto& g : G.word_ball(3)) keys.insert(element_key(g));
  for (auto& g : b2) CHECK(keys.count(element_key(g)) == 1);
  // closed under inverse
  std::set<std::string> k2;
  for (auto& g : b2) k2.insert(element_key(g));
  for (auto& g : b2) CHECK(k2.count(element_key(G.inverse(g))) == 1);
  CHECK_THROWS_AS(G.word_ball(10, 100), CwError);
}

TEST_CASE("coset representatives") {
  GroupModel G(GroupId::F2RelZ);
  CHECK(G.coset_of(G.parse("a3"), 0) == G.identity());
  CHECK(G.coset_of(G.parse("b1.a2"), 0) == G.parse("b1"));
  CHECK(G.coset_of(G.parse("a1.b1"), 0) == G.parse("a1.b1"));
  // constant on H-orbits
  for (const auto& g : G.word_ball(3)) {
    auto rep = G.coset_of(g, 0);
    for (int k = -3; k <= 3; ++k) {
      GroupElement h;
      if (k != 0) h.w.push_back({0, k, 0});
      CHECK(G.coset_of(G.mul(g, h), 0) == rep);
    }
    // rep * offset == g
    CHECK(G.attach_offset(rep, G.parabolic_offset(g, 0), 0) == g);
  }
}

TEST_CASE("parabolic growth closed forms match BFS counts") {
  GroupModel Gf(GroupId::F2RelZ);
  CHECK(Gf.growth(0, int64_t(2)) == 5);
  CHECK(Gf.growth(0, int64_t(4)) == 9);
  GroupModel Gz(GroupId::Z2FreeZ);
  CHECK(Gz.growth(0, int64_t(2)) == 13);
  // brute-force l1 count for r <= 12
  for (int64_t r = 0; r <= 12; ++r) {
    int64_t cnt = 0;
    for (int64_t x = -r; x <= r; ++x)
      for (int64_t y = -r; y <= r; ++y)
        if (std::llabs(x) + std::llabs(y) <= r) ++cnt;
    CHECK(Gz.growth(0, r) == cnt);
    CHECK(Gf.growth(0, r) == 2 * r + 1);
  }
  // nondecreasing and floor semantics via rationals
  CHECK(Gf.growth(0, Rat(5, 2)) == 5);  // floor 2.5 = 2
}

TEST_CASE("format/parse round trip") {
  for (GroupId id : {GroupId::F2RelZ, GroupId::Z2FreeZ}) {
    GroupModel G(id);
    for (const auto& g : G.word_ball(3)) {
      CHECK(G.parse(G.format(g)) == g);
    }
  }
}
