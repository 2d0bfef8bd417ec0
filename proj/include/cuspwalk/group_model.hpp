// Exact group arithmetic and growth data for the built-in relatively
// hyperbolic pairs:
//   f2-rel-z : Gamma = F(a,b) free of rank 2, parabolic H = <a> = Z
//   z2-free-z: Gamma = Z^2 * Z (free product), parabolic H = Z^2 factor
//
// Elements are stored in syllable normal form (alternating nonzero powers of
// the two free factors), which makes equality representational and the word
// problem trivial.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cuspwalk/util.hpp"

namespace cuspwalk {

enum class GroupId { F2RelZ, Z2FreeZ };

GroupId parse_group_id(const std::string& name);
std::string group_id_name(GroupId id);

// One syllable of the normal form. Factor 0 is the parabolic-side factor
// (<a> resp. Z^2), factor 1 is the free complement (<b> resp. Z = <t>).
// For Z^2 the coordinates are (x, y); elsewhere y is unused and kept 0.
struct Syllable {
  uint8_t factor = 0;
  int64_t x = 0;
  int64_t y = 0;
  bool operator==(const Syllable&) const = default;
};

struct GroupElement {
  std::vector<Syllable> w;  // alternating factors, all syllables nonzero
  bool operator==(const GroupElement&) const = default;
  bool is_identity() const { return w.empty(); }
};

// Parabolic elements as integer vectors; Z uses (k, 0).
struct HVec {
  int64_t x = 0;
  int64_t y = 0;
  bool operator==(const HVec&) const = default;
};

struct ParabolicSpec {
  int index = 0;
  int growth_order = 1;                // d_H
  std::vector<int64_t> growth_table;   // g_H(r) for r = 0..table_max
};

class GroupModel {
 public:
  explicit GroupModel(GroupId id);

  GroupId id() const { return id_; }
  GroupElement identity() const { return {}; }
  const std::vector<GroupElement>& generators() const { return gens_; }
  int cayley_degree() const { return int(gens_.size()); }

  GroupElement mul(const GroupElement& g, const GroupElement& h) const;
  GroupElement inverse(const GroupElement& g) const;
  int64_t word_length(const GroupElement& g) const;

  // Cayley ball by BFS over S; throws Budget if it exceeds `budget` elements.
  std::vector<GroupElement> word_ball(int radius, size_t budget = 10'000'000) const;

  int parabolic_count() const { return 1; }
  const ParabolicSpec& parabolic(int i) const;

  // g_H(floor(r)): exact Cayley-ball cardinality in H_i (closed form, matches
  // the BFS table on the tabulated range).
  int64_t growth(int i, int64_t r_floor) const;
  int64_t growth(int i, const Rat& r) const { return growth(i, rat_floor(r)); }

  bool in_parabolic(const GroupElement& g, int i) const;
  // Canonical coset representative of gH_i (normal form with the trailing
  // parabolic syllable stripped).
  GroupElement coset_of(const GroupElement& g, int i) const;
  // g = coset_of(g) * offset; returns the offset as an integer vector.
  HVec parabolic_offset(const GroupElement& g, int i) const;
  // coset * h for h given as a vector.
  GroupElement attach_offset(const GroupElement& coset, HVec h, int i) const;
  static int64_t hvec_norm(HVec h) { return std::llabs(h.x) + std::llabs(h.y); }

  // Compact printable form, e.g. "a3.b-1" / "p1,-2.t3"; "e" for the identity.
  std::string format(const GroupElement& g) const;
  GroupElement parse(const std::string& s) const;

 private:
  GroupId id_;
  std::vector<GroupElement> gens_;
  ParabolicSpec pspec_;
};

// Canonical byte key for an element (used for hashing/interning and as the
// deterministic tie-break order together with depth).
std::string element_key(const GroupElement& g);

}  // namespace cuspwalk
