#include "cuspwalk/group_model.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <unordered_map>
#include <unordered_set>

namespace cuspwalk {

GroupId parse_group_id(const std::string& name) {
  if (name == "f2-rel-z") return GroupId::F2RelZ;
  if (name == "z2-free-z") return GroupId::Z2FreeZ;
  throw CwError(ErrKind::Config, "unknown group: " + name);
}

std::string group_id_name(GroupId id) {
  return id == GroupId::F2RelZ ? "f2-rel-z" : "z2-free-z";
}

static GroupElement syl1(uint8_t f, int64_t x, int64_t y = 0) {
  GroupElement g;
  g.w.push_back({f, x, y});
  return g;
}

GroupModel::GroupModel(GroupId id) : id_(id) {
  if (id_ == GroupId::F2RelZ) {
    gens_ = {syl1(0, 1), syl1(0, -1), syl1(1, 1), syl1(1, -1)};
    pspec_.growth_order = 1;
  } else {
    gens_ = {syl1(0, 1, 0), syl1(0, -1, 0), syl1(0, 0, 1), syl1(0, 0, -1),
             syl1(1, 1),    syl1(1, -1)};
    pspec_.growth_order = 2;
  }
  pspec_.index = 0;
  for (int64_t r = 0; r <= 64; ++r) pspec_.growth_table.push_back(growth(0, r));
}

const ParabolicSpec& GroupModel::parabolic(int i) const {
  if (i != 0) throw CwError(ErrKind::Config, "parabolic index out of range");
  return pspec_;
}

int64_t GroupModel::growth(int i, int64_t r) const {
  if (i != 0) throw CwError(ErrKind::Config, "parabolic index out of range");
  if (r < 0) throw CwError(ErrKind::Config, "growth: negative radius");
  // Z: 2r+1.  Z^2 with l1 metric: 2r^2+2r+1.
  if (id_ == GroupId::F2RelZ) return 2 * r + 1;
  return 2 * r * r + 2 * r + 1;
}

GroupElement GroupModel::mul(const GroupElement& g, const GroupElement& h) const {
  GroupElement out = g;
  for (const Syllable& s : h.w) {
    if (!out.w.empty() && out.w.back().factor == s.factor) {
      out.w.back().x += s.x;
      out.w.back().y += s.y;
      if (out.w.back().x == 0 && out.w.back().y == 0) out.w.pop_back();
    } else {
      out.w.push_back(s);
    }
  }
  return out;
}

GroupElement GroupModel::inverse(const GroupElement& g) const {
  GroupElement out;
  out.w.reserve(g.w.size());
  for (auto it = g.w.rbegin(); it != g.w.rend(); ++it) out.w.push_back({it->factor, -it->x, -it->y});
  return out;
}

int64_t GroupModel::word_length(const GroupElement& g) const {
  int64_t n = 0;
  for (const Syllable& s : g.w) n += std::llabs(s.x) + std::llabs(s.y);
  return n;
}

std::vector<GroupElement> GroupModel::word_ball(int radius, size_t budget) const {
  if (radius < 0) throw CwError(ErrKind::Config, "word_ball: negative radius");
  std::vector<GroupElement> out;
  std::unordered_set<std::string> seen;
  std::deque<std::pair<GroupElement, int>> q;
  q.push_back({identity(), 0});
  seen.insert(element_key(identity()));
  while (!q.empty()) {
    auto [g, d] = q.front();
    q.pop_front();
    out.push_back(g);
    if (out.size() > budget) throw CwError(ErrKind::Budget, "word_ball: element budget exceeded");
    if (d == radius) continue;
    for (const GroupElement& s : gens_) {
      GroupElement n = mul(g, s);
      auto key = element_key(n);
      if (seen.insert(key).second) q.push_back({n, d + 1});
    }
  }
  return out;
}

bool GroupModel::in_parabolic(const GroupElement& g, int i) const {
  (void)parabolic(i);
  if (g.w.empty()) return true;
  return g.w.size() == 1 && g.w[0].factor == 0;
}

GroupElement GroupModel::coset_of(const GroupElement& g, int i) const {
  (void)parabolic(i);
  GroupElement out = g;
  if (!out.w.empty() && out.w.back().factor == 0) out.w.pop_back();
  return out;
}

HVec GroupModel::parabolic_offset(const GroupElement& g, int i) const {
  (void)parabolic(i);
  if (g.w.empty() || g.w.back().factor != 0) return {0, 0};
  return {g.w.back().x, g.w.back().y};
}

GroupElement GroupModel::attach_offset(const GroupElement& coset, HVec h, int i) const {
  (void)parabolic(i);
  GroupElement out = coset;
  if (h.x == 0 && h.y == 0) return out;
  // coset representatives never end in a parabolic syllable, so no merge
  out.w.push_back({0, h.x, h.y});
  return out;
}

std::string GroupModel::format(const GroupElement& g) const {
  if (g.w.empty()) return "e";
  std::string s;
  for (size_t i = 0; i < g.w.size(); ++i) {
    if (i) s += '.';
    const Syllable& y = g.w[i];
    if (id_ == GroupId::F2RelZ) {
      s += (y.factor == 0 ? 'a' : 'b');
      s += std::to_string(y.x);
    } else if (y.factor == 0) {
      s += 'p';
      s += std::to_string(y.x);
      s += ',';
      s += std::to_string(y.y);
    } else {
      s += 't';
      s += std::to_string(y.x);
    }
  }
  return s;
}

GroupElement GroupModel::parse(const std::string& str) const {
  GroupElement g;
  if (str == "e") return g;
  size_t pos = 0;
  while (pos < str.size()) {
    size_t dot = str.find('.', pos);
    std::string tok = str.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    pos = dot == std::string::npos ? str.size() : dot + 1;
    if (tok.empty()) throw CwError(ErrKind::Config, "parse: empty syllable in '" + str + "'");
    Syllable s;
    char c = tok[0];
    std::string rest = tok.substr(1);
    if (id_ == GroupId::F2RelZ) {
      if (c != 'a' && c != 'b') throw CwError(ErrKind::Config, "parse: bad syllable '" + tok + "'");
      s.factor = (c == 'a') ? 0 : 1;
      s.x = std::strtoll(rest.c_str(), nullptr, 10);
    } else if (c == 'p') {
      s.factor = 0;
      size_t comma = rest.find(',');
      if (comma == std::string::npos) throw CwError(ErrKind::Config, "parse: bad syllable '" + tok + "'");
      s.x = std::strtoll(rest.substr(0, comma).c_str(), nullptr, 10);
      s.y = std::strtoll(rest.substr(comma + 1).c_str(), nullptr, 10);
    } else if (c == 't') {
      s.factor = 1;
      s.x = std::strtoll(rest.c_str(), nullptr, 10);
    } else {
      throw CwError(ErrKind::Config, "parse: bad syllable '" + tok + "'");
    }
    if (s.x == 0 && s.y == 0) throw CwError(ErrKind::Config, "parse: zero syllable in '" + str + "'");
    GroupElement one;
    one.w.push_back(s);
    g = mul(g, one);
  }
  return g;
}

static void put_varint(std::string& out, int64_t v) {
  // zigzag + LEB128
  uint64_t u = (uint64_t(v) << 1) ^ uint64_t(v >> 63);
  do {
    uint8_t b = u & 0x7f;
    u >>= 7;
    if (u) b |= 0x80;
    out.push_back(char(b));
  } while (u);
}

std::string element_key(const GroupElement& g) {
  std::string out;
  out.reserve(g.w.size() * 3 + 1);
  for (const Syllable& s : g.w) {
    out.push_back(char(s.factor + 1));
    put_varint(out, s.x);
    put_varint(out, s.y);
  }
  return out;
}

}  // namespace cuspwalk
