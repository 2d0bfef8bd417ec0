// Small shared utilities: exact rationals, RNG streams, error type, stats.
#pragma once

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cuspwalk {

using Rat = mpq_class;

// Error kinds map onto CLI exit codes (config -> 2, budget -> 3, check -> 1).
enum class ErrKind { Config, Budget, Check, Internal };

struct CwError : std::runtime_error {
  ErrKind kind;
  CwError(ErrKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline Rat rat(long num, long den = 1) {
  Rat r(num, den);
  r.canonicalize();
  return r;
}

inline double to_double(const Rat& r) { return r.get_d(); }

// r^n for integer n >= 0.
inline Rat rat_pow(const Rat& r, unsigned n) {
  Rat out = 1;
  Rat base = r;
  unsigned e = n;
  while (e) {
    if (e & 1) out *= base;
    base *= base;
    e >>= 1;
  }
  return out;
}

inline int64_t rat_floor(const Rat& r) {
  mpz_class q;
  mpz_fdiv_q(q.get_mpz_t(), r.get_num().get_mpz_t(), r.get_den().get_mpz_t());
  if (!q.fits_slong_p()) throw CwError(ErrKind::Budget, "rational floor out of int64 range");
  return q.get_si();
}

inline std::string rat_str(const Rat& r) { return r.get_str(); }

// SplitMix64: seed derivation for worker/path streams.
inline uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  uint64_t s = master ^ (0x2545F4914F6CDD1DULL * (index + 1));
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

// xoshiro256** — small, fast, and deterministic across platforms.
struct Rng {
  uint64_t s[4];
  explicit Rng(uint64_t seed = 1) {
    uint64_t x = seed;
    for (auto& v : s) v = splitmix64(x);
  }
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
  uint64_t next() {
    uint64_t result = rotl(s[1] * 5, 7) * 9;
    uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }
  // uniform in [0, n)
  uint64_t below(uint64_t n) {
    // modulo bias negligible for n << 2^64; kept simple and deterministic
    return next() % n;
  }
};

// Ordinary least squares y = slope*x + intercept; returns R^2 and residual-based
// standard error of the slope.
struct LineFit {
  double slope = 0, intercept = 0, r2 = 0, slope_stderr = 0;
  size_t n = 0;
};

inline LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  LineFit f;
  f.n = xs.size();
  if (xs.size() != ys.size() || xs.size() < 2) throw CwError(ErrKind::Check, "fit_line: need >= 2 points");
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0) throw CwError(ErrKind::Check, "fit_line: degenerate x spread");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double e = ys[i] - (f.slope * xs[i] + f.intercept);
    ssr += e * e;
  }
  f.r2 = (syy == 0) ? 1.0 : 1.0 - ssr / syy;
  if (xs.size() > 2) f.slope_stderr = std::sqrt(ssr / double(xs.size() - 2) / sxx);
  return f;
}

struct MeanStderr {
  double mean = 0, stderr_ = 0;
  size_t n = 0;
};

inline MeanStderr mean_stderr(const std::vector<double>& v) {
  MeanStderr m;
  m.n = v.size();
  if (v.empty()) throw CwError(ErrKind::Check, "mean_stderr: empty sample");
  double s = 0;
  for (double x : v) s += x;
  m.mean = s / v.size();
  double q = 0;
  for (double x : v) q += (x - m.mean) * (x - m.mean);
  if (v.size() > 1) m.stderr_ = std::sqrt(q / double(v.size() - 1) / double(v.size()));
  return m;
}

// FNV-1a over a string; used for config hashes embedded in reports.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cuspwalk
