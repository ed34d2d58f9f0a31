#pragma once

#include <bit>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include <boost/multiprecision/gmp.hpp>

#include "errors.hpp"

namespace readshift {

using Rat = boost::multiprecision::mpq_rational;
using Int = boost::multiprecision::mpz_int;

// Scaled binary64: value = m * 2^e with m == 0 or |m| in [0.5, 1).
// Mantissa arithmetic is plain IEEE double, only the exponent range is
// widened, so relative rounding behaves exactly like double while
// magnitudes far beyond 2^1024 stay representable. The construction's
// coefficients overflow plain double from stage 2 on.
struct Fp {
  double m = 0.0;
  std::int64_t e = 0;

  static Fp make(double man, std::int64_t ex) {
    assert(std::isfinite(man));
    if (man == 0.0) return {};
    int k = 0;
    double f = std::frexp(man, &k);
    return Fp{f, ex + k};
  }

  static Fp from_double(double v) { return make(v, 0); }
  static Fp from_int(long long v) { return make(static_cast<double>(v), 0); }

  bool zero() const { return m == 0.0; }
  bool negative() const { return m < 0.0; }

  friend Fp operator-(Fp a) { return {-a.m, a.e}; }

  friend Fp operator+(Fp a, Fp b) {
    if (a.m == 0.0) return b;
    if (b.m == 0.0) return a;
    if (a.e < b.e || (a.e == b.e && std::fabs(a.m) < std::fabs(b.m))) std::swap(a, b);
    std::int64_t d = a.e - b.e;
    if (d > 1100) return a; // addend is below one ulp at any alignment
    return make(a.m + std::ldexp(b.m, -static_cast<int>(d)), a.e);
  }

  friend Fp operator-(Fp a, Fp b) { return a + (-b); }

  friend Fp operator*(Fp a, Fp b) {
    if (a.m == 0.0 || b.m == 0.0) return {};
    return make(a.m * b.m, a.e + b.e);
  }

  friend Fp operator/(Fp a, Fp b) {
    assert(b.m != 0.0);
    if (a.m == 0.0) return {};
    return make(a.m / b.m, a.e - b.e);
  }

  // Exact for normalized representations: (sign, e, |m|) is lexicographic.
  friend int cmp(const Fp& a, const Fp& b) {
    int sa = a.m == 0.0 ? 0 : (a.m < 0.0 ? -1 : 1);
    int sb = b.m == 0.0 ? 0 : (b.m < 0.0 ? -1 : 1);
    if (sa != sb) return sa < sb ? -1 : 1;
    if (sa == 0) return 0;
    double ma = std::fabs(a.m), mb = std::fabs(b.m);
    int mag = a.e != b.e ? (a.e < b.e ? -1 : 1) : (ma < mb ? -1 : (ma > mb ? 1 : 0));
    return sa * mag;
  }

  friend bool operator==(const Fp& a, const Fp& b) { return a.m == b.m && a.e == b.e; }
  friend bool operator!=(const Fp& a, const Fp& b) { return !(a == b); }
  friend bool operator<(const Fp& a, const Fp& b) { return cmp(a, b) < 0; }
  friend bool operator<=(const Fp& a, const Fp& b) { return cmp(a, b) <= 0; }
  friend bool operator>(const Fp& a, const Fp& b) { return cmp(a, b) > 0; }
  friend bool operator>=(const Fp& a, const Fp& b) { return cmp(a, b) >= 0; }

  double to_double() const {
    if (m == 0.0) return 0.0;
    if (e > 1024) return m < 0 ? -HUGE_VAL : HUGE_VAL;
    if (e < -1080) return 0.0;
    return std::ldexp(m, static_cast<int>(e));
  }

  // log2 |value|, for reports and growth projections only.
  double log2_abs() const {
    assert(m != 0.0);
    return std::log2(std::fabs(m)) + static_cast<double>(e);
  }

  // Hex-float with a decimal exponent field wide enough for the scaled
  // range: "-0x1.8000000000000p+3" is -12. Round-trips bit-exactly.
  std::string str() const {
    if (m == 0.0) return "0x0p+0";
    double am = std::fabs(m) * 2.0; // [1, 2)
    std::uint64_t frac = std::bit_cast<std::uint64_t>(am) & ((std::uint64_t{1} << 52) - 1);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s0x1.%013llxp%+lld", m < 0.0 ? "-" : "",
                  static_cast<unsigned long long>(frac), static_cast<long long>(e - 1));
    return buf;
  }

  static Fp parse(std::string_view s) {
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
      neg = s[0] == '-';
      s.remove_prefix(1);
    }
    if (s == "0x0p+0") return {};
    if (s.size() < 8 || s.substr(0, 4) != "0x1." )
      throw config_error("bad scalar literal: expected hex-float");
    std::size_t p = s.find('p', 4);
    if (p == std::string_view::npos) throw config_error("bad scalar literal: missing exponent");
    std::uint64_t frac = 0;
    std::string_view digits = s.substr(4, p - 4);
    if (digits.size() != 13) throw config_error("bad scalar literal: mantissa width");
    for (char c : digits) {
      int d = c >= '0' && c <= '9' ? c - '0'
            : c >= 'a' && c <= 'f' ? c - 'a' + 10
            : -1;
      if (d < 0) throw config_error("bad scalar literal: mantissa digit");
      frac = frac * 16 + static_cast<std::uint64_t>(d);
    }
    long long ex = 0;
    try {
      ex = std::stoll(std::string(s.substr(p + 1)));
    } catch (const std::exception&) {
      throw config_error("bad scalar literal: exponent");
    }
    double am = std::bit_cast<double>(std::bit_cast<std::uint64_t>(1.0) | frac); // [1, 2)
    Fp r{am / 2.0, ex + 1};
    return neg ? -r : r;
  }
};

inline Fp abs(Fp a) { return {std::fabs(a.m), a.e}; }

inline Fp sqrt(Fp a) {
  assert(a.m >= 0.0);
  if (a.m == 0.0) return {};
  std::int64_t r = ((a.e % 2) + 2) % 2;
  std::int64_t q = (a.e - r) / 2;
  return Fp::make(std::sqrt(std::ldexp(a.m, static_cast<int>(r))), q);
}

// --- uniform scalar interface -------------------------------------------
//
// The construction and analysis code is templated over S in {Fp, Rat}.
// Rat is exact (tolerances are zero, square roots are refused), Fp carries
// the binary64 relative-tolerance policy.

template <class S> inline constexpr bool scalar_exact = false;
template <> inline constexpr bool scalar_exact<Rat> = true;

template <class S> inline const char* scalar_mode_name();
template <> inline const char* scalar_mode_name<Fp>() { return "binary64"; }
template <> inline const char* scalar_mode_name<Rat>() { return "rational"; }

template <class S> S scalar_from_int(long long v);
template <> inline Fp scalar_from_int<Fp>(long long v) { return Fp::from_int(v); }
template <> inline Rat scalar_from_int<Rat>(long long v) { return Rat(v); }

// p/q in whichever scalar the caller works in.
template <class S> S rat_like(long long p, long long q) {
  return scalar_from_int<S>(p) / scalar_from_int<S>(q);
}

// 2^k for possibly large |k|.
template <class S> S scalar_pow2(long long k);
template <> inline Fp scalar_pow2<Fp>(long long k) { return Fp{0.5, k + 1}; }
template <> inline Rat scalar_pow2<Rat>(long long k) {
  Int p = Int(1) << static_cast<unsigned>(k < 0 ? -k : k);
  return k < 0 ? Rat(Int(1), p) : Rat(p);
}

inline bool scalar_is_zero(const Fp& a) { return a.zero(); }
inline bool scalar_is_zero(const Rat& a) { return a.is_zero(); }

inline Fp scalar_abs(const Fp& a) { return abs(a); }
inline Rat scalar_abs(const Rat& a) { return a < 0 ? Rat(-a) : a; }

inline Fp scalar_sqrt(const Fp& a) { return sqrt(a); }
inline Rat scalar_sqrt(const Rat&) {
  throw config_error("exact-rational mode has no square root; use binary64 mode");
}

inline Fp scalar_max(const Fp& a, const Fp& b) { return cmp(a, b) < 0 ? b : a; }
inline Rat scalar_max(const Rat& a, const Rat& b) { return a < b ? b : a; }

inline std::string scalar_str(const Fp& a) { return a.str(); }
inline std::string scalar_str(const Rat& a) { return a.str(); }

// Restores the canonical form (coprime, positive denominator) that GMP's
// comparison and printing primitives assume. Arithmetic preserves it; only
// raw numerator/denominator construction can break it.
inline Rat rat_canonical(Rat r) {
  mpq_canonicalize(r.backend().data());
  return r;
}

// Strict base-10 integer parse. GMP's string constructor treats a leading
// zero as an octal prefix, which silently corrupts decimal input.
inline Int int_from_decimal(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) throw config_error("bad integer literal");
  for (char c : s)
    if (c < '0' || c > '9') throw config_error("bad integer literal digit");
  while (s.size() > 1 && s[0] == '0') s.remove_prefix(1);
  Int v{std::string(s)};
  return neg ? Int(-v) : v;
}

inline Rat rat_make(Int num, Int den) {
  if (den.is_zero()) throw config_error("zero denominator");
  return rat_canonical(Rat(std::move(num), std::move(den)));
}

template <class S> S scalar_parse(const std::string& s);
template <> inline Fp scalar_parse<Fp>(const std::string& s) { return Fp::parse(s); }
template <> inline Rat scalar_parse<Rat>(const std::string& s) {
  try {
    std::size_t slash = s.find('/');
    if (slash == std::string::npos) return Rat(int_from_decimal(s));
    return rat_make(int_from_decimal(s.substr(0, slash)), int_from_decimal(s.substr(slash + 1)));
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error("bad rational literal: " + s);
  }
}

inline double scalar_to_double(const Fp& a) { return a.to_double(); }
inline double scalar_to_double(const Rat& a) { return a.template convert_to<double>(); }

inline double scalar_log2_abs(const Fp& a) { return a.log2_abs(); }
inline double scalar_log2_abs(const Rat& a) {
  assert(!a.is_zero());
  Int n = boost::multiprecision::numerator(a), d = boost::multiprecision::denominator(a);
  if (n < 0) n = -n;
  return static_cast<double>(msb(n)) - static_cast<double>(msb(d));
}

// Human-facing coefficient grammar: integer, p/q, or decimal. Decimals are
// exact in rational mode (scaled by a power of ten).
template <class S> S scalar_parse_human(const std::string& s);

template <> inline Fp scalar_parse_human<Fp>(const std::string& s) {
  std::size_t slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      double n = std::stod(s.substr(0, slash));
      double d = std::stod(s.substr(slash + 1));
      if (d == 0.0) throw config_error("zero denominator in coefficient: " + s);
      return Fp::from_double(n) / Fp::from_double(d);
    }
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw config_error("bad coefficient: " + s);
    return Fp::from_double(v);
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error("bad coefficient: " + s);
  }
}

template <> inline Rat scalar_parse_human<Rat>(const std::string& s) {
  try {
    std::size_t slash = s.find('/');
    if (slash != std::string::npos)
      return rat_make(int_from_decimal(s.substr(0, slash)), int_from_decimal(s.substr(slash + 1)));
    std::size_t dot = s.find('.');
    if (dot == std::string::npos) return Rat(int_from_decimal(s));
    std::string digits = s.substr(0, dot) + s.substr(dot + 1);
    std::size_t frac_len = s.size() - dot - 1;
    Int scale = 1;
    for (std::size_t i = 0; i < frac_len; ++i) scale *= 10;
    return rat_make(int_from_decimal(digits), scale);
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error("bad coefficient: " + s);
  }
}

// --- tolerance policy ----------------------------------------------------
//
// Exact mode compares exactly. binary64 mode accepts a deficit of at most
// 1e-9 * |rhs| on "lhs >= rhs" checks; a strict ">" against rhs == 0 must
// be genuinely positive in both modes.

inline const Fp& fp_rel_tol() {
  static const Fp tol = Fp::from_double(1e-9);
  return tol;
}

template <class S> bool scalar_ge_ok(const S& lhs, const S& rhs);
template <> inline bool scalar_ge_ok<Rat>(const Rat& lhs, const Rat& rhs) { return lhs >= rhs; }
template <> inline bool scalar_ge_ok<Fp>(const Fp& lhs, const Fp& rhs) {
  return lhs - rhs >= -(fp_rel_tol() * abs(rhs));
}

template <class S> bool scalar_gt_ok(const S& lhs, const S& rhs);
template <> inline bool scalar_gt_ok<Rat>(const Rat& lhs, const Rat& rhs) { return lhs > rhs; }
template <> inline bool scalar_gt_ok<Fp>(const Fp& lhs, const Fp& rhs) {
  if (rhs.zero()) return lhs > Fp{};
  return scalar_ge_ok(lhs, rhs);
}

} // namespace readshift
