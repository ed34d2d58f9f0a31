#pragma once

#include <cstdint>
#include <map>

#include "scalar.hpp"

namespace readshift {

// Sparse polynomial in one variable. coef maps degree to a nonzero
// coefficient; val/deg require a nonzero polynomial.
template <class S>
struct Poly {
  std::map<std::uint64_t, S> coef;

  bool zero() const { return coef.empty(); }

  void set(std::uint64_t d, const S& v) {
    if (scalar_is_zero(v)) coef.erase(d);
    else coef[d] = v;
  }

  static Poly monomial(std::uint64_t d, const S& v) {
    Poly p;
    p.set(d, v);
    return p;
  }

  std::uint64_t val() const {
    assert(!coef.empty());
    return coef.begin()->first;
  }

  std::uint64_t deg() const {
    assert(!coef.empty());
    return coef.rbegin()->first;
  }

  // |P| = sum of absolute coefficients.
  S abs_sum() const {
    S r{};
    for (const auto& [d, c] : coef) {
      (void)d;
      r = r + scalar_abs(c);
    }
    return r;
  }

  friend Poly operator*(const S& t, const Poly& p) {
    Poly r;
    if (scalar_is_zero(t)) return r;
    for (const auto& [d, c] : p.coef) r.coef.emplace(d, t * c);
    return r;
  }

  friend bool operator==(const Poly& x, const Poly& y) { return x.coef == y.coef; }
};

} // namespace readshift
