#pragma once

#include <cstdint>
#include <map>

#include "construction.hpp"
#include "polynomial.hpp"

namespace readshift {

// Coefficients over the weighted basis u_j (position frame).
template <class S>
struct UVec {
  std::map<std::uint64_t, S> c;

  void set(std::uint64_t j, const S& v) {
    if (scalar_is_zero(v))
      c.erase(j);
    else
      c[j] = v;
  }
  void add(std::uint64_t j, const S& v) {
    auto it = c.find(j);
    if (it == c.end()) {
      if (!scalar_is_zero(v)) c.emplace(j, v);
      return;
    }
    it->second = it->second + v;
    if (scalar_is_zero(it->second)) c.erase(it);
  }
  bool empty() const { return c.empty(); }
  friend bool operator==(const UVec& a, const UVec& b) { return a.c == b.c; }
};

// Coefficients over the orbit vectors gamma_j.  The operator acts on this
// frame as the plain index shift, which is what makes polynomial application
// exact.
template <class S>
struct GVec {
  std::map<std::uint64_t, S> c;

  void set(std::uint64_t j, const S& v) {
    if (scalar_is_zero(v))
      c.erase(j);
    else
      c[j] = v;
  }
  void add(std::uint64_t j, const S& v) {
    auto it = c.find(j);
    if (it == c.end()) {
      if (!scalar_is_zero(v)) c.emplace(j, v);
      return;
    }
    it->second = it->second + v;
    if (scalar_is_zero(it->second)) c.erase(it);
  }
  bool empty() const { return c.empty(); }
  friend bool operator==(const GVec& a, const GVec& b) { return a.c == b.c; }
};

template <class S>
FinVec<S> u_to_e(const ConstructionState<S>& st, const UVec<S>& x) {
  FinVec<S> v;
  for (const auto& [j, w] : x.c) {
    if (j >= st.horizon())
      throw horizon_error("position " + std::to_string(j) +
                          " is beyond the committed horizon " +
                          std::to_string(st.horizon()));
    v.add(st.index_at(j), w * st.alpha_at(j));
  }
  return v;
}

template <class S>
UVec<S> e_to_u(const ConstructionState<S>& st, const FinVec<S>& v) {
  UVec<S> x;
  for (const auto& [i, w] : v.c) {
    auto p = st.position_of_index(i);
    if (!p)
      throw horizon_error("basis index " + std::to_string(i) +
                          " has no committed position; build more stages");
    x.add(*p, w / st.alpha_at(*p));
  }
  return x;
}

// gamma_j = u_j + gamma_{j - a_k} inside stage k's echo window, so each u
// coefficient spills one echo term down; descending order resolves chains.
template <class S>
UVec<S> g_to_u(const ConstructionState<S>& st, const GVec<S>& x) {
  UVec<S> out;
  std::map<std::uint64_t, S> pending = x.c;
  while (!pending.empty()) {
    auto it = std::prev(pending.end());
    std::uint64_t j = it->first;
    S w = it->second;
    pending.erase(it);
    if (scalar_is_zero(w)) continue;
    if (j >= st.horizon())
      throw horizon_error("orbit position " + std::to_string(j) +
                          " is beyond the committed horizon");
    out.add(j, w);
    if (auto k = st.echo_interval(j)) {
      std::uint64_t tail = j - st.a[*k];
      auto lo = pending.find(tail);
      if (lo == pending.end())
        pending.emplace(tail, w);
      else
        lo->second = lo->second + w;
    }
  }
  return out;
}

// Inverse change of frame: u_j = gamma_j - gamma_{j - a_k} in echo windows.
template <class S>
GVec<S> u_to_g(const ConstructionState<S>& st, const UVec<S>& x) {
  GVec<S> out;
  for (const auto& [j, w] : x.c) {
    if (j >= st.horizon())
      throw horizon_error("position " + std::to_string(j) +
                          " is beyond the committed horizon");
    out.add(j, w);
    if (auto k = st.echo_interval(j)) out.add(j - st.a[*k], S{} - w);
  }
  return out;
}

template <class S>
UVec<S> apply_T(const ConstructionState<S>& st, const UVec<S>& x) {
  UVec<S> out;
  for (const auto& [j, w] : x.c)
    for (const auto& [p, coeff] : tu_position(st, j)) out.add(p, w * coeff);
  return out;
}

template <class S>
GVec<S> apply_T_orbit(const ConstructionState<S>& st, const GVec<S>& x) {
  GVec<S> out;
  for (const auto& [j, w] : x.c) {
    if (j + 1 >= st.horizon())
      throw horizon_error("orbit position " + std::to_string(j + 1) +
                          " is beyond the committed horizon");
    out.add(j + 1, w);
  }
  return out;
}

// P(T) x, evaluated in the orbit frame where T is an exact shift.
template <class S>
GVec<S> apply_poly_orbit(const ConstructionState<S>& st, const Poly<S>& poly,
                         const GVec<S>& x) {
  GVec<S> out;
  for (const auto& [d, rho] : poly.coef)
    for (const auto& [j, w] : x.c) {
      if (j + d >= st.horizon())
        throw horizon_error("orbit position " + std::to_string(j + d) +
                            " is beyond the committed horizon");
      out.add(j + d, rho * w);
    }
  return out;
}

template <class S>
UVec<S> apply_poly(const ConstructionState<S>& st, const Poly<S>& poly, const UVec<S>& x) {
  return g_to_u(st, apply_poly_orbit(st, poly, u_to_g(st, x)));
}

// Certified continuity estimate: p_N(T x) <= 8 C_{N+1} L_N p_{N+2}(x) for
// every x supported on committed positions.  Returns the slack, which the
// certificates keep nonnegative.
template <class S>
S continuity_margin(const ConstructionState<S>& st, std::uint32_t normN, const UVec<S>& x) {
  if (normN < 1 || normN > st.stages_done)
    throw config_error("continuity margin needs 1 <= N <= committed stage count");
  S lhs = scalar_from_int<S>(8) * basis_constant<S>(st.space, normN + 1) * st.L[normN] *
          seminorm(st.space, normN + 2, u_to_e(st, x));
  S rhs = seminorm(st.space, normN, u_to_e(st, apply_T(st, x)));
  return lhs - rhs;
}

} // namespace readshift
