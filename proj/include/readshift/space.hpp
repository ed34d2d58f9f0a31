#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"
#include "scalar.hpp"

namespace readshift {

// Sparse vector over the basis enumeration of a space. Entries are keyed by
// enum_no; zero coefficients are never stored. std::map keeps iteration
// order deterministic.
template <class S>
struct FinVec {
  std::map<std::uint64_t, S> c;

  bool zero() const { return c.empty(); }

  void set(std::uint64_t i, const S& v) {
    if (scalar_is_zero(v)) c.erase(i);
    else c[i] = v;
  }

  void add(std::uint64_t i, const S& v) {
    auto it = c.find(i);
    if (it == c.end()) {
      if (!scalar_is_zero(v)) c.emplace(i, v);
      return;
    }
    it->second = it->second + v;
    if (scalar_is_zero(it->second)) c.erase(it);
  }

  void add_scaled(const FinVec& w, const S& t) {
    for (const auto& [i, v] : w.c) add(i, t * v);
  }

  friend FinVec operator+(FinVec a, const FinVec& b) {
    a.add_scaled(b, scalar_from_int<S>(1));
    return a;
  }

  friend FinVec operator-(FinVec a, const FinVec& b) {
    a.add_scaled(b, scalar_from_int<S>(-1));
    return a;
  }

  friend FinVec operator*(const S& t, const FinVec& a) {
    FinVec r;
    if (scalar_is_zero(t)) return r;
    for (const auto& [i, v] : a.c) r.c.emplace(i, t * v);
    return r;
  }

  friend bool operator==(const FinVec& a, const FinVec& b) { return a.c == b.c; }
};

// Triangular-number helpers for the Cantor antidiagonal enumeration of
// (copy, coordinate) pairs: enum = d(d+1)/2 + (copy-1) with d = copy-1+coord.
inline std::uint64_t tri(std::uint64_t d) { return d * (d + 1) / 2; }

inline std::uint64_t antidiag_of(std::uint64_t e) {
  auto d = static_cast<std::uint64_t>(std::sqrt(2.0L * static_cast<long double>(e) + 0.25L));
  while (tri(d) > e) --d;
  while (tri(d + 1) <= e) ++d;
  return d;
}

// Immutable space descriptor. Bases (omega, l1, l2, finite-dimensional) are
// descriptors too, so power_of composes them; the four config-file names map
// to omega, power_of(l1), power_of(l2) and the direct sum omega + l2.
class Space {
public:
  enum class Form { omega, banach_l1, banach_l2, findim, power, sum_omega_l2 };

  // Decoded basis address. part: 0 = main/only summand, 1 = omega summand of
  // the direct sum. copy is 1-based for power spaces, 0 elsewhere. coord is
  // the 0-based coordinate inside the copy/summand; for omega-style parts the
  // visible coordinate is coord+1.
  struct Addr {
    std::uint32_t part = 0;
    std::uint64_t copy = 0;
    std::uint64_t coord = 0;
  };

  static Space omega() { return Space(Form::omega, "omega"); }
  static Space banach_l1() { return Space(Form::banach_l1, "l1"); }
  static Space banach_l2() { return Space(Form::banach_l2, "l2"); }

  static Space findim(std::uint32_t dim) {
    if (dim == 0) throw config_error("finite-dimensional base needs dim >= 1");
    Space s(Form::findim, "findim(" + std::to_string(dim) + ")");
    s.base_dim_ = dim;
    return s;
  }

  static Space power_of(const Space& base) {
    switch (base.form_) {
      case Form::omega:
      case Form::banach_l1:
      case Form::banach_l2:
      case Form::findim: break;
      default: throw config_error("power space over " + base.name_ + " is not supported");
    }
    Space s(Form::power, base.name_ + "_power");
    s.base_form_ = base.form_;
    s.base_dim_ = base.base_dim_;
    return s;
  }

  static Space l1_power() {
    Space s = power_of(banach_l1());
    s.name_ = "l1_power";
    return s;
  }

  static Space l2_power() {
    Space s = power_of(banach_l2());
    s.name_ = "l2_power";
    return s;
  }

  static Space omega_plus_l2() { return Space(Form::sum_omega_l2, "omega_plus_l2"); }

  // Accepts every name the factories produce, so from_name(sp.name()) == sp.
  static Space from_name(const std::string& n) {
    if (n == "omega") return omega();
    if (n == "l1") return banach_l1();
    if (n == "l2") return banach_l2();
    if (n == "omega_power") return power_of(omega());
    if (n == "l1_power") return l1_power();
    if (n == "l2_power") return l2_power();
    if (n == "omega_plus_l2") return omega_plus_l2();
    if (n.size() > 8 && n.substr(0, 7) == "findim(" && n.back() == ')') {
      std::uint32_t dim = 0;
      for (char c : n.substr(7, n.size() - 8)) {
        if (c < '0' || c > '9') throw config_error("unknown space: " + n);
        dim = dim * 10 + static_cast<std::uint32_t>(c - '0');
      }
      return findim(dim);
    }
    if (n.size() > 6 && n.substr(n.size() - 6) == "_power") {
      return power_of(from_name(n.substr(0, n.size() - 6)));
    }
    throw config_error("unknown space: " + n);
  }

  const std::string& name() const { return name_; }
  Form form() const { return form_; }
  Form base_form() const { return base_form_; }

  bool needs_sqrt() const {
    return form_ == Form::banach_l2 || form_ == Form::sum_omega_l2 ||
           (form_ == Form::power && base_form_ == Form::banach_l2);
  }

  // True iff every E_level is infinite; precondition for running the
  // construction.
  bool level_infinite() const {
    return form_ == Form::power &&
           (base_form_ == Form::banach_l1 || base_form_ == Form::banach_l2);
  }

  Addr decode(std::uint64_t e) const {
    switch (form_) {
      case Form::omega: return {0, 0, e};
      case Form::banach_l1:
      case Form::banach_l2: return {0, 0, e};
      case Form::findim:
        if (e >= base_dim_) throw config_error(name_ + ": basis index out of range");
        return {0, 0, e};
      case Form::power: {
        std::uint64_t d = antidiag_of(e);
        std::uint64_t off = e - tri(d); // copy-1
        Addr a{0, off + 1, d - off};
        if (base_form_ == Form::findim && a.coord >= base_dim_)
          throw config_error(name_ + ": basis index out of range");
        return a;
      }
      case Form::sum_omega_l2:
        return e % 2 == 0 ? Addr{0, 0, e / 2} : Addr{1, 0, e / 2};
    }
    throw config_error("bad space form");
  }

  std::uint64_t encode_pair(std::uint64_t copy, std::uint64_t coord) const {
    if (form_ != Form::power) throw config_error(name_ + ": e(n,k) addressing needs a power space");
    if (copy == 0) throw config_error("copy index is 1-based");
    if (base_form_ == Form::findim && coord >= base_dim_)
      throw config_error(name_ + ": coordinate out of range");
    return tri(copy - 1 + coord) + (copy - 1);
  }

  // omega coordinate n >= 1, or (part 0, k) for the l2 summand of the sum.
  std::uint64_t encode_omega(std::uint64_t n) const {
    if (n == 0) throw config_error("omega coordinates are 1-based");
    if (form_ == Form::omega) return n - 1;
    if (form_ == Form::sum_omega_l2) return 2 * (n - 1) + 1;
    throw config_error(name_ + ": e(n) addressing needs an omega summand");
  }

  std::uint64_t encode_sum_l2(std::uint64_t k) const {
    if (form_ != Form::sum_omega_l2) throw config_error(name_ + ": e(0,k) addressing needs the direct sum");
    return 2 * k;
  }

  // level_of(i) = the unique j with p_j(e_i) = 0 < p_{j+1}(e_i).
  std::uint32_t level_of(std::uint64_t e) const {
    Addr a = decode(e);
    switch (form_) {
      case Form::omega: return static_cast<std::uint32_t>(a.coord);
      case Form::banach_l1:
      case Form::banach_l2:
      case Form::findim: return 0;
      case Form::power:
        if (base_form_ == Form::omega) {
          std::uint64_t lv = a.copy > a.coord + 1 ? a.copy : a.coord + 1;
          return static_cast<std::uint32_t>(lv - 1);
        }
        return static_cast<std::uint32_t>(a.copy - 1);
      case Form::sum_omega_l2:
        return a.part == 0 ? 0 : static_cast<std::uint32_t>(a.coord);
    }
    throw config_error("bad space form");
  }

  // ordinal-th member of E_level in enum order, or nullopt past the end.
  std::optional<std::uint64_t> level_member(std::uint32_t level, std::uint64_t ordinal) const {
    switch (form_) {
      case Form::omega:
        return ordinal == 0 ? std::optional<std::uint64_t>(level) : std::nullopt;
      case Form::banach_l1:
      case Form::banach_l2:
        return level == 0 ? std::optional<std::uint64_t>(ordinal) : std::nullopt;
      case Form::findim:
        return level == 0 && ordinal < base_dim_ ? std::optional<std::uint64_t>(ordinal)
                                                 : std::nullopt;
      case Form::power: {
        if (base_form_ == Form::banach_l1 || base_form_ == Form::banach_l2)
          return encode_pair(level + 1, ordinal); // copy level+1, all coords
        std::vector<std::uint64_t> members;
        if (base_form_ == Form::findim) {
          for (std::uint64_t k = 0; k < base_dim_; ++k) members.push_back(encode_pair(level + 1, k));
        } else { // omega base: max(copy, coord+1) = level+1
          for (std::uint64_t k = 0; k + 1 <= level + 1; ++k) members.push_back(encode_pair(level + 1, k));
          for (std::uint64_t n = 1; n <= level; ++n) members.push_back(encode_pair(n, level));
        }
        std::sort(members.begin(), members.end());
        return ordinal < members.size() ? std::optional<std::uint64_t>(members[ordinal])
                                        : std::nullopt;
      }
      case Form::sum_omega_l2:
        if (level == 0) {
          // E_0 = all even enums plus enum 1 (omega coordinate 1), in order.
          if (ordinal == 1) return 1;
          return ordinal == 0 ? 0 : 2 * (ordinal - 1);
        }
        return ordinal == 0 ? std::optional<std::uint64_t>(2 * level + 1) : std::nullopt;
    }
    throw config_error("bad space form");
  }

private:
  Space(Form f, std::string n) : form_(f), name_(std::move(n)) {}

  Form form_;
  Form base_form_ = Form::omega; // meaningful for power only
  std::uint32_t base_dim_ = 0;
  std::string name_;
};

// p_j. Power spaces see copies n <= j with the base norm; omega-style parts
// see visible coordinates 1..j; the l2 summand of the direct sum is fully
// visible from p_1 on.
template <class S>
S seminorm(const Space& sp, std::uint32_t j, const FinVec<S>& v) {
  if (j < 1) throw config_error("seminorm index is 1-based");
  const S zero{};
  S best = zero;
  switch (sp.form()) {
    case Space::Form::omega: {
      for (const auto& [i, x] : v.c) {
        if (i + 1 <= j) best = scalar_max(best, scalar_abs(x));
        else break;
      }
      return best;
    }
    case Space::Form::banach_l1: {
      S sum = zero;
      for (const auto& [i, x] : v.c) { (void)i; sum = sum + scalar_abs(x); }
      return sum;
    }
    case Space::Form::banach_l2: {
      S sum = zero;
      for (const auto& [i, x] : v.c) { (void)i; sum = sum + x * x; }
      return scalar_sqrt(sum);
    }
    case Space::Form::findim: {
      for (const auto& [i, x] : v.c) { sp.decode(i); best = scalar_max(best, scalar_abs(x)); }
      return best;
    }
    case Space::Form::power: {
      // per-copy accumulation, then max over copies <= j
      std::map<std::uint64_t, S> acc;
      for (const auto& [i, x] : v.c) {
        Space::Addr a = sp.decode(i);
        if (a.copy > j) continue;
        switch (sp.base_form()) {
          case Space::Form::banach_l1: {
            auto it = acc.try_emplace(a.copy, zero).first;
            it->second = it->second + scalar_abs(x);
            break;
          }
          case Space::Form::banach_l2: {
            auto it = acc.try_emplace(a.copy, zero).first;
            it->second = it->second + x * x;
            break;
          }
          case Space::Form::omega: {
            if (a.coord + 1 > j) break;
            auto it = acc.try_emplace(a.copy, zero).first;
            it->second = scalar_max(it->second, scalar_abs(x));
            break;
          }
          case Space::Form::findim: {
            auto it = acc.try_emplace(a.copy, zero).first;
            it->second = scalar_max(it->second, scalar_abs(x));
            break;
          }
          default: throw config_error("bad base form");
        }
      }
      for (const auto& [n, q] : acc) { (void)n; best = scalar_max(best, q); }
      if (sp.base_form() == Space::Form::banach_l2) return scalar_sqrt(best);
      return best;
    }
    case Space::Form::sum_omega_l2: {
      S sumsq = zero;
      for (const auto& [i, x] : v.c) {
        Space::Addr a = sp.decode(i);
        if (a.part == 0) sumsq = sumsq + x * x;
        else if (a.coord + 1 <= j) best = scalar_max(best, scalar_abs(x));
      }
      return scalar_max(best, scalar_sqrt(sumsq));
    }
  }
  throw config_error("bad space form");
}

// p_j(e_i): 1 above the index level, 0 at or below. All built-in basis
// vectors are unit vectors for every seminorm that sees them.
template <class S>
S seminorm_basis(const Space& sp, std::uint32_t j, std::uint64_t i) {
  if (j < 1) throw config_error("seminorm index is 1-based");
  return scalar_from_int<S>(sp.level_of(i) < j ? 1 : 0);
}

// Basis constant C(j) of the enum-order Schauder basis. 1 for every
// built-in: enum-prefix truncation keeps a coordinate subset of each copy,
// and all the base norms are monotone under coordinate restriction.
template <class S>
S basis_constant(const Space& sp, std::uint32_t j) {
  (void)sp;
  if (j < 1) throw config_error("basis constant index is 1-based");
  return scalar_from_int<S>(1);
}

// The norm family: ||v||_N = p_N(v) + sum_j C(j+1)^{-1} sum_{n in E_j} 2^{-n} p_{j+1}(v_n e_n).
template <class S>
S weighted_norm(const Space& sp, std::uint32_t N, const FinVec<S>& v) {
  if (N < 1) throw config_error("norm index is 1-based");
  S total = seminorm(sp, N, v);
  for (const auto& [i, x] : v.c) {
    std::uint32_t lvl = sp.level_of(i);
    S unit = seminorm_basis<S>(sp, lvl + 1, i);
    S term = scalar_pow2<S>(-static_cast<long long>(i)) * scalar_abs(x) * unit /
             basis_constant<S>(sp, lvl + 1);
    total = total + term;
  }
  return total;
}

struct IspVerdict {
  bool satisfies = false;
  std::optional<std::uint32_t> j0;            // least valid start when satisfied
  std::vector<std::uint32_t> infinite_levels; // leading witnesses otherwise
  bool infinite_levels_cofinal = false;       // all j >= infinite_levels.front()
};

// ker p_{j+1} has finite codimension inside ker p_j iff E_j is finite.
inline bool codim_finite(const Space& sp, std::uint32_t j) {
  (void)j; // the built-ins' codimension class does not depend on the level
  switch (sp.form()) {
    case Space::Form::omega:
    case Space::Form::banach_l1:
    case Space::Form::banach_l2:
    case Space::Form::findim:
    case Space::Form::sum_omega_l2: return true;
    case Space::Form::power:
      return sp.base_form() == Space::Form::omega || sp.base_form() == Space::Form::findim;
  }
  throw config_error("bad space form");
}

inline IspVerdict classify_isp(const Space& sp) {
  IspVerdict v;
  if (sp.level_infinite()) {
    v.satisfies = false;
    for (std::uint32_t j = 1; j <= 4; ++j) v.infinite_levels.push_back(j);
    v.infinite_levels_cofinal = true;
    return v;
  }
  v.satisfies = true;
  v.j0 = 1; // all built-ins that satisfy have finite codimension from the start
  return v;
}

// `count` distinct members of E_level, smallest enum first, skipping
// `exclude` and anything below `min_enum`.
inline std::vector<std::uint64_t> fresh_indices(const Space& sp, std::uint32_t level,
                                                std::size_t count,
                                                const std::set<std::uint64_t>& exclude,
                                                std::uint64_t min_enum = 0) {
  std::vector<std::uint64_t> out;
  out.reserve(count);
  for (std::uint64_t ord = 0; out.size() < count; ++ord) {
    auto m = sp.level_member(level, ord);
    if (!m) {
      throw config_error(sp.name() + ": level " + std::to_string(level) +
                         " exhausted after " + std::to_string(out.size()) +
                         " of " + std::to_string(count) + " indices");
    }
    if (*m < min_enum || exclude.count(*m)) continue;
    out.push_back(*m);
  }
  return out;
}

} // namespace readshift
