#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"
#include "scalar.hpp"
#include "space.hpp"

namespace readshift {

// Hard resource gates. A stage whose projected size exceeds these is refused
// up front instead of being allowed to exhaust memory or run for days.
struct Limits {
  std::uint64_t max_positions = 4'000'000;
  double max_rational_bits = 2'000'000.0;
};

// One certified inequality family, aggregated over its index range.
// margin is the smallest (lhs - rhs) seen; headroom the smallest lhs/rhs over
// instances with nonzero rhs; count the number of instances evaluated.
template <class S>
struct CertCheck {
  std::string id;
  std::uint64_t lo = 0, hi = 0;  // position range the family quantifies over
  std::uint64_t count = 0;
  bool pass = true;
  bool have_margin = false;
  S margin{};
  std::optional<S> headroom;

  void note_margin(const S& m) {
    if (!have_margin || m < margin) {
      margin = m;
      have_margin = true;
    }
  }
  void note_headroom(const S& lhs, const S& rhs) {
    if (scalar_is_zero(rhs)) return;
    S h = lhs / rhs;
    if (!headroom || h < *headroom) headroom = h;
  }
  void feed_ge(const S& lhs, const S& rhs) {
    ++count;
    if (!scalar_ge_ok(lhs, rhs)) pass = false;
    note_margin(lhs - rhs);
    note_headroom(lhs, rhs);
  }
  void feed_gt(const S& lhs, const S& rhs) {
    ++count;
    if (!scalar_gt_ok(lhs, rhs)) pass = false;
    note_margin(lhs - rhs);
    note_headroom(lhs, rhs);
  }
  // Exact structural requirement; a failure records margin -1.
  void feed_exact(bool ok) {
    ++count;
    if (!ok) {
      pass = false;
      note_margin(scalar_from_int<S>(-1));
    } else {
      note_margin(S{});
    }
  }
};

template <class S>
struct CertificateReport {
  std::uint32_t stage = 0;
  std::vector<CertCheck<S>> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const CertCheck<S>* find(const std::string& id) const {
    for (const auto& c : checks)
      if (c.id == id) return &c;
    return nullptr;
  }
};

// Committed prefix of the inductive construction.
//
// Position j < Delta[stages_done+1] carries the basis vector
// u_j = alpha[j] * e_{pos_to_index[j]}.  Stage n occupies positions
// [Delta[n], Delta[n+1]) and splits into: a deep block [Delta[n], 2 Delta[n])
// of level-n indices, a level staircase [2 Delta[n], a[n]), the anchor a[n],
// and echo slots (a[n], a[n] + Delta[n]).
//
// Arrays are 1-based by stage; slot 0 holds the conventional values
// Delta_0 = 0 and D_0 = L_0 = 1.
template <class S>
struct ConstructionState {
  Space space = Space::l2_power();
  Limits limits;
  std::uint32_t stages_done = 0;

  std::vector<std::uint64_t> Delta = {0};  // Delta[0 .. stages_done+1]
  std::vector<std::uint64_t> a = {0};      // a[1 .. stages_done]
  std::vector<std::uint64_t> s = {0, 0};   // s[2 .. stages_done+1]
  std::vector<std::uint32_t> N = {0};      // N[1 .. stages_done]
  std::vector<S> D;                        // D[0 .. stages_done]
  std::vector<S> L;                        // L[0 .. stages_done]

  std::vector<std::uint64_t> pos_to_index;
  std::vector<S> alpha;
  std::vector<std::uint32_t> level_by_pos;
  std::map<std::uint64_t, std::uint64_t> index_to_pos;

  std::vector<CertificateReport<S>> certificates;  // one per stage

  // Orbit cache, filled on demand; entries never change once written.
  std::shared_ptr<std::map<std::uint64_t, FinVec<S>>> orbit_cache =
      std::make_shared<std::map<std::uint64_t, FinVec<S>>>();

  std::uint64_t horizon() const { return Delta[stages_done + 1]; }

  std::uint64_t index_at(std::uint64_t j) const {
    assert(j < pos_to_index.size());
    return pos_to_index[j];
  }
  const S& alpha_at(std::uint64_t j) const {
    assert(j < alpha.size());
    return alpha[j];
  }
  std::uint32_t level_at(std::uint64_t j) const {
    assert(j < level_by_pos.size());
    return level_by_pos[j];
  }
  std::optional<std::uint64_t> position_of_index(std::uint64_t idx) const {
    auto it = index_to_pos.find(idx);
    if (it == index_to_pos.end()) return std::nullopt;
    return it->second;
  }

  // p_l(u_j); a unit basis vector at level lambda survives p_l iff l > lambda.
  S p_u(std::uint32_t l, std::uint64_t j) const {
    if (l > level_at(j)) return scalar_abs(alpha_at(j));
    return S{};
  }

  // ||u_j||_N under the weighted norm.
  S norm_u(std::uint32_t normN, std::uint64_t j) const {
    std::uint64_t i = index_at(j);
    std::uint32_t lvl = level_at(j);
    S unit = seminorm_basis<S>(space, lvl + 1, i);
    S tail = scalar_pow2<S>(-static_cast<std::int64_t>(i)) * scalar_abs(alpha_at(j)) *
             unit / basis_constant<S>(space, lvl + 1);
    return p_u(normN, j) + tail;
  }

  FinVec<S> u_vec(std::uint64_t j) const {
    FinVec<S> v;
    v.set(index_at(j), alpha_at(j));
    return v;
  }

  // Stage k with a[k] <= j < Delta[k+1], if any.  These windows are disjoint.
  std::optional<std::uint32_t> echo_interval(std::uint64_t j) const {
    for (std::uint32_t k = stages_done; k >= 1; --k) {
      if (j >= a[k]) {
        if (j < Delta[k + 1]) return k;
        return std::nullopt;
      }
    }
    return std::nullopt;
  }
};

// Level targeted by each stage: 1; 1,2; 1,2,3; ...
inline std::uint32_t nn_schedule(std::uint64_t m) {
  assert(m >= 1);
  std::uint64_t tri = 0, b = 0;
  while (tri < m) {
    ++b;
    tri += b;
  }
  return static_cast<std::uint32_t>(m - (tri - b));
}

// Orbit vector: gamma_0 = u_0, and applying the operator j times yields
// gamma_j = u_j, plus the echo gamma_{j-a[k]} when j lies in stage k's window.
template <class S>
const FinVec<S>& gamma(const ConstructionState<S>& st, std::uint64_t j) {
  if (j >= st.horizon())
    throw horizon_error("orbit position " + std::to_string(j) +
                        " is beyond the committed horizon " +
                        std::to_string(st.horizon()));
  auto& cache = *st.orbit_cache;
  auto it = cache.find(j);
  if (it != cache.end()) return it->second;
  FinVec<S> v = st.u_vec(j);
  if (auto k = st.echo_interval(j)) v = v + gamma(st, j - st.a[*k]);
  return cache.emplace(j, std::move(v)).first->second;
}

// Image of u_j under the operator, as (position, coefficient) pairs.
template <class S>
std::map<std::uint64_t, S> tu_position(const ConstructionState<S>& st, std::uint64_t j) {
  std::map<std::uint64_t, S> out;
  const S one = scalar_from_int<S>(1);
  for (std::uint32_t m = 1; m <= st.stages_done; ++m) {
    if (j + 1 == st.a[m]) {  // end of the run-up: jump to the anchor, reseed at 0
      out.emplace(st.a[m], one);
      out.emplace(0, one);
      return out;
    }
    if (j + 1 == st.Delta[m + 1]) {  // end of the echo window: difference of block heads
      if (st.Delta[m + 1] >= st.horizon())
        throw horizon_error("operator image of position " + std::to_string(j) +
                            " needs stage " + std::to_string(st.stages_done + 1));
      out.emplace(st.Delta[m + 1], one);
      out.emplace(st.Delta[m], scalar_from_int<S>(-1));
      return out;
    }
  }
  if (j + 1 >= st.horizon())
    throw horizon_error("operator image of position " + std::to_string(j) +
                        " is beyond the committed horizon");
  out.emplace(j + 1, one);
  return out;
}

// L_N = 1 + max over positions j < Delta_{N+1} - 1 with p_{N+1}(u_j) != 0 of
// 2^j p_N(T u_j) / p_{N+1}(u_j).
template <class S>
S continuity_constant(const ConstructionState<S>& st, std::uint32_t normN) {
  if (normN < 1 || normN > st.stages_done)
    throw config_error("continuity constant needs 1 <= N <= committed stage count");
  S best{};
  for (std::uint64_t j = 0; j + 1 < st.Delta[normN + 1]; ++j) {
    S den = st.p_u(normN + 1, j);
    if (scalar_is_zero(den)) continue;
    FinVec<S> img;
    for (const auto& [p, c] : tu_position(st, j))
      img.add(st.index_at(p), c * st.alpha_at(p));
    S num = seminorm(st.space, normN, img);
    best = scalar_max(best, scalar_pow2<S>(static_cast<std::int64_t>(j)) * num / den);
  }
  return best + scalar_from_int<S>(1);
}

// Certified dual bound: any vector supported on positions < Delta_{n+1} whose
// weighted 1-norm is at most 3/2 has orbit-coordinate absolute sum at most
// D_n.  Coordinate m can contribute at most
// (3/2) C_{lvl+1} 2^{i_m} / (alpha_m p_{lvl+1}(e_{i_m})), doubled inside echo
// windows where two orbit vectors meet the same position.
template <class S>
S certify_D(const ConstructionState<S>& st, std::uint32_t n) {
  if (n < 1 || n > st.stages_done)
    throw config_error("dual bound needs 1 <= n <= committed stage count");
  const S three_half = rat_like<S>(3, 2);
  S sum{};
  for (std::uint64_t m = 0; m < st.Delta[n + 1]; ++m) {
    std::uint64_t i = st.index_at(m);
    std::uint32_t lvl = st.level_at(m);
    S unit = seminorm_basis<S>(st.space, lvl + 1, i);
    S xhat = three_half * basis_constant<S>(st.space, lvl + 1) *
             scalar_pow2<S>(static_cast<std::int64_t>(i)) /
             (scalar_abs(st.alpha_at(m)) * unit);
    bool doubled = false;
    for (std::uint32_t k = 1; k <= n; ++k)
      if (m >= st.a[k] && m < st.Delta[k + 1]) {
        doubled = true;
        break;
      }
    sum = sum + xhat + (doubled ? xhat : S{});
  }
  return scalar_max(scalar_max(sum, st.D[n - 1]), scalar_from_int<S>(1));
}

template <class S>
CertificateReport<S> verify_certificates(const ConstructionState<S>& st, std::uint32_t n);

namespace detail {

template <class S>
struct StageWork {
  Space space;
  std::set<std::uint64_t> used;  // all indices consumed so far, in any role

  explicit StageWork(const ConstructionState<S>& st) : space(st.space) {
    for (auto i : st.pos_to_index) used.insert(i);
  }

  std::uint64_t used_leq(std::uint64_t bound) const {
    auto it = used.upper_bound(bound);
    return static_cast<std::uint64_t>(std::distance(used.begin(), it));
  }

  std::vector<std::uint64_t> take_fresh(std::uint32_t level, std::uint64_t count,
                                        std::uint64_t min_index = 0) {
    auto got = fresh_indices(space, level, count, used, min_index);
    for (auto i : got) used.insert(i);
    return got;
  }
};

template <class S>
void place(ConstructionState<S>& st, std::uint64_t pos, std::uint64_t idx, const S& al) {
  assert(pos == st.pos_to_index.size());
  (void)pos;
  st.pos_to_index.push_back(idx);
  st.alpha.push_back(al);
  st.level_by_pos.push_back(st.space.level_of(idx));
  bool fresh = st.index_to_pos.emplace(idx, st.pos_to_index.size() - 1).second;
  assert(fresh);
  (void)fresh;
}

// Staircase order: level descending, index ascending within a level.
inline std::vector<std::uint64_t> staircase_sorted(const Space& sp,
                                                   const std::set<std::uint64_t>& pool) {
  std::vector<std::uint64_t> v(pool.begin(), pool.end());
  std::sort(v.begin(), v.end(), [&sp](std::uint64_t x, std::uint64_t y) {
    std::uint32_t lx = sp.level_of(x), ly = sp.level_of(y);
    if (lx != ly) return lx > ly;
    return x < y;
  });
  return v;
}

// Smallest fresh index i at `level` such that the vector (numer / p_{level+1}(e_i)) e_i
// has ||.||_normN at most `budget`.  Rejected candidates stay available for
// seeds and the sweep.
template <class S>
std::pair<std::uint64_t, S> pick_anchor(StageWork<S>& w, std::uint32_t level,
                                        std::uint32_t normN, const S& numer,
                                        const S& budget) {
  std::uint64_t floor_idx = 0;
  for (std::uint64_t guard = 0; guard < 100'000'000; ++guard) {
    auto cand = fresh_indices(w.space, level, 1, w.used, floor_idx);
    const std::uint64_t i = cand[0];
    S unit = seminorm_basis<S>(w.space, level + 1, i);
    S al = numer / unit;
    // anchors sit at level >= normN, so only the weighted tail contributes
    S part = (normN > level) ? al : S{};
    S nrm = part + scalar_pow2<S>(-static_cast<std::int64_t>(i)) * al * unit /
                       basis_constant<S>(w.space, level + 1);
    if (!(budget < nrm)) {
      w.used.insert(i);
      return {i, al};
    }
    floor_idx = i + 1;
  }
  throw horizon_error("anchor search exhausted its iteration guard");
}

// Descending weight chain over the staircase [2 Delta_n, a_n).  Every later
// weight in the stage (echo slots and anchor included) is already assigned.
// A position whose level exceeds n faces no growth constraint and keeps
// weight 1.
template <class S>
void assign_staircase_weights(ConstructionState<S>& st, std::uint32_t n,
                              std::uint64_t Dn, std::uint64_t an,
                              std::uint64_t delta_next, const S& CD,
                              const S& orbit_sup) {
  const S one = scalar_from_int<S>(1);
  const S two = scalar_from_int<S>(2);
  for (std::uint64_t j = an - 1; j >= 2 * Dn; --j) {
    std::uint32_t lam = st.level_at(j);
    S b{};
    if (lam <= n) {
      // successor growth
      if (st.level_at(j + 1) < n)
        b = scalar_max(b, scalar_pow2<S>(static_cast<std::int64_t>(j + 1)) *
                              scalar_abs(st.alpha_at(j + 1)));
      // window domination
      S wmax{};
      for (std::uint64_t r = 1; r < Dn; ++r) {
        std::uint64_t jr = j + r;
        if (jr >= delta_next) break;
        if (st.level_at(jr) < n) wmax = scalar_max(wmax, scalar_abs(st.alpha_at(jr)));
      }
      if (!scalar_is_zero(wmax))
        b = scalar_max(b, scalar_pow2<S>(static_cast<std::int64_t>(j + 1)) * CD * wmax);
      // orbit supremum along the level-0 run-up
      if (j + Dn >= an && !scalar_is_zero(orbit_sup))
        b = scalar_max(b, scalar_pow2<S>(static_cast<std::int64_t>(j + 1)) * CD * orbit_sup);
      // strict floor at the last run-up position
      if (j + 1 == an) b = scalar_max(b, scalar_pow2<S>(static_cast<std::int64_t>(an)) * st.p_u(n, 0));
    }
    st.alpha[j] = scalar_is_zero(b) ? one : two * b;
  }
}

} // namespace detail

// Stage-size projection used to refuse infeasible stages before any heavy
// work.  The echo-slot weight chain multiplies by at least 2^{Delta_n} per
// slot, so the anchor index, and with it the next sweep and the next stage's
// position count, is at least about (Delta_n - 2) * Delta_n.
struct StageProjection {
  std::uint32_t next_stage = 0;
  double lower_anchor_index = 0;
  double lower_positions = 0;
  bool within_position_cap = true;
};

template <class S>
StageProjection project_next_stage(const ConstructionState<S>& st) {
  StageProjection pr;
  pr.next_stage = st.stages_done + 1;
  if (pr.next_stage == 1) {
    pr.lower_positions = 4;
    return pr;
  }
  double dn = static_cast<double>(st.Delta[st.stages_done + 1]);
  double chain = (dn >= 3 ? (dn - 2) * dn : 0.0);
  pr.lower_anchor_index = chain;
  double assigned = static_cast<double>(st.pos_to_index.size());
  pr.lower_positions = std::max(0.0, chain - 64.0 - assigned) + 2 * dn;
  pr.within_position_cap =
      pr.lower_positions <= static_cast<double>(st.limits.max_positions);
  return pr;
}

// Stage 1: two unit seeds at level 1, the first anchor, and the first
// staircase.  Refuses spaces whose successive seminorm kernels have finite
// codimension; the construction needs infinitely many fresh indices per level.
template <class S>
ConstructionState<S> init_construction(const Space& sp, Limits limits = {}) {
  if (classify_isp(sp).satisfies)
    throw config_error("construction refused: space '" + sp.name() +
                       "' has finite-codimension seminorm kernels at every level "
                       "from some point on");
  if (scalar_exact<S> && sp.needs_sqrt())
    throw config_error("exact-rational mode cannot evaluate '" + sp.name() +
                       "' seminorms; use binary64");

  ConstructionState<S> st;
  st.space = sp;
  st.limits = limits;
  st.D = {scalar_from_int<S>(1)};
  st.L = {scalar_from_int<S>(1)};

  detail::StageWork<S> w(st);
  const S one = scalar_from_int<S>(1);

  auto first = w.take_fresh(1, 2);

  // Anchor: at stage 1 the echo maximum is empty, so the weight numerator
  // degenerates to 2^{Delta_1} ||u_0||_1 with ||u_0||_1 = 2^{-i_0}.
  S norm1_u0 = scalar_pow2<S>(-static_cast<std::int64_t>(first[0])) *
               seminorm_basis<S>(sp, 2, first[0]) / basis_constant<S>(sp, 2);
  S beta = scalar_pow2<S>(1) * norm1_u0;
  S budget = scalar_pow2<S>(-1) / scalar_from_int<S>(2);
  auto [anchor_idx, anchor_alpha] = detail::pick_anchor(w, 1, 1, beta, budget);

  // Seeds: one per level 0..3.
  std::vector<std::uint64_t> seeds;
  for (std::uint32_t l = 0; l <= 3; ++l) seeds.push_back(w.take_fresh(l, 1)[0]);

  std::uint64_t s2 = anchor_idx;
  for (auto i : first) s2 = std::max(s2, i);
  for (auto i : seeds) s2 = std::max(s2, i);

  std::set<std::uint64_t> pool(seeds.begin(), seeds.end());
  for (std::uint64_t e = 0; e <= s2; ++e)
    if (!w.used.count(e)) {
      pool.insert(e);
      w.used.insert(e);
    }

  const std::uint64_t a1 = pool.size() + 2;
  st.stages_done = 1;
  st.N = {0, 1};
  st.a = {0, a1};
  st.s = {0, 0, s2};
  st.Delta = {0, 1, a1 + 1};

  detail::place(st, 0, first[0], one);
  detail::place(st, 1, first[1], one);
  auto order = detail::staircase_sorted(sp, pool);
  for (std::uint64_t k = 0; k < order.size(); ++k)
    detail::place(st, 2 + k, order[k], one);  // weights assigned below
  detail::place(st, a1, anchor_idx, anchor_alpha);

  S orbit_sup = seminorm(sp, 1, st.u_vec(0));  // p_1(gamma_0), zero at level 1
  detail::assign_staircase_weights(st, 1, 1, a1, a1 + 1, one /* C_2 D_0 */, orbit_sup);

  st.D.push_back(certify_D(st, 1));
  st.L.push_back(continuity_constant(st, 1));
  st.certificates.push_back(verify_certificates(st, 1));
  if (!st.certificates.back().all_pass())
    throw certificate_error("stage 1 certificates failed; construction is inconsistent");
  return st;
}

template <class S>
ConstructionState<S> advance_stage(const ConstructionState<S>& prev) {
  if (prev.stages_done == 0)
    throw config_error("advance_stage requires an initialized stage-1 state");
  const std::uint32_t n = prev.stages_done + 1;
  const std::uint32_t Nn = nn_schedule(n);
  const std::uint64_t Dn = prev.Delta[n];
  const S one = scalar_from_int<S>(1);
  const S two = scalar_from_int<S>(2);
  const S Dprev = prev.D[n - 1];
  const S C = basis_constant<S>(prev.space, n + 1);
  const S CD = C * Dprev;
  const S dn_s = scalar_from_int<S>(static_cast<long long>(Dn));

  auto proj = project_next_stage(prev);
  if (!proj.within_position_cap)
    throw horizon_error(
        "stage " + std::to_string(n) + " projects to at least " +
        std::to_string(static_cast<std::uint64_t>(proj.lower_positions)) +
        " positions (cap " + std::to_string(prev.limits.max_positions) +
        "); the echo-weight chain forces the anchor index past about " +
        std::to_string(static_cast<std::uint64_t>(proj.lower_anchor_index)));
  if constexpr (scalar_exact<S>) {
    // Same bit estimate as the post-sweep gate below, evaluated on the anchor
    // index lower bound so an infeasible stage refuses before the echo chain
    // and the anchor search ever materialize the growing rational weights.
    double al = proj.lower_anchor_index;
    double tl = std::max(0.0, al - 2.0 * static_cast<double>(Dn));
    double bits_low = tl * ((al + 2.0 * static_cast<double>(Dn)) / 2.0 + 3.0 +
                            std::max(0.0, scalar_log2_abs(Dprev))) +
                      al;
    if (bits_low > prev.limits.max_rational_bits)
      throw horizon_error(
          "stage " + std::to_string(n) + " weights need at least about " +
          std::to_string(static_cast<std::uint64_t>(bits_low)) +
          " bits in exact-rational mode (cap " +
          std::to_string(static_cast<std::uint64_t>(prev.limits.max_rational_bits)) +
          "); use binary64");
  }

  ConstructionState<S> st = prev;
  st.orbit_cache = std::make_shared<std::map<std::uint64_t, FinVec<S>>>(*prev.orbit_cache);
  detail::StageWork<S> w(st);

  // --- deep block [Delta_n, 2 Delta_n): level-n indices, weights sized so the
  // previous-norm budget 1/(2^{n-1} D_{n-1}) holds with headroom 2.
  auto deep_idx = w.take_fresh(n, Dn);
  std::vector<S> deep_alpha;
  {
    S target = one / (scalar_pow2<S>(static_cast<std::int64_t>(n) - 1) * Dprev);
    for (auto i : deep_idx) {
      S unit = seminorm_basis<S>(st.space, n + 1, i);
      // for N <= n-1 < level the norm of a unit vector is its weighted tail
      S unit_norm = scalar_pow2<S>(-static_cast<std::int64_t>(i)) * unit /
                    basis_constant<S>(st.space, n + 1);
      deep_alpha.push_back(target / (two * unit_norm));
    }
  }

  // --- echo slots (a_n, a_n + Delta_n): level-N_n indices, weights assigned
  // by a descending chain against the orbit and their own successors.
  const std::uint64_t echo_count = Dn - 1;
  auto echo_idx = w.take_fresh(Nn, echo_count);
  std::vector<S> echo_alpha(echo_count + 1);  // 1-based by offset
  std::vector<S> orbit_norm1(Dn);
  for (std::uint64_t o = 0; o < Dn; ++o)
    orbit_norm1[o] = weighted_norm(st.space, 1, gamma(prev, o));
  for (std::uint64_t o = echo_count; o >= 1; --o) {
    S b = scalar_pow2<S>(static_cast<std::int64_t>(Dn)) * orbit_norm1[o];
    if (o + 1 <= echo_count)
      b = scalar_max(b, dn_s * scalar_pow2<S>(static_cast<std::int64_t>(Dn)) *
                            echo_alpha[o + 1]);
    for (std::uint64_t r = 1; r < Dn && o + r <= echo_count; ++r)
      b = scalar_max(b, dn_s * scalar_pow2<S>(static_cast<std::int64_t>(Dn) + 1) *
                            CD * echo_alpha[o + r]);
    echo_alpha[o] = two * b;
  }

  // --- anchor: numerator beta, then the smallest fresh level-N_n index that
  // brings ||u_{a_n}||_{N_n} under 2^{-n} with headroom 2.
  S echo_peak{};
  for (std::uint64_t o = 1; o <= echo_count; ++o)
    echo_peak = scalar_max(echo_peak, echo_alpha[o]);
  S norm1_u0 = prev.norm_u(1, 0);
  S beta = dn_s * scalar_pow2<S>(static_cast<std::int64_t>(Dn) + 1) * CD * echo_peak +
           scalar_pow2<S>(static_cast<std::int64_t>(Dn)) * norm1_u0;
  S budget = scalar_pow2<S>(-static_cast<std::int64_t>(n)) / two;
  auto [anchor_idx, anchor_alpha] = detail::pick_anchor(w, Nn, Nn, beta, budget);

  // --- seeds: Delta_n fresh indices at every level 0..n+2.
  std::vector<std::uint64_t> seeds;
  for (std::uint32_t l = 0; l <= n + 2; ++l) {
    auto got = w.take_fresh(l, Dn);
    seeds.insert(seeds.end(), got.begin(), got.end());
  }

  std::uint64_t snext = anchor_idx;
  for (auto i : deep_idx) snext = std::max(snext, i);
  for (auto i : echo_idx) snext = std::max(snext, i);
  for (auto i : seeds) snext = std::max(snext, i);

  // Exact stage size, known before materializing the sweep.
  std::uint64_t pool_size = seeds.size() + (snext + 1 - w.used_leq(snext));
  std::uint64_t an = pool_size + 2 * Dn;
  std::uint64_t delta_next = an + Dn;
  if (delta_next > st.limits.max_positions)
    throw horizon_error("stage " + std::to_string(n) + " needs " +
                        std::to_string(delta_next) + " positions (cap " +
                        std::to_string(st.limits.max_positions) + ")");
  if constexpr (scalar_exact<S>) {
    // Peak numerator size of the staircase chain in bits, roughly
    // sum_{j = 2 Delta_n}^{a_n} (j + 2 + log2 D_{n-1}).
    double t = static_cast<double>(an - 2 * Dn);
    double bits = t * (static_cast<double>(an + 2 * Dn) / 2.0 + 3.0 +
                       std::max(0.0, scalar_log2_abs(Dprev))) +
                  static_cast<double>(an);
    if (bits > st.limits.max_rational_bits)
      throw horizon_error(
          "stage " + std::to_string(n) + " weights need about " +
          std::to_string(static_cast<std::uint64_t>(bits)) +
          " bits in exact-rational mode (cap " +
          std::to_string(static_cast<std::uint64_t>(st.limits.max_rational_bits)) +
          "); use binary64");
  }

  std::set<std::uint64_t> pool(seeds.begin(), seeds.end());
  for (std::uint64_t e = 0; e <= snext; ++e)
    if (!w.used.count(e)) {
      pool.insert(e);
      w.used.insert(e);
    }
  assert(pool.size() == pool_size);

  // Gap padding keeps the staircase level-connected.  For the admissible
  // spaces the sweep is an initial index segment, so every level below the
  // maximum is already inhabited and this loop does nothing.
  {
    std::uint32_t top = 0;
    std::set<std::uint32_t> present;
    for (auto e : pool) {
      std::uint32_t l = st.space.level_of(e);
      present.insert(l);
      top = std::max(top, l);
    }
    for (std::uint32_t l = 0; l < top; ++l) {
      if (present.count(l)) continue;
      assert(l >= n + 3);  // levels <= n+2 are seeded
      auto got = w.take_fresh(l, 1, snext + 1);
      pool.insert(got[0]);
    }
    an = pool.size() + 2 * Dn;
    delta_next = an + Dn;
    if (delta_next > st.limits.max_positions)
      throw horizon_error("stage " + std::to_string(n) + " needs " +
                          std::to_string(delta_next) +
                          " positions after padding (cap " +
                          std::to_string(st.limits.max_positions) + ")");
  }

  // --- commit layout.
  st.stages_done = n;
  st.N.push_back(Nn);
  st.a.push_back(an);
  st.s.push_back(snext);
  st.Delta.push_back(delta_next);

  for (std::uint64_t k = 0; k < Dn; ++k)
    detail::place(st, Dn + k, deep_idx[k], deep_alpha[k]);
  auto order = detail::staircase_sorted(st.space, pool);
  assert(order.size() + 2 * Dn == an);
  for (std::uint64_t k = 0; k < order.size(); ++k)
    detail::place(st, 2 * Dn + k, order[k], one);  // weights assigned below
  detail::place(st, an, anchor_idx, anchor_alpha);
  for (std::uint64_t o = 1; o <= echo_count; ++o)
    detail::place(st, an + o, echo_idx[o - 1], echo_alpha[o]);

  S orbit_sup{};
  for (std::uint64_t m = 0; m < Dn; ++m)
    orbit_sup = scalar_max(orbit_sup, seminorm(st.space, n, gamma(prev, m)));

  detail::assign_staircase_weights(st, n, Dn, an, delta_next, CD, orbit_sup);

  st.D.push_back(certify_D(st, n));
  st.L.push_back(continuity_constant(st, n));
  st.certificates.push_back(verify_certificates(st, n));
  if (!st.certificates.back().all_pass())
    throw certificate_error("stage " + std::to_string(n) +
                            " certificates failed; construction is inconsistent");
  return st;
}

// Full fresh evaluation of every certified condition of stage n.
//
// Quantifier collapse: p_l(u_j) equals alpha_j when l > level(j) and 0
// otherwise, so a family over l in [1, n] reduces to one numeric comparison
// at l = n plus a structural level requirement covering the smaller l.
template <class S>
CertificateReport<S> verify_certificates(const ConstructionState<S>& st, std::uint32_t n) {
  if (n < 1 || n > st.stages_done)
    throw config_error("verify_certificates needs 1 <= n <= committed stage count");
  const std::uint64_t Dn = st.Delta[n];
  const std::uint64_t an = st.a[n];
  const std::uint64_t dnext = st.Delta[n + 1];
  const std::uint64_t sn = st.s[n + 1];
  const std::uint32_t Nn = st.N[n];
  const S one = scalar_from_int<S>(1);
  const S Dprev = st.D[n - 1];
  const S C = basis_constant<S>(st.space, n + 1);
  const S CD = C * Dprev;

  CertificateReport<S> rep;
  rep.stage = n;
  auto add = [&rep](const std::string& id, std::uint64_t lo, std::uint64_t hi) -> CertCheck<S>& {
    CertCheck<S> c;
    c.id = id;
    c.lo = lo;
    c.hi = hi;
    rep.checks.push_back(std::move(c));
    return rep.checks.back();
  };

  {  // tn: the sweep covers every index up to s_{n+1}
    auto& c = add("tn", 0, sn);
    std::uint64_t missing = 0;
    for (std::uint64_t e = 0; e <= sn; ++e) {
      auto p = st.position_of_index(e);
      if (!p || *p >= dnext) ++missing;
    }
    c.count = sn + 1;
    c.pass = (missing == 0);
    c.margin = scalar_from_int<S>(-static_cast<long long>(missing));
    c.have_margin = true;
  }
  {  // tn2: indices above the sweep assigned so far sit at level >= n+2
    auto& c = add("tn2", 0, dnext);
    for (std::uint64_t j = 0; j < dnext; ++j) {
      if (st.index_at(j) <= sn) continue;
      c.feed_exact(st.level_at(j) >= n + 2);
    }
    if (c.count == 0) c.feed_exact(true);  // vacuous: no stragglers
  }
  {  // param: the echo window fits, 2 Delta_n < a_n
    auto& c = add("param", 0, 0);
    c.feed_exact(2 * Dn < an);
  }
  {  // finalcont1: successor growth along [Delta_n, a_n)
    auto& c = add("finalcont1", Dn, an);
    for (std::uint64_t j = Dn; j < an; ++j) {
      std::uint32_t lam = st.level_at(j);
      std::uint32_t lnxt = st.level_at(j + 1);
      if (lam >= 2) c.feed_exact(lnxt + 1 >= std::min<std::uint32_t>(lam, n + 1));
      if (lam <= n) {
        S rhs = (lnxt < n) ? scalar_pow2<S>(static_cast<std::int64_t>(j + 1)) *
                                 scalar_abs(st.alpha_at(j + 1))
                           : S{};
        c.feed_ge(scalar_abs(st.alpha_at(j)), rhs);
      } else {
        c.feed_exact(lnxt >= n);  // lhs vanishes at every l <= n, so rhs must too
      }
    }
  }
  {  // finalcont1bis: successor growth along the anchor and echo slots
    auto& c = add("finalcont1bis", an, dnext - 1);
    const S dn_s = scalar_from_int<S>(static_cast<long long>(Dn));
    for (std::uint64_t j = an; j + 1 < dnext; ++j) {
      std::uint32_t lam = st.level_at(j);
      std::uint32_t lnxt = st.level_at(j + 1);
      if (lam >= 2) c.feed_exact(lnxt + 1 >= std::min<std::uint32_t>(lam, n + 1));
      if (lam <= n) {
        S rhs = (lnxt < n) ? dn_s * scalar_pow2<S>(static_cast<std::int64_t>(Dn)) *
                                 scalar_abs(st.alpha_at(j + 1))
                           : S{};
        c.feed_ge(scalar_abs(st.alpha_at(j)), rhs);
      } else {
        c.feed_exact(lnxt >= n);
      }
    }
    if (c.count == 0) c.feed_exact(true);  // stage 1 has no echo slots
  }
  {  // finalcont2: strict dominance of the last run-up weight
    auto& c = add("finalcont2", an - 1, an - 1);
    c.feed_gt(st.p_u(1, an - 1),
              scalar_pow2<S>(static_cast<std::int64_t>(an)) * st.p_u(n, 0));
  }
  {  // finalcont3: the deep block vanishes at p_n but survives p_{n+1}; the
     // last echo slot survives p_{N_n + 1}
    auto& c = add("finalcont3", Dn, dnext);
    c.feed_exact(scalar_is_zero(st.p_u(n, Dn)));
    c.feed_gt(st.p_u(n + 1, Dn), S{});
    c.feed_gt(st.p_u(Nn + 1, dnext - 1), S{});
  }
  {  // finalcont4: levels descend by at most one per step
    auto& c = add("finalcont4", (n == 1) ? 0 : Dn - 1, dnext - 1);
    for (std::uint64_t j = c.lo; j + 1 < dnext; ++j)
      c.feed_exact(st.level_at(j + 1) + 1 >= st.level_at(j));
  }
  {  // K1: anchor and echo weights dominate the orbit they echo
    auto& c = add("K1", an, dnext);
    for (std::uint64_t j = an; j < dnext; ++j)
      c.feed_ge(st.p_u(Nn + 1, j),
                scalar_pow2<S>(static_cast<std::int64_t>(Dn)) *
                    weighted_norm(st.space, 1, gamma(st, j - an)));
  }
  {  // tail1: window domination along [Delta_n, a_n)
    auto& c = add("tail1", Dn, an);
    for (std::uint64_t j = Dn; j < an; ++j) {
      std::uint32_t lam = st.level_at(j);
      S wmax{};
      bool structural_ok = true;
      for (std::uint64_t r = 1; r < Dn; ++r) {
        std::uint64_t jr = j + r;
        if (jr >= dnext) break;
        std::uint32_t ljr = st.level_at(jr);
        if (lam >= 2 && ljr + 1 < std::min<std::uint32_t>(lam, n + 1)) structural_ok = false;
        if (lam > n && ljr < n) structural_ok = false;
        if (lam <= n && ljr < n) wmax = scalar_max(wmax, scalar_abs(st.alpha_at(jr)));
      }
      c.feed_exact(structural_ok);
      if (lam <= n)
        c.feed_ge(scalar_abs(st.alpha_at(j)),
                  scalar_pow2<S>(static_cast<std::int64_t>(j + 1)) * CD * wmax);
    }
    if (Dn == 1) c.feed_exact(true);  // empty window at stage 1
  }
  {  // tail1bis: window domination along the anchor and echo slots
    auto& c = add("tail1bis", an, dnext);
    const S fac = scalar_from_int<S>(static_cast<long long>(Dn)) *
                  scalar_pow2<S>(static_cast<std::int64_t>(Dn) + 1) * CD;
    for (std::uint64_t j = an; j < dnext; ++j) {
      std::uint32_t lam = st.level_at(j);
      S wmax{};
      bool structural_ok = true;
      for (std::uint64_t r = 1; r < Dn; ++r) {
        std::uint64_t jr = j + r;
        if (jr >= dnext) break;
        std::uint32_t ljr = st.level_at(jr);
        if (lam >= 2 && ljr + 1 < std::min<std::uint32_t>(lam, n + 1)) structural_ok = false;
        if (lam > n && ljr < n) structural_ok = false;
        if (lam <= n && ljr < n) wmax = scalar_max(wmax, scalar_abs(st.alpha_at(jr)));
      }
      c.feed_exact(structural_ok);
      if (lam <= n) c.feed_ge(scalar_abs(st.alpha_at(j)), fac * wmax);
    }
  }
  {  // tail2: the deep block vanishes at p_n, exactly
    auto& c = add("tail2", Dn, 2 * Dn);
    for (std::uint64_t j = Dn; j < 2 * Dn; ++j)
      c.feed_exact(scalar_is_zero(st.p_u(n, j)));
  }
  {  // tail3: the level-0 run-up dominates the orbit p_n supremum
    auto& c = add("tail3", an - Dn, an);
    S sup{};
    for (std::uint64_t m = 0; m < Dn; ++m)
      sup = scalar_max(sup, seminorm(st.space, n, gamma(st, m)));
    for (std::uint64_t j = an - Dn; j < an; ++j) {
      c.feed_exact(st.level_at(j) == 0);
      c.feed_ge(st.p_u(1, j),
                scalar_pow2<S>(static_cast<std::int64_t>(j + 1)) * CD * sup);
    }
  }
  {  // final1: the anchor is small in its own norm
    auto& c = add("final1", an, an);
    c.feed_ge(scalar_pow2<S>(-static_cast<std::int64_t>(n)), st.norm_u(Nn, an));
  }
  if (n >= 2) {  // final2: the deep block is small in the previous norm
    auto& c = add("final2", Dn, 2 * Dn);
    S bound = one / (scalar_pow2<S>(static_cast<std::int64_t>(n) - 1) * Dprev);
    for (std::uint64_t j = Dn; j < 2 * Dn; ++j)
      c.feed_ge(bound, st.norm_u(st.N[n - 1], j));
  }
  return rep;
}

} // namespace readshift
