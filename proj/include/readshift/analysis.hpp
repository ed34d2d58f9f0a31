#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "shift_operator.hpp"

namespace readshift {

// --- membership in the head-heavy slab ------------------------------------

template <class S>
struct KnMembership {
  std::uint32_t n = 0;
  bool supported = false;  // every position below Delta_{n+1}
  S norm1{};               // ||y||_1
  S tau_norm1{};           // ||tau_n y||_1
  bool in_set = false;
};

// tau_n: keep only the orbit coordinates below the stage-n anchor.
template <class S>
UVec<S> tau_restrict(const ConstructionState<S>& st, std::uint32_t n, const UVec<S>& y) {
  GVec<S> g = u_to_g(st, y);
  GVec<S> head;
  for (const auto& [j, w] : g.c)
    if (j < st.a[n]) head.set(j, w);
  return g_to_u(st, head);
}

template <class S>
KnMembership<S> kn_membership(const ConstructionState<S>& st, std::uint32_t n,
                              const FinVec<S>& y) {
  if (n < 1 || n > st.stages_done)
    throw config_error("membership needs 1 <= n <= committed stage count");
  KnMembership<S> r;
  r.n = n;
  UVec<S> uy = e_to_u(st, y);
  r.supported = uy.empty() || uy.c.rbegin()->first < st.Delta[n + 1];
  r.norm1 = weighted_norm(st.space, 1, y);
  r.tau_norm1 = weighted_norm(st.space, 1, u_to_e(st, tau_restrict(st, n, uy)));
  r.in_set = r.supported && scalar_ge_ok(rat_like<S>(3, 2), r.norm1) &&
             scalar_ge_ok(r.tau_norm1, rat_like<S>(1, 2));
  return r;
}

// Committed stages whose targeted level equals normN; optionally only those
// whose successor stage is also committed (needed by the polynomial finder).
template <class S>
std::vector<std::uint32_t> stages_with_norm(const ConstructionState<S>& st,
                                            std::uint32_t normN, bool need_next = false) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t n = 1; n <= st.stages_done; ++n)
    if (st.N[n] == normN && (!need_next || n + 1 <= st.stages_done)) out.push_back(n);
  return out;
}

template <class S>
struct KnCandidate {
  std::uint32_t n = 0;
  S M{};  // ||pi_n x||_1, the normalizer; zero when the projection is empty
  KnMembership<S> membership;
};

// For each requested stage: project x to positions < Delta_{n+1}, normalize
// by the projection's weighted 1-norm, and test membership.
template <class S>
std::vector<KnCandidate<S>> kn_locate(const ConstructionState<S>& st, const FinVec<S>& x,
                                      std::uint32_t normN,
                                      const std::vector<std::uint32_t>& k_range) {
  UVec<S> ux = e_to_u(st, x);
  std::vector<KnCandidate<S>> out;
  for (std::uint32_t n : k_range) {
    if (n < 1 || n > st.stages_done)
      throw config_error("locator stage " + std::to_string(n) + " is not committed");
    if (st.N[n] != normN)
      throw config_error("locator stage " + std::to_string(n) +
                         " targets level " + std::to_string(st.N[n]) + ", not " +
                         std::to_string(normN));
    KnCandidate<S> cand;
    cand.n = n;
    cand.membership.n = n;
    UVec<S> head;
    for (const auto& [j, w] : ux.c)
      if (j < st.Delta[n + 1]) head.set(j, w);
    if (!head.empty()) {
      cand.M = weighted_norm(st.space, 1, u_to_e(st, head));
      UVec<S> y;
      for (const auto& [j, w] : head.c) y.set(j, w / cand.M);
      cand.membership = kn_membership(st, n, u_to_e(st, y));
    }
    out.push_back(std::move(cand));
  }
  return out;
}

// --- polynomial finder ----------------------------------------------------

template <class S>
struct CyclicPolyReport {
  std::uint32_t n = 0;
  Poly<S> P;                          // val >= 1, deg < Delta_{n+1}
  std::map<std::uint64_t, S> remainder;  // c_m on [Delta_{n+1}, 2 Delta_{n+1})
  S abs_p{};                          // |P|
  S abs_remainder{};                  // sum |c_m|
  bool budget_flag = false;           // |P| or sum|c_m| exceeded D_n
  bool ill_conditioned = false;       // leading orbit coefficient is tiny
  S anchor_norm{};                    // ||u_{a_n}||_{N_n}
  S block_norm_max{};                 // max ||u_j||_{N_n}, Delta_{n+1} <= j < 2 Delta_{n+1}
  S verified_bound{};                 // 2 anchor + max(|P|, sum|c|) * block max
  S actual_norm{};                    // ||P(T)y - u_0||_{N_n}, evaluated directly
};

// Solves the triangular Toeplitz system that makes P(T)y match the orbit
// vector gamma_{a_n} on every orbit coordinate below Delta_{n+1}.  The exact
// identity is then P(T)y - u_0 = u_{a_n} + sum c_m u_m with the remainder
// supported on the next stage's deep range, where orbit and position bases
// coincide.  This overload takes the orbit expansion of y directly.
template <class S>
CyclicPolyReport<S> find_cyclic_poly(const ConstructionState<S>& st, std::uint32_t n,
                                     const GVec<S>& g) {
  if (n < 1) throw config_error("polynomial finder needs n >= 1");
  if (n + 1 > st.stages_done)
    throw horizon_error("polynomial finder at stage " + std::to_string(n) +
                        " needs stage " + std::to_string(n + 1) + " committed");
  const std::uint64_t dnext = st.Delta[n + 1];
  const std::uint64_t an = st.a[n];
  const S one = scalar_from_int<S>(1);

  if (g.c.empty()) throw config_error("polynomial finder needs a nonzero vector");
  if (g.c.rbegin()->first >= dnext)
    throw config_error("vector is supported beyond position " + std::to_string(dnext));
  const std::uint64_t v = g.c.begin()->first;
  if (v >= an)
    throw config_error("no orbit mass below the anchor; the vector is not head-heavy");

  std::vector<S> yc(dnext);
  for (const auto& [d, w] : g.c) yc[d] = w;
  const S yv = yc[v];

  CyclicPolyReport<S> rep;
  rep.n = n;
  if constexpr (!scalar_exact<S>) {
    double peak = scalar_log2_abs(yv);
    for (const auto& [d, w] : g.c) peak = std::max(peak, scalar_log2_abs(w));
    rep.ill_conditioned = scalar_log2_abs(yv) < peak - 200.0;
  }

  std::vector<S> rho(dnext - v);
  for (std::uint64_t m = v + 1; m < dnext; ++m) {
    S acc = (m == an) ? one : S{};
    for (std::uint64_t d = 1; d < m - v; ++d) {
      if (scalar_is_zero(rho[d])) continue;
      const S& w = yc[m - d];
      if (!scalar_is_zero(w)) acc = acc - rho[d] * w;
    }
    rho[m - v] = acc / yv;
  }
  for (std::uint64_t k = 1; k < rho.size(); ++k) rep.P.set(k, rho[k]);

  for (std::uint64_t m = dnext; m + 1 < 2 * dnext; ++m) {
    S acc{};
    for (std::uint64_t k = 1; k < rho.size(); ++k) {
      if (m - k < dnext && m - k >= v && !scalar_is_zero(rho[k])) {
        const S& w = yc[m - k];
        if (!scalar_is_zero(w)) acc = acc + rho[k] * w;
      }
    }
    if (!scalar_is_zero(acc)) {
      assert(m < st.horizon());
      rep.remainder.emplace(m, acc);
    }
  }

  rep.abs_p = rep.P.abs_sum();
  for (const auto& [m, c] : rep.remainder)
    rep.abs_remainder = rep.abs_remainder + scalar_abs(c);
  rep.budget_flag = !(scalar_ge_ok(st.D[n], rep.abs_p) &&
                      scalar_ge_ok(st.D[n], rep.abs_remainder));

  const std::uint32_t Nn = st.N[n];
  rep.anchor_norm = st.norm_u(Nn, an);
  for (std::uint64_t j = dnext; j < 2 * dnext; ++j)
    rep.block_norm_max = scalar_max(rep.block_norm_max, st.norm_u(Nn, j));
  rep.verified_bound = (one + one) * rep.anchor_norm +
                       scalar_max(rep.abs_p, rep.abs_remainder) * rep.block_norm_max;

  FinVec<S> resid = st.u_vec(an);
  for (const auto& [m, c] : rep.remainder) resid.add(st.index_at(m), c * st.alpha_at(m));
  rep.actual_norm = weighted_norm(st.space, Nn, resid);
  return rep;
}

template <class S>
CyclicPolyReport<S> find_cyclic_poly(const ConstructionState<S>& st, std::uint32_t n,
                                     const FinVec<S>& y) {
  if (n < 1) throw config_error("polynomial finder needs n >= 1");
  if (n + 1 > st.stages_done)
    throw horizon_error("polynomial finder at stage " + std::to_string(n) +
                        " needs stage " + std::to_string(n + 1) + " committed");
  UVec<S> uy = e_to_u(st, y);
  if (uy.empty()) throw config_error("polynomial finder needs a nonzero vector");
  if (uy.c.rbegin()->first >= st.Delta[n + 1])
    throw config_error("vector is supported beyond position " +
                       std::to_string(st.Delta[n + 1]));
  return find_cyclic_poly(st, n, u_to_g(st, uy));
}

// --- tail estimate --------------------------------------------------------

// 4 max(1, |P|/D_n) p_{N_n+2}(x_tail) - p_{N_n}(P(T) x_tail); the first term
// is also written to bound_out for tolerance-aware comparisons.
template <class S>
S tail_margin(const ConstructionState<S>& st, std::uint32_t n, const Poly<S>& P,
              const FinVec<S>& x_tail, S* bound_out = nullptr) {
  if (n < 1 || n > st.stages_done)
    throw config_error("tail margin needs 1 <= n <= committed stage count");
  if (P.zero() || P.val() < 1) throw config_error("tail margin needs val(P) >= 1");
  if (P.deg() >= st.Delta[n + 1])
    throw config_error("tail margin needs deg(P) < Delta_{n+1}");
  UVec<S> ux = e_to_u(st, x_tail);
  if (!ux.empty() && ux.c.begin()->first < st.Delta[n + 1])
    throw config_error("tail vector must be supported on positions >= Delta_{n+1}");

  const S fac = scalar_max(scalar_from_int<S>(1), P.abs_sum() / st.D[n]);
  S lhs = scalar_from_int<S>(4) * fac * seminorm(st.space, st.N[n] + 2, x_tail);
  S rhs{};
  if (!ux.empty())
    rhs = seminorm(st.space, st.N[n], u_to_e(st, apply_poly(st, P, ux)));
  if (bound_out) *bound_out = lhs;
  return lhs - rhs;
}

// --- end-to-end cyclicity -------------------------------------------------

template <class S>
struct CyclicityWitness {
  std::uint32_t n = 0;      // stage whose slab accepted the projection
  std::uint32_t normN = 1;  // seminorm index demonstrated
  S M{};                    // projection normalizer
  Poly<S> Q;                // solved on the raw head, so Q = P / M exactly
  S achieved{};             // p_N(Q(T)x - u_0), recomputed from scratch
  S apriori{};              // 3 / 2^n head-term budget
  bool budget_flag = false;
  bool ill_conditioned = false;
  bool ok = false;          // achieved <= eps
};

// Demonstrates cyclicity of x at seminorm index normN: finds the first
// committed stage n >= 2 with N_n = normN whose normalized projection is
// head-heavy.  The polynomial is solved on the raw projection head, not the
// normalized one, so the normalizer cancels symbolically; dividing first
// would leave roundoff at the kill degrees that the staircase weights then
// amplify far past any useful error level.
template <class S>
CyclicityWitness<S> cyclic_approx(const ConstructionState<S>& st, const FinVec<S>& x,
                                  std::uint32_t normN, const S& eps) {
  if (x.c.empty()) throw config_error("cyclicity demonstration needs a nonzero vector");
  if (!scalar_gt_ok(eps, S{})) throw config_error("eps must be positive");

  std::vector<std::uint32_t> k_range;
  for (std::uint32_t n = 2; n + 1 <= st.stages_done; ++n)
    if (st.N[n] == normN) k_range.push_back(n);
  if (k_range.empty())
    throw horizon_error("no committed stage n >= 2 targets level " +
                        std::to_string(normN) +
                        " with its successor committed; build more stages");

  auto candidates = kn_locate(st, x, normN, k_range);
  const UVec<S> ux = e_to_u(st, x);
  std::optional<CyclicityWitness<S>> attempt;
  for (const auto& cand : candidates) {
    if (!cand.membership.in_set) continue;
    UVec<S> yhead;
    for (const auto& [j, w] : ux.c)
      if (j < st.Delta[cand.n + 1]) yhead.set(j, w);
    GVec<S> g = u_to_g(st, yhead);
    if (g.c.empty() || g.c.begin()->first >= st.a[cand.n]) continue;
    auto rep = find_cyclic_poly(st, cand.n, g);

    CyclicityWitness<S> w;
    w.n = cand.n;
    w.normN = normN;
    w.M = cand.M;
    w.Q = rep.P;
    // the raw-head solve scales P by M while the remainder coefficients are
    // scale-invariant, so only |P| needs the normalizer put back
    w.budget_flag = !(scalar_ge_ok(st.D[cand.n], S(cand.M * rep.abs_p)) &&
                      scalar_ge_ok(st.D[cand.n], rep.abs_remainder));
    w.ill_conditioned = rep.ill_conditioned;
    FinVec<S> img = u_to_e(st, apply_poly(st, w.Q, ux));
    img.add(st.index_at(0), S{} - st.alpha_at(0));
    w.achieved = seminorm(st.space, normN, img);
    w.apriori = rat_like<S>(3, 1) * scalar_pow2<S>(-static_cast<std::int64_t>(cand.n));
    w.ok = scalar_ge_ok(eps, w.achieved);
    if (w.ok) return w;
    attempt = std::move(w);  // keep the deepest attempt; deeper stages shrink the bound
  }
  if (attempt) return *attempt;
  throw witness_error("no committed stage accepted the vector's projection; "
                      "the head never reaches half the weight at this horizon");
}

// Independent replay of a witness: recompute the achieved error from
// (state, Q, x) alone.
template <class S>
S replay_witness_error(const ConstructionState<S>& st, const CyclicityWitness<S>& w,
                       const FinVec<S>& x) {
  FinVec<S> img = u_to_e(st, apply_poly(st, w.Q, e_to_u(st, x)));
  img.add(st.index_at(0), S{} - st.alpha_at(0));
  return seminorm(st.space, w.normN, img);
}

// --- randomized property suites ------------------------------------------

struct SuiteOutcome {
  std::string name;
  int trials = 0;
  int failures = 0;
  double worst_margin = 0.0;  // most negative margin seen (log2-free, saturating)
  std::string note;
  bool pass() const { return failures == 0; }
};

namespace detail {

template <class S>
UVec<S> random_positions(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi,
                         int max_support) {
  std::uniform_int_distribution<std::uint64_t> pick(lo, hi);
  std::uniform_int_distribution<long long> num(-8, 8);
  std::uniform_int_distribution<long long> den(1, 5);
  std::uniform_int_distribution<int> size(1, max_support);
  UVec<S> v;
  int k = size(rng);
  for (int t = 0; t < k; ++t)
    v.add(pick(rng), scalar_from_int<S>(num(rng)) / scalar_from_int<S>(den(rng)));
  return v;
}

template <class S>
FinVec<S> random_low_enums(std::mt19937_64& rng, std::uint64_t max_enum, int max_support) {
  std::uniform_int_distribution<std::uint64_t> pick(0, max_enum);
  std::uniform_int_distribution<long long> num(-8, 8);
  std::uniform_int_distribution<long long> den(1, 5);
  std::uniform_int_distribution<int> size(1, max_support);
  FinVec<S> v;
  int k = size(rng);
  for (int t = 0; t < k; ++t) {
    long long c = num(rng);
    if (c == 0) c = 1;
    v.add(pick(rng), scalar_from_int<S>(c) / scalar_from_int<S>(den(rng)));
  }
  return v;
}

inline void tally(SuiteOutcome& out, bool ok, double margin) {
  ++out.trials;
  if (!ok) ++out.failures;
  out.worst_margin = std::min(out.worst_margin, margin);
}

template <class S>
double margin_as_double(const S& m) {
  if constexpr (scalar_exact<S>) {
    return static_cast<double>(m);
  } else {
    return m.to_double();
  }
}

} // namespace detail

// p_N(Tx) <= 8 C_{N+1} L_N p_{N+2}(x) on random vectors.
template <class S>
SuiteOutcome suite_continuity(const ConstructionState<S>& st, std::uint32_t normN,
                              int trials, std::uint64_t seed) {
  SuiteOutcome out;
  out.name = "continuity N=" + std::to_string(normN);
  std::mt19937_64 rng(seed);
  const S cfac = scalar_from_int<S>(8) * basis_constant<S>(st.space, normN + 1) * st.L[normN];
  for (int t = 0; t < trials; ++t) {
    UVec<S> x = detail::random_positions<S>(rng, 0, st.horizon() - 2, 8);
    S lhs = cfac * seminorm(st.space, normN + 2, u_to_e(st, x));
    S rhs = seminorm(st.space, normN, u_to_e(st, apply_T(st, x)));
    detail::tally(out, scalar_ge_ok(lhs, rhs), detail::margin_as_double<S>(lhs - rhs));
  }
  return out;
}

// Orbit consistency: the frame expansion of a single orbit coordinate equals
// the memoized orbit vector, and (below iter_cap) so does the iterated image
// of the seed.
template <class S>
SuiteOutcome suite_gamma(const ConstructionState<S>& st, int trials, std::uint64_t seed,
                         std::uint64_t iter_cap = 600) {
  SuiteOutcome out;
  out.name = "gamma consistency";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, st.horizon() - 1);
  for (int t = 0; t < trials; ++t) {
    std::uint64_t j = pick(rng);
    GVec<S> one;
    one.set(j, scalar_from_int<S>(1));
    bool ok = u_to_e(st, g_to_u(st, one)) == gamma(st, j);
    detail::tally(out, ok, ok ? 0.0 : -1.0);
  }
  std::uint64_t cap = std::min<std::uint64_t>(iter_cap, st.horizon() - 1);
  UVec<S> x;
  x.set(0, scalar_from_int<S>(1));
  for (std::uint64_t j = 0; j <= cap; ++j) {
    bool ok = u_to_e(st, x) == gamma(st, j);
    detail::tally(out, ok, ok ? 0.0 : -1.0);
    if (j < cap) x = apply_T(st, x);
  }
  out.note = "iterated to position " + std::to_string(cap);
  return out;
}

// Rejection-sampled members of the stage-n slab obey the certified
// coordinate-sum bound D_n.
template <class S>
SuiteOutcome suite_dual(const ConstructionState<S>& st, std::uint32_t n, int trials,
                        std::uint64_t seed) {
  SuiteOutcome out;
  out.name = "dual bound n=" + std::to_string(n);
  std::mt19937_64 rng(seed);
  const S dn = certify_D(st, n);
  const S three_half = rat_like<S>(3, 2);
  int attempts = 0;
  while (out.trials < trials && attempts < trials * 50) {
    ++attempts;
    UVec<S> raw = detail::random_positions<S>(rng, 0, st.Delta[n + 1] - 1, 8);
    if (raw.empty()) continue;
    S norm1 = weighted_norm(st.space, 1, u_to_e(st, raw));
    if (scalar_is_zero(norm1)) continue;
    UVec<S> y;
    for (const auto& [j, w] : raw.c) y.set(j, w * three_half / norm1);
    KnMembership<S> memb = kn_membership(st, n, u_to_e(st, y));
    if (!memb.in_set) continue;  // rejection step: tau-head too light
    S coordsum{};
    for (const auto& [j, w] : u_to_g(st, y).c) coordsum = coordsum + scalar_abs(w);
    detail::tally(out, scalar_ge_ok(dn, coordsum),
                  detail::margin_as_double<S>(dn - coordsum));
  }
  out.note = "attempts " + std::to_string(attempts);
  return out;
}

// Random admissible (P, x_tail) pairs keep the tail margin nonnegative.
template <class S>
SuiteOutcome suite_tail(const ConstructionState<S>& st, std::uint32_t n, int trials,
                        std::uint64_t seed) {
  SuiteOutcome out;
  out.name = "tail bound n=" + std::to_string(n);
  if (st.Delta[n + 1] >= st.horizon()) {
    out.note = "no committed positions beyond Delta_{n+1}";
    return out;
  }
  std::mt19937_64 rng(seed);
  const std::uint64_t degcap = std::min<std::uint64_t>(st.Delta[n + 1] - 1, 24);
  std::uniform_int_distribution<std::uint64_t> degpick(1, degcap);
  std::uniform_int_distribution<long long> num(-6, 6);
  std::uniform_int_distribution<int> terms(1, 4);
  for (int t = 0; t < trials; ++t) {
    Poly<S> p;
    int k = terms(rng);
    for (int i = 0; i < k; ++i) {
      long long c = num(rng);
      if (c == 0) c = 1;
      p.set(degpick(rng), scalar_from_int<S>(c));
    }
    std::uint64_t hi = st.horizon() - 2 - p.deg();
    UVec<S> x = detail::random_positions<S>(rng, st.Delta[n + 1], hi, 6);
    S bound{};
    S margin = tail_margin(st, n, p, u_to_e(st, x), &bound);
    bool ok = scalar_ge_ok(bound, S(bound - margin));  // margin >= -tol * bound
    detail::tally(out, ok, detail::margin_as_double<S>(margin));
  }
  return out;
}

// Random low vectors: once some stage's projection is accepted, all later
// committed stages with the same norm index accept it too.
template <class S>
SuiteOutcome suite_kn(const ConstructionState<S>& st, std::uint32_t normN, int trials,
                      std::uint64_t seed) {
  SuiteOutcome out;
  out.name = "slab locator N=" + std::to_string(normN);
  std::mt19937_64 rng(seed);
  auto k_range = stages_with_norm(st, normN);
  if (k_range.empty()) {
    out.note = "no committed stage targets this level";
    return out;
  }
  for (int t = 0; t < trials; ++t) {
    FinVec<S> x = detail::random_low_enums<S>(rng, st.s[2], 4);
    if (x.c.empty()) continue;
    auto cands = kn_locate(st, x, normN, k_range);
    bool seen = false, monotone = true, any = false;
    for (const auto& c : cands) {
      if (c.membership.in_set) {
        seen = true;
        any = true;
      } else if (seen) {
        monotone = false;
      }
    }
    detail::tally(out, any && monotone, any && monotone ? 0.0 : -1.0);
  }
  return out;
}

// The bundle the command-line verify runs after the stage certificates.
template <class S>
std::vector<SuiteOutcome> run_verification_suites(const ConstructionState<S>& st,
                                                  std::uint64_t seed, int trials) {
  std::vector<SuiteOutcome> out;
  for (std::uint32_t normN = 1; normN <= st.stages_done; ++normN)
    out.push_back(suite_continuity(st, normN, trials, seed + normN));
  out.push_back(suite_gamma(st, trials, seed + 101));
  for (std::uint32_t n = 1; n <= st.stages_done; ++n)
    out.push_back(suite_dual(st, n, trials, seed + 211 + n));
  for (std::uint32_t n = 1; n + 1 <= st.stages_done; ++n)
    out.push_back(suite_tail(st, n, trials, seed + 307 + n));
  out.push_back(suite_kn(st, 1, std::min(trials, 25), seed + 401));
  return out;
}

} // namespace readshift
