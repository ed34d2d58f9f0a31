#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <cstdint>
#include <random>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "readshift/analysis.hpp"

using namespace readshift;

namespace {

const ConstructionState<Rat>& stage2_rat() {
  static const ConstructionState<Rat> st =
      advance_stage(init_construction<Rat>(Space::l1_power()));
  return st;
}

const ConstructionState<Fp>& stage3_fp() {
  static const ConstructionState<Fp> st =
      advance_stage(advance_stage(init_construction<Fp>(Space::l2_power())));
  return st;
}

Rat q(long long p, long long d) { return Rat(p) / Rat(d); }

} // namespace

TEST_CASE("slab membership measures the weighted norms exactly") {
  const auto& st = stage2_rat();

  FinVec<Rat> u0 = st.u_vec(0);  // ||u_0||_1 = 1/4: too light unscaled
  auto light = kn_membership(st, 1, u0);
  CHECK(light.supported);
  CHECK(light.norm1 == q(1, 4));
  CHECK(light.tau_norm1 == q(1, 4));
  CHECK(!light.in_set);

  FinVec<Rat> y4;  // 4 u_0 has norm exactly 1 and a full head
  y4.add(st.index_at(0), Rat(4) * st.alpha_at(0));
  auto member = kn_membership(st, 1, y4);
  CHECK(member.norm1 == Rat(1));
  CHECK(member.tau_norm1 == Rat(1));
  CHECK(member.in_set);

  FinVec<Rat> deep = st.u_vec(15);  // beyond Delta_2: not stage-1 supported
  CHECK(!kn_membership(st, 1, deep).supported);
  CHECK(!kn_membership(st, 1, deep).in_set);
  CHECK(kn_membership(st, 2, deep).supported);

  // 256 u_11 = 256 gamma_11 - 256 gamma_0; tau_1 keeps only the gamma_0 part.
  FinVec<Rat> anchor;
  anchor.add(st.index_at(11), Rat(256) * st.alpha_at(11));
  auto echo = kn_membership(st, 1, anchor);
  CHECK(echo.norm1 == Rat(1));
  CHECK(echo.tau_norm1 == Rat(64));
  CHECK(echo.in_set);

  CHECK_THROWS_AS((void)kn_membership(st, 3, u0), config_error);
}

TEST_CASE("the locator normalizes projections into the slab") {
  const auto& st = stage2_rat();

  // u_0 + u_11 collapses to a single orbit coordinate at 11: the stage-1
  // head is empty, the stage-2 head is full.
  FinVec<Rat> x = st.u_vec(0) + st.u_vec(11);
  auto cands = kn_locate(st, x, 1, {1, 2});
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].n == 1);
  CHECK(cands[0].M == q(65, 256));  // 1/4 from u_0 plus 1/256 from u_11
  CHECK(cands[0].membership.norm1 == Rat(1));
  CHECK(cands[0].membership.tau_norm1 == Rat(0));
  CHECK(!cands[0].membership.in_set);
  CHECK(cands[1].n == 2);
  CHECK(cands[1].membership.tau_norm1 == Rat(1));
  CHECK(cands[1].membership.in_set);

  // A plain low vector is accepted everywhere.
  FinVec<Rat> low = testing::vec<Rat>({{2, 3}, {4, -1}});
  for (const auto& c : kn_locate(st, low, 1, {1, 2})) {
    CHECK(c.membership.norm1 == Rat(1));
    CHECK(c.membership.in_set);
  }

  CHECK_THROWS_AS((void)kn_locate(st, low, 2, {1}), config_error);
  CHECK_THROWS_AS((void)kn_locate(st, low, 1, {3}), config_error);
}

TEST_CASE("the polynomial finder solves the seed cases exactly") {
  const auto& st = stage2_rat();

  SUBCASE("normalized first orbit vector: a single monomial, empty remainder") {
    FinVec<Rat> y;
    y.add(st.index_at(0), Rat(4) * st.alpha_at(0));
    auto rep = find_cyclic_poly(st, 1, y);
    CHECK(rep.P.coef.size() == 1);
    CHECK(rep.P.coef.at(11) == q(1, 4));
    CHECK(rep.remainder.empty());
    CHECK(rep.abs_p == q(1, 4));
    CHECK(!rep.budget_flag);
    CHECK(!rep.ill_conditioned);
    CHECK(rep.anchor_norm == q(1, 256));
    CHECK(rep.block_norm_max * st.D[1] * Rat(4) == Rat(1));
    CHECK(rep.actual_norm == rep.anchor_norm);
    CHECK(rep.verified_bound == Rat(2) * rep.anchor_norm + q(1, 4) * rep.block_norm_max);
    CHECK(rep.actual_norm <= rep.verified_bound);
  }

  SUBCASE("normalized second orbit vector: degree drops by one") {
    FinVec<Rat> y;
    y.add(st.index_at(1), Rat(16) * st.alpha_at(1));
    auto rep = find_cyclic_poly(st, 1, y);
    CHECK(rep.P.coef.size() == 1);
    CHECK(rep.P.coef.at(10) == q(1, 16));
    CHECK(rep.remainder.empty());
  }

  SUBCASE("a two-term head produces a one-term remainder in the next block") {
    FinVec<Rat> y = st.u_vec(0) + st.u_vec(1);
    auto rep = find_cyclic_poly(st, 1, y);
    CHECK(rep.P.coef.size() == 1);
    CHECK(rep.P.coef.at(11) == Rat(1));
    REQUIRE(rep.remainder.size() == 1);
    CHECK(rep.remainder.at(12) == Rat(1));
    CHECK(rep.actual_norm == rep.anchor_norm + rep.block_norm_max);

    // Exactness in the orbit frame: P(T) y - gamma_{a_1} lives in the next
    // stage's deep range.
    GVec<Rat> img = apply_poly_orbit(st, rep.P, u_to_g(st, e_to_u(st, y)));
    img.add(st.a[1], Rat(-1));
    REQUIRE(img.c.size() == 1);
    CHECK(img.c.begin()->first == 12);
    CHECK(img.c.begin()->second == Rat(1));
  }

  SUBCASE("preconditions are enforced") {
    FinVec<Rat> y = st.u_vec(0);
    CHECK_THROWS_AS((void)find_cyclic_poly(st, 2, y), horizon_error);
    CHECK_THROWS_AS((void)find_cyclic_poly(st, 1, FinVec<Rat>{}), config_error);
    CHECK_THROWS_AS((void)find_cyclic_poly(st, 1, st.u_vec(20)), config_error);
    FinVec<Rat> orbit_tail = gamma(st, 11);  // orbit mass starts at the anchor
    CHECK_THROWS_AS((void)find_cyclic_poly(st, 1, orbit_tail), config_error);
  }
}

TEST_CASE("tail margins reproduce the worked cases") {
  const auto& st = stage2_rat();
  Poly<Rat> t1 = Poly<Rat>::monomial(1, Rat(1));

  CHECK(tail_margin(st, 1, t1, FinVec<Rat>{}) == Rat(0));

  // x = u_12: the image u_13 sits at level 2, invisible to p_1.
  Rat bound;
  Rat m = tail_margin(st, 1, t1, st.u_vec(12), &bound);
  CHECK(m == Rat(4) * st.alpha_at(12));
  CHECK(m == bound);

  // An oversized polynomial scales the budget instead of failing.
  Poly<Rat> big = Poly<Rat>::monomial(1, scalar_pow2<Rat>(80));
  Rat bigbound;
  Rat bm = tail_margin(st, 1, big, st.u_vec(12), &bigbound);
  CHECK(bigbound == Rat(4) * scalar_pow2<Rat>(80) / st.D[1] * st.alpha_at(12));
  CHECK(bm >= Rat(0));

  CHECK_THROWS_AS((void)tail_margin(st, 1, Poly<Rat>::monomial(0, Rat(1)), st.u_vec(12)),
                  config_error);
  CHECK_THROWS_AS((void)tail_margin(st, 1, Poly<Rat>::monomial(12, Rat(1)), st.u_vec(12)),
                  config_error);
  CHECK_THROWS_AS((void)tail_margin(st, 1, t1, st.u_vec(3)), config_error);
}

TEST_CASE("block-edge images vanish and leave the full tail budget") {
  const auto& st = stage3_fp();
  Poly<Fp> t1 = Poly<Fp>::monomial(1, scalar_from_int<Fp>(1));
  // T u_407 = u_408 - u_12, both at levels >= 2: p_1 sees nothing.
  Fp bound;
  Fp margin = tail_margin(st, 1, t1, u_to_e(st, UVec<Fp>{{{407, scalar_from_int<Fp>(1)}}}),
                          &bound);
  CHECK(margin == bound);
  CHECK(scalar_gt_ok(margin, Fp{}));
}

TEST_CASE("cyclicity witnesses achieve the bound end to end") {
  const auto& st = stage3_fp();
  const Fp quarter = rat_like<Fp>(1, 4);

  SUBCASE("a zero-tail vector is approximated exactly at the first slab stage") {
    FinVec<Fp> x = testing::vec<Fp>({{0, 1}, {11, 1}});
    auto w = cyclic_approx(st, x, 1, quarter);
    CHECK(w.n == 2);
    CHECK(w.normN == 1);
    CHECK(w.ok);
    CHECK(w.achieved == Fp{});
    CHECK(!w.budget_flag);
    CHECK(!w.ill_conditioned);
    CHECK(scalar_ge_ok(w.apriori, w.achieved));
    CHECK(replay_witness_error(st, w, x) == w.achieved);
  }

  SUBCASE("the second basis vector matches the documented example") {
    FinVec<Fp> x = st.u_vec(1);
    auto w = cyclic_approx(st, x, 1, rat_like<Fp>(1, 2));
    CHECK(w.n == 2);
    CHECK(w.ok);
    CHECK(scalar_ge_ok(rat_like<Fp>(3, 4), w.achieved));
  }

  SUBCASE("vectors whose head never fills the slab are refused honestly") {
    FinVec<Fp> orbit396 = gamma(st, 396);
    CHECK_THROWS_AS((void)cyclic_approx(st, orbit396, 1, quarter), witness_error);
  }

  SUBCASE("missing depth and bad inputs raise the matching errors") {
    const auto& shallow = stage2_rat();
    CHECK_THROWS_AS((void)cyclic_approx(shallow, shallow.u_vec(0), 1, Rat(1)),
                    horizon_error);
    CHECK_THROWS_AS((void)cyclic_approx(st, FinVec<Fp>{}, 1, quarter), config_error);
    CHECK_THROWS_AS((void)cyclic_approx(st, st.u_vec(0), 1, Fp{}), config_error);
  }
}

TEST_CASE("randomized property suites pass at the committed depth") {
  const auto& st = stage2_rat();
  for (const auto& outcome : run_verification_suites(st, 20260825, 40)) {
    INFO(outcome.name, " failures=", outcome.failures, " note=", outcome.note);
    CHECK(outcome.pass());
    CHECK(outcome.trials > 0);
  }
}

TEST_CASE("randomized property suites pass on the deep state") {
  const auto& st = stage3_fp();
  for (const auto& outcome : run_verification_suites(st, 424242, 25)) {
    INFO(outcome.name, " failures=", outcome.failures, " note=", outcome.note);
    CHECK(outcome.pass());
  }
}
