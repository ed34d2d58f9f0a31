#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "readshift/construction.hpp"

using namespace readshift;

namespace {

template <class S>
std::vector<std::string> failing_ids(const CertificateReport<S>& rep) {
  std::vector<std::string> out;
  for (const auto& c : rep.checks)
    if (!c.pass) out.push_back(c.id);
  return out;
}

bool has(const std::vector<std::string>& ids, const std::string& id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// Mutated states must be re-verified from scratch, exactly like a state
// reloaded from disk: drop the memoized orbit vectors.
template <class S>
void drop_orbit_cache(ConstructionState<S>& st) {
  st.orbit_cache = std::make_shared<std::map<std::uint64_t, FinVec<S>>>();
}

template <class S>
void swap_positions(ConstructionState<S>& st, std::uint64_t x, std::uint64_t y) {
  std::swap(st.pos_to_index[x], st.pos_to_index[y]);
  std::swap(st.level_by_pos[x], st.level_by_pos[y]);
  st.index_to_pos[st.pos_to_index[x]] = x;
  st.index_to_pos[st.pos_to_index[y]] = y;
}

Rat pow2_rat(std::int64_t k) {
  if (k >= 0) return Rat(Int(1) << static_cast<unsigned>(k));
  return Rat(1) / Rat(Int(1) << static_cast<unsigned>(-k));
}

// Exact: |m| is a 53-bit dyadic in [0.5, 1).
Rat fp_to_rat(const Fp& a) {
  if (a.zero()) return Rat(0);
  auto mant = static_cast<long long>(std::ldexp(a.m, 53));
  return Rat(mant) * pow2_rat(a.e - 53);
}

bool rel_close(const Fp& a, const Rat& b) {
  if (b == 0) return a.zero();
  Rat r = fp_to_rat(a) / b - 1;
  if (r < 0) r = -r;
  return r <= Rat(1) / Rat(1000000000);
}

constexpr std::uint64_t kStage1Indices[12] = {2, 4, 9, 5, 8, 11, 0, 1, 3, 6, 10, 7};

const char* const kStage1AlphaRat[12] = {"1",       "1",          "1",
                                         "1",       "1",          "35184372088832",
                                         "274877906944", "1073741824", "2097152",
                                         "2048",    "1",          "1/2"};

// id, quantifier count at stage 1.
const std::pair<const char*, std::uint64_t> kStage1Checks[] = {
    {"tn", 12},        {"tn2", 1},           {"param", 1},     {"finalcont1", 13},
    {"finalcont1bis", 1}, {"finalcont2", 1}, {"finalcont3", 3}, {"finalcont4", 11},
    {"K1", 1},         {"tail1", 18},        {"tail1bis", 2},  {"tail2", 1},
    {"tail3", 2},      {"final1", 1}};

constexpr std::uint64_t kStage2DeepIndices[12] = {12, 17, 23, 30, 38,  47,
                                                  57, 68, 80, 93, 107, 122};

const char* const kL2Rat =
    "138633484706040742978920709207154185171821853768790828758523979030731065390281"
    "2811519987203052069789048695605480707614502944772761/5828588457693849";

} // namespace

TEST_CASE("the level schedule walks the triangular word") {
  const std::uint32_t expect[10] = {1, 1, 2, 1, 2, 3, 1, 2, 3, 4};
  for (std::uint64_t m = 1; m <= 10; ++m) CHECK(nn_schedule(m) == expect[m - 1]);
  CHECK(nn_schedule(11) == 1);
  CHECK(nn_schedule(15) == 5);
  for (std::uint64_t m = 2; m <= 200; ++m) CHECK(nn_schedule(m) < m);
}

TEST_CASE("stage one reproduces the frozen layout in exact arithmetic") {
  auto st = init_construction<Rat>(Space::l1_power());
  CHECK(st.stages_done == 1);
  CHECK(st.a[1] == 11);
  CHECK(st.s[2] == 11);
  CHECK(st.Delta[1] == 1);
  CHECK(st.Delta[2] == 12);
  CHECK(st.N[1] == 1);

  REQUIRE(st.pos_to_index.size() == 12);
  for (std::uint64_t j = 0; j < 12; ++j) {
    CHECK(st.pos_to_index[j] == kStage1Indices[j]);
    CHECK(scalar_str(st.alpha[j]) == kStage1AlphaRat[j]);
    CHECK(st.level_by_pos[j] == st.space.level_of(kStage1Indices[j]));
    CHECK(st.position_of_index(kStage1Indices[j]) == std::optional<std::uint64_t>{j});
  }

  CHECK(scalar_str(st.D[0]) == "1");
  CHECK(scalar_str(st.D[1]) == "1942862819231283/549755813888");
  CHECK(scalar_str(st.L[1]) == "5/4");
  CHECK(certify_D(st, 1) == st.D[1]);
  CHECK(continuity_constant(st, 1) == st.L[1]);

  REQUIRE(st.certificates.size() == 1);
  const auto& rep = st.certificates[0];
  CHECK(rep.stage == 1);
  CHECK(rep.all_pass());
  REQUIRE(rep.checks.size() == std::size(kStage1Checks));
  for (std::size_t k = 0; k < std::size(kStage1Checks); ++k) {
    CHECK(rep.checks[k].id == kStage1Checks[k].first);
    CHECK(rep.checks[k].count == kStage1Checks[k].second);
    CHECK(rep.checks[k].pass);
  }
  CHECK(scalar_str(rep.find("K1")->margin) == "0");
  CHECK(scalar_str(rep.find("finalcont2")->margin) == "1");
  CHECK(scalar_str(rep.find("final1")->margin) == "127/256");
}

TEST_CASE("stage one is identical in scaled binary64 and across base spaces") {
  auto l2 = init_construction<Fp>(Space::l2_power());
  auto l1 = init_construction<Fp>(Space::l1_power());

  for (std::uint64_t j = 0; j < 12; ++j) CHECK(l2.pos_to_index[j] == kStage1Indices[j]);
  CHECK(l2.pos_to_index == l1.pos_to_index);
  CHECK(l2.alpha == l1.alpha);

  CHECK(scalar_str(l2.alpha[5]) == "0x1.0000000000000p+45");
  CHECK(scalar_str(l2.alpha[10]) == "0x1.0000000000000p+0");
  CHECK(scalar_str(l2.alpha[11]) == "0x1.0000000000000p-1");
  CHECK(scalar_str(l2.D[1]) == "0x1.b9c1800c018ccp+11");
  CHECK(scalar_str(l2.L[1]) == "0x1.4000000000000p+0");
  CHECK(l2.certificates[0].all_pass());
  CHECK(scalar_str(l2.certificates[0].find("final1")->margin) == "0x1.fc00000000000p-2");

  auto rat = init_construction<Rat>(Space::l1_power());
  for (std::uint64_t j = 0; j < 12; ++j) CHECK(rel_close(l1.alpha[j], rat.alpha[j]));
  CHECK(rel_close(l1.D[1], rat.D[1]));
  CHECK(rel_close(l1.L[1], rat.L[1]));
}

TEST_CASE("orbit vectors echo across anchor windows and are memoized") {
  auto st = init_construction<Rat>(Space::l1_power());
  CHECK(gamma(st, 0) == st.u_vec(0));
  CHECK(gamma(st, 5) == st.u_vec(5));
  CHECK(gamma(st, 11) == st.u_vec(11) + st.u_vec(0));
  CHECK(&gamma(st, 11) == &gamma(st, 11));
  CHECK_THROWS_AS(gamma(st, 12), horizon_error);

  auto st2 = advance_stage(st);
  CHECK(gamma(st2, 100) == st2.u_vec(100));
  CHECK(gamma(st2, 396) == st2.u_vec(396) + st2.u_vec(0));
  CHECK(gamma(st2, 407) == st2.u_vec(407) + st2.u_vec(11) + st2.u_vec(0));
  CHECK_THROWS_AS(gamma(st2, 408), horizon_error);
}

TEST_CASE("the operator image of each position follows the wiring") {
  auto st = init_construction<Rat>(Space::l1_power());
  auto mid = tu_position(st, 3);
  REQUIRE(mid.size() == 1);
  CHECK(mid.at(4) == Rat(1));

  auto runup = tu_position(st, 10);  // lands on the anchor and reseeds position 0
  REQUIRE(runup.size() == 2);
  CHECK(runup.at(11) == Rat(1));
  CHECK(runup.at(0) == Rat(1));

  CHECK_THROWS_AS(tu_position(st, 11), horizon_error);

  auto st2 = advance_stage(st);
  auto wrap = tu_position(st2, 11);  // end of stage 1's echo window
  REQUIRE(wrap.size() == 2);
  CHECK(wrap.at(12) == Rat(1));
  CHECK(wrap.at(1) == Rat(-1));
  auto runup2 = tu_position(st2, 395);
  REQUIRE(runup2.size() == 2);
  CHECK(runup2.at(396) == Rat(1));
  CHECK(runup2.at(0) == Rat(1));
  CHECK_THROWS_AS(tu_position(st2, 407), horizon_error);
}

TEST_CASE("stage two reproduces the frozen layout") {
  auto st = advance_stage(init_construction<Fp>(Space::l2_power()));
  CHECK(st.stages_done == 2);
  CHECK(st.a[2] == 396);
  CHECK(st.s[3] == 407);
  CHECK(st.Delta[3] == 408);
  CHECK(st.N[2] == 1);
  CHECK(st.pos_to_index.size() == 408);

  CHECK(st.index_at(396) == 352);
  CHECK(st.level_at(396) == 1);
  for (std::uint64_t j = 12; j < 24; ++j) {
    CHECK(st.index_at(j) == kStage2DeepIndices[j - 12]);
    CHECK(st.level_at(j) == 2);
  }
  CHECK(st.level_at(24) == 27);  // staircase starts at the sweep's deepest level
  CHECK(st.index_at(24) == 405);
  for (std::uint64_t j = 397; j < 408; ++j) CHECK(st.level_at(j) == 1);
  CHECK(scalar_str(st.alpha[407]) == "0x1.0400000000000p+11");

  REQUIRE(st.certificates.size() == 2);
  CHECK(st.certificates[0].all_pass());
  CHECK(st.certificates[1].all_pass());
  CHECK(st.certificates[1].checks.size() == 15);
  const auto* f2 = st.certificates[1].find("final2");
  REQUIRE(f2 != nullptr);
  CHECK(f2->count == 12);
  CHECK(f2->pass);
  CHECK(st.certificates[0].find("final2") == nullptr);
}

TEST_CASE("stage two agrees between scalar modes") {
  auto rat = advance_stage(init_construction<Rat>(Space::l1_power()));
  auto fp = advance_stage(init_construction<Fp>(Space::l1_power()));

  CHECK(rat.a == fp.a);
  CHECK(rat.s == fp.s);
  CHECK(rat.Delta == fp.Delta);
  CHECK(rat.pos_to_index == fp.pos_to_index);
  CHECK(scalar_str(rat.alpha[407]) == "2080");
  CHECK(scalar_str(rat.L[2]) == kL2Rat);
  for (std::uint64_t j = 0; j < 408; ++j) CHECK(rel_close(fp.alpha[j], rat.alpha[j]));
  CHECK(rel_close(fp.D[2], rat.D[2]));
  CHECK(rel_close(fp.L[2], rat.L[2]));

  CHECK(certify_D(rat, 2) == rat.D[2]);
  CHECK(continuity_constant(rat, 2) == rat.L[2]);
  CHECK(rat.D[2] >= rat.D[1]);
}

TEST_CASE("rebuilding from scratch is deterministic") {
  auto a = advance_stage(init_construction<Fp>(Space::l2_power()));
  auto b = advance_stage(init_construction<Fp>(Space::l2_power()));
  CHECK(a.pos_to_index == b.pos_to_index);
  CHECK(a.level_by_pos == b.level_by_pos);
  CHECK(a.alpha == b.alpha);
  CHECK(a.a == b.a);
  CHECK(a.s == b.s);
  CHECK(a.Delta == b.Delta);
  CHECK(a.D == b.D);
  CHECK(a.L == b.L);
}

TEST_CASE("seeded defects are caught by the matching certificate") {
  const auto base = advance_stage(init_construction<Fp>(Space::l2_power()));
  const Fp two = scalar_from_int<Fp>(2);

  SUBCASE("halving the first anchor weight breaks the orbit domination") {
    auto st = base;
    st.alpha[11] = st.alpha[11] / two;
    drop_orbit_cache(st);
    auto rep = verify_certificates(st, 1);
    CHECK(!rep.all_pass());
    CHECK(has(failing_ids(rep), "K1"));
  }

  SUBCASE("swapping two staircase slots breaks the level descent") {
    auto st = base;
    swap_positions(st, 2, 6);
    drop_orbit_cache(st);
    auto rep = verify_certificates(st, 1);
    CHECK(!rep.all_pass());
    CHECK(has(failing_ids(rep), "finalcont4"));
  }

  SUBCASE("shrinking the anchor position breaks the window parameter") {
    auto st = base;
    st.a[1] = 2;
    drop_orbit_cache(st);
    auto rep = verify_certificates(st, 1);
    CHECK(!rep.all_pass());
    CHECK(has(failing_ids(rep), "param"));
  }

  SUBCASE("zeroing a staircase weight breaks the successor growth") {
    auto st = base;
    st.alpha[7] = Fp{};
    drop_orbit_cache(st);
    auto rep = verify_certificates(st, 1);
    CHECK(!rep.all_pass());
    CHECK(has(failing_ids(rep), "finalcont1"));
  }

  SUBCASE("inflating the first anchor weight breaks the smallness bound") {
    auto st = base;
    st.alpha[11] = st.alpha[11] * scalar_from_int<Fp>(1024);
    drop_orbit_cache(st);
    auto rep = verify_certificates(st, 1);
    CHECK(!rep.all_pass());
    CHECK(has(failing_ids(rep), "final1"));
  }

  SUBCASE("zeroing an echo weight is caught at the later stage") {
    auto st = base;
    st.alpha[400] = Fp{};
    drop_orbit_cache(st);
    CHECK(verify_certificates(st, 1).all_pass());
    auto rep = verify_certificates(st, 2);
    CHECK(!rep.all_pass());
    auto ids = failing_ids(rep);
    CHECK(has(ids, "K1"));
    CHECK(has(ids, "finalcont1bis"));
  }
}

TEST_CASE("unbuildable requests are refused up front") {
  CHECK_THROWS_AS((void)init_construction<Rat>(Space::l2_power()), config_error);
  CHECK_THROWS_AS((void)init_construction<Fp>(Space::omega()), config_error);
  CHECK_THROWS_AS((void)init_construction<Fp>(Space::omega_plus_l2()), config_error);
  CHECK_THROWS_AS((void)init_construction<Fp>(Space::power_of(Space::findim(3))),
                  config_error);
  CHECK_THROWS_AS((void)init_construction<Fp>(Space::banach_l2()), config_error);
}

TEST_CASE("growth projections refuse stages that cannot be materialized") {
  auto st1 = init_construction<Fp>(Space::l2_power());
  auto pr1 = project_next_stage(st1);
  CHECK(pr1.next_stage == 2);
  CHECK(pr1.lower_positions == doctest::Approx(68));
  CHECK(pr1.within_position_cap);

  auto st2 = advance_stage(st1);
  auto pr2 = project_next_stage(st2);
  CHECK(pr2.next_stage == 3);
  CHECK(pr2.lower_anchor_index == doctest::Approx(165648));
  CHECK(pr2.lower_positions == doctest::Approx(165992));
  CHECK(pr2.within_position_cap);

  auto capped = st2;
  capped.limits.max_positions = 1000;
  CHECK(!project_next_stage(capped).within_position_cap);
  CHECK_THROWS_AS((void)advance_stage(capped), horizon_error);

  Limits tight;
  tight.max_positions = 50;
  auto small = init_construction<Fp>(Space::l2_power(), tight);
  CHECK(small.stages_done == 1);
  CHECK_THROWS_AS((void)advance_stage(small), horizon_error);

  Limits fewbits;
  fewbits.max_rational_bits = 1000;
  auto exact = init_construction<Rat>(Space::l1_power(), fewbits);
  CHECK(exact.stages_done == 1);
  CHECK_THROWS_AS((void)advance_stage(exact), horizon_error);
}
