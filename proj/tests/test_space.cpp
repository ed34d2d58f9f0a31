#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fixtures.hpp"
#include "readshift/space.hpp"

using namespace readshift;
using readshift::testing::random_vec;
using readshift::testing::truncate;
using readshift::testing::vec;

TEST_CASE("antidiagonal enumeration of power spaces") {
  Space sp = Space::l2_power();

  // first antidiagonals: (1,0), (1,1), (2,0), (1,2), (2,1), (3,0), ...
  CHECK(sp.encode_pair(1, 0) == 0);
  CHECK(sp.encode_pair(1, 1) == 1);
  CHECK(sp.encode_pair(2, 0) == 2);
  CHECK(sp.encode_pair(1, 2) == 3);
  CHECK(sp.encode_pair(2, 1) == 4);
  CHECK(sp.encode_pair(3, 0) == 5);
  CHECK(sp.encode_pair(4, 0) == 9);
  CHECK(sp.encode_pair(1, 5) == 15);

  for (std::uint64_t e = 0; e < 500; ++e) {
    Space::Addr a = sp.decode(e);
    CHECK(sp.encode_pair(a.copy, a.coord) == e);
  }
}

TEST_CASE("levels follow the copy index") {
  Space sp = Space::l2_power();
  CHECK(sp.level_of(sp.encode_pair(1, 5)) == 0);
  CHECK(sp.level_of(sp.encode_pair(4, 0)) == 3);
  CHECK(sp.level_of(16) == 1); // (2,4)

  Space sum = Space::omega_plus_l2();
  CHECK(sum.level_of(sum.encode_sum_l2(7)) == 0); // l2 summand is visible from p_1
  CHECK(sum.level_of(sum.encode_omega(1)) == 0);
  CHECK(sum.level_of(sum.encode_omega(2)) == 1);

  Space om = Space::omega();
  CHECK(om.level_of(om.encode_omega(1)) == 0);
  CHECK(om.level_of(om.encode_omega(4)) == 3);
}

TEST_CASE("level and the seminorm oracle agree") {
  for (const Space& sp : {Space::l2_power(), Space::l1_power(), Space::omega_plus_l2(),
                          Space::omega(), Space::power_of(Space::omega())}) {
    for (std::uint64_t e = 0; e < 60; ++e) {
      std::uint32_t lvl = sp.level_of(e);
      FinVec<Fp> unit;
      unit.set(e, Fp::from_int(1));
      if (lvl > 0) CHECK(seminorm(sp, lvl, unit) == Fp{});
      CHECK(seminorm(sp, lvl + 1, unit) == Fp::from_int(1));
      CHECK(seminorm_basis<Fp>(sp, lvl + 1, e) == Fp::from_int(1));
      if (lvl > 0) CHECK(seminorm_basis<Fp>(sp, lvl, e) == Fp{});
    }
  }
}

TEST_CASE("seminorm hand values") {
  Space sp = Space::l2_power();

  // copy 3 is invisible at j=2, copy 1 is a unit vector
  FinVec<Fp> v;
  v.set(sp.encode_pair(1, 0), Fp::from_int(1));
  v.set(sp.encode_pair(3, 5), Fp::from_int(1));
  CHECK(seminorm(sp, 2, v) == Fp::from_int(1));

  CHECK(seminorm(sp, 4, FinVec<Fp>{}) == Fp{});

  // max_{n<=3} of the per-copy l2 norms: copy 3 holds (2, -1)
  FinVec<Fp> w;
  w.set(sp.encode_pair(3, 0), Fp::from_int(2));
  w.set(sp.encode_pair(3, 1), Fp::from_int(-1));
  CHECK(seminorm(sp, 3, w).to_double() == doctest::Approx(2.2360679774997896));
  CHECK(seminorm(sp, 2, w) == Fp{});

  Space om = Space::omega();
  FinVec<Rat> x;
  x.set(om.encode_omega(3), Rat(5));
  CHECK(seminorm(om, 2, x) == Rat(0));
  CHECK(seminorm(om, 3, x) == Rat(5));

  Space sum = Space::omega_plus_l2();
  FinVec<Fp> y;
  y.set(sum.encode_sum_l2(0), Fp::from_int(1));
  y.set(sum.encode_sum_l2(1), Fp::from_int(1));
  y.set(sum.encode_omega(2), Fp::from_int(3));
  CHECK(seminorm(sum, 1, y).to_double() == doctest::Approx(1.4142135623730951));
  CHECK(seminorm(sum, 2, y) == Fp::from_int(3));
}

TEST_CASE("weighted norm hand values") {
  Space sp = Space::l2_power();
  FinVec<Fp> e0;
  e0.set(sp.encode_pair(1, 0), Fp::from_int(1)); // enum 0, level 0
  CHECK(weighted_norm(sp, 1, e0) == Fp::from_int(2)); // p_1 + 2^0 weight

  // enum 2 = (2,0), level 1: ||e||_1 = 0 + 2^-2
  FinVec<Fp> e2;
  e2.set(2, Fp::from_int(1));
  CHECK(weighted_norm(sp, 1, e2) == Fp::from_double(0.25));
  CHECK(weighted_norm(sp, 2, e2) == Fp::from_double(1.25));

  Space om = Space::omega();
  FinVec<Rat> v;
  v.set(om.encode_omega(1), Rat(1));
  v.set(om.encode_omega(2), Rat(-2));
  // p_1 = 1; weights 2^0*1 + 2^-1*2
  CHECK(weighted_norm(om, 1, v) == Rat(3));
}

TEST_CASE("seminorms are nondecreasing in j") {
  std::mt19937_64 rng(0xC0FFEE01);
  for (const Space& sp : {Space::l2_power(), Space::omega_plus_l2(), Space::omega(),
                          Space::power_of(Space::omega())}) {
    for (int t = 0; t < 1000; ++t) {
      FinVec<Fp> v = random_vec<Fp>(rng, 40, 6);
      for (std::uint32_t j = 1; j <= 6; ++j)
        CHECK(seminorm(sp, j, v) <= seminorm(sp, j + 1, v));
    }
  }
  for (int t = 0; t < 1000; ++t) {
    FinVec<Rat> v = random_vec<Rat>(rng, 40, 6);
    for (std::uint32_t j = 1; j <= 6; ++j)
      CHECK(seminorm(Space::l1_power(), j, v) <= seminorm(Space::l1_power(), j + 1, v));
  }
}

TEST_CASE("enum-prefix truncation respects the basis constants") {
  std::mt19937_64 rng(0xC0FFEE02);
  for (const Space& sp : {Space::l2_power(), Space::l1_power(), Space::omega_plus_l2(),
                          Space::omega()}) {
    for (int t = 0; t < 1000; ++t) {
      FinVec<Fp> v = random_vec<Fp>(rng, 40, 6);
      std::uniform_int_distribution<std::uint64_t> cut(0, 41);
      std::uint64_t M = cut(rng), N = cut(rng);
      if (M > N) std::swap(M, N);
      for (std::uint32_t j = 1; j <= 6; ++j) {
        Fp lhs = seminorm(sp, j, truncate(v, M));
        Fp rhs = basis_constant<Fp>(sp, j) * seminorm(sp, j + 1, truncate(v, N));
        CHECK(scalar_ge_ok(rhs, lhs));
      }
    }
  }
}

TEST_CASE("fresh index selection") {
  Space sp = Space::l2_power();
  CHECK(fresh_indices(sp, 0, 2, {}) == std::vector<std::uint64_t>{0, 1});
  CHECK(fresh_indices(sp, 1, 3, {}) == std::vector<std::uint64_t>{2, 4, 7});
  CHECK(fresh_indices(sp, 2, 2, {5}) == std::vector<std::uint64_t>{8, 12});
  CHECK(fresh_indices(sp, 1, 2, {}, 5) == std::vector<std::uint64_t>{7, 11});
  CHECK(fresh_indices(sp, 0, 0, {}).empty());

  CHECK_THROWS_AS(fresh_indices(Space::omega(), 0, 2, {}), config_error);

  for (const Space& nonisp : {Space::l1_power(), Space::l2_power()}) {
    for (std::uint32_t level = 0; level <= 8; ++level) {
      auto got = fresh_indices(nonisp, level, 50, {});
      CHECK(got.size() == 50);
      std::set<std::uint64_t> uniq(got.begin(), got.end());
      CHECK(uniq.size() == 50);
      for (std::uint64_t e : got) {
        if (level > 0) CHECK(seminorm_basis<Fp>(nonisp, level, e) == Fp{});
        CHECK(seminorm_basis<Fp>(nonisp, level + 1, e) == Fp::from_int(1));
      }
    }
  }
}

TEST_CASE("omega-power levels are finite sets in enum order") {
  Space sp = Space::power_of(Space::omega());
  // E_1 = {(1,1), (2,0), (2,1)} = enums {1, 2, 4}
  CHECK(sp.level_member(1, 0) == std::optional<std::uint64_t>{1});
  CHECK(sp.level_member(1, 1) == std::optional<std::uint64_t>{2});
  CHECK(sp.level_member(1, 2) == std::optional<std::uint64_t>{4});
  CHECK(!sp.level_member(1, 3).has_value());
  CHECK_THROWS_AS(fresh_indices(sp, 1, 4, {}), config_error);
}

TEST_CASE("classification by kernel codimension") {
  CHECK(classify_isp(Space::omega()).satisfies);
  CHECK(classify_isp(Space::omega()).j0 == std::optional<std::uint32_t>{1});
  CHECK(classify_isp(Space::omega_plus_l2()).satisfies);
  CHECK(classify_isp(Space::power_of(Space::omega())).satisfies);
  CHECK(classify_isp(Space::power_of(Space::findim(1))).satisfies);
  CHECK(classify_isp(Space::power_of(Space::findim(3))).satisfies);
  CHECK(classify_isp(Space::banach_l2()).satisfies);

  IspVerdict no1 = classify_isp(Space::l1_power());
  IspVerdict no2 = classify_isp(Space::l2_power());
  CHECK(!no1.satisfies);
  CHECK(!no2.satisfies);
  CHECK(no2.infinite_levels_cofinal);
  CHECK(!no2.infinite_levels.empty());
  CHECK(no2.infinite_levels.front() == 1);

  // power over a base is classified "satisfies" exactly for finite-dimensional
  // and omega-like bases
  CHECK(!classify_isp(Space::power_of(Space::banach_l1())).satisfies);
  CHECK(!classify_isp(Space::power_of(Space::banach_l2())).satisfies);
}

TEST_CASE("construction viability flag") {
  CHECK(Space::l1_power().level_infinite());
  CHECK(Space::l2_power().level_infinite());
  CHECK(!Space::omega().level_infinite());
  CHECK(!Space::omega_plus_l2().level_infinite());
  CHECK(!Space::power_of(Space::omega()).level_infinite());
}

TEST_CASE("config names round-trip") {
  CHECK(Space::from_name("omega").name() == "omega");
  CHECK(Space::from_name("l1_power").name() == "l1_power");
  CHECK(Space::from_name("l2_power").name() == "l2_power");
  CHECK(Space::from_name("omega_plus_l2").name() == "omega_plus_l2");
  CHECK_THROWS_AS(Space::from_name("l3_power"), config_error);
}

TEST_CASE("square-root-free spaces work in exact mode") {
  Space sp = Space::l1_power();
  FinVec<Rat> v;
  v.set(sp.encode_pair(1, 0), rat_make(1, 3));
  v.set(sp.encode_pair(1, 1), rat_make(1, 6));
  v.set(sp.encode_pair(2, 0), Rat(2));
  CHECK(seminorm(sp, 1, v) == rat_make(1, 2));
  CHECK(seminorm(sp, 2, v) == Rat(2));
  CHECK(weighted_norm(sp, 1, v) == rat_make(1, 2) + rat_make(1, 3) + rat_make(1, 12) + rat_make(2, 4));

  CHECK_THROWS_AS(seminorm(Space::l2_power(), 1, v), config_error);
}
