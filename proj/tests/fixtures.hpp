#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "readshift/scalar.hpp"
#include "readshift/space.hpp"

namespace readshift::testing {

template <class S>
FinVec<S> vec(std::initializer_list<std::pair<std::uint64_t, long long>> entries) {
  FinVec<S> v;
  for (const auto& [i, c] : entries) v.set(i, scalar_from_int<S>(c));
  return v;
}

// enum-prefix truncation: keeps entries with enum_no < bound.
template <class S>
FinVec<S> truncate(const FinVec<S>& v, std::uint64_t bound) {
  FinVec<S> r;
  for (const auto& [i, c] : v.c)
    if (i < bound) r.c.emplace(i, c);
  return r;
}

// Sparse random vector with small integer-quotient coefficients so both
// scalar modes see identical values.
template <class S>
FinVec<S> random_vec(std::mt19937_64& rng, std::uint64_t max_enum, int max_support) {
  std::uniform_int_distribution<std::uint64_t> pick(0, max_enum);
  std::uniform_int_distribution<long long> num(-8, 8);
  std::uniform_int_distribution<long long> den(1, 5);
  std::uniform_int_distribution<int> size(1, max_support);
  FinVec<S> v;
  int n = size(rng);
  for (int t = 0; t < n; ++t) {
    S c = scalar_from_int<S>(num(rng)) / scalar_from_int<S>(den(rng));
    v.set(pick(rng), c);
  }
  return v;
}

} // namespace readshift::testing
