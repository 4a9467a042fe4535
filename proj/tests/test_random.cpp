#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "dshift/random.hpp"

using namespace dshift;

TEST_SUITE("random") {
  TEST_CASE("derived seeds are stable and name-sensitive") {
    CHECK(derive_seed(7, "data") == derive_seed(7, "data"));
    CHECK(derive_seed(7, "data") != derive_seed(7, "split"));
    CHECK(derive_seed(7, "data") != derive_seed(8, "data"));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(3, i));
    CHECK(seen.size() == 1000);
  }

  TEST_CASE("permutations") {
    const auto p = permutation(50, 9);
    std::vector<std::size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(50);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    CHECK(p == permutation(50, 9));
    CHECK(p != permutation(50, 10));
    CHECK(permutation(0, 1).empty());
  }
}
