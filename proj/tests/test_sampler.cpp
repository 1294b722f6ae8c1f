#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "mccf/sampler.hpp"

using namespace mccf;

TEST_CASE("sample_key: A-Res key values and monotonicity") {
  CHECK(sample_key(1, 0.5) == doctest::Approx(0.5));
  CHECK(sample_key(2, 0.25) == doctest::Approx(0.5));
  CHECK(sample_key(4, 0.0625) == doctest::Approx(0.5));
  CHECK_THROWS_AS(static_cast<void>(sample_key(0.0, 0.5)), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(sample_key(-1.0, 0.5)), std::invalid_argument);

  // strictly increasing in the rating for fixed draw < 1
  for (double u : {0.05, 0.3, 0.7, 0.99}) {
    double prev = sample_key(1, u);
    for (int r = 2; r <= 5; ++r) {
      const double k = sample_key(double(r), u);
      CHECK(k > prev);
      prev = k;
    }
  }
}

TEST_CASE("sub-threshold neighborhoods are returned untouched") {
  const std::int32_t ids[] = {4, 7, 9};
  const double ratings[] = {2, 5, 1};
  Rng rng(1);
  const auto s = sample_neighborhood(0, ids, ratings, 5, rng);
  CHECK(s.ids == std::vector<std::int32_t>{4, 7, 9});
  CHECK(s.ratings == std::vector<double>{2, 5, 1});
  const auto e = eval_neighborhood(0, ids, ratings, 3);
  CHECK(e.ids == std::vector<std::int32_t>{4, 7, 9});
}

TEST_CASE("eval_neighborhood: top ratings with id tie-break") {
  const std::int32_t ids[] = {1, 2, 3};  // (a=1, r5), (b=2, r3), (c=3, r5)
  const double ratings[] = {5, 3, 5};
  const auto e = eval_neighborhood(0, ids, ratings, 2);
  CHECK(e.ids == std::vector<std::int32_t>{1, 3});
  CHECK(e.ratings == std::vector<double>{5, 5});

  const auto empty = eval_neighborhood(0, {}, {}, 2);
  CHECK(empty.ids.empty());
}

TEST_CASE("size bound: |result| = min(|adj|, threshold)") {
  Rng rng(9);
  for (int rep = 0; rep < 200; ++rep) {
    const auto n = std::size_t(rng.bounded(12));
    const auto threshold = std::int32_t(1 + rng.bounded(6));
    std::vector<std::int32_t> ids(n);
    std::vector<double> ratings(n);
    for (std::size_t k = 0; k < n; ++k) {
      ids[k] = std::int32_t(k * 2);
      ratings[k] = double(1 + rng.bounded(5));
    }
    const auto s = sample_neighborhood(0, ids, ratings, threshold, rng);
    CHECK(s.size() == std::min(n, std::size_t(threshold)));
    CHECK(std::is_sorted(s.ids.begin(), s.ids.end()));
    // subset of the original list, no repeats
    for (std::size_t k = 0; k < s.size(); ++k) {
      const auto it = std::find(ids.begin(), ids.end(), s.ids[k]);
      REQUIRE(it != ids.end());
      CHECK(s.ratings[k] == ratings[std::size_t(it - ids.begin())]);
    }
    const auto e = eval_neighborhood(0, ids, ratings, threshold);
    CHECK(e.size() == std::min(n, std::size_t(threshold)));
  }
}

TEST_CASE("determinism: same seed gives the identical sample sequence") {
  const std::int32_t ids[] = {0, 1, 2, 3, 4, 5, 6, 7};
  const double ratings[] = {1, 2, 3, 4, 5, 1, 2, 3};
  Rng a(33), b(33);
  for (int rep = 0; rep < 50; ++rep) {
    const auto sa = sample_neighborhood(0, ids, ratings, 3, a);
    const auto sb = sample_neighborhood(0, ids, ratings, 3, b);
    CHECK(sa.ids == sb.ids);
  }
}

// Monte Carlo inclusion-frequency oracles (1e5 trials, +-0.01):
// equal ratings reduce A-Res to uniform sampling without replacement, and a
// single draw selects neighbor j with probability r_j / sum(r).
TEST_CASE("monte carlo: equal ratings are uniform without replacement") {
  const int n = 5, threshold = 2, trials = 100000;
  std::vector<std::int32_t> ids(n);
  std::vector<double> ratings(n, 3.0);
  for (int k = 0; k < n; ++k) ids[k] = k;
  std::vector<int> hits(n, 0);
  Rng rng(1234);
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_neighborhood(0, ids, ratings, threshold, rng);
    for (auto id : s.ids) ++hits[std::size_t(id)];
  }
  for (int k = 0; k < n; ++k) {
    const double freq = double(hits[std::size_t(k)]) / trials;
    CHECK(std::fabs(freq - double(threshold) / n) < 0.01);
  }
}

TEST_CASE("monte carlo: single-draw inclusion follows rating weights") {
  const std::int32_t ids[] = {0, 1};
  const double ratings[] = {5, 1};
  const int trials = 100000;
  int first = 0;
  Rng rng(4321);
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_neighborhood(0, ids, ratings, 1, rng);
    if (s.ids[0] == 0) ++first;
  }
  CHECK(std::fabs(double(first) / trials - 5.0 / 6.0) < 0.01);
}

TEST_CASE("monte carlo: inclusion frequency is non-decreasing in rating") {
  const int n = 5, threshold = 2, trials = 100000;
  std::vector<std::int32_t> ids(n);
  std::vector<double> ratings(n);
  for (int k = 0; k < n; ++k) {
    ids[k] = k;
    ratings[k] = double(k + 1);
  }
  std::vector<int> hits(n, 0);
  Rng rng(777);
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_neighborhood(0, ids, ratings, threshold, rng);
    for (auto id : s.ids) ++hits[std::size_t(id)];
  }
  for (int k = 1; k < n; ++k) CHECK(hits[std::size_t(k)] >= hits[std::size_t(k - 1)]);
}
