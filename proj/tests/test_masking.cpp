// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "mbev/masking.hpp"

using namespace mbev;

TEST_CASE("schedule construction rules") {
  // all-views-out must be impossible: probabilities only cover k = 0..5
  CHECK_THROWS_AS(MaskSchedule::make({0.5, 0.5, 0.0, 0.0, 0.0, 0.1},
                                     MaskGranularity::PerEpoch),
                  MbevError);
  CHECK_THROWS_AS(MaskSchedule::make({1.0, 0.0, 0.0, 0.0, 0.0, -0.1},
                                     MaskGranularity::PerEpoch),
                  MbevError);
  const auto s = MaskSchedule::uniform_1_to_5();
  double sum = 0;
  for (double p : s.k_probs) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sample_mask basics") {
  Rng rng(1);
  const auto zero = MaskSchedule::make({1, 0, 0, 0, 0, 0}, MaskGranularity::PerEpoch);
  for (int e = 0; e < 4; ++e) CHECK(sample_mask(rng, zero, e).empty());

  const auto five = MaskSchedule::make({0, 0, 0, 0, 0, 1}, MaskGranularity::PerEpoch);
  const auto p = sample_mask(rng, five, 0);
  CHECK(p.count() == 5);
}

TEST_CASE("per-epoch k is fixed inside an epoch, subsets vary") {
  const auto sched = MaskSchedule::uniform_1_to_5();
  Rng rng(9);
  for (int epoch = 0; epoch < 12; ++epoch) {
    const int k0 = sample_mask(rng, sched, epoch).count();
    bool subset_varies = false;
    MaskPattern first = sample_mask(rng, sched, epoch);
    for (int draw = 0; draw < 20; ++draw) {
      const auto p = sample_mask(rng, sched, epoch);
      CHECK(p.count() == k0);
      if (!(p == first)) subset_varies = true;
    }
    if (k0 >= 1 && k0 <= 4) CHECK(subset_varies);
  }
}

TEST_CASE("determinism of the pattern stream") {
  const auto sched = MaskSchedule::uniform_1_to_5();
  Rng a(123), b(123);
  for (int e = 0; e < 30; ++e)
    CHECK(sample_mask(a, sched, e) == sample_mask(b, sched, e));
}

TEST_CASE("per-view masking frequency matches the schedule mean") {
  // uniform k in {1..5}: E[k]/6 = 0.5 per view
  const auto sched = MaskSchedule::uniform_1_to_5();
  Rng rng(7);
  std::array<int, kViews> hits{};
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) {
    const auto p = sample_mask(rng, sched, i);  // epoch varies per draw
    for (int v = 0; v < kViews; ++v) hits[v] += p.masked[v];
  }
  for (int v = 0; v < kViews; ++v)
    CHECK(double(hits[v]) / draws == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("pattern enumeration counts and order") {
  CHECK(enumerate_patterns(0).size() == 1);
  CHECK(enumerate_patterns(0)[0].empty());
  CHECK(enumerate_patterns(1).size() == 6);
  CHECK(enumerate_patterns(2).size() == 15);
  CHECK(enumerate_patterns(3).size() == 20);
  CHECK(enumerate_patterns(4).size() == 15);
  CHECK(enumerate_patterns(5).size() == 6);
  CHECK_THROWS_AS((void)enumerate_patterns(6), MbevError);
  CHECK_THROWS_AS((void)enumerate_patterns(-1), MbevError);

  // lexicographic order of masked index sets
  const auto k2 = enumerate_patterns(2);
  CHECK(k2[0].masked_views() == std::vector<int>{0, 1});
  CHECK(k2[1].masked_views() == std::vector<int>{0, 2});
  CHECK(k2[4].masked_views() == std::vector<int>{0, 5});
  CHECK(k2[5].masked_views() == std::vector<int>{1, 2});
  CHECK(k2[14].masked_views() == std::vector<int>{4, 5});
}

TEST_CASE("coverage: every nonempty pattern appears over many epochs") {
  const auto sched = MaskSchedule::uniform_1_to_5();
  Rng rng(3);
  std::set<std::array<bool, kViews>> seen;
  for (int e = 0; e < 10000; ++e) seen.insert(sample_mask(rng, sched, e).masked);
  CHECK(seen.size() == 62);  // sum of C(6,k) for k = 1..5
}

TEST_CASE("apply_mask partitions views") {
  MaskPattern p;
  SUBCASE("empty") {
    const auto split = apply_mask(p);
    CHECK(split.masked_views.empty());
    CHECK(split.rest_views.size() == 6);
  }
  SUBCASE("one view, both timesteps implied") {
    p.masked[0] = true;
    const auto split = apply_mask(p);
    CHECK(split.masked_views == std::vector<int>{0});
    CHECK(split.rest_views.size() == 5);
  }
  SUBCASE("two views leave four") {
    p.masked[0] = p.masked[1] = true;
    const auto split = apply_mask(p);
    CHECK(split.rest_views.size() == 4);
  }
}

TEST_CASE("keep-all probability produces empty patterns") {
  const auto sched = MaskSchedule::make({0, 1, 0, 0, 0, 0},
                                        MaskGranularity::PerEpoch, 0.25, 5);
  Rng rng(11);
  int empties = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) empties += sample_mask(rng, sched, 0).empty();
  CHECK(double(empties) / draws == doctest::Approx(0.25).epsilon(0.05));
}
