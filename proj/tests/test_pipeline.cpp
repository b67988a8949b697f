// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "deepjoint/pipeline.hpp"

using namespace deepjoint;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Three encounters, two labs; lab 1 missing at the middle encounter, lab 0
// missing at the first.
EncounterSequence toy() {
  EncounterSequence s;
  s.patient_id = "toy";
  s.times = {1.0, 4.0, 10.0};
  s.values = {{kNaN, 5.0}, {2.0, kNaN}, {3.0, 7.0}};
  s.mask = {{0, 1}, {1, 0}, {1, 1}};
  s.label = {12.0, true};
  return s;
}

TrainStatistics stats_for_toy() {
  TrainStatistics st;
  st.lab_mean = {1.0, 4.0};
  st.lab_std = {2.0, 0.5};
  st.gap_mean = 3.0;
  st.gap_std = 2.0;
  st.provenance = "train:test";
  return st;
}

}  // namespace

TEST(Impute, LocfWithTrainMeanFallback) {
  const auto out = impute_locf(toy(), {1.0, 4.0});
  // Lab 0: mean at encounter 1, then observed 2, 3. Lab 1: 5, carried 5, 7.
  EXPECT_EQ(out[0][0], 1.0);
  EXPECT_EQ(out[1][0], 2.0);
  EXPECT_EQ(out[2][0], 3.0);
  EXPECT_EQ(out[0][1], 5.0);
  EXPECT_EQ(out[1][1], 5.0);
  EXPECT_EQ(out[2][1], 7.0);
  EXPECT_THROW(impute_locf(toy(), {1.0}), DataError);
}

TEST(Impute, NeverObservedLabTakesTrainMean) {
  auto s = toy();
  for (auto& m : s.mask) m[0] = 0;
  const auto out = impute_locf(s, {9.5, 4.0});
  for (const auto& row : out) EXPECT_EQ(row[0], 9.5);
}

TEST(Prepare, FeatureTensorMatchesHandAssembly) {
  const auto p = prepare(toy(), Strategy::feature, stats_for_toy());
  ASSERT_EQ(p.inputs.rows(), 3u);
  ASSERT_EQ(p.inputs.cols(), 5u);
  // [z(values) | mask | z(gap)], gaps 1, 3, 6 hours.
  const double expected[3][5] = {{(1.0 - 1.0) / 2.0, (5.0 - 4.0) / 0.5, 0, 1, (1.0 - 3.0) / 2.0},
                                 {(2.0 - 1.0) / 2.0, (5.0 - 4.0) / 0.5, 1, 0, (3.0 - 3.0) / 2.0},
                                 {(3.0 - 1.0) / 2.0, (7.0 - 4.0) / 0.5, 1, 1, (6.0 - 3.0) / 2.0}};
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_DOUBLE_EQ(p.inputs(j, c), expected[j][c]) << j << "," << c;
  EXPECT_EQ(p.gaps, (std::vector<double>{1.0, 3.0, 6.0}));
  EXPECT_DOUBLE_EQ(p.window_remaining, 14.0);
}

TEST(Prepare, LastAndCount) {
  const auto last = prepare(toy(), Strategy::last, stats_for_toy());
  ASSERT_EQ(last.inputs.rows(), 1u);
  EXPECT_DOUBLE_EQ(last.inputs(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(last.inputs(0, 1), 6.0);
  const auto count = prepare(toy(), Strategy::count, stats_for_toy());
  EXPECT_EQ(count.inputs.cols(), 4u);
  EXPECT_EQ(count.inputs(0, 2), 2.0);
  EXPECT_EQ(count.inputs(0, 3), 2.0);
}

TEST(Prepare, SingleEncounterCountEqualsMask) {
  auto s = toy();
  s.times = {2.0};
  s.values = {{1.5, kNaN}};
  s.mask = {{1, 0}};
  const auto p = prepare(s, Strategy::count, stats_for_toy());
  EXPECT_EQ(p.inputs(0, 2), 1.0);
  EXPECT_EQ(p.inputs(0, 3), 0.0);
}

TEST(Prepare, ResampleAveragesWithinHour) {
  auto s = toy();
  s.times = {3.2, 3.7, 8.0};
  s.values = {{2.0, 1.0}, {4.0, kNaN}, {kNaN, 3.0}};
  s.mask = {{1, 1}, {1, 0}, {0, 1}};
  const auto grid = resample_hourly(s, {0.5, 0.25});
  ASSERT_EQ(grid.size(), 24u);
  EXPECT_EQ(grid[0][0], 0.5);  // before any observation: train mean
  EXPECT_EQ(grid[3][0], 3.0);  // mean of 2 and 4
  EXPECT_EQ(grid[3][1], 1.0);
  EXPECT_EQ(grid[5][0], 3.0);  // carried forward
  EXPECT_EQ(grid[8][1], 3.0);
  EXPECT_EQ(grid[23][0], 3.0);
}

TEST(Prepare, IgnoreAndResampleCoincideForHourlyFullObservation) {
  EncounterSequence s;
  s.patient_id = "hourly";
  for (int h = 0; h < 24; ++h) {
    s.times.push_back(h + 0.5);
    s.values.push_back({std::sin(h), std::cos(h)});
    s.mask.push_back({1, 1});
  }
  s.label = {3.0, false};
  const auto st = stats_for_toy();
  EXPECT_EQ(prepare(s, Strategy::ignore, st).inputs, prepare(s, Strategy::resample, st).inputs);
}

TEST(Prepare, LabCountMismatchIsDataError) {
  auto st = stats_for_toy();
  st.lab_mean.push_back(0.0);
  st.lab_std.push_back(1.0);
  EXPECT_THROW(prepare(toy(), Strategy::feature, st), DataError);
}

TEST(Statistics, FittedOnTrainMembersOnly) {
  Cohort c{toy(), toy()};
  c[1].patient_id = "other";
  c[1].values[2][0] = 1000.0;
  const auto st = fit_statistics(c, {0}, "train");
  EXPECT_DOUBLE_EQ(st.lab_mean[0], 2.5);
  EXPECT_DOUBLE_EQ(st.lab_mean[1], 6.0);
  EXPECT_EQ(st.provenance, "train:" + ids_digest({"toy"}));
}

TEST(Cohort, RoundTripsThroughJsonLines) {
  Cohort c{toy()};
  c[0].regime = "B";
  std::stringstream buf;
  write_cohort(buf, c);
  const Cohort back = read_cohort(buf);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].times, c[0].times);
  EXPECT_EQ(back[0].mask, c[0].mask);
  EXPECT_EQ(back[0].values[1][0], 2.0);
  EXPECT_TRUE(std::isnan(back[0].values[1][1]));
  EXPECT_EQ(back[0].regime, "B");
  EXPECT_EQ(back[0].label.time, 12.0);
}

TEST(Cohort, ErrorsNameTheLine) {
  std::stringstream buf;
  write_cohort(buf, {toy()});
  buf << R"({"patient_id":"x","times":[3,2],"labs":[[1,2],[1,2]],"label":{"time_days":1,"event":0}})" << '\n';
  try {
    read_cohort(buf);
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("strictly increasing"), std::string::npos) << e.what();
  }
}

TEST(Split, RandomSplitIsDisjointCompleteAndDeterministic) {
  const auto a = split_random(10, 0.2, 0.1, 42);
  const auto b = split_random(10, 0.2, 0.1, 42);
  EXPECT_EQ(a.test.size(), 2u);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train, b.train);
  std::set<std::size_t> all;
  for (const auto* v : {&a.train, &a.val, &a.test}) all.insert(v->begin(), v->end());
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), 10u);
  EXPECT_THROW(split_random(2, 0.2, 0.1, 1), DataError);
}

TEST(Split, RegimeMatchedSubsamplesLargerTrainSet) {
  Cohort c;
  for (int i = 0; i < 1000; ++i) {
    auto s = toy();
    s.patient_id = "p" + std::to_string(i);
    s.regime = i < 800 ? "A" : "B";
    c.push_back(s);
  }
  const auto r = split_regime_matched(c, 5);
  EXPECT_EQ(r.test_a.size(), 160u);
  EXPECT_EQ(r.test_b.size(), 40u);
  EXPECT_EQ(r.train_b.size(), 160u);
  EXPECT_EQ(r.train_a.size(), 160u);
  EXPECT_EQ(r.train_a_full.size(), 640u);
  for (auto i : r.train_a)
    EXPECT_TRUE(std::binary_search(r.train_a_full.begin(), r.train_a_full.end(), i));
}

TEST(Split, EqualRegimesAreNotSubsampled) {
  Cohort c;
  for (int i = 0; i < 200; ++i) {
    auto s = toy();
    s.patient_id = "p" + std::to_string(i);
    s.regime = i < 100 ? "A" : "B";
    c.push_back(s);
  }
  const auto r = split_regime_matched(c, 5);
  EXPECT_EQ(r.train_a, r.train_a_full);
  EXPECT_EQ(r.train_b, r.train_b_full);
}
