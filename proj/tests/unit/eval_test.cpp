#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "calib_il/error.hpp"
#include "calib_il/eval.hpp"
#include "calib_il/random.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace calib_il;

TEST(Predict, ArgmaxTiesGoToLowestColumn) {
  const auto schedule = StateSchedule::from_class_map({2, 1, 1});
  Matrix m(2, 3);
  m(0, 1) = 5.0;
  m(0, 2) = 5.0;
  m(1, 0) = 1.0;
  EXPECT_EQ(predict(m, schedule, 2), (std::vector<int>{1, 0}));
  EXPECT_THROW(predict(Matrix(1, 2), schedule, 2), DataError);
}

TEST(Accuracy, AllCorrect) {
  const auto schedule = StateSchedule::equal_split(4, 2);
  const std::vector<int> labels{0, 1, 2, 3};
  const auto acc = per_state_accuracy(labels, labels, schedule, 2);
  EXPECT_EQ(acc.overall, 1.0);
  EXPECT_EQ(acc.per_group, (std::vector<double>{1.0, 1.0}));
}

TEST(Accuracy, CountingExample) {
  const auto schedule = StateSchedule::equal_split(2, 2);
  const auto acc = per_state_accuracy(std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 0, 1, 1}, schedule, 2);
  EXPECT_DOUBLE_EQ(acc.overall, 0.75);
  EXPECT_DOUBLE_EQ(acc.per_group[0], 0.5);
  EXPECT_DOUBLE_EQ(acc.per_group[1], 1.0);
  EXPECT_EQ(acc.group_samples, (std::vector<std::size_t>{2, 2}));
}

TEST(Accuracy, InvalidInputs) {
  const auto schedule = StateSchedule::equal_split(4, 2);
  EXPECT_THROW(per_state_accuracy(std::vector<int>{}, std::vector<int>{}, schedule, 2), DataError);
  EXPECT_THROW(per_state_accuracy(std::vector<int>{0}, std::vector<int>{0, 1}, schedule, 2), DataError);
  EXPECT_THROW(per_state_accuracy(std::vector<int>{0}, std::vector<int>{3}, schedule, 1), DataError);
  EXPECT_THROW(per_state_accuracy(std::vector<int>{0}, std::vector<int>{0}, schedule, 2), DataError);
}

TEST(Accuracy, OverallIsWeightedMeanOfGroups) {
  Rng rng(3);
  const auto schedule = StateSchedule::from_group_sizes(std::vector<int>{3, 2, 4});
  std::uniform_int_distribution<int> cls(0, 8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> labels(50), pred(50);
    for (int i = 0; i < 9; ++i) labels[i] = i;
    for (int i = 9; i < 50; ++i) labels[i] = cls(rng);
    for (int& p : pred) p = cls(rng);
    const auto acc = per_state_accuracy(pred, labels, schedule, 3);
    double weighted = 0.0;
    for (int k = 0; k < 3; ++k) weighted += acc.per_group[k] * static_cast<double>(acc.group_samples[k]);
    EXPECT_NEAR(acc.overall, weighted / 50.0, 1e-15);
  }
}

TEST(Accuracy, RandomGuessingNearChance) {
  Rng rng(99);
  const int C = 10;
  const std::size_t n = 20000;
  const auto schedule = StateSchedule::equal_split(C, 2);
  std::uniform_int_distribution<int> cls(0, C - 1);
  std::vector<int> labels(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = cls(rng);
    pred[i] = cls(rng);
  }
  const double p = 1.0 / C;
  const double ci = 4.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(per_state_accuracy(pred, labels, schedule, 2).overall, p, ci);
}

TEST(AvgIncremental, Examples) {
  EXPECT_NEAR(avg_incremental_accuracy(std::vector<double>{0.9, 0.8, 0.7, 0.6, 0.5}), 0.65, 1e-15);
  EXPECT_DOUBLE_EQ(avg_incremental_accuracy(std::vector<double>{0.4, 0.4, 0.4}), 0.4);
  EXPECT_EQ(avg_incremental_accuracy(std::vector<double>{0.1, 0.73}), 0.73);
  EXPECT_THROW(avg_incremental_accuracy(std::vector<double>{0.5}), DataError);
}

TEST(AvgIncremental, IgnoresFirstState) {
  std::vector<double> acc{0.0, 0.3, 0.6, 0.2};
  const double base = avg_incremental_accuracy(acc);
  for (double first : {0.1, 0.5, 1.0}) {
    acc[0] = first;
    EXPECT_EQ(avg_incremental_accuracy(acc), base);
  }
}

TEST(ScoreStats, ConstantMatrix) {
  const auto schedule = StateSchedule::equal_split(6, 3);
  const StateLogits logits(schedule, 3, Matrix(4, 6, 2.5), {0, 1, 2, 3});
  for (const auto& st : mean_scores_by_group(logits)) {
    EXPECT_DOUBLE_EQ(st.mean, 2.5);
    EXPECT_DOUBLE_EQ(st.stddev, 0.0);
  }
}

TEST(ScoreStats, TwoGroups) {
  const auto schedule = StateSchedule::equal_split(2, 2);
  Matrix m(2, 2);
  m(0, 0) = m(1, 0) = 1.0;
  m(0, 1) = m(1, 1) = 3.0;
  const auto stats = mean_scores_by_group(StateLogits(schedule, 2, m, {0, 1}));
  EXPECT_DOUBLE_EQ(stats[0].mean, 1.0);
  EXPECT_DOUBLE_EQ(stats[1].mean, 3.0);
}

TEST(ScoreStats, RandomMatchesBruteForce) {
  const auto schedule = StateSchedule::from_class_map({1, 3, 2, 1, 3, 2, 3});
  const auto logits = fixture::random_logits(schedule, 3, 33, 17, 2.0);
  const auto got = mean_scores_by_group(logits);
  const auto expect = oracle::group_stats(logits.scores(), schedule, 3);
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    EXPECT_NEAR(got[k].mean, expect[k].mean, 1e-13);
    EXPECT_NEAR(got[k].stddev, expect[k].stddev, 1e-13);
  }
}

TEST(AccuracyMatrix, SingleStateAndTriangle) {
  const auto schedule = StateSchedule::equal_split(3, 1);
  const auto one = per_state_accuracy(std::vector<int>{0, 1}, std::vector<int>{0, 2}, schedule, 1);
  const auto m = accuracy_matrix(std::vector<StateAccuracy>{one});
  ASSERT_EQ(m.size(), 1u);
  ASSERT_EQ(m[0].size(), 1u);
  EXPECT_DOUBLE_EQ(m[0][0], 0.5);

  const auto s3 = StateSchedule::equal_split(3, 3);
  std::vector<StateAccuracy> rows;
  for (int s = 1; s <= 3; ++s) {
    std::vector<int> labels;
    for (int c = 0; c < s; ++c) labels.push_back(c);
    rows.push_back(per_state_accuracy(labels, labels, s3, s));
  }
  const auto tri = accuracy_matrix(rows);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(tri[s].size(), static_cast<std::size_t>(s + 1));
  std::swap(rows[0], rows[1]);
  EXPECT_THROW(accuracy_matrix(rows), DataError);
}

TEST(EvaluateRun, StateOneHasNoAverageWhenAlone) {
  const auto schedule = StateSchedule::equal_split(2, 1);
  const std::vector<StateLogits> run{fixture::random_logits(schedule, 1, 10, 4)};
  const std::vector<std::vector<int>> pred{predict(run[0].scores(), schedule, 1)};
  const auto metrics = evaluate_run(run, pred);
  EXPECT_FALSE(metrics.avg_incremental.has_value());
  EXPECT_NEAR(metrics.state_accuracy[0], oracle::top1(run[0].scores(), run[0]), 1e-15);
}
