#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "calib_il/calibration.hpp"
#include "calib_il/error.hpp"
#include "calib_il/eval.hpp"
#include "calib_il/random.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace calib_il;

namespace {

StateLogits two_class_row(double a, double b, int label = 0) {
  Matrix m(1, 2);
  m(0, 0) = a;
  m(0, 1) = b;
  return StateLogits(StateSchedule::equal_split(2, 2), 2, std::move(m), {label});
}

std::vector<AffinePair> random_pairs(int s, Rng& rng) {
  std::uniform_real_distribution<double> alpha(0.3, 2.0), beta(-1.0, 1.0);
  std::vector<AffinePair> out(static_cast<std::size_t>(s));
  for (auto& p : out) p = {alpha(rng), beta(rng)};
  return out;
}

}  // namespace

TEST(ApplyBic, HandExample) {
  const Matrix out = apply_bic(two_class_row(1.0, -1.0), 2.0, 0.1);
  EXPECT_DOUBLE_EQ(out(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out(0, 1), -1.9);
}

TEST(ApplyBic, IdentityLeavesRowUnchanged) {
  const auto logits = fixture::random_logits(StateSchedule::equal_split(9, 3), 3, 7, 11);
  EXPECT_EQ(apply_bic(logits, 1.0, 0.0), logits.scores());
}

TEST(ApplyBic, MatchesElementwiseRecomputation) {
  const auto logits = fixture::random_logits(StateSchedule::equal_split(6, 3), 3, 5, 3);
  const std::vector<AffinePair> pairs{{1, 0}, {1, 0}, {0.7, -0.2}};
  EXPECT_EQ(apply_bic(logits, 0.7, -0.2), oracle::affine_by_group(logits, pairs));
}

TEST(ApplyBic, FirstStateRejected) {
  const auto logits = fixture::random_logits(StateSchedule::equal_split(4, 2), 1, 3, 1);
  EXPECT_THROW(apply_bic(logits, 1.0, 0.0), DataError);
}

TEST(ApplyAdbic, IdentityTableIsExact) {
  const auto schedule = StateSchedule::equal_split(12, 4);
  const auto table = CalibrationTable::identity(4);
  for (int s = 2; s <= 4; ++s) {
    const auto logits = fixture::random_logits(schedule, s, 20, 100 + s);
    EXPECT_EQ(apply_adbic(logits, table), logits.scores());
  }
}

TEST(ApplyAdbic, ReducesToBicWithIdentityPast) {
  auto table = CalibrationTable::identity(2);
  table.set(2, 2, {2.0, 0.1});
  const auto logits = two_class_row(1.0, -1.0);
  const Matrix ad = apply_adbic(logits, table);
  EXPECT_DOUBLE_EQ(ad(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(ad(0, 1), -1.9);
  EXPECT_EQ(ad, apply_bic(logits, 2.0, 0.1));
}

TEST(ApplyAdbic, MixedGroupsMatchBruteForce) {
  const auto schedule = StateSchedule::from_class_map({3, 1, 2, 1, 3, 2, 1});
  const auto logits = fixture::random_logits(schedule, 3, 9, 5);
  const std::vector<AffinePair> pairs{{0.9, 0.3}, {1.4, -0.5}, {0.6, -1.1}};
  EXPECT_EQ(apply_adbic(logits, pairs), oracle::affine_by_group(logits, pairs));
}

TEST(ApplyAdbic, WrongPairCountRejected) {
  const auto logits = fixture::random_logits(StateSchedule::equal_split(6, 3), 3, 4, 2);
  const std::vector<AffinePair> pairs(2);
  EXPECT_THROW(apply_adbic(logits, pairs), DataError);
}

TEST(ApplyAdbic, NonFiniteParameterIsNumericError) {
  auto table = CalibrationTable::identity(2);
  EXPECT_THROW(table.set(2, 1, {std::nan(""), 0.0}), NumericError);
  const std::vector<AffinePair> pairs{{1.0, 0.0}, {1.0, INFINITY}};
  EXPECT_THROW(apply_adbic(two_class_row(1, 2), pairs), NumericError);
}

TEST(Softmax, SymmetricPair) {
  const auto q = corrected_softmax(std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(q[0], 0.5);
  EXPECT_DOUBLE_EQ(q[1], 0.5);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const auto q = corrected_softmax(std::vector<double>{1000.0, 0.0});
  EXPECT_TRUE(std::isfinite(q[0]) && std::isfinite(q[1]));
  EXPECT_NEAR(q[0], 1.0, 1e-15);
  EXPECT_NEAR(q[1], 0.0, 1e-15);
}

TEST(Softmax, OneTwoThree) {
  const auto q = corrected_softmax(std::vector<double>{1.0, 2.0, 3.0});
  // e^k / (e + e^2 + e^3), evaluated at high precision offline
  EXPECT_NEAR(q[0], 0.09003057, 1e-8);
  EXPECT_NEAR(q[1], 0.24472847, 1e-8);
  EXPECT_NEAR(q[2], 0.66524096, 1e-8);
}

TEST(Softmax, SumsToOneAndIgnoresShift) {
  Rng rng(9);
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(2 + trial % 30);
    for (double& v : z) v = normal(rng);
    const auto q = corrected_softmax(z);
    double sum = 0.0;
    for (double v : q) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const double shift = normal(rng) * 20.0;
    for (double& v : z) v += shift;
    const auto shifted = corrected_softmax(z);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(shifted[i], q[i], 1e-12);
  }
}

TEST(CrossEntropy, Examples) {
  EXPECT_EQ(cross_entropy_loss(std::vector<double>{0.0, 1.0, 0.0}, 1), 0.0);
  EXPECT_NEAR(cross_entropy_loss(std::vector<double>{0.5, 0.5}, 0), 0.6931472, 1e-7);
  const std::vector<double> uniform(7, 1.0 / 7);
  EXPECT_NEAR(cross_entropy_loss(uniform, 3), std::log(7.0), 1e-12);
}

TEST(CrossEntropy, ZeroProbabilityUsesFloor) {
  const double loss = cross_entropy_loss(std::vector<double>{1.0, 0.0}, 1);
  EXPECT_NEAR(loss, -std::log(kProbabilityFloor), 1e-9);
}

TEST(CrossEntropy, TargetOutOfRange) {
  EXPECT_THROW(cross_entropy_loss(std::vector<double>{1.0}, 1), DataError);
}

TEST(Penalty, AnchoredAtIdentity) {
  CalibConfig config;
  EXPECT_EQ(l2_penalty(std::vector<AffinePair>(3), config), 0.0);
  const std::vector<AffinePair> p{{2.0, 0.5}};
  EXPECT_NEAR(l2_penalty(p, config), 5e-3 * 1.0 + 5e-2 * 0.25, 1e-15);
}

TEST(Gradient, SaturatedIdentityIsFlat) {
  const auto schedule = StateSchedule::equal_split(6, 3);
  const auto base = fixture::random_logits(schedule, 3, 30, 4, 0.0, 60.0);
  const std::vector<AffinePair> identity(3);
  const auto g = calib_gradient(base, identity, CalibConfig{});
  for (const auto& p : g.gradient) {
    EXPECT_LT(std::abs(p.alpha), 1e-6);
    EXPECT_LT(std::abs(p.beta), 1e-6);
  }
}

TEST(Gradient, HandDerivedSingleSample) {
  // z = (0.5, 0.5*2 + 0.2) = (0.5, 1.2), q2 = 1/(1+e^-0.7)
  // dA1 = (q1-1) o1, dB1 = q1-1, dA2 = q2 o2 + 2*la*(a2-1), dB2 = q2 + 2*lb*b2
  const auto logits = two_class_row(0.5, 2.0, 0);
  const std::vector<AffinePair> params{{1.0, 0.0}, {0.5, 0.2}};
  const CalibConfig config;
  const double q2 = 1.0 / (1.0 + std::exp(-0.7));
  const double q1 = 1.0 - q2;
  const auto g = calib_gradient(logits, params, config);
  EXPECT_NEAR(g.gradient[0].alpha, (q1 - 1.0) * 0.5, 1e-12);
  EXPECT_NEAR(g.gradient[0].beta, q1 - 1.0, 1e-12);
  EXPECT_NEAR(g.gradient[1].alpha, q2 * 2.0 + 2 * config.l2_alpha * (0.5 - 1.0), 1e-12);
  EXPECT_NEAR(g.gradient[1].beta, q2 + 2 * config.l2_beta * 0.2, 1e-12);
  EXPECT_NEAR(g.loss, -std::log(q1) + config.l2_alpha * 0.25 + config.l2_beta * 0.04, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(77);
  const CalibConfig config;
  for (int trial = 0; trial < 25; ++trial) {
    const int S = 2 + trial % 4;
    const int per = 1 + trial % 3;
    const auto schedule = StateSchedule::equal_split(S * per, S);
    const int s = 2 + trial % (S - 1);
    const auto logits = fixture::random_logits(schedule, s, 10 + static_cast<std::size_t>(trial) * 2, 500 + trial, 0.5);
    const auto params = random_pairs(s, rng);
    const auto analytic = calib_gradient(logits, params, config).gradient;
    const auto numeric = oracle::finite_difference_gradient(logits, params, config, 1e-5);
    for (int k = 0; k < s; ++k) {
      for (const auto& [a, n] : {std::pair{analytic[k].alpha, numeric[k].alpha}, std::pair{analytic[k].beta, numeric[k].beta}}) {
        EXPECT_LE(std::abs(a - n), 1e-4 * std::max(std::abs(n), 1e-3)) << "trial " << trial << " k " << k + 1;
      }
    }
  }
}

TEST(Gradient, LossMatchesIndependentEvaluation) {
  Rng rng(5);
  const auto logits = fixture::random_logits(StateSchedule::equal_split(8, 4), 4, 40, 8, 1.0);
  const auto params = random_pairs(4, rng);
  const CalibConfig config;
  EXPECT_NEAR(regularized_loss(logits, params, config),
              static_cast<double>(oracle::regularized_loss(logits, params, config)), 1e-12);
  EXPECT_NEAR(calib_gradient(logits, params, config).loss, regularized_loss(logits, params, config), 1e-12);
}

TEST(Fit, NeverWorseThanIdentity) {
  const auto schedule = StateSchedule::equal_split(10, 5);
  for (int trial = 0; trial < 12; ++trial) {
    const int s = 2 + trial % 4;
    // label_bonus 0: pure noise labels, where the identity is close to optimal
    const auto logits = fixture::random_logits(schedule, s, 60, 900 + trial, 1.5 * (trial % 3), trial % 2 ? 2.0 : 0.0);
    CalibConfig config;
    config.epochs = 40;
    config.seed = static_cast<std::uint64_t>(trial);
    const StateFit fit = fit_state_params(logits, config);
    EXPECT_LE(fit.final_loss, fit.initial_loss);
    EXPECT_NEAR(fit.initial_loss, regularized_loss(logits, std::vector<AffinePair>(static_cast<std::size_t>(s)), config), 1e-12);
    EXPECT_NEAR(fit.final_loss, regularized_loss(logits, fit.params, config), 1e-12);
  }
}

TEST(Fit, CalibratedLogitsStayNearIdentity) {
  // labels drawn from softmax of the logits themselves: identity is the optimum
  const auto schedule = StateSchedule::equal_split(6, 2);
  Rng rng(31);
  std::normal_distribution<double> normal(0.0, 1.5);
  const std::size_t n = 3000;
  Matrix scores(n, 6);
  std::vector<int> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> z(6);
    for (double& v : z) v = normal(rng);
    const auto q = corrected_softmax(z);
    std::discrete_distribution<int> draw(q.begin(), q.end());
    labels[r] = r < 6 ? static_cast<int>(r) : draw(rng);
    for (std::size_t c = 0; c < 6; ++c) scores(r, c) = z[c];
  }
  const StateLogits logits(schedule, 2, std::move(scores), std::move(labels));
  const StateFit fit = fit_state_params(logits, CalibConfig{});
  for (const AffinePair& p : fit.params) {
    EXPECT_NEAR(p.alpha, 1.0, 0.05);
    EXPECT_NEAR(p.beta, 0.0, 0.05);
  }
  const auto grid = oracle::grid_search_newest_pair(logits, CalibConfig{});
  EXPECT_NEAR(grid.alpha, 1.0, 0.05);
  EXPECT_NEAR(grid.beta, 0.0, 0.05);
}

TEST(Fit, DuplicatedSampleActsLikeSingleSample) {
  const auto one = fixture::random_logits(StateSchedule::equal_split(2, 2), 2, 2, 12, 1.0);
  std::vector<std::size_t> rows;
  for (int i = 0; i < 32; ++i) {
    rows.push_back(0);
    rows.push_back(1);
  }
  const StateLogits many = one.select_rows(rows);
  CalibConfig config;
  config.batch_size = 128;
  const StateFit a = fit_state_params(one, config);
  const StateFit b = fit_state_params(many, config);
  EXPECT_EQ(a.steps, b.steps);
  for (std::size_t k = 0; k < a.params.size(); ++k) {
    EXPECT_NEAR(a.params[k].alpha, b.params[k].alpha, 1e-9);
    EXPECT_NEAR(a.params[k].beta, b.params[k].beta, 1e-9);
  }
  EXPECT_NEAR(a.final_loss, b.final_loss, 1e-12);
}

TEST(Fit, MissingGroupIsListed) {
  const auto schedule = StateSchedule::equal_split(6, 3);
  Matrix m(2, 6);
  const StateLogits logits(schedule, 3, m, {4, 5});
  try {
    fit_state_params(logits, CalibConfig{});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("1, 2"), std::string::npos) << e.what();
  }
}

TEST(Fit, NewestGroupScopeKeepsPastAtIdentity) {
  const auto logits = fixture::random_logits(StateSchedule::equal_split(9, 3), 3, 80, 6, 2.0);
  const StateFit fit = fit_state_params(logits, CalibConfig{}, FitScope::kNewestGroup);
  EXPECT_EQ(fit.params[0], AffinePair{});
  EXPECT_EQ(fit.params[1], AffinePair{});
  EXPECT_NE(fit.params[2], AffinePair{});
  EXPECT_LT(fit.params[2].alpha, 1.0);
}

TEST(Fit, MatchesGridSearchOptimum) {
  const auto logits = fixture::random_logits(StateSchedule::equal_split(4, 2), 2, 640, 2024, 1.5, 1.5);
  CalibConfig config;
  config.seed = 3;
  const StateFit fit = fit_state_params(logits, config, FitScope::kNewestGroup);
  const auto grid = oracle::grid_search_newest_pair(logits, config);
  EXPECT_LE(std::abs(fit.final_loss - static_cast<double>(grid.loss)), 1e-3);
}

TEST(FitAll, CountsAndTriangle) {
  const auto s2 = StateSchedule::equal_split(4, 2);
  const std::vector<StateLogits> one{fixture::random_logits(s2, 2, 30, 1, 1.0)};
  CalibConfig config;
  config.epochs = 5;
  EXPECT_EQ(fit_all_states(one, config).pair_count(), 2u);

  const auto s5 = StateSchedule::equal_split(10, 5);
  std::vector<StateLogits> four;
  for (int s = 2; s <= 5; ++s) four.push_back(fixture::random_logits(s5, s, 30, static_cast<std::uint64_t>(s), 1.0));
  EXPECT_EQ(fit_all_states(four, config).scalar_count(), 28u);
}

TEST(FitAll, OrderIndependentAndDeterministic) {
  const auto schedule = StateSchedule::equal_split(10, 5);
  std::vector<StateLogits> states;
  for (int s = 2; s <= 5; ++s) states.push_back(fixture::random_logits(schedule, s, 50, 40 + s, 1.5));
  CalibConfig config;
  config.epochs = 20;
  config.seed = 8;
  const CalibrationTable forward = fit_all_states(states, config);
  std::reverse(states.begin(), states.end());
  EXPECT_EQ(fit_all_states(states, config), forward);
  EXPECT_EQ(fit_all_states(states, config), forward);
  config.seed = 9;
  EXPECT_NE(fit_all_states(states, config), forward);
}

TEST(FitAll, MissingDuplicateAndMismatchedStates) {
  const auto schedule = StateSchedule::equal_split(8, 4);
  CalibConfig config;
  config.epochs = 1;
  const std::vector<StateLogits> missing{fixture::random_logits(schedule, 2, 10, 1),
                                         fixture::random_logits(schedule, 4, 10, 2)};
  EXPECT_THROW(fit_all_states(missing, config), DataError);
  const std::vector<StateLogits> dup{fixture::random_logits(schedule, 2, 10, 1), fixture::random_logits(schedule, 2, 10, 3),
                                     fixture::random_logits(schedule, 3, 10, 4), fixture::random_logits(schedule, 4, 10, 5)};
  EXPECT_THROW(fit_all_states(dup, config), DataError);
  const auto other = StateSchedule::equal_split(12, 4);
  const std::vector<StateLogits> mixed{fixture::random_logits(schedule, 2, 10, 1), fixture::random_logits(other, 3, 10, 4),
                                       fixture::random_logits(schedule, 4, 10, 5)};
  EXPECT_THROW(fit_all_states(mixed, config), DataError);
}

TEST(Table, IdentityAndBounds) {
  EXPECT_THROW(CalibrationTable::identity(1), SpecError);
  const auto t = CalibrationTable::identity(4);
  EXPECT_EQ(t.pair_count(), 9u);
  EXPECT_EQ(t.at(4, 4), AffinePair{});
  EXPECT_THROW(t.at(1, 1), DataError);
  EXPECT_THROW(t.at(3, 4), DataError);
  EXPECT_THROW(t.at(5, 1), DataError);
}

TEST(Config, Validation) {
  CalibConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), SpecError);
  c = CalibConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), SpecError);
  c = CalibConfig{};
  c.l2_beta = -1.0;
  EXPECT_THROW(c.validate(), SpecError);
  c = CalibConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), SpecError);
}

TEST(Property, SharedPairPreservesArgmax) {
  Rng rng(4);
  std::uniform_real_distribution<double> alpha(0.05, 4.0), beta(-3.0, 3.0);
  const auto schedule = StateSchedule::equal_split(12, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const int s = 2 + trial % 3;
    const auto logits = fixture::random_logits(schedule, s, 25, 300 + trial, 0.7);
    const std::vector<AffinePair> shared(static_cast<std::size_t>(s), AffinePair{alpha(rng), beta(rng)});
    EXPECT_EQ(predict(apply_adbic(logits, shared), schedule, s), predict(logits.scores(), schedule, s));
  }
}
