#include "calib_il/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "calib_il/error.hpp"
#include "calib_il/random.hpp"

namespace calib_il {
namespace {

std::string pair_name(int s, int k) {
  return "(" + std::to_string(s) + "," + std::to_string(k) + ")";
}

void require_finite(AffinePair pair, const std::string& what) {
  if (!std::isfinite(pair.alpha) || !std::isfinite(pair.beta)) {
    throw NumericError(what + ": non-finite calibration parameter");
  }
}

// Corrected row into `out`; returns log-sum-exp of the corrected row.
double correct_row(std::span<const double> raw, std::span<const int> groups,
                   std::span<const AffinePair> params, std::span<double> out) {
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < raw.size(); ++c) {
    const AffinePair& p = params[static_cast<std::size_t>(groups[c] - 1)];
    out[c] = p.alpha * raw[c] + p.beta;
    max_score = std::max(max_score, out[c]);
  }
  double sum = 0.0;
  for (double z : out) sum += std::exp(z - max_score);
  return max_score + std::log(sum);
}

}  // namespace

// ---------------------------------------------------------------- table

CalibrationTable CalibrationTable::identity(int num_states) {
  if (num_states < 2) {
    throw SpecError("calibration table needs at least 2 states, got " + std::to_string(num_states));
  }
  CalibrationTable table;
  table.num_states_ = num_states;
  table.pairs_.assign(offset(num_states + 1), AffinePair{});
  return table;
}

// Pairs stored before state s: 2 + 3 + ... + (s-1).
std::size_t CalibrationTable::offset(int state) {
  const auto s = static_cast<std::size_t>(state);
  return (s - 1) * s / 2 - 1;
}

void CalibrationTable::check(int state, int group) const {
  if (!covers(state) || group < 1 || group > state) {
    throw DataError("calibration table of " + std::to_string(num_states_) + " states has no entry " +
                    pair_name(state, group));
  }
}

const AffinePair& CalibrationTable::at(int state, int group) const {
  check(state, group);
  return pairs_[offset(state) + static_cast<std::size_t>(group - 1)];
}

void CalibrationTable::set(int state, int group, AffinePair pair) {
  check(state, group);
  require_finite(pair, "entry " + pair_name(state, group));
  pairs_[offset(state) + static_cast<std::size_t>(group - 1)] = pair;
}

std::span<const AffinePair> CalibrationTable::state_row(int state) const {
  check(state, 1);
  return {pairs_.data() + offset(state), static_cast<std::size_t>(state)};
}

void CalibrationTable::set_state_row(int state, std::span<const AffinePair> row) {
  check(state, 1);
  if (row.size() != static_cast<std::size_t>(state)) {
    throw DataError("state " + std::to_string(state) + " needs " + std::to_string(state) + " pairs, got " +
                    std::to_string(row.size()));
  }
  for (std::size_t k = 0; k < row.size(); ++k) {
    require_finite(row[k], "entry " + pair_name(state, static_cast<int>(k) + 1));
  }
  std::copy(row.begin(), row.end(), pairs_.begin() + static_cast<std::ptrdiff_t>(offset(state)));
}

void CalibConfig::validate() const {
  if (epochs < 1) throw SpecError("calibration epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw SpecError("calibration learning_rate must be > 0");
  if (!(l2_alpha >= 0.0) || !(l2_beta >= 0.0)) throw SpecError("calibration penalties must be >= 0");
  if (batch_size < 1) throw SpecError("calibration batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw SpecError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw SpecError("Adam epsilon must be > 0");
}

// ---------------------------------------------------------------- layers

Matrix apply_bic(const StateLogits& logits, double alpha, double beta) {
  const int s = logits.state();
  if (s < 2) throw DataError("BiC is undefined for state 1");
  require_finite({alpha, beta}, "apply_bic");
  Matrix out = logits.scores();
  const auto& groups = logits.schedule().column_groups(s);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (groups[c] == s) row[c] = alpha * row[c] + beta;
    }
  }
  return out;
}

Matrix apply_adbic(const StateLogits& logits, std::span<const AffinePair> state_params) {
  const int s = logits.state();
  const auto& groups = logits.schedule().column_groups(s);
  if (state_params.size() != static_cast<std::size_t>(s)) {
    throw DataError("state " + std::to_string(s) + " needs " + std::to_string(s) +
                    " calibration pairs, got " + std::to_string(state_params.size()));
  }
  if (groups.size() != logits.scores().cols()) {
    throw DataError("group map does not match the logits' column count");
  }
  for (AffinePair p : state_params) require_finite(p, "apply_adbic");
  Matrix out = logits.scores();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const AffinePair& p = state_params[static_cast<std::size_t>(groups[c] - 1)];
      row[c] = p.alpha * row[c] + p.beta;
    }
  }
  return out;
}

Matrix apply_adbic(const StateLogits& logits, const CalibrationTable& table) {
  if (logits.state() < 2) throw DataError("adBiC is undefined for state 1");
  if (!table.covers(logits.state())) {
    throw DataError("calibration table of " + std::to_string(table.num_states()) +
                    " states has no entries for state " + std::to_string(logits.state()));
  }
  return apply_adbic(logits, table.state_row(logits.state()));
}

std::vector<double> corrected_softmax(std::span<const double> scores) {
  if (scores.empty()) throw DataError("softmax of an empty vector");
  const double max_score = *std::max_element(scores.begin(), scores.end());
  std::vector<double> q(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    q[i] = std::exp(scores[i] - max_score);
    sum += q[i];
  }
  for (double& v : q) v /= sum;
  return q;
}

double cross_entropy_loss(std::span<const double> probabilities, std::size_t target) {
  if (target >= probabilities.size()) {
    throw DataError("target index " + std::to_string(target) + " outside " +
                    std::to_string(probabilities.size()) + " classes");
  }
  return -std::log(std::max(probabilities[target], kProbabilityFloor));
}

double l2_penalty(std::span<const AffinePair> params, const CalibConfig& config) {
  double a = 0.0;
  double b = 0.0;
  for (AffinePair p : params) {
    a += (p.alpha - 1.0) * (p.alpha - 1.0);
    b += p.beta * p.beta;
  }
  return config.l2_alpha * a + config.l2_beta * b;
}

// ---------------------------------------------------------------- objective

LossGradient calib_gradient(const StateLogits& logits, std::span<const AffinePair> params,
                            const CalibConfig& config, std::span<const std::size_t> rows) {
  const int s = logits.state();
  if (params.size() != static_cast<std::size_t>(s)) {
    throw DataError("state " + std::to_string(s) + " needs " + std::to_string(s) + " pairs, got " +
                    std::to_string(params.size()));
  }
  const std::size_t n = rows.empty() ? logits.size() : rows.size();
  if (n == 0) throw DataError("calibration batch is empty");

  const auto& groups = logits.schedule().column_groups(s);
  const auto& targets = logits.label_columns();
  const Matrix& scores = logits.scores();
  const double max_loss = -std::log(kProbabilityFloor);

  LossGradient out;
  out.gradient.assign(params.size(), AffinePair{0.0, 0.0});
  std::vector<double> z(scores.cols());
  double loss_sum = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows.empty() ? i : rows[i];
    const auto raw = scores.row(r);
    const double lse = correct_row(raw, groups, params, z);
    const auto y = static_cast<std::size_t>(targets[r]);
    const double loss = lse - z[y];
    if (loss >= max_loss) {
      // q[y] under the floor: constant loss, zero gradient.
      loss_sum += max_loss;
      continue;
    }
    loss_sum += loss;
    for (std::size_t c = 0; c < raw.size(); ++c) {
      const double dz = std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0);
      AffinePair& g = out.gradient[static_cast<std::size_t>(groups[c] - 1)];
      g.alpha += dz * raw[c];
      g.beta += dz;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = loss_sum * inv_n + l2_penalty(params, config);
  for (std::size_t k = 0; k < params.size(); ++k) {
    out.gradient[k].alpha = out.gradient[k].alpha * inv_n + 2.0 * config.l2_alpha * (params[k].alpha - 1.0);
    out.gradient[k].beta = out.gradient[k].beta * inv_n + 2.0 * config.l2_beta * params[k].beta;
  }
  return out;
}

double regularized_loss(const StateLogits& logits, std::span<const AffinePair> params,
                        const CalibConfig& config) {
  return calib_gradient(logits, params, config).loss;
}

// ---------------------------------------------------------------- fitting

StateFit fit_state_params(const StateLogits& val_logits, const CalibConfig& config, FitScope scope) {
  config.validate();
  const int s = val_logits.state();
  if (s < 2) throw DataError("calibration is fitted for incremental states only (s >= 2)");

  std::vector<std::size_t> group_count(static_cast<std::size_t>(s), 0);
  for (int label : val_logits.labels()) {
    ++group_count[static_cast<std::size_t>(val_logits.schedule().state_of(label) - 1)];
  }
  std::string missing;
  for (int k = 1; k <= s; ++k) {
    if (group_count[static_cast<std::size_t>(k - 1)] == 0) {
      missing += (missing.empty() ? "" : ", ") + std::to_string(k);
    }
  }
  if (!missing.empty()) {
    throw DataError("state " + std::to_string(s) + " validation set has no samples for group(s) " + missing);
  }

  const std::size_t num_params = static_cast<std::size_t>(s);
  std::vector<AffinePair> params(num_params);
  std::vector<AffinePair> m(num_params, AffinePair{0.0, 0.0});
  std::vector<AffinePair> v(num_params, AffinePair{0.0, 0.0});
  const std::size_t first_free = scope == FitScope::kNewestGroup ? num_params - 1 : 0;

  StateFit fit;
  fit.initial_loss = regularized_loss(val_logits, params, config);

  Rng rng(config.seed);
  std::vector<std::size_t> order(val_logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  auto adam = [&](double g, double& mom1, double& mom2, double& x, double c1, double c2) {
    mom1 = config.adam_beta1 * mom1 + (1.0 - config.adam_beta1) * g;
    mom2 = config.adam_beta2 * mom2 + (1.0 - config.adam_beta2) * g * g;
    x -= config.learning_rate * (mom1 / c1) / (std::sqrt(mom2 / c2) + config.adam_eps);
  };

  int t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto lg = calib_gradient(val_logits, params, config,
                                     std::span<const std::size_t>(order.data() + start, end - start));
      ++t;
      const double c1 = 1.0 - std::pow(config.adam_beta1, t);
      const double c2 = 1.0 - std::pow(config.adam_beta2, t);
      for (std::size_t k = first_free; k < num_params; ++k) {
        adam(lg.gradient[k].alpha, m[k].alpha, v[k].alpha, params[k].alpha, c1, c2);
        adam(lg.gradient[k].beta, m[k].beta, v[k].beta, params[k].beta, c1, c2);
      }
    }
  }
  for (AffinePair p : params) {
    if (!std::isfinite(p.alpha) || !std::isfinite(p.beta)) {
      throw NumericError("calibration fit for state " + std::to_string(s) + " diverged");
    }
  }

  fit.steps = t;
  fit.final_loss = regularized_loss(val_logits, params, config);
  if (fit.final_loss > fit.initial_loss) {
    params.assign(num_params, AffinePair{});
    fit.final_loss = fit.initial_loss;
  }
  fit.params = std::move(params);
  return fit;
}

std::uint64_t state_seed(std::uint64_t base_seed, int state) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(state));
}

CalibrationTable fit_all_states(std::span<const StateLogits> per_state, const CalibConfig& config,
                                FitScope scope, std::vector<StateFit>* fits) {
  if (per_state.empty()) throw DataError("no validation logits to fit");
  const StateSchedule& schedule = per_state.front().schedule();
  const int num_states = schedule.num_states();
  std::vector<const StateLogits*> by_state(static_cast<std::size_t>(num_states) + 1, nullptr);
  for (const StateLogits& logits : per_state) {
    if (!(logits.schedule() == schedule)) {
      throw DataError("validation logits of state " + std::to_string(logits.state()) +
                      " use a different schedule");
    }
    if (logits.state() == 1) continue;
    auto& slot = by_state[static_cast<std::size_t>(logits.state())];
    if (slot != nullptr) throw DataError("duplicate validation logits for state " + std::to_string(logits.state()));
    slot = &logits;
  }
  for (int s = 2; s <= num_states; ++s) {
    if (by_state[static_cast<std::size_t>(s)] == nullptr) {
      throw DataError("missing validation logits for state " + std::to_string(s));
    }
  }

  CalibrationTable table = CalibrationTable::identity(num_states);
  if (fits != nullptr) fits->assign(static_cast<std::size_t>(num_states) - 1, StateFit{});
  for (int s = 2; s <= num_states; ++s) {
    CalibConfig state_config = config;
    state_config.seed = state_seed(config.seed, s);
    StateFit fit = fit_state_params(*by_state[static_cast<std::size_t>(s)], state_config, scope);
    table.set_state_row(s, fit.params);
    if (fits != nullptr) (*fits)[static_cast<std::size_t>(s) - 2] = std::move(fit);
  }
  return table;
}

}  // namespace calib_il
