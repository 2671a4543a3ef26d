#include "calib_il/eval.hpp"

#include <cmath>
#include <string>

#include "calib_il/error.hpp"

namespace calib_il {

std::vector<int> predict(const Matrix& scores, const StateSchedule& schedule, int state) {
  const auto& classes = schedule.seen_classes(state);
  if (scores.cols() != classes.size()) {
    throw DataError("score matrix has " + std::to_string(scores.cols()) + " columns, state " +
                    std::to_string(state) + " has " + std::to_string(classes.size()) + " classes");
  }
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = classes[best];
  }
  return out;
}

StateAccuracy per_state_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                 const StateSchedule& schedule, int state) {
  if (labels.empty()) throw DataError("accuracy of an empty evaluation set");
  if (predictions.size() != labels.size()) {
    throw DataError("predictions (" + std::to_string(predictions.size()) + ") and labels (" +
                    std::to_string(labels.size()) + ") differ in length");
  }
  StateAccuracy out;
  out.state = state;
  const auto groups = static_cast<std::size_t>(state);
  std::vector<std::size_t> correct(groups, 0);
  out.group_samples.assign(groups, 0);
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (schedule.column_of(state, labels[i]) < 0) {
      throw DataError("label " + std::to_string(labels[i]) + " is not seen by state " + std::to_string(state));
    }
    const auto k = static_cast<std::size_t>(schedule.state_of(labels[i]) - 1);
    ++out.group_samples[k];
    if (predictions[i] == labels[i]) {
      ++correct[k];
      ++total_correct;
    }
  }
  out.overall = static_cast<double>(total_correct) / static_cast<double>(labels.size());
  out.per_group.resize(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    if (out.group_samples[k] == 0) {
      throw DataError("state " + std::to_string(state) + ": group " + std::to_string(k + 1) +
                      " has no evaluation samples");
    }
    out.per_group[k] = static_cast<double>(correct[k]) / static_cast<double>(out.group_samples[k]);
  }
  return out;
}

double avg_incremental_accuracy(std::span<const double> state_accuracies) {
  if (state_accuracies.size() < 2) {
    throw DataError("average incremental accuracy needs at least 2 states");
  }
  double sum = 0.0;
  for (std::size_t s = 1; s < state_accuracies.size(); ++s) sum += state_accuracies[s];
  return sum / static_cast<double>(state_accuracies.size() - 1);
}

std::vector<ScoreStats> mean_scores_by_group(const StateLogits& logits) {
  const int s = logits.state();
  const auto& groups = logits.schedule().column_groups(s);
  const Matrix& scores = logits.scores();
  const auto num_groups = static_cast<std::size_t>(s);
  std::vector<double> sum(num_groups, 0.0);
  std::vector<std::size_t> count(num_groups, 0);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      const auto k = static_cast<std::size_t>(groups[c] - 1);
      sum[k] += scores(r, c);
      ++count[k];
    }
  }
  std::vector<ScoreStats> out(num_groups);
  for (std::size_t k = 0; k < num_groups; ++k) {
    if (count[k] > 0) out[k].mean = sum[k] / static_cast<double>(count[k]);
  }
  // Second pass for the deviation; avoids cancellation of E[x^2] - E[x]^2.
  std::vector<double> sq(num_groups, 0.0);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      const auto k = static_cast<std::size_t>(groups[c] - 1);
      const double d = scores(r, c) - out[k].mean;
      sq[k] += d * d;
    }
  }
  for (std::size_t k = 0; k < num_groups; ++k) {
    if (count[k] > 0) out[k].stddev = std::sqrt(sq[k] / static_cast<double>(count[k]));
  }
  return out;
}

RunMetrics evaluate_run(std::span<const StateLogits> scored, std::span<const std::vector<int>> predictions) {
  if (scored.empty()) throw DataError("no states to evaluate");
  if (scored.size() != predictions.size()) throw DataError("one prediction vector per state is required");
  const StateSchedule& schedule = scored.front().schedule();
  if (static_cast<int>(scored.size()) != schedule.num_states()) {
    throw DataError("run covers " + std::to_string(scored.size()) + " states, schedule has " +
                    std::to_string(schedule.num_states()));
  }
  RunMetrics out;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const StateLogits& logits = scored[i];
    const int s = static_cast<int>(i) + 1;
    if (logits.state() != s || !(logits.schedule() == schedule)) {
      throw DataError("run entry " + std::to_string(i) + " is not state " + std::to_string(s) +
                      " of the shared schedule");
    }
    const StateAccuracy acc = per_state_accuracy(predictions[i], logits.labels(), schedule, s);
    out.state_accuracy.push_back(acc.overall);
    out.group_accuracy.push_back(acc.per_group);
    out.score_stats.push_back(mean_scores_by_group(logits));
  }
  if (out.state_accuracy.size() >= 2) out.avg_incremental = avg_incremental_accuracy(out.state_accuracy);
  return out;
}

GroupMatrix accuracy_matrix(std::span<const StateAccuracy> per_state) {
  if (per_state.empty()) throw DataError("accuracy matrix needs at least one state");
  GroupMatrix out;
  for (std::size_t i = 0; i < per_state.size(); ++i) {
    const int s = static_cast<int>(i) + 1;
    if (per_state[i].state != s || per_state[i].per_group.size() != static_cast<std::size_t>(s)) {
      throw DataError("accuracy matrix row " + std::to_string(s) + " is inconsistent with " +
                      std::to_string(per_state.size()) + " states");
    }
    out.push_back(per_state[i].per_group);
  }
  return out;
}

}  // namespace calib_il
