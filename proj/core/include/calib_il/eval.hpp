#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calib_il/logits.hpp"
#include "calib_il/matrix.hpp"
#include "calib_il/schedule.hpp"

namespace calib_il {

/// Row-wise argmax mapped to class ids. Ties go to the lowest column.
std::vector<int> predict(const Matrix& scores, const StateSchedule& schedule, int state);

struct StateAccuracy {
  int state = 0;
  double overall = 0.0;
  std::vector<double> per_group;            // index k-1, k = 1..state
  std::vector<std::size_t> group_samples;  // samples whose label is in group k

  bool operator==(const StateAccuracy&) const = default;
};

/// Throws DataError on empty or misaligned input, a label unseen at `state`,
/// or a group with no samples.
StateAccuracy per_state_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                 const StateSchedule& schedule, int state);

/// Mean of states 2..S; the first state is not incremental.
double avg_incremental_accuracy(std::span<const double> state_accuracies);

struct ScoreStats {
  double mean = 0.0;
  double stddev = 0.0;  // population

  bool operator==(const ScoreStats&) const = default;
};

/// Mean and population std of all entries in each group's columns.
std::vector<ScoreStats> mean_scores_by_group(const StateLogits& logits);

struct RunMetrics {
  std::vector<double> state_accuracy;                 // s = 1..S
  std::vector<std::vector<double>> group_accuracy;    // row s-1 has s entries
  std::vector<std::vector<ScoreStats>> score_stats;   // row s-1 has s entries
  std::optional<double> avg_incremental;              // empty when S = 1

  int num_states() const noexcept { return static_cast<int>(state_accuracy.size()); }
  bool operator==(const RunMetrics&) const = default;
};

/// Metrics from per-state scores (raw or corrected) and their predictions.
/// `scored` holds the logits for states 1..S in order.
RunMetrics evaluate_run(std::span<const StateLogits> scored,
                        std::span<const std::vector<int>> predictions);

/// Lower-triangular group-accuracy matrix; row s-1 has s entries.
using GroupMatrix = std::vector<std::vector<double>>;

/// Throws DataError if states are not 1..S in order.
GroupMatrix accuracy_matrix(std::span<const StateAccuracy> per_state);

}  // namespace calib_il
