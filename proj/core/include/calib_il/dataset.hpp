#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "calib_il/matrix.hpp"
#include "calib_il/schedule.hpp"

namespace calib_il {

/// Gaussian-cluster generator settings. One cluster per class, isotropic
/// noise around a center drawn from N(0, center_scale^2 I).
struct SynthSpec {
  std::string name = "synthetic";
  int num_classes = 20;
  int feature_dim = 32;
  int num_states = 1;
  int train_per_class = 50;
  int val_per_class = 20;
  int test_per_class = 30;
  double center_scale = 1.0;
  double noise_scale = 1.0;
  // Strength of a dataset-specific linear distortion x -> x + drift * G x,
  // G ~ N(0, 1/d). Zero disables it.
  double drift_scale = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

enum class Split : std::uint8_t { kTrain, kValidation, kTest };

std::string_view to_string(Split split);
/// Throws DataError for anything outside {train, validation, test}.
Split parse_split(std::string_view text);

struct IncrementalDataset {
  std::string name;
  std::uint64_t seed = 0;
  Matrix features;
  std::vector<int> labels;
  std::vector<Split> splits;
  StateSchedule schedule;
  std::optional<SynthSpec> synth;  // absent for externally supplied data

  std::size_t size() const noexcept { return labels.size(); }
  int feature_dim() const noexcept { return static_cast<int>(features.cols()); }

  /// Throws DataError on shape mismatch, unknown labels, non-finite
  /// features, or a class with no sample in some split.
  void validate() const;
  bool operator==(const IncrementalDataset&) const = default;
};

IncrementalDataset gen_synthetic_dataset(const SynthSpec& spec);

/// Sample indices of one state. `train` holds only the state's new classes;
/// `validation` and `test` cover every class in N_s.
struct StateView {
  int state = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct StatePlan {
  StateSchedule schedule;
  std::vector<StateView> states;  // index s-1
};

/// Views under the dataset's own schedule.
StatePlan split_states(const IncrementalDataset& dataset);
/// Views under an equal split into num_states groups. Throws SpecError when
/// the class count is not divisible.
StatePlan split_states(const IncrementalDataset& dataset, int num_states);
StatePlan split_states(const IncrementalDataset& dataset, const StateSchedule& schedule);

/// Keeps the first ceil(n/2) training samples of every class; validation and
/// test samples are untouched.
IncrementalDataset halve_training(const IncrementalDataset& dataset);

}  // namespace calib_il
