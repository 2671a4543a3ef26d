#include "calib_il/dataset.hpp"

#include <array>
#include <cmath>
#include <string>

#include "calib_il/error.hpp"
#include "calib_il/random.hpp"

namespace calib_il {

void SynthSpec::validate() const {
  if (num_classes < 1 || feature_dim < 1 || num_states < 1) {
    throw SpecError("synthetic spec: num_classes, feature_dim and num_states must be >= 1");
  }
  if (train_per_class < 1 || val_per_class < 1 || test_per_class < 1) {
    throw SpecError("synthetic spec: every split needs at least one sample per class");
  }
  if (!(center_scale > 0.0) || !(noise_scale > 0.0)) {
    throw SpecError("synthetic spec: center_scale and noise_scale must be > 0");
  }
  if (!(drift_scale >= 0.0) || !std::isfinite(drift_scale)) {
    throw SpecError("synthetic spec: drift_scale must be finite and >= 0");
  }
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw DataError("split tag '" + std::string(text) + "' is not one of train, validation, test");
}

void IncrementalDataset::validate() const {
  const std::size_t n = labels.size();
  if (features.rows() != n || splits.size() != n) {
    throw DataError("dataset '" + name + "': features, labels and splits differ in length");
  }
  for (double v : features.values()) {
    if (!std::isfinite(v)) throw NumericError("dataset '" + name + "': non-finite feature value");
  }
  const auto num_classes = static_cast<std::size_t>(schedule.num_classes());
  std::vector<std::array<std::size_t, 3>> counts(num_classes, {0, 0, 0});
  std::array<bool, 3> present{false, false, false};
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError("dataset '" + name + "': sample " + std::to_string(i) + " has unknown label " +
                      std::to_string(labels[i]));
    }
    const auto split = static_cast<std::size_t>(splits[i]);
    ++counts[static_cast<std::size_t>(labels[i])][split];
    present[split] = true;
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t sp = 0; sp < 3; ++sp) {
      if (present[sp] && counts[c][sp] == 0) {
        throw DataError("dataset '" + name + "': class " + std::to_string(c) + " has no " +
                        std::string(to_string(static_cast<Split>(sp))) + " samples");
      }
    }
  }
}

IncrementalDataset gen_synthetic_dataset(const SynthSpec& spec) {
  spec.validate();
  const auto d = static_cast<std::size_t>(spec.feature_dim);
  const auto num_classes = static_cast<std::size_t>(spec.num_classes);

  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix centers(num_classes, d);
  for (double& v : centers.values()) v = spec.center_scale * normal(rng);

  Matrix distortion;
  if (spec.drift_scale > 0.0) {
    Rng drift_rng(derive_seed(spec.seed, 0xD41F7));
    distortion = Matrix(d, d);
    const double scale = spec.drift_scale / std::sqrt(static_cast<double>(d));
    for (double& v : distortion.values()) v = scale * normal(drift_rng);
  }

  IncrementalDataset out;
  out.name = spec.name;
  out.seed = spec.seed;
  out.synth = spec;
  out.schedule = StateSchedule::equal_split(spec.num_classes, spec.num_states);

  const std::array<std::pair<Split, int>, 3> per_split{{{Split::kTrain, spec.train_per_class},
                                                        {Split::kValidation, spec.val_per_class},
                                                        {Split::kTest, spec.test_per_class}}};
  const std::size_t per_class =
      static_cast<std::size_t>(spec.train_per_class + spec.val_per_class + spec.test_per_class);
  out.features = Matrix(num_classes * per_class, d);
  std::vector<double> x(d);
  std::size_t row = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (const auto& [split, count] : per_split) {
      for (int j = 0; j < count; ++j, ++row) {
        for (std::size_t f = 0; f < d; ++f) x[f] = centers(c, f) + spec.noise_scale * normal(rng);
        auto dst = out.features.row(row);
        for (std::size_t f = 0; f < d; ++f) {
          double v = x[f];
          if (!distortion.empty()) {
            for (std::size_t g = 0; g < d; ++g) v += distortion(f, g) * x[g];
          }
          dst[f] = v;
        }
        out.labels.push_back(static_cast<int>(c));
        out.splits.push_back(split);
      }
    }
  }
  return out;
}

StatePlan split_states(const IncrementalDataset& dataset, const StateSchedule& schedule) {
  if (schedule.num_classes() != dataset.schedule.num_classes()) {
    throw DataError("schedule covers " + std::to_string(schedule.num_classes()) + " classes, dataset has " +
                    std::to_string(dataset.schedule.num_classes()));
  }
  StatePlan plan;
  plan.schedule = schedule;
  const int num_states = schedule.num_states();
  plan.states.resize(static_cast<std::size_t>(num_states));
  for (int s = 1; s <= num_states; ++s) plan.states[static_cast<std::size_t>(s - 1)].state = s;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const int k = schedule.state_of(dataset.labels[i]);
    switch (dataset.splits[i]) {
      case Split::kTrain:
        plan.states[static_cast<std::size_t>(k - 1)].train.push_back(i);
        break;
      case Split::kValidation:
        for (int s = k; s <= num_states; ++s) plan.states[static_cast<std::size_t>(s - 1)].validation.push_back(i);
        break;
      case Split::kTest:
        for (int s = k; s <= num_states; ++s) plan.states[static_cast<std::size_t>(s - 1)].test.push_back(i);
        break;
    }
  }
  return plan;
}

StatePlan split_states(const IncrementalDataset& dataset) { return split_states(dataset, dataset.schedule); }

StatePlan split_states(const IncrementalDataset& dataset, int num_states) {
  return split_states(dataset, StateSchedule::equal_split(dataset.schedule.num_classes(), num_states));
}

IncrementalDataset halve_training(const IncrementalDataset& dataset) {
  const auto num_classes = static_cast<std::size_t>(dataset.schedule.num_classes());
  std::vector<std::size_t> total(num_classes, 0);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.splits[i] == Split::kTrain) ++total[static_cast<std::size_t>(dataset.labels[i])];
  }
  std::vector<std::size_t> kept(num_classes, 0);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto c = static_cast<std::size_t>(dataset.labels[i]);
    if (dataset.splits[i] == Split::kTrain) {
      if (kept[c] >= (total[c] + 1) / 2) continue;
      ++kept[c];
    }
    rows.push_back(i);
  }

  IncrementalDataset out;
  out.name = dataset.name + "-halved";
  out.seed = dataset.seed;
  out.schedule = dataset.schedule;
  out.synth = dataset.synth;
  out.features = Matrix(rows.size(), dataset.features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = dataset.features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(dataset.labels[rows[i]]);
    out.splits.push_back(dataset.splits[rows[i]]);
  }
  return out;
}

}  // namespace calib_il
