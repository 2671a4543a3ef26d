#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "calib_il/dataset.hpp"
#include "calib_il/logits.hpp"
#include "calib_il/schedule.hpp"

namespace fixture {

/// N random logits for state `state`; the first |N_s| rows cycle through every
/// seen class so each group has samples. `newest_bonus` is added to the
/// newest group's columns, `label_bonus` to each row's true column.
calib_il::StateLogits random_logits(const calib_il::StateSchedule& schedule, int state, std::size_t n,
                                    std::uint64_t seed, double newest_bonus = 0.0, double label_bonus = 1.0);

/// Small synthetic dataset, quick to train on.
calib_il::IncrementalDataset small_dataset(int num_classes, int num_states, std::uint64_t seed,
                                           double center_scale = 1.0, double noise = 1.0);

/// Fresh empty directory under the system temp dir.
std::filesystem::path fresh_dir(const std::string& name);

std::string slurp(const std::filesystem::path& path);

}  // namespace fixture
