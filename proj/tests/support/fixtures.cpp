#include "fixtures.hpp"

#include <unistd.h>

#include <fstream>
#include <random>
#include <sstream>

#include "calib_il/random.hpp"

namespace fixture {

calib_il::StateLogits random_logits(const calib_il::StateSchedule& schedule, int state, std::size_t n,
                                    std::uint64_t seed, double newest_bonus, double label_bonus) {
  calib_il::Rng rng(seed);
  std::normal_distribution<double> normal;
  const auto& seen = schedule.seen_classes(state);
  std::uniform_int_distribution<std::size_t> pick(0, seen.size() - 1);
  calib_il::Matrix scores(n, seen.size());
  std::vector<int> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t y = r < seen.size() ? r : pick(rng);
    labels[r] = seen[y];
    for (std::size_t c = 0; c < seen.size(); ++c) {
      scores(r, c) = normal(rng);
      if (schedule.state_of(seen[c]) == state) scores(r, c) += newest_bonus;
      if (c == y) scores(r, c) += label_bonus;
    }
  }
  return calib_il::StateLogits(schedule, state, std::move(scores), std::move(labels));
}

calib_il::IncrementalDataset small_dataset(int num_classes, int num_states, std::uint64_t seed, double center_scale,
                                           double noise) {
  calib_il::SynthSpec spec;
  spec.name = "small";
  spec.num_classes = num_classes;
  spec.num_states = num_states;
  spec.feature_dim = 8;
  spec.train_per_class = 12;
  spec.val_per_class = 6;
  spec.test_per_class = 6;
  spec.center_scale = center_scale;
  spec.noise_scale = noise;
  spec.seed = seed;
  return calib_il::gen_synthetic_dataset(spec);
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("calib_il_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace fixture
