#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "calib_il/logits.hpp"
#include "calib_il/matrix.hpp"

namespace calib_il {

/// One affine correction o -> alpha * o + beta. Also used to carry the
/// gradient with respect to (alpha, beta).
struct AffinePair {
  double alpha = 1.0;
  double beta = 0.0;

  bool operator==(const AffinePair&) const = default;
};

/// Triangular bank of adBiC parameters: one pair per (state s, group k) for
/// 2 <= s <= S and 1 <= k <= s. Always complete; built at the identity.
class CalibrationTable {
 public:
  CalibrationTable() = default;
  static CalibrationTable identity(int num_states);

  int num_states() const noexcept { return num_states_; }
  bool covers(int state) const noexcept { return state >= 2 && state <= num_states_; }

  /// Throws DataError naming (s,k) when the pair is outside the table.
  const AffinePair& at(int state, int group) const;
  void set(int state, int group, AffinePair pair);

  /// The s pairs of state s, indexed by k-1.
  std::span<const AffinePair> state_row(int state) const;
  void set_state_row(int state, std::span<const AffinePair> row);

  std::size_t pair_count() const noexcept { return pairs_.size(); }
  std::size_t scalar_count() const noexcept { return 2 * pairs_.size(); }

  bool operator==(const CalibrationTable&) const = default;

 private:
  static std::size_t offset(int state);
  void check(int state, int group) const;

  int num_states_ = 0;
  std::vector<AffinePair> pairs_;
};

struct CalibConfig {
  int epochs = 300;
  double learning_rate = 1e-3;
  double l2_alpha = 5e-3;
  double l2_beta = 5e-2;
  int batch_size = 128;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Which groups a fit may move. kNewestGroup keeps past pairs at the
/// identity and reproduces the single-pair BiC layer.
enum class FitScope { kAllGroups, kNewestGroup };

inline constexpr double kProbabilityFloor = 1e-12;

/// BiC: rescale only the columns of the newest group (k = s).
Matrix apply_bic(const StateLogits& logits, double alpha, double beta);

/// adBiC: column c of group k becomes alpha_s^k * o + beta_s^k.
Matrix apply_adbic(const StateLogits& logits, const CalibrationTable& table);
Matrix apply_adbic(const StateLogits& logits, std::span<const AffinePair> state_params);

std::vector<double> corrected_softmax(std::span<const double> scores);

/// -log(max(q[y], 1e-12)).
double cross_entropy_loss(std::span<const double> probabilities, std::size_t target);

/// lambda_alpha * sum (alpha - 1)^2 + lambda_beta * sum beta^2.
double l2_penalty(std::span<const AffinePair> params, const CalibConfig& config);

struct LossGradient {
  double loss = 0.0;               // mean cross-entropy + penalty
  std::vector<AffinePair> gradient;  // d/dalpha_s^k, d/dbeta_s^k
};

/// Regularized loss and its analytic gradient over the given rows (all rows
/// when `rows` is empty).
LossGradient calib_gradient(const StateLogits& logits, std::span<const AffinePair> params,
                            const CalibConfig& config, std::span<const std::size_t> rows = {});

double regularized_loss(const StateLogits& logits, std::span<const AffinePair> params,
                        const CalibConfig& config);

struct StateFit {
  std::vector<AffinePair> params;
  double initial_loss = 0.0;  // regularized loss at the identity
  double final_loss = 0.0;
  int steps = 0;
};

/// Adam over shuffled mini-batches starting from the identity. Never returns
/// parameters whose full-set regularized loss exceeds the identity's.
StateFit fit_state_params(const StateLogits& val_logits, const CalibConfig& config,
                          FitScope scope = FitScope::kAllGroups);

/// Seed used for the state-s fit inside fit_all_states.
std::uint64_t state_seed(std::uint64_t base_seed, int state);

/// Fits every state 2..S independently. `per_state` holds exactly one entry
/// per incremental state, in any order; a state-1 entry is ignored.
CalibrationTable fit_all_states(std::span<const StateLogits> per_state, const CalibConfig& config,
                                FitScope scope = FitScope::kAllGroups,
                                std::vector<StateFit>* fits = nullptr);

}  // namespace calib_il
