#pragma once

#include <span>
#include <vector>

#include "calib_il/calibration.hpp"
#include "calib_il/eval.hpp"
#include "calib_il/logits.hpp"

namespace calib_il {

/// Elementwise mean over R tables sharing S.
CalibrationTable average_tables(std::span<const CalibrationTable> tables);

/// Single-pair BiC view of an adBiC table: keeps (alpha_s^s, beta_s^s) and
/// resets every past pair to the identity.
CalibrationTable collapse_to_bic(const CalibrationTable& table);

/// (S+2)(S-1): scalars needed for one table.
int param_count(int num_states);

struct TransferResult {
  std::vector<Matrix> corrected;               // per state; state 1 is raw
  std::vector<std::vector<int>> predictions;   // per state, class ids
  RunMetrics metrics;
};

/// Corrects every state s >= 2 with the table and predicts by argmax; state
/// 1 predictions use raw scores. `target` holds states 1..S in order.
TransferResult apply_transfer(std::span<const StateLogits> target, const CalibrationTable& table);

/// Raw evaluation (no correction), equivalent to an identity table.
TransferResult evaluate_raw(std::span<const StateLogits> target);

struct OracleResult {
  std::vector<int> chosen;  // per state; -1 for state 1
  TransferResult result;
  // Selection uses target evaluation labels: an upper bound, not a method.
  bool deployable = false;
};

/// Per state, keeps the table whose state-s correction gives the best top-1
/// accuracy on the target (ties to the lowest index).
OracleResult oracle_select(std::span<const CalibrationTable> tables,
                           std::span<const StateLogits> target);

}  // namespace calib_il
