#include "calib_il/transfer.hpp"

#include <string>

#include "calib_il/error.hpp"

namespace calib_il {
namespace {

void check_target(std::span<const StateLogits> target) {
  if (target.empty()) throw DataError("target run has no states");
  const StateSchedule& schedule = target.front().schedule();
  if (static_cast<int>(target.size()) != schedule.num_states()) {
    throw DataError("target run covers " + std::to_string(target.size()) + " states, schedule has " +
                    std::to_string(schedule.num_states()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].state() != static_cast<int>(i) + 1 || !(target[i].schedule() == schedule)) {
      throw DataError("target entry " + std::to_string(i) + " is not state " + std::to_string(i + 1) +
                      " of the shared schedule");
    }
  }
}

void check_table(const CalibrationTable& table, int num_states) {
  if (table.num_states() != num_states) {
    throw DataError("calibration table has " + std::to_string(table.num_states()) +
                    " states, target schedule has " + std::to_string(num_states));
  }
}

TransferResult finish(std::span<const StateLogits> target, std::vector<Matrix> corrected) {
  TransferResult out;
  std::vector<StateLogits> scored;
  scored.reserve(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    out.predictions.push_back(predict(corrected[i], target[i].schedule(), target[i].state()));
    scored.push_back(target[i].with_scores(corrected[i]));
  }
  out.metrics = evaluate_run(scored, out.predictions);
  out.corrected = std::move(corrected);
  return out;
}

}  // namespace

CalibrationTable average_tables(std::span<const CalibrationTable> tables) {
  if (tables.empty()) throw DataError("cannot average an empty list of tables");
  const int num_states = tables.front().num_states();
  for (std::size_t r = 1; r < tables.size(); ++r) {
    if (tables[r].num_states() != num_states) {
      throw DataError("table " + std::to_string(r) + " has " + std::to_string(tables[r].num_states()) +
                      " states, expected " + std::to_string(num_states));
    }
  }
  CalibrationTable out = CalibrationTable::identity(num_states);
  const double inv_r = 1.0 / static_cast<double>(tables.size());
  for (int s = 2; s <= num_states; ++s) {
    for (int k = 1; k <= s; ++k) {
      double alpha = 0.0;
      double beta = 0.0;
      for (const CalibrationTable& table : tables) {
        alpha += table.at(s, k).alpha;
        beta += table.at(s, k).beta;
      }
      out.set(s, k, {alpha * inv_r, beta * inv_r});
    }
  }
  return out;
}

CalibrationTable collapse_to_bic(const CalibrationTable& table) {
  CalibrationTable out = CalibrationTable::identity(table.num_states());
  for (int s = 2; s <= table.num_states(); ++s) out.set(s, s, table.at(s, s));
  return out;
}

int param_count(int num_states) {
  if (num_states < 2) throw SpecError("param_count needs S >= 2, got " + std::to_string(num_states));
  return (num_states + 2) * (num_states - 1);
}

TransferResult apply_transfer(std::span<const StateLogits> target, const CalibrationTable& table) {
  check_target(target);
  check_table(table, static_cast<int>(target.size()));
  std::vector<Matrix> corrected;
  corrected.reserve(target.size());
  corrected.push_back(target.front().scores());
  for (std::size_t i = 1; i < target.size(); ++i) corrected.push_back(apply_adbic(target[i], table));
  return finish(target, std::move(corrected));
}

TransferResult evaluate_raw(std::span<const StateLogits> target) {
  check_target(target);
  std::vector<Matrix> raw;
  raw.reserve(target.size());
  for (const StateLogits& logits : target) raw.push_back(logits.scores());
  return finish(target, std::move(raw));
}

OracleResult oracle_select(std::span<const CalibrationTable> tables, std::span<const StateLogits> target) {
  if (tables.empty()) throw DataError("oracle selection needs at least one table");
  check_target(target);
  for (const CalibrationTable& table : tables) check_table(table, static_cast<int>(target.size()));

  OracleResult out;
  out.chosen.assign(target.size(), -1);
  std::vector<Matrix> corrected;
  corrected.push_back(target.front().scores());
  for (std::size_t i = 1; i < target.size(); ++i) {
    const StateLogits& logits = target[i];
    double best_accuracy = -1.0;
    Matrix best;
    for (std::size_t r = 0; r < tables.size(); ++r) {
      Matrix candidate = apply_adbic(logits, tables[r]);
      const auto predicted = predict(candidate, logits.schedule(), logits.state());
      std::size_t hits = 0;
      for (std::size_t n = 0; n < predicted.size(); ++n) hits += predicted[n] == logits.labels()[n] ? 1 : 0;
      const double accuracy = static_cast<double>(hits) / static_cast<double>(predicted.size());
      if (accuracy > best_accuracy) {
        best_accuracy = accuracy;
        best = std::move(candidate);
        out.chosen[i] = static_cast<int>(r);
      }
    }
    corrected.push_back(std::move(best));
  }
  out.result = finish(target, std::move(corrected));
  return out;
}

}  // namespace calib_il
