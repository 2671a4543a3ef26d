#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calib_il/matrix.hpp"
#include "calib_il/schedule.hpp"

namespace calib_il {

struct Provenance {
  std::string dataset;
  std::string backbone;
  std::uint64_t seed = 0;

  bool operator==(const Provenance&) const = default;
};

// Raw scores of one evaluation set at one state: N rows, |N_s| columns.
// Validated on construction; immutable afterwards.
class StateLogits {
 public:
  StateLogits(StateSchedule schedule, int state, Matrix scores, std::vector<int> labels,
              Provenance provenance = {});

  int state() const noexcept { return state_; }
  const StateSchedule& schedule() const noexcept { return schedule_; }
  const Matrix& scores() const noexcept { return scores_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  /// Column index of each row's label.
  const std::vector<int>& label_columns() const noexcept { return label_columns_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return labels_.size(); }

  /// Same schedule/state/provenance, a subset of rows.
  StateLogits select_rows(const std::vector<std::size_t>& rows) const;
  /// Same schedule/state/labels/provenance, different scores (e.g. corrected).
  StateLogits with_scores(Matrix scores) const;

  bool operator==(const StateLogits& other) const;

 private:
  StateSchedule schedule_;
  int state_;
  Matrix scores_;
  std::vector<int> labels_;
  std::vector<int> label_columns_;
  Provenance provenance_;
};

}  // namespace calib_il
