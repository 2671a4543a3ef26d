#include "calib_il/logits.hpp"

#include <cmath>
#include <string>

#include "calib_il/error.hpp"

namespace calib_il {

StateLogits::StateLogits(StateSchedule schedule, int state, Matrix scores, std::vector<int> labels,
                         Provenance provenance)
    : schedule_(std::move(schedule)),
      state_(state),
      scores_(std::move(scores)),
      labels_(std::move(labels)),
      provenance_(std::move(provenance)) {
  if (state_ < 1 || state_ > schedule_.num_states()) {
    throw DataError("logits state " + std::to_string(state_) + " outside schedule of " +
                    std::to_string(schedule_.num_states()) + " states");
  }
  const auto expected_cols = static_cast<std::size_t>(schedule_.seen_count(state_));
  if (scores_.cols() != expected_cols) {
    throw DataError("logits for state " + std::to_string(state_) + " have " +
                    std::to_string(scores_.cols()) + " columns, expected |N_s| = " +
                    std::to_string(expected_cols));
  }
  if (scores_.rows() != labels_.size()) {
    throw DataError("logits have " + std::to_string(scores_.rows()) + " rows but " +
                    std::to_string(labels_.size()) + " labels");
  }
  for (std::size_t i = 0; i < scores_.values().size(); ++i) {
    if (!std::isfinite(scores_.values()[i])) {
      throw NumericError("non-finite score at row " + std::to_string(i / expected_cols) + ", column " +
                         std::to_string(i % expected_cols));
    }
  }
  label_columns_.reserve(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int column = schedule_.column_of(state_, labels_[i]);
    if (column < 0) {
      throw DataError("row " + std::to_string(i) + ": label " + std::to_string(labels_[i]) +
                      " is not a class seen by state " + std::to_string(state_));
    }
    label_columns_.push_back(column);
  }
}

StateLogits StateLogits::select_rows(const std::vector<std::size_t>& rows) const {
  Matrix scores(rows.size(), scores_.cols());
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = scores_.row(rows[i]);
    std::copy(src.begin(), src.end(), scores.row(i).begin());
    labels.push_back(labels_.at(rows[i]));
  }
  return StateLogits(schedule_, state_, std::move(scores), std::move(labels), provenance_);
}

StateLogits StateLogits::with_scores(Matrix scores) const {
  return StateLogits(schedule_, state_, std::move(scores), labels_, provenance_);
}

bool StateLogits::operator==(const StateLogits& other) const {
  return state_ == other.state_ && schedule_ == other.schedule_ && scores_ == other.scores_ &&
         labels_ == other.labels_ && provenance_ == other.provenance_;
}

}  // namespace calib_il
