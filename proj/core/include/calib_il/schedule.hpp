#pragma once

#include <span>
#include <vector>

namespace calib_il {

/// The incremental protocol: which state first introduces each class.
///
/// States are numbered from 1. Class ids are 0-based. The columns of any
/// score matrix for state s follow `seen_classes(s)`, which is sorted by
/// class id; for contiguous schedules (class ids assigned in state order)
/// column j is simply class j.
class StateSchedule {
 public:
  StateSchedule() = default;

  /// Contiguous equal split. Throws SpecError when num_classes is not a
  /// multiple of num_states.
  static StateSchedule equal_split(int num_classes, int num_states);
  /// Contiguous split with explicit per-state group sizes P_1..P_S.
  static StateSchedule from_group_sizes(std::span<const int> sizes);
  /// Arbitrary assignment: class_to_state[c] is the first state of class c.
  /// Every state in 1..max must receive at least one class.
  static StateSchedule from_class_map(std::vector<int> class_to_state);

  int num_states() const noexcept { return static_cast<int>(group_sizes_.size()); }
  int num_classes() const noexcept { return static_cast<int>(class_to_state_.size()); }

  int state_of(int class_id) const;
  int group_size(int state) const;
  /// |N_s|.
  int seen_count(int state) const;
  const std::vector<int>& seen_classes(int state) const;
  /// Group (first state) of each column of a state-s score matrix.
  const std::vector<int>& column_groups(int state) const;
  /// Classes first seen in `state`, ascending.
  std::vector<int> classes_of_state(int state) const;
  /// Column of class_id in a state-s score matrix, or -1 if unseen at s.
  int column_of(int state, int class_id) const;

  const std::vector<int>& class_to_state() const noexcept { return class_to_state_; }
  const std::vector<int>& group_sizes() const noexcept { return group_sizes_; }

  bool operator==(const StateSchedule& other) const { return class_to_state_ == other.class_to_state_; }

 private:
  void check_state(int state) const;

  std::vector<int> class_to_state_;
  std::vector<int> group_sizes_;
  std::vector<std::vector<int>> seen_;           // per state, ascending class ids
  std::vector<std::vector<int>> column_groups_;  // per state
  std::vector<std::vector<int>> column_index_;   // per state, class id -> column or -1
};

}  // namespace calib_il
