#include "calib_il/schedule.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "calib_il/error.hpp"

namespace calib_il {

StateSchedule StateSchedule::equal_split(int num_classes, int num_states) {
  if (num_states < 1 || num_classes < 1) {
    throw SpecError("equal_split: need at least one class and one state");
  }
  if (num_classes % num_states != 0) {
    throw SpecError("equal_split: " + std::to_string(num_classes) + " classes are not divisible into " +
                    std::to_string(num_states) + " states; give explicit group sizes");
  }
  std::vector<int> sizes(static_cast<std::size_t>(num_states), num_classes / num_states);
  return from_group_sizes(sizes);
}

StateSchedule StateSchedule::from_group_sizes(std::span<const int> sizes) {
  if (sizes.empty()) throw SpecError("schedule needs at least one state");
  std::vector<int> map;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    if (sizes[s] < 1) {
      throw SpecError("state " + std::to_string(s + 1) + " has no classes");
    }
    map.insert(map.end(), static_cast<std::size_t>(sizes[s]), static_cast<int>(s) + 1);
  }
  return from_class_map(std::move(map));
}

StateSchedule StateSchedule::from_class_map(std::vector<int> class_to_state) {
  if (class_to_state.empty()) throw SpecError("schedule needs at least one class");
  int num_states = 0;
  for (std::size_t c = 0; c < class_to_state.size(); ++c) {
    if (class_to_state[c] < 1) {
      throw DataError("class " + std::to_string(c) + " maps to invalid state " +
                      std::to_string(class_to_state[c]));
    }
    num_states = std::max(num_states, class_to_state[c]);
  }

  StateSchedule out;
  out.class_to_state_ = std::move(class_to_state);
  out.group_sizes_.assign(static_cast<std::size_t>(num_states), 0);
  for (int s : out.class_to_state_) ++out.group_sizes_[static_cast<std::size_t>(s - 1)];
  for (int s = 1; s <= num_states; ++s) {
    if (out.group_sizes_[static_cast<std::size_t>(s - 1)] == 0) {
      throw DataError("state " + std::to_string(s) + " introduces no classes");
    }
  }

  const std::size_t num_classes = out.class_to_state_.size();
  out.seen_.resize(static_cast<std::size_t>(num_states));
  out.column_groups_.resize(static_cast<std::size_t>(num_states));
  out.column_index_.assign(static_cast<std::size_t>(num_states), std::vector<int>(num_classes, -1));
  for (int s = 1; s <= num_states; ++s) {
    auto& seen = out.seen_[static_cast<std::size_t>(s - 1)];
    auto& groups = out.column_groups_[static_cast<std::size_t>(s - 1)];
    auto& index = out.column_index_[static_cast<std::size_t>(s - 1)];
    for (std::size_t c = 0; c < num_classes; ++c) {
      const int k = out.class_to_state_[c];
      if (k <= s) {
        index[c] = static_cast<int>(seen.size());
        seen.push_back(static_cast<int>(c));
        groups.push_back(k);
      }
    }
  }
  return out;
}

void StateSchedule::check_state(int state) const {
  if (state < 1 || state > num_states()) {
    throw DataError("state " + std::to_string(state) + " outside schedule of " +
                    std::to_string(num_states()) + " states");
  }
}

int StateSchedule::state_of(int class_id) const {
  if (class_id < 0 || class_id >= num_classes()) {
    throw DataError("unknown class id " + std::to_string(class_id));
  }
  return class_to_state_[static_cast<std::size_t>(class_id)];
}

int StateSchedule::group_size(int state) const {
  check_state(state);
  return group_sizes_[static_cast<std::size_t>(state - 1)];
}

int StateSchedule::seen_count(int state) const {
  return static_cast<int>(seen_classes(state).size());
}

const std::vector<int>& StateSchedule::seen_classes(int state) const {
  check_state(state);
  return seen_[static_cast<std::size_t>(state - 1)];
}

const std::vector<int>& StateSchedule::column_groups(int state) const {
  check_state(state);
  return column_groups_[static_cast<std::size_t>(state - 1)];
}

std::vector<int> StateSchedule::classes_of_state(int state) const {
  check_state(state);
  std::vector<int> out;
  for (std::size_t c = 0; c < class_to_state_.size(); ++c) {
    if (class_to_state_[c] == state) out.push_back(static_cast<int>(c));
  }
  return out;
}

int StateSchedule::column_of(int state, int class_id) const {
  check_state(state);
  if (class_id < 0 || class_id >= num_classes()) return -1;
  return column_index_[static_cast<std::size_t>(state - 1)][static_cast<std::size_t>(class_id)];
}

}  // namespace calib_il
