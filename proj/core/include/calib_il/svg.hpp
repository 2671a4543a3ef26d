#pragma once

#include <string>
#include <vector>

#include "calib_il/eval.hpp"

namespace calib_il {

struct ChartSeries {
  std::string name;
  std::vector<double> values;  // one per state, fractions in [0, 1]
  bool dashed = false;
};

/// Per-state accuracy chart (x = state 1..S, y = accuracy in %).
std::string line_chart_svg(const std::string& title, const std::vector<ChartSeries>& series);

/// Group-accuracy heat grid; cells with k > s are drawn as a masked gray.
std::string heat_grid_svg(const std::string& title, const GroupMatrix& matrix);

}  // namespace calib_il
