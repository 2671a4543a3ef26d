#include "calib_il/svg.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <string>

#include "calib_il/error.hpp"

namespace calib_il {
namespace {

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string fixed(double value, int precision = 2) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::fixed, precision);
  return ec == std::errc() ? std::string(buffer, ptr) : std::string("0");
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// White to saturated blue.
std::string cell_color(double accuracy) {
  const double a = std::clamp(accuracy, 0.0, 1.0);
  const int r = static_cast<int>(247 - a * (247 - 8));
  const int g = static_cast<int>(251 - a * (251 - 69));
  const int b = static_cast<int>(255 - a * (255 - 148));
  char buffer[8];
  const char* hex = "0123456789abcdef";
  buffer[0] = '#';
  const int parts[3] = {r, g, b};
  for (int i = 0; i < 3; ++i) {
    buffer[1 + 2 * i] = hex[(parts[i] >> 4) & 0xF];
    buffer[2 + 2 * i] = hex[parts[i] & 0xF];
  }
  return std::string(buffer, 7);
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::vector<ChartSeries>& series) {
  if (series.empty()) throw DataError("line chart needs at least one series");
  std::size_t states = 0;
  for (const auto& s : series) states = std::max(states, s.values.size());
  if (states == 0) throw DataError("line chart series are empty");

  constexpr double width = 640;
  constexpr double height = 400;
  constexpr double left = 60;
  constexpr double right = 150;
  constexpr double top = 40;
  constexpr double bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  auto x_of = [&](std::size_t i) {
    return states == 1 ? left + plot_w / 2 : left + plot_w * static_cast<double>(i) / static_cast<double>(states - 1);
  };
  auto y_of = [&](double acc) { return top + plot_h * (1.0 - std::clamp(acc, 0.0, 1.0)); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" + escape(title) +
         "</text>\n";
  for (int tick = 0; tick <= 100; tick += 20) {
    const double y = y_of(tick / 100.0);
    svg += "<line x1=\"" + fixed(left) + "\" y1=\"" + fixed(y) + "\" x2=\"" + fixed(left + plot_w) + "\" y2=\"" +
           fixed(y) + "\" stroke=\"#e0e0e0\"/>\n";
    svg += "<text x=\"" + fixed(left - 8) + "\" y=\"" + fixed(y + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + std::to_string(tick) + "</text>\n";
  }
  for (std::size_t i = 0; i < states; ++i) {
    svg += "<text x=\"" + fixed(x_of(i)) + "\" y=\"" + fixed(top + plot_h + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + std::to_string(i + 1) +
           "</text>\n";
  }
  svg += "<text x=\"" + fixed(left + plot_w / 2) + "\" y=\"" + fixed(height - 10) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">state</text>\n";
  svg += "<text x=\"16\" y=\"" + fixed(top + plot_h / 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fixed(top + plot_h / 2) + ")\">top-1 accuracy (%)</text>\n";

  for (std::size_t n = 0; n < series.size(); ++n) {
    const ChartSeries& s = series[n];
    const char* color = kPalette[n % kPalette.size()];
    std::string points;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i > 0) points += ' ';
      points += fixed(x_of(i)) + "," + fixed(y_of(s.values[i]));
    }
    svg += "<polyline class=\"series\" data-name=\"" + escape(s.name) + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"" + (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + " points=\"" + points +
           "\"/>\n";
    const double ly = top + 14.0 + 18.0 * static_cast<double>(n);
    svg += "<line x1=\"" + fixed(width - right + 10) + "\" y1=\"" + fixed(ly) + "\" x2=\"" +
           fixed(width - right + 34) + "\" y2=\"" + fixed(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
           (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    svg += "<text x=\"" + fixed(width - right + 40) + "\" y=\"" + fixed(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string heat_grid_svg(const std::string& title, const GroupMatrix& matrix) {
  if (matrix.empty()) throw DataError("heat grid needs at least one state");
  const std::size_t n = matrix.size();
  constexpr double cell = 40;
  constexpr double left = 50;
  constexpr double top = 50;
  const double size = cell * static_cast<double>(n);
  const std::string w = fixed(left + size + 20, 0);
  const std::string h = fixed(top + size + 40, 0);

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + w + "\" height=\"" + h +
                    "\" viewBox=\"0 0 " + w + " " + h + "\">\n";
  svg += "<rect width=\"" + w + "\" height=\"" + h + "\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" + escape(title) +
         "</text>\n";
  for (std::size_t s = 0; s < n; ++s) {
    if (matrix[s].size() != s + 1) throw DataError("heat grid row " + std::to_string(s + 1) + " is not triangular");
    for (std::size_t k = 0; k < n; ++k) {
      const double x = left + cell * static_cast<double>(k);
      const double y = top + cell * static_cast<double>(s);
      if (k > s) {
        svg += "<rect class=\"masked\" x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" width=\"" + fixed(cell) +
               "\" height=\"" + fixed(cell) + "\" fill=\"#dddddd\"/>\n";
        continue;
      }
      const double acc = matrix[s][k];
      svg += "<rect class=\"cell\" x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" width=\"" + fixed(cell) +
             "\" height=\"" + fixed(cell) + "\" fill=\"" + cell_color(acc) + "\" stroke=\"white\"/>\n";
      svg += "<text x=\"" + fixed(x + cell / 2) + "\" y=\"" + fixed(y + cell / 2 + 4) +
             "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\" fill=\"" +
             (acc > 0.6 ? "white" : "black") + "\">" + fixed(acc * 100.0, 1) + "</text>\n";
    }
    svg += "<text x=\"" + fixed(left - 8) + "\" y=\"" + fixed(top + cell * static_cast<double>(s) + cell / 2 + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">s=" + std::to_string(s + 1) +
           "</text>\n";
  }
  for (std::size_t k = 0; k < n; ++k) {
    svg += "<text x=\"" + fixed(left + cell * static_cast<double>(k) + cell / 2) + "\" y=\"" +
           fixed(top + size + 16) + "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">k=" +
           std::to_string(k + 1) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace calib_il
