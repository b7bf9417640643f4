#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tssl::plot {

// Minimal SVG line charts, no external renderer. Output is deterministic:
// same series in, same bytes out.

struct Series {
  std::string label;
  std::string color;  // CSS color, e.g. "#1f77b4"
  std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
  int width = 720;
  int height = 420;
  std::string title;
  std::string x_label;
  std::string y_label;
};

std::string render_line_chart(const std::vector<Series>& series, const ChartOptions& opt);
void write_line_chart(const std::filesystem::path& path, const std::vector<Series>& series,
                      const ChartOptions& opt);

}  // namespace tssl::plot
