#pragma once

// Minimal SVG charts for bench reports: line charts (optionally log-log)
// and stacked bar charts.

#include <filesystem>
#include <string>
#include <vector>

namespace isf::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

struct StackedBars {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;  // one bar per category
  std::vector<std::string> layers;      // stacked bottom to top
  std::vector<std::vector<double>> values;  // values[category][layer]
};

std::string render(const LineChart& c);
std::string render(const StackedBars& c);
void write(const std::filesystem::path& path, const std::string& svg);

}  // namespace isf::svg
