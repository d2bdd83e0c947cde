#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pftransport/common.hpp"

namespace pft::svg {

struct Series {
  std::string label;
  Vector x;
  Vector y;
  std::string color = "#1f77b4";
  std::string dash;      // stroke-dasharray, empty for solid
  bool markers = false;  // draw points instead of a polyline
};

struct ReferenceLine {
  double y = 0.0;
  std::string label;
  std::string color = "#2ca02c";
};

/// A static line chart. Output depends only on the inputs.
struct Chart {
  std::string title;
  std::string x_label = "t [s]";
  std::string y_label;
  std::vector<Series> series;
  std::vector<ReferenceLine> references;
  int width = 720;
  int height = 420;
};

std::string render(const Chart& chart);
void write(const Chart& chart, const std::filesystem::path& path);

}  // namespace pft::svg
