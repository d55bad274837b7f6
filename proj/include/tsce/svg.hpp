#pragma once

#include <string>
#include <vector>

#include "tsce/common.hpp"

namespace tsce {

struct SvgCurve {
  Series values;
  std::string color = "#1f77b4";
  double width = 1.0;
  double opacity = 1.0;
  std::string label;  // empty = no legend entry
};

struct SvgPanel {
  std::string title;
  std::vector<SvgCurve> curves;
};

// Stacked line-plot panels sharing an x axis of sample indices. Deterministic
// output: same input -> byte-identical file.
std::string render_line_svg(const std::string& title,
                            const std::vector<SvgPanel>& panels, int width = 960,
                            int panel_height = 220);

void write_svg(const std::string& path, const std::string& svg);

}  // namespace tsce
