#pragma once

#include <string>
#include <vector>

#include "rpf/core/tensor.hpp"

namespace rpf::io {

struct Series {
    std::string name;
    std::vector<double> y;  // x is the index
};

/// Renders series as polylines on a white canvas with axes, tick marks and
/// numeric tick labels (built-in 5x7 digit glyphs), written as an 8-bit PNG.
/// Values are plotted on a log10(1+y) axis when log_y is set.
void render_line_plot(const std::string& path, const std::vector<Series>& series,
                      bool log_y = false, int width = 800, int height = 500);

}  // namespace rpf::io
