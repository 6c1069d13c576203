#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scsr/tensor.hpp"

namespace scsr {

// Self-contained raster line charts: polylines with markers, axes with nice
// ticks, a bitmap-font legend. Output is an {H, W, 3} RGB tensor in [0,1],
// deterministic for identical input.

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  int64_t width = 800;
  int64_t height = 560;
};

Tensor<float> render_plot(const std::vector<Series>& series, const PlotSpec& spec);

// Renders and writes a binary PPM.
void save_plot(const std::string& path, const std::vector<Series>& series, const PlotSpec& spec);

}  // namespace scsr
