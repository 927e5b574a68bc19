#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rsnet/types.hpp"

namespace rsnet {

struct PlotSeries {
  std::string label;
  std::vector<float> values;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

/// Overlays the series against the wavelength axis and writes a figure.
/// The output format follows the file extension: .png or .svg.
void render_profile_figure(const std::filesystem::path& out_path, const WavelengthAxis& axis,
                           const std::vector<PlotSeries>& series);

}  // namespace rsnet
