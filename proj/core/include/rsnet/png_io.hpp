#pragma once

#include <filesystem>

#include "rsnet/data.hpp"

namespace rsnet {

/// 8-bit RGB PNG I/O. Reads promote grayscale/palette/alpha to plain RGB.
ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& image);

}  // namespace rsnet
