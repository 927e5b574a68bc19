#include "rsnet/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "rsnet/errors.hpp"
#include "rsnet/png_io.hpp"

namespace rsnet {

namespace {

// 5x7 column-major glyphs (LSB = top row) for the raster legend/axis text.
// Input is uppercase-folded before lookup.
struct Glyph {
  char ch;
  std::uint8_t cols[5];
};

constexpr Glyph kFont[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}}, {'(', {0x00, 0x1C, 0x22, 0x41, 0x00}},
    {')', {0x00, 0x41, 0x22, 0x1C, 0x00}}, {',', {0x00, 0x40, 0x30, 0x00, 0x00}},
    {'-', {0x08, 0x08, 0x08, 0x08, 0x08}}, {'.', {0x00, 0x60, 0x60, 0x00, 0x00}},
    {'/', {0x20, 0x10, 0x08, 0x04, 0x02}}, {'0', {0x3E, 0x51, 0x49, 0x45, 0x3E}},
    {'1', {0x00, 0x42, 0x7F, 0x40, 0x00}}, {'2', {0x42, 0x61, 0x51, 0x49, 0x46}},
    {'3', {0x21, 0x41, 0x45, 0x4B, 0x31}}, {'4', {0x18, 0x14, 0x12, 0x7F, 0x10}},
    {'5', {0x27, 0x45, 0x45, 0x45, 0x39}}, {'6', {0x3C, 0x4A, 0x49, 0x49, 0x30}},
    {'7', {0x01, 0x71, 0x09, 0x05, 0x03}}, {'8', {0x36, 0x49, 0x49, 0x49, 0x36}},
    {'9', {0x06, 0x49, 0x49, 0x29, 0x1E}}, {':', {0x00, 0x36, 0x36, 0x00, 0x00}},
    {'=', {0x14, 0x14, 0x14, 0x14, 0x14}}, {'A', {0x7E, 0x11, 0x11, 0x11, 0x7E}},
    {'B', {0x7F, 0x49, 0x49, 0x49, 0x36}}, {'C', {0x3E, 0x41, 0x41, 0x41, 0x22}},
    {'D', {0x7F, 0x41, 0x41, 0x22, 0x1C}}, {'E', {0x7F, 0x49, 0x49, 0x49, 0x41}},
    {'F', {0x7F, 0x09, 0x09, 0x09, 0x01}}, {'G', {0x3E, 0x41, 0x49, 0x49, 0x7A}},
    {'H', {0x7F, 0x08, 0x08, 0x08, 0x7F}}, {'I', {0x00, 0x41, 0x7F, 0x41, 0x00}},
    {'J', {0x20, 0x40, 0x41, 0x3F, 0x01}}, {'K', {0x7F, 0x08, 0x14, 0x22, 0x41}},
    {'L', {0x7F, 0x40, 0x40, 0x40, 0x40}}, {'M', {0x7F, 0x02, 0x0C, 0x02, 0x7F}},
    {'N', {0x7F, 0x04, 0x08, 0x10, 0x7F}}, {'O', {0x3E, 0x41, 0x41, 0x41, 0x3E}},
    {'P', {0x7F, 0x09, 0x09, 0x09, 0x06}}, {'Q', {0x3E, 0x41, 0x51, 0x21, 0x5E}},
    {'R', {0x7F, 0x09, 0x19, 0x29, 0x46}}, {'S', {0x46, 0x49, 0x49, 0x49, 0x31}},
    {'T', {0x01, 0x01, 0x7F, 0x01, 0x01}}, {'U', {0x3F, 0x40, 0x40, 0x40, 0x3F}},
    {'V', {0x1F, 0x20, 0x40, 0x20, 0x1F}}, {'W', {0x7F, 0x20, 0x18, 0x20, 0x7F}},
    {'X', {0x63, 0x14, 0x08, 0x14, 0x63}}, {'Y', {0x03, 0x04, 0x78, 0x04, 0x03}},
    {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
};

const std::uint8_t* glyph_for(char c) {
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.ch == up) return g.cols;
  }
  return kFont[0].cols;  // unknown characters render as space
}

class Canvas {
 public:
  Canvas(std::size_t w, std::size_t h) : image_{h, w, std::vector<std::uint8_t>(w * h * 3, 255)} {}

  void set(std::ptrdiff_t x, std::ptrdiff_t y, std::array<std::uint8_t, 3> rgb) {
    if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(image_.width) ||
        y >= static_cast<std::ptrdiff_t>(image_.height)) {
      return;
    }
    auto* p = image_.rgb.data() + (static_cast<std::size_t>(y) * image_.width +
                                   static_cast<std::size_t>(x)) * 3;
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }

  void line(double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> rgb) {
    const double dx = x1 - x0, dy = y1 - y0;
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(steps);
      const auto x = static_cast<std::ptrdiff_t>(std::lround(x0 + t * dx));
      const auto y = static_cast<std::ptrdiff_t>(std::lround(y0 + t * dy));
      set(x, y, rgb);
      set(x + 1, y, rgb);  // 2px stroke
    }
  }

  void text(std::ptrdiff_t x, std::ptrdiff_t y, const std::string& s,
            std::array<std::uint8_t, 3> rgb, int scale = 2) {
    std::ptrdiff_t cx = x;
    for (char c : s) {
      const std::uint8_t* cols = glyph_for(c);
      for (int col = 0; col < 5; ++col) {
        for (int row = 0; row < 7; ++row) {
          if (cols[col] & (1 << row)) {
            for (int sy = 0; sy < scale; ++sy) {
              for (int sx = 0; sx < scale; ++sx) {
                set(cx + col * scale + sx, y + row * scale + sy, rgb);
              }
            }
          }
        }
      }
      cx += 6 * scale;
    }
  }

  const ImageU8& image() const { return image_; }

 private:
  ImageU8 image_;
};

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Bounds {
  double y_lo, y_hi;
};

Bounds data_bounds(const std::vector<PlotSeries>& series) {
  double lo = 0.0, hi = 1.0;
  for (const auto& s : series) {
    for (float v : s.values) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void render_png(const std::filesystem::path& path, const WavelengthAxis& axis,
                const std::vector<PlotSeries>& series) {
  constexpr std::size_t W = 960, H = 640;
  constexpr double ml = 90, mr = 30, mt = 30, mb = 70;
  Canvas canvas(W, H);
  const std::array<std::uint8_t, 3> black{0, 0, 0};

  const Bounds bounds = data_bounds(series);
  auto to_x = [&](double lambda) {
    return ml + (lambda - axis.lambda_min_nm) / (axis.lambda_max_nm - axis.lambda_min_nm) *
                    (W - ml - mr);
  };
  auto to_y = [&](double v) {
    return (H - mb) - (v - bounds.y_lo) / (bounds.y_hi - bounds.y_lo) * (H - mt - mb);
  };

  canvas.line(ml, H - mb, W - mr, H - mb, black);
  canvas.line(ml, mt, ml, H - mb, black);

  for (int i = 0; i <= 4; ++i) {
    const double lambda =
        axis.lambda_min_nm + (axis.lambda_max_nm - axis.lambda_min_nm) * i / 4.0;
    const double x = to_x(lambda);
    canvas.line(x, H - mb, x, H - mb + 6, black);
    canvas.text(static_cast<std::ptrdiff_t>(x) - 20, static_cast<std::ptrdiff_t>(H - mb) + 12,
                format_tick(lambda), black);
    const double v = bounds.y_lo + (bounds.y_hi - bounds.y_lo) * i / 4.0;
    const double y = to_y(v);
    canvas.line(ml - 6, y, ml, y, black);
    canvas.text(6, static_cast<std::ptrdiff_t>(y) - 7, format_tick(v), black);
  }
  canvas.text(static_cast<std::ptrdiff_t>(W / 2) - 90, static_cast<std::ptrdiff_t>(H) - 28,
              "WAVELENGTH (NM)", black);

  for (const auto& s : series) {
    for (std::size_t i = 1; i < s.values.size(); ++i) {
      canvas.line(to_x(axis.bin_center(i - 1)), to_y(s.values[i - 1]),
                  to_x(axis.bin_center(i)), to_y(s.values[i]), s.color);
    }
  }

  std::ptrdiff_t ly = static_cast<std::ptrdiff_t>(mt) + 10;
  for (const auto& s : series) {
    canvas.line(W - mr - 220, static_cast<double>(ly) + 6, W - mr - 190,
                static_cast<double>(ly) + 6, s.color);
    canvas.text(static_cast<std::ptrdiff_t>(W - mr) - 180, ly, s.label, black);
    ly += 24;
  }
  write_png(path, canvas.image());
}

void render_svg(const std::filesystem::path& path, const WavelengthAxis& axis,
                const std::vector<PlotSeries>& series) {
  constexpr double W = 960, H = 640, ml = 90, mr = 30, mt = 30, mb = 70;
  const Bounds bounds = data_bounds(series);
  auto to_x = [&](double lambda) {
    return ml + (lambda - axis.lambda_min_nm) / (axis.lambda_max_nm - axis.lambda_min_nm) *
                    (W - ml - mr);
  };
  auto to_y = [&](double v) {
    return (H - mb) - (v - bounds.y_lo) / (bounds.y_hi - bounds.y_lo) * (H - mt - mb);
  };

  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path.string());
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "' viewBox='0 0 " << W << " " << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
      << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double lambda =
        axis.lambda_min_nm + (axis.lambda_max_nm - axis.lambda_min_nm) * i / 4.0;
    out << "<text x='" << to_x(lambda) << "' y='" << H - mb + 20
        << "' font-size='13' text-anchor='middle'>" << format_tick(lambda) << "</text>\n";
    const double v = bounds.y_lo + (bounds.y_hi - bounds.y_lo) * i / 4.0;
    out << "<text x='" << ml - 8 << "' y='" << to_y(v) + 4
        << "' font-size='13' text-anchor='end'>" << format_tick(v) << "</text>\n";
  }
  out << "<text x='" << W / 2 << "' y='" << H - 20
      << "' font-size='15' text-anchor='middle'>wavelength (nm)</text>\n";
  out << "<text x='18' y='" << H / 2
      << "' font-size='15' text-anchor='middle' transform='rotate(-90 18 " << H / 2
      << ")'>normalized photon count</text>\n";

  for (const auto& s : series) {
    out << "<polyline fill='none' stroke='rgb(" << int(s.color[0]) << ',' << int(s.color[1])
        << ',' << int(s.color[2]) << ")' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << to_x(axis.bin_center(i)) << ',' << to_y(s.values[i]) << ' ';
    }
    out << "'/>\n";
  }
  double ly = mt + 18;
  for (const auto& s : series) {
    out << "<line x1='" << W - mr - 220 << "' y1='" << ly - 5 << "' x2='" << W - mr - 190
        << "' y2='" << ly - 5 << "' stroke='rgb(" << int(s.color[0]) << ',' << int(s.color[1])
        << ',' << int(s.color[2]) << ")' stroke-width='2'/>\n";
    out << "<text x='" << W - mr - 182 << "' y='" << ly << "' font-size='14'>" << s.label
        << "</text>\n";
    ly += 22;
  }
  out << "</svg>\n";
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void render_profile_figure(const std::filesystem::path& out_path, const WavelengthAxis& axis,
                           const std::vector<PlotSeries>& series) {
  if (series.empty()) throw ConstraintViolation("figure needs at least one series");
  for (const auto& s : series) {
    if (s.values.size() != axis.n_bins) {
      throw LengthMismatch("series '" + s.label + "' has " + std::to_string(s.values.size()) +
                           " bins, axis " + std::to_string(axis.n_bins));
    }
  }
  const auto ext = out_path.extension().string();
  if (ext == ".png") {
    render_png(out_path, axis, series);
  } else if (ext == ".svg") {
    render_svg(out_path, axis, series);
  } else {
    throw IoError("unsupported figure extension '" + ext + "' (use .png or .svg)");
  }
}

}  // namespace rsnet
