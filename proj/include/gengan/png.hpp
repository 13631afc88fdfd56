#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace gengan {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster with a few drawing primitives for report plots.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image(int w, int h, Rgb background = {255, 255, 255});

  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);  // inclusive corners
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void disc(int cx, int cy, int r, Rgb c);
  /// 5x7 bitmap glyphs scaled by `scale`; lowercase prints as uppercase.
  void text(int x, int y, std::string_view s, Rgb c, int scale = 1);
  static int text_width(std::string_view s, int scale = 1);
};

/// Writes an 8-bit RGB PNG with a pHYs chunk for `dpi`.
void write_png(const std::filesystem::path& path, const Image& img, double dpi = 150.0);

/// Perceptual colour ramp for values in [0, 1].
Rgb heat_color(double v);

}  // namespace gengan
