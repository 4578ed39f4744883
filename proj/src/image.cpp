#include "scnp/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace scnp {

namespace {

// Coarse viridis ramp; linear interpolation between stops.
constexpr std::uint8_t kViridisStops[9][3] = {
    {68, 1, 84},    {72, 40, 120},  {62, 74, 137},  {49, 104, 142},
    {38, 130, 142}, {31, 158, 137}, {53, 183, 121}, {109, 205, 89},
    {180, 222, 44}};

void viridis(double t, std::uint8_t* rgb) {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * 8.0;
  const int lo = std::min(7, static_cast<int>(pos));
  const double frac = pos - lo;
  for (int c = 0; c < 3; ++c) {
    const double v = kViridisStops[lo][c] +
                     frac * (kViridisStops[lo + 1][c] - kViridisStops[lo][c]);
    rgb[c] = static_cast<std::uint8_t>(std::lround(v));
  }
}

}  // namespace

void write_pgm(const std::vector<std::uint8_t>& pixels, int width, int height,
               const std::string& path) {
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) !=
      pixels.size()) {
    throw UsageError("write_pgm: pixel count mismatch");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("pgm: cannot open " + path + " for writing");
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
  if (!os) throw DataError("pgm: write failed for " + path);
}

void write_heatmap(const ElevationGrid& grid, const std::string& path,
                   Palette palette) {
  const int w = grid.spec.width;
  const int h = grid.spec.height;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (!grid.valid[i]) continue;
    if (!any) {
      lo = hi = grid.values[i];
      any = true;
    } else {
      lo = std::min(lo, grid.values[i]);
      hi = std::max(hi, grid.values[i]);
    }
  }
  const bool flat = !any || hi <= lo;
  auto normalized = [&](std::size_t i) {
    if (flat) return 0.5;
    return (grid.values[i] - lo) / (hi - lo);
  };
  if (palette == Palette::kGray) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h, 0);
    std::size_t k = 0;
    for (int r = h - 1; r >= 0; --r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(grid.spec.flat(r, c));
        px[k++] = grid.valid[i]
                      ? static_cast<std::uint8_t>(
                            std::lround(normalized(i) * 255.0))
                      : 0;
      }
    }
    write_pgm(px, w, h, path);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("ppm: cannot open " + path + " for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  for (int r = h - 1; r >= 0; --r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(grid.spec.flat(r, c));
      std::uint8_t rgb[3] = {0, 0, 0};
      if (grid.valid[i]) viridis(normalized(i), rgb);
      os.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  if (!os) throw DataError("ppm: write failed for " + path);
}

}  // namespace scnp
