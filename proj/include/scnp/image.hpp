#pragma once

#include <string>
#include <vector>

#include "scnp/grid.hpp"

namespace scnp {

enum class Palette { kGray, kViridis };

// Renders a grid as PGM (gray) or PPM (fixed viridis-like palette). Valid
// values are min-max normalized; a constant grid maps to mid-intensity;
// invalid cells render black. Image width = grid width, height = grid
// height, row 0 of the grid at the bottom of the image.
void write_heatmap(const ElevationGrid& grid, const std::string& path,
                   Palette palette);

// Raw PGM writer for already-normalized bytes, row-major top to bottom.
void write_pgm(const std::vector<std::uint8_t>& pixels, int width, int height,
               const std::string& path);

}  // namespace scnp
