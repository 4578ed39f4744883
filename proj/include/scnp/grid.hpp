#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scnp/common.hpp"

namespace scnp {

// Planar vehicle pose in world coordinates.
struct EgoPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  int frame_tag = 0;
};

// Transforms a world point into the pose's ego frame: translate by -pose,
// rotate by -yaw, subtract ego z.
std::array<double, 3> to_ego(const std::array<double, 3>& p,
                             const EgoPose& pose);

// Ego-centered BEV geometry. Cell (0,0) owns the lower corner; rows index y,
// columns index x. Cells are half-open [low, high) intervals so every point
// belongs to exactly one cell.
struct GridSpec {
  double origin_x = -51.2;
  double origin_y = -51.2;
  double resolution = 0.4;
  int height = 256;
  int width = 256;

  void validate() const;
  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(height) * width;
  }
  std::int64_t flat(int row, int col) const {
    return static_cast<std::int64_t>(row) * width + col;
  }
  std::pair<double, double> cell_center(int row, int col) const {
    return {origin_x + (col + 0.5) * resolution,
            origin_y + (row + 0.5) * resolution};
  }
};

struct CellIndex {
  int row = 0;
  int col = 0;
  bool operator==(const CellIndex&) const = default;
};

// Half-open binning; out-of-range is a value, not an error.
std::optional<CellIndex> cell_of(double x, double y, const GridSpec& spec);

// Per-cell heights with a validity mask. Invalid cells hold NaN, guarded by
// the mask and never read arithmetically.
struct ElevationGrid {
  GridSpec spec;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  static ElevationGrid empty(const GridSpec& spec);
  double value_at(int row, int col) const {
    return values[static_cast<std::size_t>(spec.flat(row, col))];
  }
  bool is_valid(int row, int col) const {
    return valid[static_cast<std::size_t>(spec.flat(row, col))] != 0;
  }
  std::int64_t valid_count() const;
};

// A scan's points in world coordinates plus the scan pose.
struct PointSet {
  std::vector<std::array<double, 3>> points;
  EgoPose pose;
};

// Minimum z per occupied cell; untouched cells stay invalid. Coordinates are
// binned exactly as given (callers transform frames beforehand).
ElevationGrid bin_min_height(const std::vector<std::array<double, 3>>& points,
                             const GridSpec& spec);
ElevationGrid bin_min_height(const PointSet& points, const GridSpec& spec);

// Copy of the validity mask.
std::vector<std::uint8_t> observed_mask(const ElevationGrid& grid);

// Min-height binning over the union of frames (t - window/2, t + window/2],
// clipped to the sequence, expressed in frame t's ego-centered grid.
ElevationGrid aggregate_ground_truth(const std::vector<PointSet>& frames,
                                     std::size_t t, int window,
                                     const GridSpec& spec);

// CSV export/import: header `row,col,value,valid`, 6 decimal places, `nan`
// for invalid cells.
void write_grid_csv(const ElevationGrid& grid, std::ostream& os);
void write_grid_csv(const ElevationGrid& grid, const std::string& path);
ElevationGrid read_grid_csv(std::istream& is);
ElevationGrid read_grid_csv(const std::string& path);

}  // namespace scnp
