#include "scnp/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace scnp {

std::array<double, 3> to_ego(const std::array<double, 3>& p,
                             const EgoPose& pose) {
  const double dx = p[0] - pose.x;
  const double dy = p[1] - pose.y;
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {c * dx + s * dy, -s * dx + c * dy, p[2] - pose.z};
}

void GridSpec::validate() const {
  if (!(resolution > 0.0)) throw UsageError("GridSpec: resolution must be > 0");
  if (height <= 0 || width <= 0) {
    throw UsageError("GridSpec: dimensions must be positive");
  }
}

std::optional<CellIndex> cell_of(double x, double y, const GridSpec& spec) {
  const double fc = std::floor((x - spec.origin_x) / spec.resolution);
  const double fr = std::floor((y - spec.origin_y) / spec.resolution);
  if (fr < 0 || fr >= spec.height || fc < 0 || fc >= spec.width) {
    return std::nullopt;
  }
  return CellIndex{static_cast<int>(fr), static_cast<int>(fc)};
}

ElevationGrid ElevationGrid::empty(const GridSpec& spec) {
  spec.validate();
  ElevationGrid g;
  g.spec = spec;
  g.values.assign(static_cast<std::size_t>(spec.cell_count()),
                  std::numeric_limits<double>::quiet_NaN());
  g.valid.assign(static_cast<std::size_t>(spec.cell_count()), 0);
  return g;
}

std::int64_t ElevationGrid::valid_count() const {
  std::int64_t n = 0;
  for (auto v : valid) n += v;
  return n;
}

ElevationGrid bin_min_height(const std::vector<std::array<double, 3>>& points,
                             const GridSpec& spec) {
  ElevationGrid g = ElevationGrid::empty(spec);
  for (const auto& p : points) {
    const auto cell = cell_of(p[0], p[1], spec);
    if (!cell) continue;
    const auto i = static_cast<std::size_t>(spec.flat(cell->row, cell->col));
    if (!g.valid[i] || p[2] < g.values[i]) g.values[i] = p[2];
    g.valid[i] = 1;
  }
  return g;
}

ElevationGrid bin_min_height(const PointSet& points, const GridSpec& spec) {
  return bin_min_height(points.points, spec);
}

std::vector<std::uint8_t> observed_mask(const ElevationGrid& grid) {
  return grid.valid;
}

ElevationGrid aggregate_ground_truth(const std::vector<PointSet>& frames,
                                     std::size_t t, int window,
                                     const GridSpec& spec) {
  if (t >= frames.size()) {
    throw UsageError("aggregate_ground_truth: frame index out of range");
  }
  const std::int64_t half = window / 2;
  const std::int64_t lo =
      std::max<std::int64_t>(0, static_cast<std::int64_t>(t) - half);
  const std::int64_t hi =
      std::min<std::int64_t>(static_cast<std::int64_t>(frames.size()),
                             static_cast<std::int64_t>(t) + window - half);
  const EgoPose& ref = frames[t].pose;
  std::vector<std::array<double, 3>> merged;
  for (std::int64_t f = lo; f < hi; ++f) {
    for (const auto& p : frames[static_cast<std::size_t>(f)].points) {
      merged.push_back(to_ego(p, ref));
    }
  }
  return bin_min_height(merged, spec);
}

void write_grid_csv(const ElevationGrid& grid, std::ostream& os) {
  os << "row,col,value,valid\n";
  char buf[64];
  for (int r = 0; r < grid.spec.height; ++r) {
    for (int c = 0; c < grid.spec.width; ++c) {
      const auto i = static_cast<std::size_t>(grid.spec.flat(r, c));
      if (grid.valid[i]) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,1\n", r, c,
                      grid.values[i]);
      } else {
        std::snprintf(buf, sizeof(buf), "%d,%d,nan,0\n", r, c);
      }
      os << buf;
    }
  }
}

void write_grid_csv(const ElevationGrid& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("grid csv: cannot open " + path + " for writing");
  write_grid_csv(grid, os);
  if (!os) throw DataError("grid csv: write failed for " + path);
}

ElevationGrid read_grid_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("row,col,value,valid", 0) != 0) {
    throw DataError("grid csv: missing header");
  }
  struct Row {
    int r, c, valid;
    double v;
  };
  std::vector<Row> rows;
  int max_r = -1, max_c = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Row row{};
    char valbuf[64];
    if (std::sscanf(line.c_str(), "%d,%d,%63[^,],%d", &row.r, &row.c, valbuf,
                    &row.valid) != 4) {
      throw DataError("grid csv: malformed line '" + line + "'");
    }
    row.v = std::string(valbuf) == "nan"
                ? std::numeric_limits<double>::quiet_NaN()
                : std::stod(valbuf);
    if (row.r < 0 || row.c < 0) throw DataError("grid csv: negative index");
    rows.push_back(row);
    max_r = std::max(max_r, row.r);
    max_c = std::max(max_c, row.c);
  }
  if (rows.empty()) throw DataError("grid csv: no cells");
  GridSpec spec;
  spec.height = max_r + 1;
  spec.width = max_c + 1;
  ElevationGrid g = ElevationGrid::empty(spec);
  for (const auto& row : rows) {
    const auto i = static_cast<std::size_t>(spec.flat(row.r, row.c));
    g.values[i] = row.v;
    g.valid[i] = row.valid ? 1 : 0;
  }
  return g;
}

ElevationGrid read_grid_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("grid csv: cannot open " + path);
  return read_grid_csv(is);
}

}  // namespace scnp
