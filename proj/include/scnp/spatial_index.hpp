#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "scnp/common.hpp"

namespace scnp {

// Uniform hash grid over 2-D points with cell size equal to the query
// radius, so a radius query only ever inspects the 3x3 block of cells
// around the query point.
class HashGrid {
 public:
  // O(N) build. Throws on non-finite coordinates or epsilon <= 0.
  HashGrid(std::vector<std::pair<double, double>> points, double epsilon);

  double epsilon() const { return epsilon_; }
  std::size_t point_count() const { return points_.size(); }
  const std::vector<std::pair<double, double>>& points() const {
    return points_;
  }

  // Indices of points with squared distance <= epsilon^2 (closed ball),
  // sorted by distance then index, truncated to the nearest k_max.
  std::vector<int> query_ball(double qx, double qy, int k_max) const;

  // Bucket key of a coordinate pair; exposed so tests can recompute
  // membership independently.
  static std::int64_t bucket_key(std::int64_t cx, std::int64_t cy);
  std::pair<std::int64_t, std::int64_t> cell_of(double x, double y) const;
  const std::unordered_map<std::int64_t, std::vector<int>>& buckets() const {
    return buckets_;
  }

 private:
  double epsilon_;
  std::vector<std::pair<double, double>> points_;
  std::unordered_map<std::int64_t, std::vector<int>> buckets_;
};

}  // namespace scnp
