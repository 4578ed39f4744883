#include "scnp/spatial_index.hpp"

#include <algorithm>
#include <cmath>

namespace scnp {

std::int64_t HashGrid::bucket_key(std::int64_t cx, std::int64_t cy) {
  // pack two 32-bit cell coordinates; grid spans stay far below 2^31 cells
  return (static_cast<std::int64_t>(static_cast<std::uint32_t>(cx)) << 32) |
         static_cast<std::int64_t>(static_cast<std::uint32_t>(cy));
}

std::pair<std::int64_t, std::int64_t> HashGrid::cell_of(double x,
                                                        double y) const {
  return {static_cast<std::int64_t>(std::floor(x / epsilon_)),
          static_cast<std::int64_t>(std::floor(y / epsilon_))};
}

HashGrid::HashGrid(std::vector<std::pair<double, double>> points,
                   double epsilon)
    : epsilon_(epsilon), points_(std::move(points)) {
  if (!(epsilon > 0.0)) throw UsageError("HashGrid: epsilon must be positive");
  for (const auto& [x, y] : points_) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw NumericError("HashGrid: non-finite point coordinate");
    }
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto [cx, cy] = cell_of(points_[i].first, points_[i].second);
    buckets_[bucket_key(cx, cy)].push_back(static_cast<int>(i));
  }
}

std::vector<int> HashGrid::query_ball(double qx, double qy, int k_max) const {
  if (k_max < 1) throw UsageError("query_ball: k_max must be >= 1");
  const double eps2 = epsilon_ * epsilon_;
  const auto [cx, cy] = cell_of(qx, qy);
  std::vector<std::pair<double, int>> hits;
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      auto it = buckets_.find(bucket_key(cx + dx, cy + dy));
      if (it == buckets_.end()) continue;
      for (int idx : it->second) {
        const double ddx = points_[static_cast<std::size_t>(idx)].first - qx;
        const double ddy = points_[static_cast<std::size_t>(idx)].second - qy;
        const double d2 = ddx * ddx + ddy * ddy;
        if (d2 <= eps2) hits.emplace_back(d2, idx);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  if (static_cast<int>(hits.size()) > k_max) {
    hits.resize(static_cast<std::size_t>(k_max));
  }
  std::vector<int> out;
  out.reserve(hits.size());
  for (const auto& [d2, idx] : hits) out.push_back(idx);
  return out;
}

}  // namespace scnp
