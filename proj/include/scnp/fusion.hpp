#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <vector>

#include "scnp/grid.hpp"

namespace scnp {

// Pinhole camera with extrinsics mapping camera coordinates into the ego
// frame.
struct CameraModel {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera -> ego
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int image_width = 640;
  int image_height = 480;

  // Throws unless the intrinsic matrix is invertible and the rotation is
  // orthonormal within 1e-9.
  void validate() const;
};

// Back-projects (u, v, depth) pixels into the ego frame:
// p = R * (K^-1 * d * [u, v, 1]^T) + t. Depth must be positive.
std::vector<std::array<double, 3>> lift_pixels(
    const std::vector<std::array<double, 3>>& pixels, const CameraModel& cam);

// Probabilities live in [delta, 1 - delta]; the clamp keeps every Bayes
// update away from the 0/0 singularities.
inline constexpr double kBeliefClamp = 1e-4;

// Temporally fused feature grid with per-cell correctness probability.
struct BeliefGrid {
  GridSpec spec;
  int feature_dim = 0;
  std::vector<double> features;  // feature_dim x H x W
  std::vector<double> p;         // H x W

  // Never-observed state: p at the clamp floor, features zero.
  static BeliefGrid initial(const GridSpec& spec, int feature_dim);
};

// One frame's splatted observation: per-cell feature means and the
// max-normalized density mapped to a correctness probability.
struct SplatResult {
  std::vector<double> features;  // feature_dim x H x W, zero where empty
  std::vector<double> p;         // H x W, clamped
};

// Per-cell mean of in-cell feature vectors; density = point count,
// normalized by the frame maximum and clamped. `features[i]` belongs to
// `points[i]`.
SplatResult splat_features(const std::vector<std::array<double, 3>>& points,
                           const std::vector<std::vector<double>>& features,
                           int feature_dim, const GridSpec& spec);

// Closed-form fusion under a uniform prior and conditional independence:
//   f_t = (p^ * f^ + p * f) / (p^ + p)
//   p_t = p^ p / (p^ p + (1 - p^)(1 - p)), clamped.
BeliefGrid bayes_update(const BeliefGrid& prev, const SplatResult& curr);

// Union of the last `horizon` frames' points expressed in the current ego
// frame. Past points carry the same weight as current ones.
PointSet aggregate_lidar(const std::vector<PointSet>& frames,
                         const EgoPose& current, int horizon);

// Belief snapshot export: one grid-CSV block per feature channel plus a `p`
// block, each introduced by a `# channel <name>` line.
void write_belief_csv(const BeliefGrid& grid, std::ostream& os);
void write_belief_csv(const BeliefGrid& grid, const std::string& path);

}  // namespace scnp
