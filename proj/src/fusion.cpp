#include "scnp/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace scnp {

void CameraModel::validate() const {
  if (std::abs(intrinsics.determinant()) < 1e-12) {
    throw UsageError("CameraModel: intrinsic matrix is singular");
  }
  const Eigen::Matrix3d should_be_identity =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (should_be_identity.cwiseAbs().maxCoeff() > 1e-9) {
    throw UsageError("CameraModel: rotation is not orthonormal");
  }
}

std::vector<std::array<double, 3>> lift_pixels(
    const std::vector<std::array<double, 3>>& pixels, const CameraModel& cam) {
  cam.validate();
  const Eigen::Matrix3d kinv = cam.intrinsics.inverse();
  std::vector<std::array<double, 3>> out;
  out.reserve(pixels.size());
  for (const auto& px : pixels) {
    const double d = px[2];
    if (!(d > 0.0)) throw UsageError("lift_pixels: depth must be positive");
    const Eigen::Vector3d uv1(px[0], px[1], 1.0);
    const Eigen::Vector3d p = cam.rotation * (kinv * (d * uv1)) + cam.translation;
    out.push_back({p.x(), p.y(), p.z()});
  }
  return out;
}

BeliefGrid BeliefGrid::initial(const GridSpec& spec, int feature_dim) {
  spec.validate();
  BeliefGrid g;
  g.spec = spec;
  g.feature_dim = feature_dim;
  g.features.assign(static_cast<std::size_t>(spec.cell_count()) *
                        static_cast<std::size_t>(feature_dim),
                    0.0);
  g.p.assign(static_cast<std::size_t>(spec.cell_count()), kBeliefClamp);
  return g;
}

namespace {

double clamp_p(double v) {
  return std::clamp(v, kBeliefClamp, 1.0 - kBeliefClamp);
}

}  // namespace

SplatResult splat_features(const std::vector<std::array<double, 3>>& points,
                           const std::vector<std::vector<double>>& features,
                           int feature_dim, const GridSpec& spec) {
  spec.validate();
  if (points.size() != features.size()) {
    throw UsageError("splat_features: one feature vector per point required");
  }
  const std::size_t cells = static_cast<std::size_t>(spec.cell_count());
  SplatResult out;
  out.features.assign(cells * static_cast<std::size_t>(feature_dim), 0.0);
  out.p.assign(cells, 0.0);
  std::vector<double> counts(cells, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto cell = cell_of(points[i][0], points[i][1], spec);
    if (!cell) continue;
    if (static_cast<int>(features[i].size()) != feature_dim) {
      throw UsageError("splat_features: feature vector length mismatch");
    }
    const auto ci = static_cast<std::size_t>(spec.flat(cell->row, cell->col));
    counts[ci] += 1.0;
    for (int ch = 0; ch < feature_dim; ++ch) {
      out.features[static_cast<std::size_t>(ch) * cells + ci] +=
          features[i][static_cast<std::size_t>(ch)];
    }
  }
  double max_count = 0.0;
  for (double c : counts) max_count = std::max(max_count, c);
  for (std::size_t ci = 0; ci < cells; ++ci) {
    if (counts[ci] > 0.0) {
      for (int ch = 0; ch < feature_dim; ++ch) {
        out.features[static_cast<std::size_t>(ch) * cells + ci] /= counts[ci];
      }
    }
    const double density = max_count > 0.0 ? counts[ci] / max_count : 0.0;
    out.p[ci] = clamp_p(density);
  }
  return out;
}

BeliefGrid bayes_update(const BeliefGrid& prev, const SplatResult& curr) {
  const std::size_t cells = static_cast<std::size_t>(prev.spec.cell_count());
  if (curr.p.size() != cells ||
      curr.features.size() != prev.features.size()) {
    throw UsageError("bayes_update: grids are not aligned");
  }
  BeliefGrid out;
  out.spec = prev.spec;
  out.feature_dim = prev.feature_dim;
  out.features.resize(prev.features.size());
  out.p.resize(cells);
  for (std::size_t ci = 0; ci < cells; ++ci) {
    const double ph = clamp_p(curr.p[ci]);
    const double pp = prev.p[ci];
    for (int ch = 0; ch < prev.feature_dim; ++ch) {
      const std::size_t k = static_cast<std::size_t>(ch) * cells + ci;
      out.features[k] =
          (ph * curr.features[k] + pp * prev.features[k]) / (ph + pp);
    }
    out.p[ci] = clamp_p(ph * pp / (ph * pp + (1.0 - ph) * (1.0 - pp)));
  }
  return out;
}

PointSet aggregate_lidar(const std::vector<PointSet>& frames,
                         const EgoPose& current, int horizon) {
  if (horizon < 1) throw UsageError("aggregate_lidar: horizon must be >= 1");
  PointSet out;
  out.pose = current;
  const std::size_t first =
      frames.size() > static_cast<std::size_t>(horizon)
          ? frames.size() - static_cast<std::size_t>(horizon)
          : 0;
  for (std::size_t f = first; f < frames.size(); ++f) {
    for (const auto& p : frames[f].points) {
      out.points.push_back(to_ego(p, current));
    }
  }
  return out;
}

void write_belief_csv(const BeliefGrid& grid, std::ostream& os) {
  const std::size_t cells = static_cast<std::size_t>(grid.spec.cell_count());
  char buf[64];
  auto write_block = [&](const std::string& name, const double* values) {
    os << "# channel " << name << "\n";
    os << "row,col,value,valid\n";
    for (int r = 0; r < grid.spec.height; ++r) {
      for (int c = 0; c < grid.spec.width; ++c) {
        const std::size_t i = static_cast<std::size_t>(grid.spec.flat(r, c));
        const int valid = grid.p[i] > kBeliefClamp ? 1 : 0;
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%d\n", r, c, values[i],
                      valid);
        os << buf;
      }
    }
  };
  for (int ch = 0; ch < grid.feature_dim; ++ch) {
    write_block("f" + std::to_string(ch),
                grid.features.data() + static_cast<std::size_t>(ch) * cells);
  }
  write_block("p", grid.p.data());
}

void write_belief_csv(const BeliefGrid& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("belief csv: cannot open " + path + " for writing");
  write_belief_csv(grid, os);
  if (!os) throw DataError("belief csv: write failed for " + path);
}

}  // namespace scnp
