#include "scnp/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scnp/dataset.hpp"

namespace scnp {

namespace {

// Cosine bell: 1 at s = 0, 0 at |s| >= half, C1-smooth.
double bell(double s, double half) {
  const double a = std::abs(s);
  if (a >= half) return 0.0;
  return 0.5 * (1.0 + std::cos(M_PI * a / half));
}

// 1 on |u| <= half, cosine falloff to 0 over `taper` beyond it.
double plateau(double u, double half, double taper) {
  const double a = std::abs(u);
  if (a <= half) return 1.0;
  if (a >= half + taper) return 0.0;
  return 0.5 * (1.0 + std::cos(M_PI * (a - half) / taper));
}

}  // namespace

double TerrainField::feature_contribution(const TerrainFeature& f, double x,
                                          double y) const {
  const double dx = x - f.cx;
  const double dy = y - f.cy;
  const double c = std::cos(f.orientation);
  const double s = std::sin(f.orientation);
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  switch (f.kind) {
    case TerrainFeature::Kind::kDitch:
      return -f.depth * bell(across, f.width * 0.5) *
             plateau(along, f.length * 0.5, f.width);
    case TerrainFeature::Kind::kCliff:
      // drop by `depth` across the feature; width is the transition width
      return -f.depth * 0.5 * (1.0 + std::tanh(2.0 * across / f.width));
    case TerrainFeature::Kind::kHill:
    case TerrainFeature::Kind::kBump: {
      const double r2 = dx * dx + dy * dy;
      const double sigma = f.width / 3.0;
      return f.depth * std::exp(-r2 / (2.0 * sigma * sigma));
    }
  }
  return 0.0;
}

double TerrainField::height(double x, double y) const {
  double h = 0.0;
  for (const auto& w : base) {
    const double phase = 2.0 * M_PI * (w.dir_x * x + w.dir_y * y) / w.wavelength;
    h += w.amplitude * std::sin(phase + w.phase);
  }
  for (const auto& f : features) h += feature_contribution(f, x, y);
  return h;
}

double TerrainField::height_bound() const {
  double b = 0.0;
  for (const auto& w : base) b += std::abs(w.amplitude);
  for (const auto& f : features) {
    if (f.kind == TerrainFeature::Kind::kHill ||
        f.kind == TerrainFeature::Kind::kBump) {
      b += std::max(0.0, f.depth);
    }
  }
  return b;
}

double terrain_height(const TerrainField& field, double x, double y) {
  return field.height(x, y);
}

std::vector<double> SensorModel::elevation_angles() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(beam_count));
  const double lo = elevation_min_deg * M_PI / 180.0;
  const double hi = elevation_max_deg * M_PI / 180.0;
  for (int b = 0; b < beam_count; ++b) {
    const double t = beam_count == 1
                         ? 0.0
                         : static_cast<double>(b) / (beam_count - 1);
    out.push_back(lo + (hi - lo) * t);
  }
  return out;
}

PointSet simulate_scan(const EgoPose& pose, const TerrainField& field,
                       const SensorModel& sensor, std::uint64_t seed) {
  Rng rng(seed);
  PointSet out;
  out.pose = pose;
  const double ox = pose.x;
  const double oy = pose.y;
  const double oz = pose.z + sensor.mount_height;
  const double bound = field.height_bound();
  const auto elevations = sensor.elevation_angles();
  const double step = sensor.march_step;
  for (int a = 0; a < sensor.azimuth_count; ++a) {
    const double az =
        pose.yaw + 2.0 * M_PI * static_cast<double>(a) / sensor.azimuth_count;
    const double ca = std::cos(az);
    const double sa = std::sin(az);
    for (double elev : elevations) {
      const double ce = std::cos(elev);
      const double se = std::sin(elev);
      double t_prev = 0.0;
      double t = step;
      bool hit = false;
      double t_hit = 0.0;
      while (t <= sensor.max_range) {
        const double z = oz + t * se;
        // a climbing ray above the terrain bound can never cross again
        if (se >= 0.0 && z > bound) break;
        const double x = ox + t * ce * ca;
        const double y = oy + t * ce * sa;
        if (z <= field.height(x, y)) {
          // one bisection step against the bracketing interval
          const double tm = 0.5 * (t_prev + t);
          const double zm = oz + tm * se;
          const double hm =
              field.height(ox + tm * ce * ca, oy + tm * ce * sa);
          t_hit = (zm <= hm) ? tm : t;
          hit = true;
          break;
        }
        t_prev = t;
        t += step;
      }
      if (!hit) continue;
      std::array<double, 3> p{ox + t_hit * ce * ca, oy + t_hit * ce * sa,
                              oz + t_hit * se};
      if (sensor.z_noise_sigma > 0.0) {
        p[2] += rng.normal(0.0, sensor.z_noise_sigma);
      }
      out.points.push_back(p);
    }
  }
  return out;
}

double slope_magnitude(const TerrainField& field, double x, double y,
                       double step) {
  const double gx =
      (field.height(x + step, y) - field.height(x - step, y)) / (2.0 * step);
  const double gy =
      (field.height(x, y + step) - field.height(x, y - step)) / (2.0 * step);
  return std::sqrt(gx * gx + gy * gy);
}

int classify_slope(const TerrainField& field, double x, double y, double step,
                   const SemanticFieldSpec& sem) {
  const double m = slope_magnitude(field, x, y, step);
  if (m < sem.slope_low) return 0;
  if (m < sem.slope_high) return 1;
  return 2;
}

std::vector<std::uint8_t> camera_frustum(const GridSpec& spec,
                                         double half_angle_rad,
                                         double view_range) {
  std::vector<std::uint8_t> vis(static_cast<std::size_t>(spec.cell_count()), 0);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const auto [x, y] = spec.cell_center(r, c);
      const double dist = std::hypot(x, y);
      if (dist > view_range) continue;
      if (std::abs(std::atan2(y, x)) <= half_angle_rad) {
        vis[static_cast<std::size_t>(spec.flat(r, c))] = 1;
      }
    }
  }
  return vis;
}

SemanticRender render_semantics(const TerrainField& field,
                                const GridSpec& spec,
                                const SemanticFieldSpec& sem,
                                const std::vector<std::uint8_t>& visibility,
                                std::uint64_t seed, const EgoPose& pose) {
  spec.validate();
  const std::size_t cells = static_cast<std::size_t>(spec.cell_count());
  if (visibility.size() != cells) {
    throw UsageError("render_semantics: visibility mask size mismatch");
  }
  const int df = sem.feature_dim;
  if (df < 5) throw UsageError("render_semantics: feature dim must be >= 5");
  Rng rng(seed);
  // Vegetation proxy: low-frequency seeded pattern over world coordinates.
  Rng veg_rng = rng.fork(0);
  const double va = veg_rng.uniform(0.07, 0.16);
  const double vb = veg_rng.uniform(0.07, 0.16);
  const double vpa = veg_rng.uniform(0.0, 2.0 * M_PI);
  const double vpb = veg_rng.uniform(0.0, 2.0 * M_PI);
  SemanticRender out;
  out.features.assign(cells * static_cast<std::size_t>(df), 0.0);
  out.density.assign(cells, 0.0);
  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  const double probe = spec.resolution * 0.5;
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const std::size_t i = static_cast<std::size_t>(spec.flat(r, c));
      if (!visibility[i]) continue;
      const auto [ex, ey] = spec.cell_center(r, c);
      const double dist = std::hypot(ex, ey);
      const double density =
          std::max(0.0, 1.0 - dist / sem.view_range);
      if (density <= 0.0) continue;
      out.density[i] = density;
      const double wx = pose.x + cy * ex - sy * ey;
      const double wy = pose.y + sy * ex + cy * ey;
      const int cls = classify_slope(field, wx, wy, probe, sem);
      const double m = slope_magnitude(field, wx, wy, probe);
      const double veg = 0.5 * (1.0 + std::sin(va * wx + vpa) *
                                          std::sin(vb * wy + vpb)) > 0.78
                             ? 1.0
                             : 0.0;
      double* f = out.features.data();
      f[0 * cells + i] = cls == 0 ? 1.0 : 0.0;
      f[1 * cells + i] = cls == 2 ? 1.0 : 0.0;
      f[2 * cells + i] = cls == 1 ? 1.0 : 0.0;
      f[3 * cells + i] = veg;
      f[4 * cells + i] = 1.0 / std::sqrt(1.0 + m * m);  // surface normal z
      for (int ch = 0; ch < df; ++ch) {
        f[static_cast<std::size_t>(ch) * cells + i] +=
            rng.normal(0.0, sem.noise_sigma);
      }
    }
  }
  return out;
}

// ---- scene generation --------------------------------------------------------

namespace {

TerrainField sample_terrain(Rng& rng, const WorldGenParams& p) {
  TerrainField field;
  for (int i = 0; i < p.base_waves; ++i) {
    SinusoidComponent w;
    w.amplitude = rng.uniform(0.1, p.base_amplitude_max);
    w.wavelength = rng.uniform(20.0, 120.0);
    w.phase = rng.uniform(0.0, 2.0 * M_PI);
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    w.dir_x = std::cos(ang);
    w.dir_y = std::sin(ang);
    field.base.push_back(w);
  }
  return field;
}

std::vector<EgoPose> sample_trajectory(Rng& rng, const TerrainField& field,
                                       const WorldGenParams& p) {
  std::vector<EgoPose> poses;
  poses.reserve(static_cast<std::size_t>(p.frames_per_scene));
  double x = rng.uniform(-5.0, 5.0);
  double y = rng.uniform(-5.0, 5.0);
  double yaw = rng.uniform(0.0, 2.0 * M_PI);
  const double speed = rng.uniform(p.speed_min, p.speed_max);
  double yaw_rate = 0.0;
  for (int f = 0; f < p.frames_per_scene; ++f) {
    EgoPose pose;
    pose.x = x;
    pose.y = y;
    pose.z = field.height(x, y);
    pose.yaw = yaw;
    pose.frame_tag = f;
    poses.push_back(pose);
    // smooth heading drift: first-order filtered random curvature
    yaw_rate = 0.9 * yaw_rate + 0.1 * rng.uniform(-0.25, 0.25);
    yaw += yaw_rate * p.dt;
    x += speed * p.dt * std::cos(yaw);
    y += speed * p.dt * std::sin(yaw);
  }
  return poses;
}

void place_features(Rng& rng, const WorldGenParams& p,
                    const std::vector<EgoPose>& poses, TerrainField* field) {
  // One ditch centered on a pose 60% into the trajectory, oriented across
  // the heading there. The vehicle is guaranteed to drive through it, so
  // late scans observe the interior while approach frames face an occluded
  // gap.
  if (p.ditch_on_path && !poses.empty()) {
    const std::size_t anchor = poses.size() * 3 / 5;
    const EgoPose& a = poses[anchor];
    TerrainFeature ditch;
    ditch.kind = TerrainFeature::Kind::kDitch;
    ditch.cx = a.x;
    ditch.cy = a.y;
    ditch.width = rng.uniform(p.ditch_width_min, p.ditch_width_max);
    ditch.depth = rng.uniform(p.ditch_depth_min, p.ditch_depth_max);
    ditch.length = rng.uniform(15.0, 30.0);
    ditch.orientation = a.yaw + M_PI / 2.0 + rng.uniform(-0.2, 0.2);
    field->features.push_back(ditch);
  }
  const double cx0 = poses.empty() ? 0.0 : poses[poses.size() / 2].x;
  const double cy0 = poses.empty() ? 0.0 : poses[poses.size() / 2].y;
  for (int i = 0; i < p.extra_ditches_per_scene; ++i) {
    TerrainFeature d;
    d.kind = TerrainFeature::Kind::kDitch;
    d.cx = cx0 + rng.uniform(-40.0, 40.0);
    d.cy = cy0 + rng.uniform(-40.0, 40.0);
    d.width = rng.uniform(p.ditch_width_min, p.ditch_width_max);
    d.depth = rng.uniform(p.ditch_depth_min, p.ditch_depth_max);
    d.length = rng.uniform(10.0, 25.0);
    d.orientation = rng.uniform(0.0, 2.0 * M_PI);
    field->features.push_back(d);
  }
  for (int i = 0; i < p.cliffs_per_scene; ++i) {
    TerrainFeature cfeat;
    cfeat.kind = TerrainFeature::Kind::kCliff;
    cfeat.cx = cx0 + rng.uniform(-45.0, 45.0);
    cfeat.cy = cy0 + rng.uniform(-45.0, 45.0);
    cfeat.width = rng.uniform(2.0, 6.0);
    cfeat.depth = rng.uniform(1.0, 3.0);
    cfeat.orientation = rng.uniform(0.0, 2.0 * M_PI);
    field->features.push_back(cfeat);
  }
  for (int i = 0; i < p.hills_per_scene; ++i) {
    TerrainFeature h;
    h.kind = i % 2 == 0 ? TerrainFeature::Kind::kHill
                        : TerrainFeature::Kind::kBump;
    h.cx = cx0 + rng.uniform(-45.0, 45.0);
    h.cy = cy0 + rng.uniform(-45.0, 45.0);
    h.width = h.kind == TerrainFeature::Kind::kHill ? rng.uniform(10.0, 25.0)
                                                    : rng.uniform(3.0, 8.0);
    h.depth = h.kind == TerrainFeature::Kind::kHill ? rng.uniform(1.0, 3.0)
                                                    : rng.uniform(0.3, 1.0);
    field->features.push_back(h);
  }
}

}  // namespace

SceneLayout scene_layout(std::uint64_t seed, int scene_index,
                         const WorldGenParams& params) {
  Rng master(seed);
  Rng scene_rng(0);
  for (int s = 0; s <= scene_index; ++s) {
    scene_rng = master.fork(static_cast<std::uint64_t>(s));
  }
  SceneLayout layout;
  layout.field = sample_terrain(scene_rng, params);
  // trajectory over the base terrain first; features are placed relative to it
  layout.poses = sample_trajectory(scene_rng, layout.field, params);
  place_features(scene_rng, params, layout.poses, &layout.field);
  // ego z re-tracks the final terrain, features included
  for (auto& pose : layout.poses) {
    pose.z = layout.field.height(pose.x, pose.y);
  }
  return layout;
}

SceneDataset make_dataset(std::uint64_t seed, const WorldGenParams& params) {
  if (params.n_scenes <= 0 || params.frames_per_scene <= 0) {
    throw UsageError("make_dataset: nothing to generate");
  }
  params.grid.validate();
  SceneDataset ds;
  ds.grid = params.grid;
  ds.n_scenes = params.n_scenes;
  ds.frames_per_scene = params.frames_per_scene;
  ds.feature_dim = params.sem.feature_dim;
  const std::size_t cells = static_cast<std::size_t>(params.grid.cell_count());
  const auto frustum = camera_frustum(params.grid, params.camera_half_angle,
                                      params.sem.view_range);
  Rng master(seed);
  for (int s = 0; s < params.n_scenes; ++s) {
    Rng scene_rng = master.fork(static_cast<std::uint64_t>(s));
    SceneLayout layout;
    layout.field = sample_terrain(scene_rng, params);
    layout.poses = sample_trajectory(scene_rng, layout.field, params);
    place_features(scene_rng, params, layout.poses, &layout.field);
    for (auto& pose : layout.poses) {
      pose.z = layout.field.height(pose.x, pose.y);
    }
    std::vector<PointSet> scans;
    scans.reserve(layout.poses.size());
    for (std::size_t f = 0; f < layout.poses.size(); ++f) {
      Rng frame_rng = scene_rng.fork(1000 + f);
      scans.push_back(simulate_scan(layout.poses[f], layout.field,
                                    params.sensor, frame_rng.next_u64()));
    }
    for (std::size_t f = 0; f < layout.poses.size(); ++f) {
      Rng frame_rng = scene_rng.fork(2000 + f);
      FrameRecord rec;
      rec.pose = layout.poses[f];
      rec.points.reserve(scans[f].points.size());
      for (const auto& p : scans[f].points) {
        rec.points.push_back({static_cast<float>(p[0]),
                              static_cast<float>(p[1]),
                              static_cast<float>(p[2])});
      }
      rec.has_semantics = true;
      SemanticRender sem =
          render_semantics(layout.field, params.grid, params.sem, frustum,
                           frame_rng.next_u64(), rec.pose);
      rec.semantics.assign(sem.features.begin(), sem.features.end());
      rec.density.assign(sem.density.begin(), sem.density.end());
      ElevationGrid gt =
          aggregate_ground_truth(scans, f, params.gt_window, params.grid);
      rec.gt.resize(cells);
      for (std::size_t i = 0; i < cells; ++i) {
        rec.gt[i] = gt.valid[i]
                        ? static_cast<float>(gt.values[i])
                        : std::numeric_limits<float>::quiet_NaN();
      }
      ds.frames.push_back(std::move(rec));
    }
  }
  return ds;
}

void make_dataset_file(const std::string& path, std::uint64_t seed,
                       const WorldGenParams& params) {
  write_dataset(path, make_dataset(seed, params));
}

}  // namespace scnp
