#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scnp/grid.hpp"
#include "scnp/rng.hpp"

namespace scnp {

// One component of the smooth base field: a planar sinusoid.
struct SinusoidComponent {
  double amplitude = 0.0;
  double wavelength = 50.0;
  double phase = 0.0;
  double dir_x = 1.0;
  double dir_y = 0.0;
};

struct TerrainFeature {
  enum class Kind { kDitch, kCliff, kHill, kBump };
  Kind kind = Kind::kDitch;
  double cx = 0.0, cy = 0.0;  // center (m)
  double width = 3.0;         // across-feature extent / transition width (m)
  double depth = 2.0;         // ditch depth, cliff drop, hill height (m)
  double length = 20.0;       // along-feature extent (ditch only)
  double orientation = 0.0;   // rad, along-feature direction
};

// Deterministic analytic terrain: seeded sinusoid base plus sharp features.
// Ditches subtract a smooth-walled trench, cliffs apply a tanh step,
// hills/bumps add radial Gaussians.
struct TerrainField {
  std::vector<SinusoidComponent> base;
  std::vector<TerrainFeature> features;

  double height(double x, double y) const;
  // Upper bound on height over the whole field; lets ray marching stop early
  // on climbing rays.
  double height_bound() const;
  // Feature contribution alone (no base), used by tests and by the ditch
  // footprint extraction.
  double feature_contribution(const TerrainFeature& f, double x,
                              double y) const;
};

double terrain_height(const TerrainField& field, double x, double y);

struct SensorModel {
  double mount_height = 1.8;         // sensor above the ego base (m)
  int azimuth_count = 720;
  int beam_count = 32;
  double elevation_min_deg = -25.0;
  double elevation_max_deg = 5.0;
  double max_range = 80.0;
  double z_noise_sigma = 0.02;
  double march_step = 0.05;

  std::vector<double> elevation_angles() const;
};

// Spinning range sensor: rays march until the first surface crossing
// (refined by one bisection step) or max range. Occlusion gaps over ditch
// lips fall out of the geometry. Points are returned in world coordinates.
PointSet simulate_scan(const EgoPose& pose, const TerrainField& field,
                       const SensorModel& sensor, std::uint64_t seed);

struct SemanticFieldSpec {
  int feature_dim = 8;
  double noise_sigma = 0.05;
  double slope_low = 0.15;   // |grad| below: ground class
  double slope_high = 0.5;   // |grad| above: rim class
  double view_range = 60.0;  // density decays to zero at this range
};

struct SemanticRender {
  std::vector<double> features;  // feature_dim x H x W
  std::vector<double> density;   // H x W in [0,1]
};

// Synthesizes per-cell semantic features from local terrain analysis on the
// pose's ego-centered grid: slope-threshold classes, a vegetation proxy,
// surface normal z, plus per-cell noise. Cells outside `visibility` get
// density 0 and zero features.
SemanticRender render_semantics(const TerrainField& field,
                                const GridSpec& spec,
                                const SemanticFieldSpec& sem,
                                const std::vector<std::uint8_t>& visibility,
                                std::uint64_t seed,
                                const EgoPose& pose = EgoPose{});

// Forward camera frustum mask on the ego grid: cells within the half-angle
// of the +x axis and within view range.
std::vector<std::uint8_t> camera_frustum(const GridSpec& spec,
                                         double half_angle_rad,
                                         double view_range);

// Deterministic slope-class recomputation used by render_semantics and by
// its oracle test: 0 ground, 1 slope, 2 rim.
int classify_slope(const TerrainField& field, double x, double y, double step,
                   const SemanticFieldSpec& sem);
double slope_magnitude(const TerrainField& field, double x, double y,
                       double step);

// ---- dataset generation -----------------------------------------------------

struct WorldGenParams {
  int n_scenes = 2;
  int frames_per_scene = 50;
  GridSpec grid;
  SensorModel sensor;
  SemanticFieldSpec sem;
  int gt_window = 300;
  double dt = 0.1;  // 10 Hz
  double speed_min = 2.0;
  double speed_max = 10.0;
  int base_waves = 5;
  double base_amplitude_max = 0.6;  // per component; sum stays under 3 m
  int hills_per_scene = 2;
  int cliffs_per_scene = 1;
  int extra_ditches_per_scene = 1;
  bool ditch_on_path = true;  // force one ditch across the trajectory
  double ditch_depth_min = 1.2;
  double ditch_depth_max = 3.0;
  double ditch_width_min = 2.0;
  double ditch_width_max = 5.0;
  double camera_half_angle = 1.0471975511965976;  // 60 deg
};

struct SceneDataset;  // dataset.hpp

// Procedural scenes: terrain, smooth trajectory with ego z tracking the
// ground, scans, semantics, per-frame aggregated ground truth. Deterministic
// in (seed, params).
SceneDataset make_dataset(std::uint64_t seed, const WorldGenParams& params);
void make_dataset_file(const std::string& path, std::uint64_t seed,
                       const WorldGenParams& params);

// Terrain and trajectory of one scene, re-derivable from the same seed that
// make_dataset used; the ditch-probe evaluation uses this to locate
// footprints analytically.
struct SceneLayout {
  TerrainField field;
  std::vector<EgoPose> poses;
};
SceneLayout scene_layout(std::uint64_t seed, int scene_index,
                         const WorldGenParams& params);

}  // namespace scnp
