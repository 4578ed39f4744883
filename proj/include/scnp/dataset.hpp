#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scnp/grid.hpp"

namespace scnp {

// One frame of a scene sequence. Points are world-frame; grids live on the
// frame's ego-centered GridSpec. Ground truth uses NaN for cells the
// aggregation never observed.
struct FrameRecord {
  EgoPose pose;
  std::vector<std::array<float, 3>> points;
  bool has_semantics = false;
  std::vector<float> semantics;  // feature_dim x H x W
  std::vector<float> density;    // H x W
  std::vector<float> gt;         // H x W, NaN sentinel
};

struct SceneDataset {
  GridSpec grid;
  int n_scenes = 0;
  int frames_per_scene = 0;
  int feature_dim = 0;
  std::vector<FrameRecord> frames;  // scene-major order

  int scene_of(int frame_index) const { return frame_index / frames_per_scene; }
  // [begin, end) frame range of one scene.
  std::pair<int, int> scene_range(int scene) const {
    return {scene * frames_per_scene, (scene + 1) * frames_per_scene};
  }
};

// Little-endian binary scene file: magic "SCN1", u32 version, grid block
// (f64 origin_x/origin_y/resolution, u32 H/W, u32 scenes, u32 frames per
// scene, u32 feature dim, u32 total frames), then per frame: pose 4xf64,
// u32 point count, points 3xf32, u8 has-semantics flag, optional semantic
// and density f32 blocks, H*W f32 ground truth.
void write_dataset(const std::string& path, const SceneDataset& ds);
SceneDataset read_dataset(const std::string& path);

}  // namespace scnp
