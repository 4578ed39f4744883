#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scnp/dataset.hpp"
#include "scnp/gp.hpp"
#include "scnp/metrics.hpp"
#include "scnp/model.hpp"

namespace scnp {

struct PipelineOptions {
  bool use_semantics = true;
  bool use_temporal = true;
  int lidar_horizon = 50;
};

// Everything a training step or evaluation needs from one frame, precomputed
// once per run: binned context heights (temporally aggregated when enabled),
// the current-scan observation mask, the fusion input planes (semantic
// channels + confidence), and the ground-truth grid.
struct FrameContext {
  int index = 0;
  int scene = 0;
  ElevationGrid ctx_heights;
  std::vector<std::uint8_t> observed;
  std::vector<double> fusion_input;  // (feature_dim + 1) x H x W
  ElevationGrid gt;
};

std::vector<FrameContext> build_frame_contexts(const SceneDataset& ds,
                                               const PipelineOptions& opt);

struct TrainOptions {
  int epochs = 20;
  std::uint64_t seed = 7;
  int holdout = 10;  // tail frames excluded from training
  double lr = 1e-3;
  PipelineOptions pipeline;
  std::string log_path;         // per-step CSV when non-empty
  std::string checkpoint_path;  // written after every epoch when non-empty
};

struct TrainStats {
  double first_step_loss = 0.0;
  double last_step_loss = 0.0;
  double final_elbo = 0.0;
  int steps = 0;
};

// Full training loop: per-frame ELBO steps with Adam and a step lr schedule
// (halved at each third of the epochs). Deterministic in (dataset, config,
// options). Throws NumericError on NaN loss after writing the last good
// checkpoint.
ScnpModel train_model(const SceneDataset& ds, const ModelConfig& cfg,
                      const TrainOptions& opt, TrainStats* stats = nullptr);

struct EvalOptions {
  int n_samples = 8;
  std::uint64_t seed = 1234;
  bool gp_baseline = false;
  bool nearest_baseline = false;
  int gp_max_context = 4000;
  KernelSpec kernel;
  bool keep_sample_fields = false;
};

struct FrameEvalResult {
  int frame = 0;
  EvalReport model;
  std::optional<EvalReport> gp;
  std::optional<EvalReport> nearest;
  // grid-aligned predictions (meaningful at GT-valid cells)
  std::vector<double> pred_mu, pred_sigma;
  std::vector<double> gp_mu, gp_sigma;
  std::vector<std::vector<double>> sample_fields;
};

FrameEvalResult evaluate_frame(const ScnpModel& model, const FrameContext& fc,
                               const EvalOptions& opt);

// Count-weighted merge of per-frame split means.
SplitValue merge_split(const SplitValue& a, const SplitValue& b);
MetricTriplet merge_triplet(const MetricTriplet& a, const MetricTriplet& b);

// Nearest-context height copy, the trivial baseline.
std::vector<double> nearest_copy_predict(
    const std::vector<std::pair<double, double>>& ctx_xy,
    const std::vector<double>& ctx_h,
    const std::vector<std::pair<double, double>>& tgt_xy);

// Cell centers of flat cell ids.
std::vector<std::pair<double, double>> cell_centers(
    const GridSpec& spec, const std::vector<std::int64_t>& cells);

}  // namespace scnp
