#include "scnp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "scnp/fusion.hpp"

namespace scnp {

namespace {

std::vector<std::array<double, 3>> points_of(const FrameRecord& rec) {
  std::vector<std::array<double, 3>> out;
  out.reserve(rec.points.size());
  for (const auto& p : rec.points) {
    out.push_back({static_cast<double>(p[0]), static_cast<double>(p[1]),
                   static_cast<double>(p[2])});
  }
  return out;
}

ElevationGrid gt_grid(const FrameRecord& rec, const GridSpec& spec) {
  ElevationGrid g = ElevationGrid::empty(spec);
  for (std::size_t i = 0; i < rec.gt.size(); ++i) {
    if (std::isfinite(rec.gt[i])) {
      g.values[i] = static_cast<double>(rec.gt[i]);
      g.valid[i] = 1;
    }
  }
  return g;
}

}  // namespace

std::vector<FrameContext> build_frame_contexts(const SceneDataset& ds,
                                               const PipelineOptions& opt) {
  const GridSpec& spec = ds.grid;
  const std::size_t cells = static_cast<std::size_t>(spec.cell_count());
  std::vector<FrameContext> out;
  out.reserve(ds.frames.size());
  for (int scene = 0; scene < ds.n_scenes; ++scene) {
    const auto [begin, end] = ds.scene_range(scene);
    std::vector<PointSet> world_scans;
    BeliefGrid belief = BeliefGrid::initial(spec, ds.feature_dim);
    bool belief_started = false;
    for (int f = begin; f < end && f < static_cast<int>(ds.frames.size());
         ++f) {
      const FrameRecord& rec = ds.frames[static_cast<std::size_t>(f)];
      PointSet scan;
      scan.pose = rec.pose;
      scan.points = points_of(rec);
      world_scans.push_back(scan);

      FrameContext fc;
      fc.index = f;
      fc.scene = scene;
      fc.gt = gt_grid(rec, spec);

      // current-scan mask defines the observed split
      std::vector<std::array<double, 3>> ego_now;
      ego_now.reserve(scan.points.size());
      for (const auto& p : scan.points) ego_now.push_back(to_ego(p, rec.pose));
      ElevationGrid current = bin_min_height(ego_now, spec);
      fc.observed = observed_mask(current);

      if (opt.use_temporal) {
        PointSet merged =
            aggregate_lidar(world_scans, rec.pose, opt.lidar_horizon);
        fc.ctx_heights = bin_min_height(merged.points, spec);
      } else {
        fc.ctx_heights = std::move(current);
      }

      fc.fusion_input.assign(
          cells * static_cast<std::size_t>(ds.feature_dim + 1), 0.0);
      if (opt.use_semantics && rec.has_semantics) {
        if (opt.use_temporal) {
          SplatResult obs;
          obs.features.assign(rec.semantics.begin(), rec.semantics.end());
          obs.p.resize(cells);
          for (std::size_t i = 0; i < cells; ++i) {
            obs.p[i] = static_cast<double>(rec.density[i]);
          }
          if (!belief_started) {
            belief.features = obs.features;
            for (std::size_t i = 0; i < cells; ++i) {
              belief.p[i] = std::clamp(obs.p[i], kBeliefClamp,
                                       1.0 - kBeliefClamp);
            }
            belief_started = true;
          } else {
            belief = bayes_update(belief, obs);
          }
          std::copy(belief.features.begin(), belief.features.end(),
                    fc.fusion_input.begin());
          std::copy(belief.p.begin(), belief.p.end(),
                    fc.fusion_input.begin() +
                        static_cast<std::ptrdiff_t>(
                            cells * static_cast<std::size_t>(ds.feature_dim)));
        } else {
          std::copy(rec.semantics.begin(), rec.semantics.end(),
                    fc.fusion_input.begin());
          for (std::size_t i = 0; i < cells; ++i) {
            fc.fusion_input[cells * static_cast<std::size_t>(ds.feature_dim) +
                            i] = static_cast<double>(rec.density[i]);
          }
        }
      }
      out.push_back(std::move(fc));
    }
  }
  return out;
}

std::vector<std::pair<double, double>> cell_centers(
    const GridSpec& spec, const std::vector<std::int64_t>& cells) {
  std::vector<std::pair<double, double>> out;
  out.reserve(cells.size());
  for (std::int64_t c : cells) {
    out.push_back(spec.cell_center(static_cast<int>(c / spec.width),
                                   static_cast<int>(c % spec.width)));
  }
  return out;
}

namespace {

// Assembles the per-instance sets; features come from the fused grid when
// semantics are on, otherwise stay undefined (all-zero path).
struct Instance {
  ContextSet context;
  TargetSet targets;
  std::vector<double> target_heights;
};

Instance assemble(const ScnpModel& model, const FrameContext& fc,
                  const InstanceSample& sample, const Tensor& cell_feats,
                  bool with_gt) {
  const GridSpec& spec = fc.ctx_heights.spec;
  Instance inst;
  inst.context.xy = cell_centers(spec, sample.context_cells);
  inst.context.heights.reserve(sample.context_cells.size());
  for (std::int64_t c : sample.context_cells) {
    inst.context.heights.push_back(
        fc.ctx_heights.values[static_cast<std::size_t>(c)]);
  }
  inst.targets.xy = cell_centers(spec, sample.target_cells);
  if (cell_feats.defined()) {
    inst.context.features = gather_rows(cell_feats, sample.context_cells);
    inst.targets.features = gather_rows(cell_feats, sample.target_cells);
  }
  if (with_gt) {
    inst.target_heights.reserve(sample.target_cells.size());
    for (std::int64_t c : sample.target_cells) {
      inst.target_heights.push_back(fc.gt.values[static_cast<std::size_t>(c)]);
    }
  }
  (void)model;
  return inst;
}

Tensor fusion_input_tensor(const FrameContext& fc, const GridSpec& spec,
                           int feature_dim) {
  return Tensor({feature_dim + 1, spec.height, spec.width}, fc.fusion_input);
}

double schedule_factor(int epoch, int total_epochs) {
  const int third = static_cast<int>(
      std::floor(3.0 * static_cast<double>(epoch) / total_epochs));
  return std::pow(0.5, third);
}

}  // namespace

ScnpModel train_model(const SceneDataset& ds, const ModelConfig& cfg,
                      const TrainOptions& opt, TrainStats* stats) {
  cfg.validate();
  if (opt.epochs <= 0) throw UsageError("train: epochs must be positive");
  const auto contexts = build_frame_contexts(ds, opt.pipeline);
  const int train_count =
      std::max(0, static_cast<int>(contexts.size()) - opt.holdout);
  if (train_count == 0) throw DataError("train: no training frames");

  ScnpModel model(cfg, opt.seed);
  AdamState adam(AdamConfig{opt.lr, 0.9, 0.999, 1e-8});
  Rng master(opt.seed);
  std::ofstream log;
  if (!opt.log_path.empty()) {
    log.open(opt.log_path);
    if (!log) throw DataError("train: cannot open log " + opt.log_path);
    log << "epoch,step,elbo,nll_term,kl_term,lr\n";
  }
  if (!opt.checkpoint_path.empty()) {
    save_checkpoint(opt.checkpoint_path, model.params());
  }
  TrainStats local;
  int step = 0;
  const auto param_names = model.params().names();
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    adam.config().lr = opt.lr * schedule_factor(epoch, opt.epochs);
    Rng epoch_rng = master.fork(static_cast<std::uint64_t>(epoch));
    std::vector<int> order(static_cast<std::size_t>(train_count));
    std::iota(order.begin(), order.end(), 0);
    for (int i = train_count - 1; i > 0; --i) {
      const int j = static_cast<int>(epoch_rng.uniform_int(0, i));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
    for (int oi = 0; oi < train_count; ++oi) {
      const FrameContext& fc = contexts[static_cast<std::size_t>(order[oi])];
      Rng step_rng = epoch_rng.fork(static_cast<std::uint64_t>(oi));
      InstanceSample sample;
      try {
        sample = sample_context_target(fc.ctx_heights, fc.gt.valid, cfg, true,
                                       step_rng);
      } catch (const DataError&) {
        continue;  // frame without usable cells
      }
      Tape tape;
      TapeScope scope(tape);
      Tensor cell_feats;
      if (cfg.use_semantics) {
        Tensor raw = fusion_input_tensor(fc, ds.grid, ds.feature_dim);
        cell_feats =
            ScnpModel::cell_features(model.fuse_semantics(raw, fc.observed));
      }
      Instance inst = assemble(model, fc, sample, cell_feats, true);
      std::vector<double> noise(static_cast<std::size_t>(cfg.z_dim));
      for (auto& v : noise) v = step_rng.normal();
      ElboResult res;
      try {
        res = model.elbo_loss(inst.context, inst.targets, inst.target_heights,
                              noise);
        tape.backward(res.loss);
      } catch (const NumericError& e) {
        throw NumericError(std::string("train: aborting on numeric failure (") +
                           e.what() + "); last good checkpoint kept");
      }
      std::vector<Tensor> params = model.params().tensors();
      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (const auto& p : params) {
        const std::vector<double>* g = tape.grad(p);
        grads.push_back(g ? *g : std::vector<double>());
      }
      adam_step(params, grads, adam);
      if (log.is_open()) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.6f,%.8f\n", epoch,
                      step, res.elbo, res.nll_term, res.kl_term,
                      adam.config().lr);
        log << buf;
      }
      if (step == 0) local.first_step_loss = res.loss.value();
      local.last_step_loss = res.loss.value();
      local.final_elbo = res.elbo;
      ++step;
    }
    if (!opt.checkpoint_path.empty()) {
      save_checkpoint(opt.checkpoint_path, model.params());
    }
  }
  local.steps = step;
  if (stats) *stats = local;
  return model;
}

std::vector<double> nearest_copy_predict(
    const std::vector<std::pair<double, double>>& ctx_xy,
    const std::vector<double>& ctx_h,
    const std::vector<std::pair<double, double>>& tgt_xy) {
  if (ctx_xy.empty()) {
    throw UsageError("nearest_copy_predict: empty context");
  }
  std::vector<double> out(tgt_xy.size(), 0.0);
  for (std::size_t t = 0; t < tgt_xy.size(); ++t) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t c = 0; c < ctx_xy.size(); ++c) {
      const double dx = ctx_xy[c].first - tgt_xy[t].first;
      const double dy = ctx_xy[c].second - tgt_xy[t].second;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        best_i = c;
      }
    }
    out[t] = ctx_h[best_i];
  }
  return out;
}

SplitValue merge_split(const SplitValue& a, const SplitValue& b) {
  SplitValue out;
  out.count = a.count + b.count;
  if (out.count > 0) {
    out.value = (a.value * static_cast<double>(a.count) +
                 b.value * static_cast<double>(b.count)) /
                static_cast<double>(out.count);
  }
  return out;
}

MetricTriplet merge_triplet(const MetricTriplet& a, const MetricTriplet& b) {
  return {merge_split(a.total, b.total), merge_split(a.observed, b.observed),
          merge_split(a.unobserved, b.unobserved)};
}

FrameEvalResult evaluate_frame(const ScnpModel& model, const FrameContext& fc,
                               const EvalOptions& opt) {
  const ModelConfig& cfg = model.config();
  const GridSpec& spec = fc.ctx_heights.spec;
  const std::size_t cells = static_cast<std::size_t>(spec.cell_count());
  Rng rng(opt.seed + static_cast<std::uint64_t>(fc.index) * 7919ULL);

  InstanceSample sample;
  Rng sample_rng = rng.fork(0);
  sample = sample_context_target(fc.ctx_heights, fc.gt.valid, cfg, false,
                                 sample_rng);
  Tensor cell_feats;
  if (cfg.use_semantics) {
    Tensor raw = Tensor({cfg.feature_dim + 1, spec.height, spec.width},
                        fc.fusion_input);
    cell_feats =
        ScnpModel::cell_features(model.fuse_semantics(raw, fc.observed));
  }
  Instance inst = assemble(model, fc, sample, cell_feats, false);
  PredictiveField field =
      model.predict(inst.context, inst.targets, opt.n_samples,
                    rng.fork(1).next_u64(), opt.keep_sample_fields);

  FrameEvalResult out;
  out.frame = fc.index;
  out.pred_mu.assign(cells, 0.0);
  out.pred_sigma.assign(cells, cfg.sigma_min);
  ElevationGrid pred_grid = ElevationGrid::empty(spec);
  std::vector<double> gt_vals(cells, 0.0);
  for (std::size_t i = 0; i < sample.target_cells.size(); ++i) {
    const auto c = static_cast<std::size_t>(sample.target_cells[i]);
    out.pred_mu[c] = field.mean[i];
    out.pred_sigma[c] = field.stddev[i];
    pred_grid.values[c] = field.mean[i];
    pred_grid.valid[c] = 1;
  }
  for (std::size_t i = 0; i < cells; ++i) {
    if (fc.gt.valid[i]) gt_vals[i] = fc.gt.values[i];
  }
  if (opt.keep_sample_fields) {
    for (const auto& s : field.sample_means) {
      std::vector<double> grid_field(cells, 0.0);
      for (std::size_t i = 0; i < sample.target_cells.size(); ++i) {
        grid_field[static_cast<std::size_t>(sample.target_cells[i])] = s[i];
      }
      out.sample_fields.push_back(std::move(grid_field));
    }
  }

  out.model.elevation_mae = mae_split(pred_grid, fc.gt, fc.observed);
  out.model.slope_mae = slope_mae(pred_grid, fc.gt, fc.observed);
  out.model.curvature_mae = curvature_mae(pred_grid, fc.gt, fc.observed);
  PredictiveField grid_field;
  grid_field.mean = out.pred_mu;
  grid_field.stddev = out.pred_sigma;
  out.model.nll = gaussian_nll(grid_field, gt_vals, fc.gt.valid);
  out.model.ence = ence(grid_field, gt_vals, fc.gt.valid);

  if (opt.nearest_baseline) {
    const std::vector<double> nn =
        nearest_copy_predict(inst.context.xy, inst.context.heights,
                             inst.targets.xy);
    ElevationGrid nn_grid = ElevationGrid::empty(spec);
    for (std::size_t i = 0; i < sample.target_cells.size(); ++i) {
      const auto c = static_cast<std::size_t>(sample.target_cells[i]);
      nn_grid.values[c] = nn[i];
      nn_grid.valid[c] = 1;
    }
    EvalReport rep;
    rep.elevation_mae = mae_split(nn_grid, fc.gt, fc.observed);
    rep.slope_mae = slope_mae(nn_grid, fc.gt, fc.observed);
    rep.curvature_mae = curvature_mae(nn_grid, fc.gt, fc.observed);
    out.nearest = rep;
  }

  if (opt.gp_baseline) {
    std::vector<std::pair<double, double>> gp_xy = inst.context.xy;
    std::vector<double> gp_h = inst.context.heights;
    if (static_cast<int>(gp_xy.size()) > opt.gp_max_context) {
      Rng gp_rng = rng.fork(2);
      for (int i = 0; i < opt.gp_max_context; ++i) {
        const std::int64_t j = gp_rng.uniform_int(
            i, static_cast<std::int64_t>(gp_xy.size()) - 1);
        std::swap(gp_xy[static_cast<std::size_t>(i)],
                  gp_xy[static_cast<std::size_t>(j)]);
        std::swap(gp_h[static_cast<std::size_t>(i)],
                  gp_h[static_cast<std::size_t>(j)]);
      }
      gp_xy.resize(static_cast<std::size_t>(opt.gp_max_context));
      gp_h.resize(static_cast<std::size_t>(opt.gp_max_context));
    }
    PredictiveField gp = gp_fit_predict(gp_xy, gp_h, inst.targets.xy,
                                        opt.kernel);
    out.gp_mu.assign(cells, 0.0);
    out.gp_sigma.assign(cells, opt.kernel.sigma_min);
    ElevationGrid gp_grid = ElevationGrid::empty(spec);
    for (std::size_t i = 0; i < sample.target_cells.size(); ++i) {
      const auto c = static_cast<std::size_t>(sample.target_cells[i]);
      out.gp_mu[c] = gp.mean[i];
      out.gp_sigma[c] = gp.stddev[i];
      gp_grid.values[c] = gp.mean[i];
      gp_grid.valid[c] = 1;
    }
    EvalReport rep;
    rep.elevation_mae = mae_split(gp_grid, fc.gt, fc.observed);
    rep.slope_mae = slope_mae(gp_grid, fc.gt, fc.observed);
    rep.curvature_mae = curvature_mae(gp_grid, fc.gt, fc.observed);
    PredictiveField gp_grid_field;
    gp_grid_field.mean = out.gp_mu;
    gp_grid_field.stddev = out.gp_sigma;
    rep.nll = gaussian_nll(gp_grid_field, gt_vals, fc.gt.valid);
    rep.ence = ence(gp_grid_field, gt_vals, fc.gt.valid);
    out.gp = rep;
  }
  return out;
}

}  // namespace scnp
