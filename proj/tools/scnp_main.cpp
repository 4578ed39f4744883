#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "scnp/attention.hpp"
#include "scnp/config.hpp"
#include "scnp/dataset.hpp"
#include "scnp/image.hpp"
#include "scnp/pipeline.hpp"
#include "scnp/world.hpp"

namespace fs = std::filesystem;
using namespace scnp;

namespace {

void define_all_keys(RunConfig& cfg) {
  // shared
  cfg.define("seed", "7");
  cfg.define("grid_size", "128");
  cfg.define("grid_resolution", "0.4");
  cfg.define("feature_dim", "8");
  // generation
  cfg.define("scenes", "2");
  cfg.define("frames", "50");
  cfg.define("gt_window", "300");
  cfg.define("speed_min", "2.0");
  cfg.define("speed_max", "10.0");
  cfg.define("sensor_azimuths", "720");
  cfg.define("sensor_beams", "32");
  cfg.define("sensor_range", "80.0");
  cfg.define("sensor_noise", "0.02");
  cfg.define("sensor_mount", "1.8");
  cfg.define("sensor_elev_min_deg", "-25.0");
  cfg.define("sensor_elev_max_deg", "5.0");
  cfg.define("sem_noise", "0.05");
  cfg.define("view_range", "60.0");
  cfg.define("camera_half_angle_deg", "60.0");
  cfg.define("ditch_on_path", "true");
  cfg.define("ditch_depth_min", "1.2");
  cfg.define("ditch_depth_max", "3.0");
  cfg.define("ditch_width_min", "2.0");
  cfg.define("ditch_width_max", "5.0");
  cfg.define("hills_per_scene", "2");
  cfg.define("cliffs_per_scene", "1");
  cfg.define("extra_ditches_per_scene", "1");
  // model
  cfg.define("hidden_dim", "64");
  cfg.define("heads", "4");
  cfg.define("epsilon", "2.0");
  cfg.define("k_max", "32");
  cfg.define("z_dim", "64");
  cfg.define("sigma_min", "0.001");
  cfg.define("max_context", "7000");
  cfg.define("max_targets", "4096");
  cfg.define("use_semantics", "true");
  cfg.define("use_temporal", "true");
  cfg.define("lidar_horizon", "50");
  // training
  cfg.define("epochs", "20");
  cfg.define("lr", "0.001");
  cfg.define("holdout", "0");
  // evaluation
  cfg.define("eval_samples", "8");
  cfg.define("gp_max_context", "4000");
  cfg.define("gp_lengthscale", "0.7");
  cfg.define("gp_alpha", "10.0");
  cfg.define("gp_noise", "0.0001");
  cfg.define("workers", "1");
  // bench
  cfg.define("bench_budget_mb", "2048");
}

GridSpec grid_from(const RunConfig& cfg) {
  GridSpec g;
  g.height = static_cast<int>(cfg.get_int("grid_size"));
  g.width = g.height;
  g.resolution = cfg.get_double("grid_resolution");
  g.origin_x = -(g.width * g.resolution) / 2.0;
  g.origin_y = -(g.height * g.resolution) / 2.0;
  g.validate();
  return g;
}

WorldGenParams gen_params_from(const RunConfig& cfg) {
  WorldGenParams p;
  p.n_scenes = static_cast<int>(cfg.get_int("scenes"));
  p.frames_per_scene = static_cast<int>(cfg.get_int("frames"));
  p.grid = grid_from(cfg);
  p.sensor.azimuth_count = static_cast<int>(cfg.get_int("sensor_azimuths"));
  p.sensor.beam_count = static_cast<int>(cfg.get_int("sensor_beams"));
  p.sensor.max_range = cfg.get_double("sensor_range");
  p.sensor.z_noise_sigma = cfg.get_double("sensor_noise");
  p.sensor.mount_height = cfg.get_double("sensor_mount");
  p.sensor.elevation_min_deg = cfg.get_double("sensor_elev_min_deg");
  p.sensor.elevation_max_deg = cfg.get_double("sensor_elev_max_deg");
  p.sem.feature_dim = static_cast<int>(cfg.get_int("feature_dim"));
  p.sem.noise_sigma = cfg.get_double("sem_noise");
  p.sem.view_range = cfg.get_double("view_range");
  p.gt_window = static_cast<int>(cfg.get_int("gt_window"));
  p.speed_min = cfg.get_double("speed_min");
  p.speed_max = cfg.get_double("speed_max");
  p.ditch_on_path = cfg.get_bool("ditch_on_path");
  p.ditch_depth_min = cfg.get_double("ditch_depth_min");
  p.ditch_depth_max = cfg.get_double("ditch_depth_max");
  p.ditch_width_min = cfg.get_double("ditch_width_min");
  p.ditch_width_max = cfg.get_double("ditch_width_max");
  p.hills_per_scene = static_cast<int>(cfg.get_int("hills_per_scene"));
  p.cliffs_per_scene = static_cast<int>(cfg.get_int("cliffs_per_scene"));
  p.extra_ditches_per_scene =
      static_cast<int>(cfg.get_int("extra_ditches_per_scene"));
  p.camera_half_angle = cfg.get_double("camera_half_angle_deg") * M_PI / 180.0;
  return p;
}

ModelConfig model_config_from(const RunConfig& cfg) {
  ModelConfig m;
  m.hidden_dim = static_cast<int>(cfg.get_int("hidden_dim"));
  m.heads = static_cast<int>(cfg.get_int("heads"));
  m.epsilon = cfg.get_double("epsilon");
  m.k_max = static_cast<int>(cfg.get_int("k_max"));
  m.z_dim = static_cast<int>(cfg.get_int("z_dim"));
  m.feature_dim = static_cast<int>(cfg.get_int("feature_dim"));
  m.sigma_min = cfg.get_double("sigma_min");
  m.max_context = static_cast<int>(cfg.get_int("max_context"));
  m.max_targets = static_cast<int>(cfg.get_int("max_targets"));
  m.use_semantics = cfg.get_bool("use_semantics");
  m.validate();
  return m;
}

PipelineOptions pipeline_from(const RunConfig& cfg) {
  PipelineOptions p;
  p.use_semantics = cfg.get_bool("use_semantics");
  p.use_temporal = cfg.get_bool("use_temporal");
  p.lidar_horizon = static_cast<int>(cfg.get_int("lidar_horizon"));
  return p;
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  cfg.write((dir / "config.resolved.cfg").string());
}

struct SplitCells {
  static std::string fmt(const SplitValue& v) {
    if (!v.present()) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v.value);
    return buf;
  }
};

int cmd_generate(const RunConfig& cfg, const std::string& out) {
  if (out.empty()) throw UsageError("generate: --out is required");
  const WorldGenParams params = gen_params_from(cfg);
  if (params.n_scenes <= 0 || params.frames_per_scene <= 0) {
    throw UsageError("generate: nothing to generate");
  }
  SceneDataset ds = make_dataset(cfg.get_u64("seed"), params);
  write_dataset(out, ds);
  const fs::path out_dir = fs::path(out).parent_path();
  echo_config(cfg, out_dir.empty() ? fs::path(".") : out_dir);
  std::printf("generated %d scenes, %zu frames -> %s\n", ds.n_scenes,
              ds.frames.size(), out.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data,
              const std::string& out_dir) {
  if (data.empty() || out_dir.empty()) {
    throw UsageError("train: --data and --out are required");
  }
  SceneDataset ds = read_dataset(data);
  RunConfig resolved = cfg;
  resolved.set("feature_dim", std::to_string(ds.feature_dim));
  ModelConfig mcfg = model_config_from(resolved);
  fs::create_directories(out_dir);
  TrainOptions opt;
  opt.epochs = static_cast<int>(resolved.get_int("epochs"));
  opt.seed = resolved.get_u64("seed");
  opt.holdout = static_cast<int>(resolved.get_int("holdout"));
  opt.lr = resolved.get_double("lr");
  opt.pipeline = pipeline_from(resolved);
  opt.log_path = (fs::path(out_dir) / "train_log.csv").string();
  opt.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
  echo_config(resolved, out_dir);
  TrainStats stats;
  ScnpModel model = train_model(ds, mcfg, opt, &stats);
  save_checkpoint(opt.checkpoint_path, model.params());
  std::printf("trained %d steps, final elbo %.6f -> %s\n", stats.steps,
              stats.final_elbo, opt.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const RunConfig& flags_cfg, const std::string& data,
             const std::string& model_path, const std::string& report,
             const std::string& heatmap_dir, int samples,
             const std::string& baseline, int first, int count,
             bool no_temporal) {
  if (data.empty() || model_path.empty()) {
    throw UsageError("eval: --data and --model are required");
  }
  SceneDataset ds = read_dataset(data);
  // model hyperparameters come from the config echoed next to the checkpoint
  RunConfig cfg = flags_cfg;
  const fs::path side_cfg = fs::path(model_path).parent_path() /
                            "config.resolved.cfg";
  if (fs::exists(side_cfg)) cfg.load_file(side_cfg.string());
  cfg.set("feature_dim", std::to_string(ds.feature_dim));
  ModelConfig mcfg = model_config_from(cfg);
  ScnpModel model(mcfg, load_checkpoint(model_path));
  PipelineOptions pipe = pipeline_from(cfg);
  if (no_temporal) pipe.use_temporal = false;
  const auto contexts = build_frame_contexts(ds, pipe);
  const int n = static_cast<int>(contexts.size());
  const int begin = first < 0 ? 0 : std::min(first, n);
  const int end = count < 0 ? n : std::min(begin + count, n);
  if (begin >= end) throw UsageError("eval: empty frame range");

  EvalOptions eopt;
  eopt.n_samples = samples > 0
                       ? samples
                       : static_cast<int>(cfg.get_int("eval_samples"));
  eopt.seed = cfg.get_u64("seed");
  eopt.gp_baseline = baseline == "gp";
  eopt.nearest_baseline = true;
  eopt.gp_max_context = static_cast<int>(cfg.get_int("gp_max_context"));
  eopt.kernel.lengthscale_x = cfg.get_double("gp_lengthscale");
  eopt.kernel.lengthscale_y = cfg.get_double("gp_lengthscale");
  eopt.kernel.alpha = cfg.get_double("gp_alpha");
  eopt.kernel.noise_variance = cfg.get_double("gp_noise");
  eopt.kernel.sigma_min = mcfg.sigma_min;
  eopt.keep_sample_fields = !heatmap_dir.empty() && samples > 0;

  const int workers =
      std::max(1, static_cast<int>(cfg.get_int("workers")));
  std::vector<FrameEvalResult> results(static_cast<std::size_t>(end - begin));
  if (workers == 1) {
    for (int f = begin; f < end; ++f) {
      results[static_cast<std::size_t>(f - begin)] =
          evaluate_frame(model, contexts[static_cast<std::size_t>(f)], eopt);
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{begin};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int f = next.fetch_add(1); f < end; f = next.fetch_add(1)) {
          results[static_cast<std::size_t>(f - begin)] = evaluate_frame(
              model, contexts[static_cast<std::size_t>(f)], eopt);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!report.empty()) {
    file.open(report);
    if (!file) throw DataError("eval: cannot open report " + report);
    os = &file;
  }
  *os << "frame,elev_total,elev_obs,elev_unobs,slope_total,slope_obs,"
         "slope_unobs,curv_total,curv_obs,curv_unobs,nll,ence";
  if (eopt.gp_baseline) *os << ",gp_elev_mae,gp_nll,gp_ence";
  *os << ",nn_elev_mae\n";
  EvalReport agg;
  EvalReport gp_agg;
  SplitValue nn_agg;
  // exact pooled NLL/ENCE over all frames
  PredictiveField pooled, gp_pooled;
  std::vector<double> pooled_gt;
  std::vector<std::uint8_t> pooled_mask;
  auto emit_row = [&](const FrameEvalResult& r, const std::string& tag) {
    *os << tag << "," << SplitCells::fmt(r.model.elevation_mae.total) << ","
        << SplitCells::fmt(r.model.elevation_mae.observed) << ","
        << SplitCells::fmt(r.model.elevation_mae.unobserved) << ","
        << SplitCells::fmt(r.model.slope_mae.total) << ","
        << SplitCells::fmt(r.model.slope_mae.observed) << ","
        << SplitCells::fmt(r.model.slope_mae.unobserved) << ","
        << SplitCells::fmt(r.model.curvature_mae.total) << ","
        << SplitCells::fmt(r.model.curvature_mae.observed) << ","
        << SplitCells::fmt(r.model.curvature_mae.unobserved) << ","
        << SplitCells::fmt(r.model.nll) << "," << SplitCells::fmt(r.model.ence);
    if (eopt.gp_baseline) {
      if (r.gp) {
        *os << "," << SplitCells::fmt(r.gp->elevation_mae.total) << ","
            << SplitCells::fmt(r.gp->nll) << "," << SplitCells::fmt(r.gp->ence);
      } else {
        *os << ",,,";
      }
    }
    *os << ","
        << (r.nearest ? SplitCells::fmt(r.nearest->elevation_mae.total) : "")
        << "\n";
  };
  for (int f = begin; f < end; ++f) {
    const auto& r = results[static_cast<std::size_t>(f - begin)];
    emit_row(r, std::to_string(f));
    agg.elevation_mae = merge_triplet(agg.elevation_mae, r.model.elevation_mae);
    agg.slope_mae = merge_triplet(agg.slope_mae, r.model.slope_mae);
    agg.curvature_mae =
        merge_triplet(agg.curvature_mae, r.model.curvature_mae);
    if (r.gp) {
      gp_agg.elevation_mae =
          merge_triplet(gp_agg.elevation_mae, r.gp->elevation_mae);
      gp_agg.nll = merge_split(gp_agg.nll, r.gp->nll);
      gp_agg.ence = merge_split(gp_agg.ence, r.gp->ence);
    }
    if (r.nearest) {
      nn_agg = merge_split(nn_agg, r.nearest->elevation_mae.total);
    }
    const auto& fc = contexts[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < fc.gt.valid.size(); ++i) {
      if (!fc.gt.valid[i]) continue;
      pooled.mean.push_back(r.pred_mu[i]);
      pooled.stddev.push_back(r.pred_sigma[i]);
      pooled_gt.push_back(fc.gt.values[i]);
      pooled_mask.push_back(1);
    }
    if (!heatmap_dir.empty()) {
      fs::create_directories(heatmap_dir);
      const GridSpec& spec = fc.gt.spec;
      auto grid_of = [&](const std::vector<double>& v, bool abs_err) {
        ElevationGrid g = ElevationGrid::empty(spec);
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (!fc.gt.valid[i]) continue;
          g.values[i] = abs_err ? std::abs(v[i] - fc.gt.values[i]) : v[i];
          g.valid[i] = 1;
        }
        return g;
      };
      char name[64];
      std::snprintf(name, sizeof(name), "frame_%04d", f);
      const fs::path base = fs::path(heatmap_dir) / name;
      write_heatmap(grid_of(r.pred_mu, false), base.string() + "_mu.pgm",
                    Palette::kGray);
      write_heatmap(grid_of(r.pred_sigma, false), base.string() + "_sigma.pgm",
                    Palette::kGray);
      write_heatmap(grid_of(r.pred_mu, true), base.string() + "_err.pgm",
                    Palette::kGray);
      for (std::size_t s = 0; s < r.sample_fields.size(); ++s) {
        write_heatmap(grid_of(r.sample_fields[s], false),
                      base.string() + "_sample" + std::to_string(s) + ".pgm",
                      Palette::kGray);
      }
    }
  }
  agg.nll = gaussian_nll(pooled, pooled_gt, pooled_mask);
  agg.ence = ence(pooled, pooled_gt, pooled_mask);
  FrameEvalResult agg_row;
  agg_row.model = agg;
  if (eopt.gp_baseline) agg_row.gp = gp_agg;
  EvalReport nn_rep;
  nn_rep.elevation_mae.total = nn_agg;
  agg_row.nearest = nn_rep;
  emit_row(agg_row, "all");
  if (!report.empty()) {
    write_report_csv(agg, report + ".aggregate.csv");
  }
  std::printf("evaluated frames [%d,%d): elevation MAE %.4f m, NLL %.4f\n",
              begin, end, agg.elevation_mae.total.value, agg.nll.value);
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& what, int m, int n,
              double radius, int kmax, int repeats, const std::string& out) {
  if (what != "attention") {
    throw UsageError("bench: unknown benchmark '" + what + "'");
  }
  if (m <= 0 || n <= 0 || kmax <= 0 || repeats <= 0 || radius <= 0.0) {
    throw UsageError("bench: sizes must be positive");
  }
  Rng rng(cfg.get_u64("seed"));
  const int d = static_cast<int>(cfg.get_int("hidden_dim"));
  const int heads = static_cast<int>(cfg.get_int("heads"));
  const double side = 100.0;
  std::vector<std::pair<double, double>> keys, queries;
  for (int i = 0; i < n; ++i) {
    keys.emplace_back(rng.uniform(0.0, side), rng.uniform(0.0, side));
  }
  for (int i = 0; i < m; ++i) {
    queries.emplace_back(rng.uniform(0.0, side), rng.uniform(0.0, side));
  }
  auto randmat = [&](std::int64_t r, std::int64_t c) {
    std::vector<double> v(static_cast<std::size_t>(r * c));
    for (auto& x : v) x = rng.normal();
    return Tensor({r, c}, std::move(v));
  };
  Tensor Q = randmat(m, d), K = randmat(n, d), V = randmat(n, d);
  Tensor null_row = Tensor::zeros({d});
  NeighborLists nb = build_neighbor_lists(queries, keys, radius, kmax);
  double k_sum = 0.0;
  for (const auto& l : nb) k_sum += static_cast<double>(l.size());
  const double k_mean = k_sum / static_cast<double>(m);

  auto median_ms = [&](auto&& fn) {
    std::vector<double> times;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw DataError("bench: cannot open " + out);
    os = &file;
  }
  *os << "mode,M,N,k_mean,D,heads,macs,wall_ms\n";
  const double budget_bytes = cfg.get_double("bench_budget_mb") * 1048576.0;
  const double global_bytes = static_cast<double>(m) * n * 8.0 * 2.0;
  char buf[160];
  if (global_bytes <= budget_bytes) {
    std::vector<std::vector<bool>> mask(
        static_cast<std::size_t>(m), std::vector<bool>(static_cast<std::size_t>(n), true));
    const double ms = median_ms(
        [&] { global_attention_masked(Q, K, V, mask); });
    std::snprintf(buf, sizeof(buf), "global,%d,%d,%.3f,%d,%d,%.0f,%.3f\n", m,
                  n, static_cast<double>(n), d, heads,
                  flops_count(m, n, n, d, heads, AttentionMode::kGlobal), ms);
    *os << buf;
  } else {
    std::fprintf(stderr,
                 "bench: global mode skipped, %.0f MB exceeds budget %.0f MB\n",
                 global_bytes / 1048576.0, budget_bytes / 1048576.0);
  }
  const double ms =
      median_ms([&] { ball_attention(Q, K, V, null_row, nb,
                                     std::sqrt(static_cast<double>(d))); });
  std::snprintf(buf, sizeof(buf), "ball,%d,%d,%.3f,%d,%d,%.0f,%.3f\n", m, n,
                k_mean, d, heads,
                flops_count(m, n, k_mean, d, heads, AttentionMode::kBall), ms);
  *os << buf;
  return 0;
}

int cmd_export_heatmap(const std::string& grid_csv, const std::string& out,
                       const std::string& palette) {
  if (grid_csv.empty() || out.empty()) {
    throw UsageError("export-heatmap: --grid-csv and --out are required");
  }
  ElevationGrid grid = read_grid_csv(grid_csv);
  Palette p;
  if (palette == "gray") {
    p = Palette::kGray;
  } else if (palette == "viridis") {
    p = Palette::kViridis;
  } else {
    throw UsageError("export-heatmap: palette must be gray or viridis");
  }
  write_heatmap(grid, out, p);
  std::printf("wrote %dx%d heatmap -> %s\n", grid.spec.width,
              grid.spec.height, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic-conditioned neural process terrain mapping"};
  app.require_subcommand(1);

  std::string config_path, out, data, model_path, report, heatmaps, grid_csv;
  std::string baseline, palette = "gray", bench_what = "attention";
  std::vector<std::string> overrides;
  int samples = -1, first = -1, count = -1;
  int bench_m = 4096, bench_n = 4096, bench_kmax = 32, bench_repeats = 5;
  double bench_radius = 2.0;
  bool no_semantics = false, no_temporal = false;
  std::int64_t seed = -1, scenes = -1, frames = -1, epochs = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--set", overrides, "override: key=value")->take_all();
    cmd->add_option("--seed", seed, "master seed");
  };

  CLI::App* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen);
  gen->add_option("--out", out, "output dataset path")->required();
  gen->add_option("--scenes", scenes, "number of scenes");
  gen->add_option("--frames", frames, "frames per scene");

  CLI::App* train = app.add_subcommand("train", "train the model");
  add_common(train);
  train->add_option("--data", data, "dataset path")->required();
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--epochs", epochs, "training epochs");
  train->add_flag("--no-semantics", no_semantics, "zero all semantic features");
  train->add_flag("--no-temporal", no_temporal, "disable temporal aggregation");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--data", data, "dataset path")->required();
  eval->add_option("--model", model_path, "checkpoint path")->required();
  eval->add_option("--report", report, "report CSV path");
  eval->add_option("--heatmaps", heatmaps, "heatmap output directory");
  eval->add_option("--samples", samples, "latent samples per frame");
  eval->add_option("--baseline", baseline, "extra baseline: gp");
  eval->add_option("--first", first, "first frame index");
  eval->add_option("--count", count, "number of frames");
  eval->add_flag("--no-temporal", no_temporal, "disable temporal aggregation");

  CLI::App* bench = app.add_subcommand("bench", "attention benchmarks");
  add_common(bench);
  bench->add_option("what", bench_what, "benchmark name (attention)");
  bench->add_option("--m", bench_m, "query count");
  bench->add_option("--n", bench_n, "key count");
  bench->add_option("--radius", bench_radius, "ball radius (m)");
  bench->add_option("--kmax", bench_kmax, "neighbor cap");
  bench->add_option("--repeats", bench_repeats, "timing repeats");
  bench->add_option("--out", out, "CSV output path");

  CLI::App* heat = app.add_subcommand("export-heatmap", "grid CSV to image");
  heat->add_option("--grid-csv", grid_csv, "grid CSV path")->required();
  heat->add_option("--out", out, "image path")->required();
  heat->add_option("--palette", palette, "gray or viridis");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    define_all_keys(cfg);
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw UsageError("--set expects key=value, got '" + kv + "'");
      }
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (scenes >= 0) cfg.set("scenes", std::to_string(scenes));
    if (frames >= 0) cfg.set("frames", std::to_string(frames));
    if (epochs >= 0) cfg.set("epochs", std::to_string(epochs));
    if (no_semantics) cfg.set("use_semantics", "false");
    if (no_temporal) cfg.set("use_temporal", "false");

    if (gen->parsed()) return cmd_generate(cfg, out);
    if (train->parsed()) return cmd_train(cfg, data, out);
    if (eval->parsed()) {
      return cmd_eval(cfg, data, model_path, report, heatmaps, samples,
                      baseline, first, count, no_temporal);
    }
    if (bench->parsed()) {
      return cmd_bench(cfg, bench_what, bench_m, bench_n, bench_radius,
                       bench_kmax, bench_repeats, out);
    }
    if (heat->parsed()) return cmd_export_heatmap(grid_csv, out, palette);
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
