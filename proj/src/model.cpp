#include "scnp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scnp {

void ModelConfig::validate() const {
  if (hidden_dim <= 0 || heads <= 0 || z_dim <= 0 || feature_dim <= 0 ||
      k_max <= 0 || max_context <= 0 || max_targets <= 0) {
    throw UsageError("ModelConfig: all sizes must be positive");
  }
  if (hidden_dim % heads != 0) {
    throw UsageError("ModelConfig: hidden_dim must be divisible by heads");
  }
  if (!(epsilon > 0.0) || !(sigma_min > 0.0)) {
    throw UsageError("ModelConfig: epsilon and sigma_min must be positive");
  }
}

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)

// Canonical set order: lexicographic by (y, x); ties keep input order.
std::vector<std::int64_t> canonical_order(
    const std::vector<std::pair<double, double>>& xy) {
  std::vector<std::int64_t> perm(xy.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     const auto& pa = xy[static_cast<std::size_t>(a)];
                     const auto& pb = xy[static_cast<std::size_t>(b)];
                     if (pa.second != pb.second) return pa.second < pb.second;
                     return pa.first < pb.first;
                   });
  return perm;
}

Tensor coords_tensor(const std::vector<std::pair<double, double>>& xy) {
  std::vector<double> d;
  d.reserve(xy.size() * 2);
  for (const auto& [x, y] : xy) {
    d.push_back(x);
    d.push_back(y);
  }
  return Tensor({static_cast<std::int64_t>(xy.size()), 2}, std::move(d));
}

Tensor column_tensor(const std::vector<double>& v) {
  return Tensor({static_cast<std::int64_t>(v.size()), 1},
                std::vector<double>(v.begin(), v.end()));
}

}  // namespace

Tensor ScnpModel::Mlp2::apply(const Tensor& x) const {
  Tensor h = relu(add(matmul(x, w1), b1));
  return add(matmul(h, w2), b2);
}

ScnpModel::Mlp2 ScnpModel::make_mlp(const std::string& prefix, int in_dim,
                                    int out_dim, Rng& rng) {
  auto mat = [&](std::int64_t r, std::int64_t c) {
    std::vector<double> d(static_cast<std::size_t>(r * c));
    const double s = 1.0 / std::sqrt(static_cast<double>(r));
    for (auto& v : d) v = rng.normal() * s;
    return Tensor({r, c}, std::move(d), true);
  };
  Mlp2 m;
  m.w1 = params_.add(prefix + ".w1", mat(in_dim, cfg_.hidden_dim));
  m.b1 = params_.add(prefix + ".b1", Tensor::zeros({cfg_.hidden_dim}, true));
  m.w2 = params_.add(prefix + ".w2", mat(cfg_.hidden_dim, out_dim));
  m.b2 = params_.add(prefix + ".b2", Tensor::zeros({out_dim}, true));
  return m;
}

ScnpModel::Mlp2 ScnpModel::wire_mlp(const std::string& prefix) const {
  Mlp2 m;
  m.w1 = params_.get(prefix + ".w1");
  m.b1 = params_.get(prefix + ".b1");
  m.w2 = params_.get(prefix + ".w2");
  m.b2 = params_.get(prefix + ".b2");
  return m;
}

AttentionParams ScnpModel::make_attention(const std::string& prefix,
                                          Rng& rng) {
  AttentionParams p = AttentionParams::init(cfg_.hidden_dim, cfg_.heads, rng);
  for (int h = 0; h < cfg_.heads; ++h) {
    params_.add(prefix + ".wq" + std::to_string(h),
                p.wq[static_cast<std::size_t>(h)]);
    params_.add(prefix + ".wk" + std::to_string(h),
                p.wk[static_cast<std::size_t>(h)]);
    params_.add(prefix + ".wv" + std::to_string(h),
                p.wv[static_cast<std::size_t>(h)]);
  }
  params_.add(prefix + ".wo", p.wo);
  params_.add(prefix + ".null", p.null_context);
  return p;
}

AttentionParams ScnpModel::wire_attention(const std::string& prefix) const {
  AttentionParams p;
  p.heads = cfg_.heads;
  p.model_dim = cfg_.hidden_dim;
  for (int h = 0; h < cfg_.heads; ++h) {
    p.wq.push_back(params_.get(prefix + ".wq" + std::to_string(h)));
    p.wk.push_back(params_.get(prefix + ".wk" + std::to_string(h)));
    p.wv.push_back(params_.get(prefix + ".wv" + std::to_string(h)));
  }
  p.wo = params_.get(prefix + ".wo");
  p.null_context = params_.get(prefix + ".null");
  return p;
}

ScnpModel::ScnpModel(ModelConfig cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const int d = cfg_.hidden_dim;
  const int cin = cfg_.fusion_in_channels();
  auto conv = [&](const std::string& name, std::int64_t out_c,
                  std::int64_t in_c) {
    std::vector<double> w(static_cast<std::size_t>(out_c * in_c * 9));
    const double s = 1.0 / std::sqrt(static_cast<double>(in_c * 9));
    for (auto& v : w) v = rng.normal() * s;
    Tensor t({out_c, in_c, 3, 3}, std::move(w), true);
    params_.add(name, t);
    params_.add(name + "_b", Tensor::zeros({out_c}, true));
    return t;
  };
  conv("fusion.deep1", d, cin);
  conv("fusion.deep2", d, d);
  conv("fusion.deep3", d, d);
  conv("fusion.shallow", d, cin);
  make_mlp("latent.embed", 3 + d, d, rng);
  make_mlp("ctx.embed", 3 + d, d, rng);
  make_mlp("tgt.embed", 2 + d, d, rng);
  make_mlp("dec.embed", 2 + d, d, rng);
  make_attention("latent.attn", rng);
  make_attention("ctx.attn", rng);
  make_attention("cross.attn", rng);
  auto mat = [&](const std::string& name, std::int64_t r, std::int64_t c) {
    std::vector<double> w(static_cast<std::size_t>(r * c));
    const double s = 1.0 / std::sqrt(static_cast<double>(r));
    for (auto& v : w) v = rng.normal() * s;
    params_.add(name, Tensor({r, c}, std::move(w), true));
    params_.add(name + "_b", Tensor::zeros({c}, true));
  };
  mat("latent.hidden", d, d);
  mat("latent.mu", d, cfg_.z_dim);
  mat("latent.sigma", d, cfg_.z_dim);
  mat("dec.hidden", 2 * d + cfg_.z_dim, d);
  mat("dec.mu", d, 1);
  mat("dec.sigma", d, 1);
  wire();
}

ScnpModel::ScnpModel(ModelConfig cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  wire();
}

void ScnpModel::wire() {
  const int d = cfg_.hidden_dim;
  const int cin = cfg_.fusion_in_channels();
  auto fetch = [&](const std::string& name, const Shape& want) {
    const Tensor& t = params_.get(name);
    if (t.shape() != want) {
      throw DataError("model/config mismatch for '" + name + "': checkpoint " +
                      shape_str(t.shape()) + " vs config " + shape_str(want));
    }
    return t;
  };
  conv_deep_ = fetch("fusion.deep1", {d, cin, 3, 3});
  conv_deep_b_ = fetch("fusion.deep1_b", {d});
  conv_deep2_ = fetch("fusion.deep2", {d, d, 3, 3});
  conv_deep2_b_ = fetch("fusion.deep2_b", {d});
  conv_deep3_ = fetch("fusion.deep3", {d, d, 3, 3});
  conv_deep3_b_ = fetch("fusion.deep3_b", {d});
  conv_shallow_ = fetch("fusion.shallow", {d, cin, 3, 3});
  conv_shallow_b_ = fetch("fusion.shallow_b", {d});
  latent_embed_ = wire_mlp("latent.embed");
  ctx_embed_ = wire_mlp("ctx.embed");
  tgt_embed_ = wire_mlp("tgt.embed");
  dec_embed_ = wire_mlp("dec.embed");
  attn_latent_ = wire_attention("latent.attn");
  attn_ctx_ = wire_attention("ctx.attn");
  attn_cross_ = wire_attention("cross.attn");
  latent_hidden_w_ = fetch("latent.hidden", {d, d});
  latent_hidden_b_ = fetch("latent.hidden_b", {d});
  latent_mu_w_ = fetch("latent.mu", {d, cfg_.z_dim});
  latent_mu_b_ = fetch("latent.mu_b", {cfg_.z_dim});
  latent_sigma_w_ = fetch("latent.sigma", {d, cfg_.z_dim});
  latent_sigma_b_ = fetch("latent.sigma_b", {cfg_.z_dim});
  dec_hidden_w_ = fetch("dec.hidden", {2 * d + cfg_.z_dim, d});
  dec_hidden_b_ = fetch("dec.hidden_b", {d});
  dec_mu_w_ = fetch("dec.mu", {d, 1});
  dec_mu_b_ = fetch("dec.mu_b", {1});
  dec_sigma_w_ = fetch("dec.sigma", {d, 1});
  dec_sigma_b_ = fetch("dec.sigma_b", {1});
}

Tensor ScnpModel::fuse_semantics(const Tensor& raw,
                                 const std::vector<std::uint8_t>& observed) const {
  if (raw.rank() != 3 || raw.dim(0) != cfg_.feature_dim + 1) {
    throw ShapeError("fuse_semantics: raw must be (feature_dim+1, H, W)");
  }
  const std::int64_t h = raw.dim(1), w = raw.dim(2);
  if (static_cast<std::int64_t>(observed.size()) != h * w) {
    throw ShapeError("fuse_semantics: observed mask size mismatch");
  }
  std::vector<double> plane(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i) {
    plane[i] = observed[i] ? 1.0 : 0.0;
  }
  Tensor input = concat({raw, Tensor({1, h, w}, std::move(plane))}, 0);
  Tensor deep = conv2d(input, conv_deep_, conv_deep_b_, 1);
  deep = conv2d(relu(deep), conv_deep2_, conv_deep2_b_, 2);
  deep = conv2d(relu(deep), conv_deep3_, conv_deep3_b_, 4);
  Tensor shallow = conv2d(input, conv_shallow_, conv_shallow_b_, 1);
  return add(deep, shallow);
}

Tensor ScnpModel::cell_features(const Tensor& fused_chw) {
  if (fused_chw.rank() != 3) {
    throw ShapeError("cell_features: expects (C,H,W)");
  }
  const std::int64_t c = fused_chw.dim(0);
  const std::int64_t hw = fused_chw.dim(1) * fused_chw.dim(2);
  return transpose2d(reshape(fused_chw, {c, hw}));
}

namespace {

Tensor features_or_zero(const Tensor& features, std::int64_t n,
                        std::int64_t dim, const char* who) {
  if (!features.defined()) return Tensor::zeros({n, dim});
  if (features.rank() != 2 || features.dim(0) != n || features.dim(1) != dim) {
    throw ShapeError(std::string(who) + ": features must be (" +
                     std::to_string(n) + "," + std::to_string(dim) + ")");
  }
  return features;
}

}  // namespace

ScnpModel::LatentTensors ScnpModel::encode_latent_t(
    const std::vector<std::pair<double, double>>& xy,
    const std::vector<double>& heights, const Tensor& features) const {
  const std::int64_t n = static_cast<std::int64_t>(xy.size());
  if (n == 0) throw Error("encode_latent: empty set");
  if (heights.size() != xy.size()) {
    throw ShapeError("encode_latent: heights/coords size mismatch");
  }
  Tensor feats = features_or_zero(features, n, cfg_.hidden_dim, "encode_latent");
  const auto perm = canonical_order(xy);
  std::vector<std::pair<double, double>> sorted_xy(xy.size());
  std::vector<double> sorted_h(heights.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    sorted_xy[i] = xy[static_cast<std::size_t>(perm[i])];
    sorted_h[i] = heights[static_cast<std::size_t>(perm[i])];
  }
  Tensor sorted_feats = gather_rows(feats, perm);
  Tensor input = concat(
      {coords_tensor(sorted_xy), column_tensor(sorted_h), sorted_feats}, 1);
  Tensor embedded = latent_embed_.apply(input);
  const NeighborLists nb =
      build_neighbor_lists(sorted_xy, sorted_xy, cfg_.epsilon, cfg_.k_max);
  Tensor attended = multihead_bq(embedded, embedded, attn_latent_, nb);
  Tensor pooled = reshape(mean(attended, 0), {1, cfg_.hidden_dim});
  Tensor hidden = relu(add(matmul(pooled, latent_hidden_w_), latent_hidden_b_));
  LatentTensors out;
  out.mu = add(matmul(hidden, latent_mu_w_), latent_mu_b_);
  Tensor raw_sigma = add(matmul(hidden, latent_sigma_w_), latent_sigma_b_);
  out.sigma = add(softplus(raw_sigma), Tensor::scalar(cfg_.sigma_min));
  return out;
}

LatentDist ScnpModel::encode_latent(
    const std::vector<std::pair<double, double>>& xy,
    const std::vector<double>& heights, const Tensor& features) const {
  LatentTensors t = encode_latent_t(xy, heights, features);
  return LatentDist{t.mu.data(), t.sigma.data()};
}

Tensor ScnpModel::encode_deterministic(const ContextSet& context,
                                       const TargetSet& targets) const {
  const std::int64_t t_count = static_cast<std::int64_t>(targets.size());
  if (t_count == 0) throw Error("encode_deterministic: empty target set");
  Tensor t_feats = features_or_zero(targets.features, t_count,
                                    cfg_.hidden_dim, "encode_deterministic");
  Tensor t_embed =
      tgt_embed_.apply(concat({coords_tensor(targets.xy), t_feats}, 1));
  const std::int64_t c_count = static_cast<std::int64_t>(context.size());
  if (c_count == 0) {
    // no context anywhere: every target goes through the null embedding
    NeighborLists empty_nb(static_cast<std::size_t>(t_count));
    Tensor dummy = Tensor::zeros({1, cfg_.hidden_dim});
    return multihead_bq(t_embed, dummy, attn_cross_, empty_nb);
  }
  if (context.heights.size() != context.xy.size()) {
    throw ShapeError("encode_deterministic: context heights size mismatch");
  }
  Tensor c_feats = features_or_zero(context.features, c_count,
                                    cfg_.hidden_dim, "encode_deterministic");
  const auto perm = canonical_order(context.xy);
  std::vector<std::pair<double, double>> sorted_xy(context.xy.size());
  std::vector<double> sorted_h(context.heights.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    sorted_xy[i] = context.xy[static_cast<std::size_t>(perm[i])];
    sorted_h[i] = context.heights[static_cast<std::size_t>(perm[i])];
  }
  Tensor sorted_feats = gather_rows(c_feats, perm);
  Tensor c_input = concat(
      {coords_tensor(sorted_xy), column_tensor(sorted_h), sorted_feats}, 1);
  Tensor c_embed = ctx_embed_.apply(c_input);
  const NeighborLists nb_cc =
      build_neighbor_lists(sorted_xy, sorted_xy, cfg_.epsilon, cfg_.k_max);
  Tensor refined = multihead_bq(c_embed, c_embed, attn_ctx_, nb_cc);
  const NeighborLists nb_tc =
      build_neighbor_lists(targets.xy, sorted_xy, cfg_.epsilon, cfg_.k_max);
  return multihead_bq(t_embed, refined, attn_cross_, nb_tc);
}

ScnpModel::DecodeTensors ScnpModel::decode(const TargetSet& targets,
                                           const Tensor& r,
                                           const Tensor& z) const {
  const std::int64_t t_count = static_cast<std::int64_t>(targets.size());
  if (r.rank() != 2 || r.dim(0) != t_count || r.dim(1) != cfg_.hidden_dim) {
    throw ShapeError("decode: r must be (T, hidden_dim)");
  }
  if (z.size() != cfg_.z_dim) {
    throw ShapeError("decode: z must have z_dim elements");
  }
  Tensor t_feats =
      features_or_zero(targets.features, t_count, cfg_.hidden_dim, "decode");
  Tensor embedded =
      dec_embed_.apply(concat({coords_tensor(targets.xy), t_feats}, 1));
  Tensor z_row = reshape(z, {1, cfg_.z_dim});
  Tensor z_rep = gather_rows(
      z_row, std::vector<std::int64_t>(static_cast<std::size_t>(t_count), 0));
  Tensor input = concat({embedded, r, z_rep}, 1);
  Tensor hidden = relu(add(matmul(input, dec_hidden_w_), dec_hidden_b_));
  DecodeTensors out;
  out.mu = add(matmul(hidden, dec_mu_w_), dec_mu_b_);
  Tensor raw_sigma = add(matmul(hidden, dec_sigma_w_), dec_sigma_b_);
  out.sigma = add(softplus(raw_sigma), Tensor::scalar(cfg_.sigma_min));
  return out;
}

ElboResult ScnpModel::elbo_loss(const ContextSet& context,
                                const TargetSet& targets,
                                const std::vector<double>& target_heights,
                                const std::vector<double>& noise) const {
  if (target_heights.size() != targets.size()) {
    throw UsageError("elbo_loss: every target needs a ground-truth height");
  }
  if (static_cast<int>(noise.size()) != cfg_.z_dim) {
    throw UsageError("elbo_loss: noise must have z_dim entries");
  }
  LatentTensors lat_c =
      encode_latent_t(context.xy, context.heights, context.features);
  LatentTensors lat_t =
      encode_latent_t(targets.xy, target_heights, targets.features);
  Tensor noise_row =
      Tensor({1, cfg_.z_dim}, std::vector<double>(noise.begin(), noise.end()));
  Tensor z = add(lat_t.mu, mul(lat_t.sigma, noise_row));
  Tensor r = encode_deterministic(context, targets);
  DecodeTensors dec = decode(targets, r, reshape(z, {cfg_.z_dim}));
  // negative log-likelihood summed over targets
  Tensor h = column_tensor(target_heights);
  Tensor diff = sub(h, dec.mu);
  Tensor log_sigma = log(dec.sigma);
  Tensor inv_var = exp(mul(log_sigma, Tensor::scalar(-2.0)));
  Tensor nll_cell =
      add(add(log_sigma,
              mul(mul(mul(diff, diff), inv_var), Tensor::scalar(0.5))),
          Tensor::scalar(kHalfLog2Pi));
  Tensor nll_sum = sum_all(nll_cell);
  // KL(q(z|s_T) || q(z|s_C)), closed form for diagonal Gaussians
  Tensor log_st = log(lat_t.sigma);
  Tensor log_sc = log(lat_c.sigma);
  Tensor dmu = sub(lat_t.mu, lat_c.mu);
  Tensor inv_var_c = exp(mul(log_sc, Tensor::scalar(-2.0)));
  Tensor kl_cell =
      add(sub(log_sc, log_st),
          sub(mul(mul(add(mul(lat_t.sigma, lat_t.sigma), mul(dmu, dmu)),
                      inv_var_c),
                  Tensor::scalar(0.5)),
              Tensor::scalar(0.5)));
  Tensor kl = sum_all(kl_cell);
  ElboResult res;
  res.loss = add(nll_sum, kl);
  res.nll_term = nll_sum.value();
  res.kl_term = kl.value();
  res.elbo = -res.loss.value();
  return res;
}

PredictiveField ScnpModel::predict(const ContextSet& context,
                                   const TargetSet& targets, int n_samples,
                                   std::uint64_t seed,
                                   bool keep_samples) const {
  if (n_samples < 1) throw UsageError("predict: n_samples must be >= 1");
  if (targets.size() == 0) throw UsageError("predict: empty target set");
  const bool have_semantics =
      targets.features.defined() || (context.features.defined());
  if (context.size() == 0 && !have_semantics) {
    throw UsageError(
        "predict: empty context and empty semantics simultaneously");
  }
  std::vector<double> mu_c(static_cast<std::size_t>(cfg_.z_dim), 0.0);
  std::vector<double> sigma_c(static_cast<std::size_t>(cfg_.z_dim), 1.0);
  if (context.size() > 0) {
    LatentDist lat =
        encode_latent(context.xy, context.heights, context.features);
    mu_c = lat.mu;
    sigma_c = lat.sigma;
  }
  Tensor r = encode_deterministic(context, targets);
  const std::int64_t t_count = static_cast<std::int64_t>(targets.size());
  Rng rng(seed);
  std::vector<std::vector<double>> mu_samples;
  std::vector<std::vector<double>> var_samples;
  mu_samples.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    std::vector<double> zvals(static_cast<std::size_t>(cfg_.z_dim));
    for (int j = 0; j < cfg_.z_dim; ++j) {
      zvals[static_cast<std::size_t>(j)] =
          mu_c[static_cast<std::size_t>(j)] +
          sigma_c[static_cast<std::size_t>(j)] * rng.normal();
    }
    Tensor z = Tensor({cfg_.z_dim}, std::move(zvals));
    DecodeTensors dec = decode(targets, r, z);
    mu_samples.push_back(dec.mu.data());
    std::vector<double> var(dec.sigma.data().size());
    for (std::size_t i = 0; i < var.size(); ++i) {
      var[i] = dec.sigma.data()[i] * dec.sigma.data()[i];
    }
    var_samples.push_back(std::move(var));
  }
  PredictiveField out;
  out.mean.assign(static_cast<std::size_t>(t_count), 0.0);
  out.stddev.assign(static_cast<std::size_t>(t_count), 0.0);
  const double inv_s = 1.0 / static_cast<double>(n_samples);
  for (std::int64_t i = 0; i < t_count; ++i) {
    double m = 0.0, v = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      m += mu_samples[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
      v += var_samples[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
    }
    m *= inv_s;
    v *= inv_s;
    double spread = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      const double d =
          mu_samples[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] - m;
      spread += d * d;
    }
    spread *= inv_s;
    out.mean[static_cast<std::size_t>(i)] = m;
    out.stddev[static_cast<std::size_t>(i)] =
        std::max(cfg_.sigma_min, std::sqrt(v + spread));
  }
  if (keep_samples) out.sample_means = std::move(mu_samples);
  return out;
}

InstanceSample sample_context_target(const ElevationGrid& context_heights,
                                     const std::vector<std::uint8_t>& gt_valid,
                                     const ModelConfig& cfg, bool training,
                                     Rng& rng) {
  const std::size_t cells = context_heights.values.size();
  if (gt_valid.size() != cells) {
    throw UsageError("sample_context_target: mask size mismatch");
  }
  std::vector<std::int64_t> gt_cells;
  for (std::size_t i = 0; i < cells; ++i) {
    if (gt_valid[i]) gt_cells.push_back(static_cast<std::int64_t>(i));
  }
  if (gt_cells.empty()) {
    throw DataError("sample_context_target: no GT-valid cells");
  }
  InstanceSample out;
  if (!training) {
    for (std::size_t i = 0; i < cells; ++i) {
      if (context_heights.valid[i]) {
        out.context_cells.push_back(static_cast<std::int64_t>(i));
      }
    }
    out.target_cells = gt_cells;
    return out;
  }
  // context pool: observed cells that can also serve as targets, so the
  // context-in-targets convention stays satisfiable
  std::vector<std::int64_t> pool;
  for (std::int64_t i : gt_cells) {
    if (context_heights.valid[static_cast<std::size_t>(i)]) pool.push_back(i);
  }
  if (pool.empty()) {
    throw DataError("sample_context_target: no observed GT-valid cells");
  }
  const std::int64_t drawn = rng.uniform_int(256, cfg.max_context);
  const std::int64_t ctx_size =
      std::min<std::int64_t>({drawn, static_cast<std::int64_t>(pool.size()),
                              static_cast<std::int64_t>(cfg.max_targets)});
  // partial Fisher-Yates over the pool
  for (std::int64_t i = 0; i < ctx_size; ++i) {
    const std::int64_t j =
        rng.uniform_int(i, static_cast<std::int64_t>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    out.context_cells.push_back(pool[static_cast<std::size_t>(i)]);
  }
  std::vector<std::uint8_t> in_context(cells, 0);
  for (std::int64_t i : out.context_cells) {
    in_context[static_cast<std::size_t>(i)] = 1;
  }
  out.target_cells = out.context_cells;
  std::vector<std::int64_t> rest;
  for (std::int64_t i : gt_cells) {
    if (!in_context[static_cast<std::size_t>(i)]) rest.push_back(i);
  }
  const std::int64_t want_extra =
      std::min<std::int64_t>(static_cast<std::int64_t>(cfg.max_targets) - ctx_size,
                             static_cast<std::int64_t>(rest.size()));
  for (std::int64_t i = 0; i < want_extra; ++i) {
    const std::int64_t j =
        rng.uniform_int(i, static_cast<std::int64_t>(rest.size()) - 1);
    std::swap(rest[static_cast<std::size_t>(i)], rest[static_cast<std::size_t>(j)]);
    out.target_cells.push_back(rest[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace scnp
