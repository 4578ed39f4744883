#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scnp/attention.hpp"
#include "scnp/grid.hpp"
#include "scnp/predictive.hpp"
#include "scnp/rng.hpp"
#include "scnp/tensor.hpp"

namespace scnp {

struct ModelConfig {
  int hidden_dim = 64;    // width of embeddings, attention, fused features
  int heads = 4;
  double epsilon = 2.0;   // ball-query radius in meters
  int k_max = 32;
  int z_dim = 64;
  int feature_dim = 8;    // raw semantic channels entering fusion
  double sigma_min = 1e-3;
  int max_context = 7000;
  int max_targets = 4096;
  bool use_semantics = true;

  // Fusion sees the raw channels plus a confidence plane and the observed
  // mask plane.
  int fusion_in_channels() const { return feature_dim + 2; }
  void validate() const;
};

// Observed cells conditioning the process: BEV coordinates, estimated
// heights, per-point features. `features` may come straight off the fusion
// tape during training; an undefined tensor means all-zero features.
struct ContextSet {
  std::vector<std::pair<double, double>> xy;
  std::vector<double> heights;
  Tensor features;  // (C, hidden_dim)

  std::size_t size() const { return xy.size(); }
};

struct TargetSet {
  std::vector<std::pair<double, double>> xy;
  Tensor features;  // (T, hidden_dim)

  std::size_t size() const { return xy.size(); }
};

struct LatentDist {
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct ElboResult {
  Tensor loss;    // scalar, the negative ELBO
  double elbo = 0.0;
  double nll_term = 0.0;  // negative predictive log-likelihood
  double kl_term = 0.0;
};

// The semantic-conditioned attentive neural process. Three ball-query
// attention layers: context self-attention and target-to-context
// cross-attention on the deterministic path, set self-attention on the
// latent path. Gaussian-factorized decoder with a softplus variance floor.
class ScnpModel {
 public:
  ScnpModel(ModelConfig cfg, std::uint64_t init_seed);
  ScnpModel(ModelConfig cfg, ParamStore params);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Two-path convolutional fusion: a three-layer dilated path spreading
  // observed features into unobserved cells plus a one-layer local path,
  // summed. `raw` carries the semantic channels plus a confidence plane
  // (feature_dim + 1, H, W); the observed mask enters as one more plane.
  // Output (hidden_dim, H, W).
  Tensor fuse_semantics(const Tensor& raw,
                        const std::vector<std::uint8_t>& observed) const;
  // Cell-major view (H*W, hidden_dim) for context/target feature lookup.
  static Tensor cell_features(const Tensor& fused_chw);

  struct LatentTensors {
    Tensor mu;     // (1, z_dim)
    Tensor sigma;  // (1, z_dim)
  };
  // Permutation-invariant set encoder; the set is canonically sorted before
  // any reduction, making the result independent of input order bit for bit.
  LatentTensors encode_latent_t(const std::vector<std::pair<double, double>>& xy,
                                const std::vector<double>& heights,
                                const Tensor& features) const;
  LatentDist encode_latent(const std::vector<std::pair<double, double>>& xy,
                           const std::vector<double>& heights,
                           const Tensor& features) const;

  // Deterministic path: per-target context summary (T, hidden_dim). Targets
  // with an empty epsilon-ball receive the trainable null-context embedding.
  Tensor encode_deterministic(const ContextSet& context,
                              const TargetSet& targets) const;

  struct DecodeTensors {
    Tensor mu;     // (T, 1)
    Tensor sigma;  // (T, 1)
  };
  DecodeTensors decode(const TargetSet& targets, const Tensor& r,
                       const Tensor& z) const;

  // Negative updated ELBO with the reparameterized latent sample
  // z = mu_T + sigma_T * noise. KL is the closed-form diagonal Gaussian
  // divergence KL(q(z|s_T) || q(z|s_C)).
  ElboResult elbo_loss(const ContextSet& context, const TargetSet& targets,
                       const std::vector<double>& target_heights,
                       const std::vector<double>& noise) const;

  // Prediction conditioned on the context latent q(z|s_C). Reported
  // sigma^2 = mean of per-sample variances + variance of sample means.
  // With an empty context the latent falls back to a unit Gaussian; the
  // deterministic path already routes through the null embedding.
  PredictiveField predict(const ContextSet& context, const TargetSet& targets,
                          int n_samples, std::uint64_t seed,
                          bool keep_samples = false) const;

 private:
  struct Mlp2 {
    Tensor w1, b1, w2, b2;
    Tensor apply(const Tensor& x) const;
  };
  Mlp2 make_mlp(const std::string& prefix, int in_dim, int out_dim, Rng& rng);
  Mlp2 wire_mlp(const std::string& prefix) const;
  AttentionParams make_attention(const std::string& prefix, Rng& rng);
  AttentionParams wire_attention(const std::string& prefix) const;
  void wire();

  ModelConfig cfg_;
  ParamStore params_;
  // wired views over params_
  Mlp2 latent_embed_, ctx_embed_, tgt_embed_, dec_embed_;
  Tensor latent_hidden_w_, latent_hidden_b_;
  Tensor latent_mu_w_, latent_mu_b_, latent_sigma_w_, latent_sigma_b_;
  Tensor dec_hidden_w_, dec_hidden_b_;
  Tensor dec_mu_w_, dec_mu_b_, dec_sigma_w_, dec_sigma_b_;
  AttentionParams attn_latent_, attn_ctx_, attn_cross_;
  Tensor conv_deep_, conv_deep_b_, conv_deep2_, conv_deep2_b_, conv_deep3_,
      conv_deep3_b_, conv_shallow_, conv_shallow_b_;
};

// One training/eval instance drawn from a frame: flat cell ids into the
// grid. Training mode samples capped subsets with context included in the
// targets; eval mode takes every observed cell as context and every
// GT-valid cell as a target.
struct InstanceSample {
  std::vector<std::int64_t> context_cells;
  std::vector<std::int64_t> target_cells;
};

InstanceSample sample_context_target(const ElevationGrid& context_heights,
                                     const std::vector<std::uint8_t>& gt_valid,
                                     const ModelConfig& cfg, bool training,
                                     Rng& rng);

}  // namespace scnp
