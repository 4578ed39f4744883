#pragma once

#include <cstdint>
#include <vector>

#include "scnp/rng.hpp"
#include "scnp/tensor.hpp"

namespace scnp {

// Per-query neighbor index lists into the key/value rows. Lists may be
// empty; such queries take the learned null-context path.
using NeighborLists = std::vector<std::vector<int>>;

// Builds neighbor lists by radius query of `queries` against `keys` in raw
// BEV meters.
NeighborLists build_neighbor_lists(
    const std::vector<std::pair<double, double>>& queries,
    const std::vector<std::pair<double, double>>& keys, double epsilon,
    int k_max);

// Scaled dot-product attention restricted per query to its neighbor list.
// Q (M,d), K,V (N,d), null_row (d) or (1,d) replaces rows whose list is
// empty. `scale` is the logit divisor (sqrt of the key dim). Differentiable
// in Q, K, V and null_row.
Tensor ball_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                      const Tensor& null_row, const NeighborLists& neighbors,
                      double scale);

// Single-layer ball-query attention at full width; scale = sqrt(D).
Tensor bq_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                    const Tensor& null_row, const NeighborLists& neighbors);

// Projection weights of one multihead ball-query attention layer.
// null_context is the trainable vector handed to queries with empty balls,
// stored as (heads, D/heads).
struct AttentionParams {
  std::vector<Tensor> wq, wk, wv;  // heads x (D, D/heads)
  Tensor wo;                       // (D, D)
  Tensor null_context;             // (heads, D/heads)
  int heads = 4;
  int model_dim = 64;

  static AttentionParams init(int model_dim, int heads, Rng& rng);
};

// Multihead ball-query attention: per-head projections, shared neighbor
// lists, concat, output projection.
Tensor multihead_bq(const Tensor& q_in, const Tensor& kv_in,
                    const AttentionParams& params,
                    const NeighborLists& neighbors);

// Dense reference: softmax attention with disallowed logits forced to a
// large negative constant. Errors on any all-false mask row; those queries
// must use the null-context path instead.
Tensor global_attention_masked(const Tensor& Q, const Tensor& K,
                               const Tensor& V,
                               const std::vector<std::vector<bool>>& mask);

enum class AttentionMode { kGlobal, kBall };

// Analytic multiply-accumulate count for one attention layer.
double flops_count(double m, double n, double k_mean, double d, double heads,
                   AttentionMode mode);

}  // namespace scnp
