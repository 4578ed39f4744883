#include "scnp/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "scnp/spatial_index.hpp"

namespace scnp {

NeighborLists build_neighbor_lists(
    const std::vector<std::pair<double, double>>& queries,
    const std::vector<std::pair<double, double>>& keys, double epsilon,
    int k_max) {
  HashGrid grid(keys, epsilon);
  NeighborLists out;
  out.reserve(queries.size());
  for (const auto& [x, y] : queries) {
    out.push_back(grid.query_ball(x, y, k_max));
  }
  return out;
}

namespace {

// Softmax weights of one query over its neighbor logits; shared by forward
// and backward so both passes see identical arithmetic.
void neighbor_weights(const double* q, const double* keys, std::int64_t d,
                      const std::vector<int>& nb, double inv_scale,
                      std::vector<double>* w) {
  const std::size_t k = nb.size();
  w->resize(k);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    const double* krow = keys + static_cast<std::int64_t>(nb[j]) * d;
    double s = 0.0;
    for (std::int64_t c = 0; c < d; ++c) s += q[c] * krow[c];
    (*w)[j] = s * inv_scale;
    mx = std::max(mx, (*w)[j]);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    (*w)[j] = std::exp((*w)[j] - mx);
    denom += (*w)[j];
  }
  for (std::size_t j = 0; j < k; ++j) (*w)[j] /= denom;
}

}  // namespace

Tensor ball_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                      const Tensor& null_row, const NeighborLists& neighbors,
                      double scale) {
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2) {
    throw ShapeError("ball_attention: Q, K, V must be rank 2");
  }
  const std::int64_t M = Q.dim(0), d = Q.dim(1), N = K.dim(0);
  if (K.dim(1) != d || V.dim(1) != d || V.dim(0) != N) {
    throw ShapeError("ball_attention: K/V shapes must be (N," +
                     std::to_string(d) + ")");
  }
  if (null_row.size() != d) {
    throw ShapeError("ball_attention: null row must have " +
                     std::to_string(d) + " elements");
  }
  if (static_cast<std::int64_t>(neighbors.size()) != M) {
    throw ShapeError("ball_attention: one neighbor list per query required");
  }
  for (const auto& nb : neighbors) {
    for (int j : nb) {
      if (j < 0 || j >= N) {
        throw ShapeError("ball_attention: neighbor index out of range");
      }
    }
  }
  const double inv_scale = 1.0 / scale;
  std::vector<double> out(static_cast<std::size_t>(M * d));
  std::vector<double> w;
  for (std::int64_t i = 0; i < M; ++i) {
    double* orow = out.data() + i * d;
    const auto& nb = neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) {
      const double* nrow = null_row.raw();
      for (std::int64_t c = 0; c < d; ++c) orow[c] = nrow[c];
      continue;
    }
    neighbor_weights(Q.raw() + i * d, K.raw(), d, nb, inv_scale, &w);
    for (std::int64_t c = 0; c < d; ++c) orow[c] = 0.0;
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const double* vrow = V.raw() + static_cast<std::int64_t>(nb[j]) * d;
      const double wj = w[j];
      for (std::int64_t c = 0; c < d; ++c) orow[c] += wj * vrow[c];
    }
  }
  for (double v : out) {
    if (!std::isfinite(v)) {
      throw NumericError("ball_attention: non-finite value in output");
    }
  }
  Tensor result({M, d}, std::move(out));
  Tape* tp = Tape::active();
  if (tp && tp->any_tracked({&Q, &K, &V, &null_row})) {
    auto q_store = Q.storage();
    auto k_store = K.storage();
    auto v_store = V.storage();
    auto nb_copy = std::make_shared<NeighborLists>(neighbors);
    std::vector<int> ids{tp->input_node(Q), tp->input_node(K),
                         tp->input_node(V), tp->input_node(null_row)};
    tp->record(
        "ball_attention", ids, result,
        [=](Tape& t, const std::vector<double>& gout) {
          std::vector<double> gq(static_cast<std::size_t>(M * d), 0.0);
          std::vector<double> gk(static_cast<std::size_t>(N * d), 0.0);
          std::vector<double> gv(static_cast<std::size_t>(N * d), 0.0);
          std::vector<double> gnull(static_cast<std::size_t>(d), 0.0);
          std::vector<double> w, dw, ds;
          for (std::int64_t i = 0; i < M; ++i) {
            const double* go = gout.data() + i * d;
            const auto& nb = (*nb_copy)[static_cast<std::size_t>(i)];
            if (nb.empty()) {
              for (std::int64_t c = 0; c < d; ++c) gnull[static_cast<std::size_t>(c)] += go[c];
              continue;
            }
            const double* qrow = q_store->data() + i * d;
            neighbor_weights(qrow, k_store->data(), d, nb, inv_scale, &w);
            const std::size_t k = nb.size();
            dw.resize(k);
            ds.resize(k);
            double dot_wd = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
              const double* vrow = v_store->data() + static_cast<std::int64_t>(nb[j]) * d;
              double s = 0.0;
              for (std::int64_t c = 0; c < d; ++c) s += vrow[c] * go[c];
              dw[j] = s;
              dot_wd += w[j] * s;
            }
            for (std::size_t j = 0; j < k; ++j) {
              ds[j] = w[j] * (dw[j] - dot_wd) * inv_scale;
            }
            double* gqrow = gq.data() + i * d;
            for (std::size_t j = 0; j < k; ++j) {
              const std::int64_t r = static_cast<std::int64_t>(nb[j]);
              const double* krow = k_store->data() + r * d;
              double* gkrow = gk.data() + r * d;
              double* gvrow = gv.data() + r * d;
              for (std::int64_t c = 0; c < d; ++c) {
                gqrow[c] += ds[j] * krow[c];
                gkrow[c] += ds[j] * qrow[c];
                gvrow[c] += w[j] * go[c];
              }
            }
          }
          if (ids[0] >= 0) t.accumulate(ids[0], gq);
          if (ids[1] >= 0) t.accumulate(ids[1], gk);
          if (ids[2] >= 0) t.accumulate(ids[2], gv);
          if (ids[3] >= 0) t.accumulate(ids[3], gnull);
        });
  }
  return result;
}

Tensor bq_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                    const Tensor& null_row, const NeighborLists& neighbors) {
  return ball_attention(Q, K, V, null_row, neighbors,
                        std::sqrt(static_cast<double>(Q.dim(1))));
}

AttentionParams AttentionParams::init(int model_dim, int heads, Rng& rng) {
  if (model_dim % heads != 0) {
    throw UsageError("AttentionParams: model dim must be divisible by heads");
  }
  const int dh = model_dim / heads;
  auto mat = [&](std::int64_t r, std::int64_t c) {
    std::vector<double> d(static_cast<std::size_t>(r * c));
    const double s = 1.0 / std::sqrt(static_cast<double>(r));
    for (auto& v : d) v = rng.normal() * s;
    return Tensor({r, c}, std::move(d), true);
  };
  AttentionParams p;
  p.heads = heads;
  p.model_dim = model_dim;
  for (int h = 0; h < heads; ++h) {
    p.wq.push_back(mat(model_dim, dh));
    p.wk.push_back(mat(model_dim, dh));
    p.wv.push_back(mat(model_dim, dh));
  }
  p.wo = mat(model_dim, model_dim);
  p.null_context = Tensor::zeros({heads, dh}, true);
  return p;
}

Tensor multihead_bq(const Tensor& q_in, const Tensor& kv_in,
                    const AttentionParams& params,
                    const NeighborLists& neighbors) {
  const int heads = params.heads;
  const int dh = params.model_dim / heads;
  std::vector<Tensor> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = matmul(q_in, params.wq[static_cast<std::size_t>(h)]);
    Tensor kh = matmul(kv_in, params.wk[static_cast<std::size_t>(h)]);
    Tensor vh = matmul(kv_in, params.wv[static_cast<std::size_t>(h)]);
    Tensor nh = gather_rows(params.null_context, {h});
    head_out.push_back(ball_attention(qh, kh, vh, nh, neighbors,
                                      std::sqrt(static_cast<double>(dh))));
  }
  Tensor cat = heads == 1 ? head_out[0] : concat(head_out, 1);
  return matmul(cat, params.wo);
}

Tensor global_attention_masked(const Tensor& Q, const Tensor& K,
                               const Tensor& V,
                               const std::vector<std::vector<bool>>& mask) {
  const std::int64_t M = Q.dim(0), d = Q.dim(1), N = K.dim(0);
  if (static_cast<std::int64_t>(mask.size()) != M) {
    throw ShapeError("global_attention_masked: mask must have M rows");
  }
  // -1e30 underflows to exact zero weight after the max subtraction, while
  // keeping every forward value finite.
  std::vector<double> bias(static_cast<std::size_t>(M * N), 0.0);
  for (std::int64_t i = 0; i < M; ++i) {
    const auto& row = mask[static_cast<std::size_t>(i)];
    if (static_cast<std::int64_t>(row.size()) != N) {
      throw ShapeError("global_attention_masked: mask row length mismatch");
    }
    bool any = false;
    for (std::int64_t j = 0; j < N; ++j) {
      if (row[static_cast<std::size_t>(j)]) {
        any = true;
      } else {
        bias[static_cast<std::size_t>(i * N + j)] = -1e30;
      }
    }
    if (!any) {
      throw UsageError(
          "global_attention_masked: query " + std::to_string(i) +
          " has an all-false mask row; route it through the null-context path");
    }
  }
  Tensor logits = matmul(Q, transpose2d(K));
  logits = mul(logits, Tensor::scalar(1.0 / std::sqrt(static_cast<double>(d))));
  logits = add(logits, Tensor({M, N}, std::move(bias)));
  Tensor weights = softmax(logits, 1);
  return matmul(weights, V);
}

double flops_count(double m, double n, double k_mean, double d, double heads,
                   AttentionMode mode) {
  if (m <= 0 || n <= 0 || k_mean <= 0 || d <= 0 || heads <= 0) {
    throw UsageError("flops_count: all sizes must be positive");
  }
  const double projections = 3.0 * n * d * d + m * d * d;
  const double output = m * d * d;
  const double pairs = mode == AttentionMode::kGlobal ? n : k_mean;
  const double scores_and_sum = 2.0 * m * pairs * d;
  return projections + output + scores_and_sum;
}

}  // namespace scnp
