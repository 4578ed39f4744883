#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "scnp/attention.hpp"
#include "scnp/rng.hpp"

using namespace scnp;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> d(static_cast<std::size_t>(shape_size(shape)));
  for (auto& v : d) v = rng.normal() * scale;
  return Tensor(std::move(shape), std::move(d));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data()[static_cast<std::size_t>(i)] -
                             b.data()[static_cast<std::size_t>(i)]));
  }
  return m;
}

}  // namespace

TEST_CASE("singleton neighbor copies the value row") {
  Rng rng(1);
  Tensor Q = random_tensor({3, 4}, rng);
  Tensor K = random_tensor({5, 4}, rng);
  Tensor V = random_tensor({5, 4}, rng);
  Tensor null_row = Tensor::zeros({4});
  NeighborLists nb{{2}, {0}, {4}};
  Tensor out = bq_attention(Q, K, V, null_row, nb);
  for (std::int64_t i = 0; i < 3; ++i) {
    const int j = nb[static_cast<std::size_t>(i)][0];
    for (std::int64_t c = 0; c < 4; ++c) {
      CHECK(out.at({i, c}) == V.at({j, c}));
    }
  }
}

TEST_CASE("identical key rows average the value rows") {
  Tensor Q({1, 2}, {0.3, -0.7});
  Tensor K({2, 2}, {1.0, 2.0, 1.0, 2.0});
  Tensor V({2, 2}, {4.0, 0.0, 0.0, 6.0});
  Tensor null_row = Tensor::zeros({2});
  NeighborLists nb{{0, 1}};
  Tensor out = bq_attention(Q, K, V, null_row, nb);
  CHECK(out.at({0, 0}) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(out.at({0, 1}) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("covering ball equals dense global attention within 1e-10") {
  Rng rng(9);
  const int m = 64, n = 256, d = 16;
  std::vector<std::pair<double, double>> q_pts, k_pts;
  for (int i = 0; i < m; ++i) {
    q_pts.emplace_back(rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0));
  }
  for (int i = 0; i < n; ++i) {
    k_pts.emplace_back(rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0));
  }
  Tensor Q = random_tensor({m, d}, rng);
  Tensor K = random_tensor({n, d}, rng);
  Tensor V = random_tensor({n, d}, rng);
  Tensor null_row = Tensor::zeros({d});
  NeighborLists nb = build_neighbor_lists(q_pts, k_pts, 100.0, n);
  Tensor ball = bq_attention(Q, K, V, null_row, nb);
  std::vector<std::vector<bool>> mask(m, std::vector<bool>(n, true));
  Tensor dense = global_attention_masked(Q, K, V, mask);
  CHECK(max_abs_diff(ball, dense) < 1e-10);
}

TEST_CASE("epsilon-ball mask reproduces bq_attention when under the cap") {
  Rng rng(21);
  const int m = 40, n = 120, d = 8;
  std::vector<std::pair<double, double>> q_pts, k_pts;
  for (int i = 0; i < m; ++i) {
    q_pts.emplace_back(rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0));
  }
  for (int i = 0; i < n; ++i) {
    k_pts.emplace_back(rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0));
  }
  const double eps = 4.0;
  NeighborLists nb = build_neighbor_lists(q_pts, k_pts, eps, n);
  Tensor Q = random_tensor({m, d}, rng);
  Tensor K = random_tensor({n, d}, rng);
  Tensor V = random_tensor({n, d}, rng);
  Tensor null_row = random_tensor({d}, rng);
  Tensor ball = bq_attention(Q, K, V, null_row, nb);
  std::vector<std::vector<bool>> mask(m, std::vector<bool>(n, false));
  for (int i = 0; i < m; ++i) {
    for (int j : nb[static_cast<std::size_t>(i)]) {
      mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
    }
  }
  // compare only rows with at least one neighbor; empty rows take the null
  // path, which the dense oracle cannot represent
  for (int i = 0; i < m; ++i) {
    if (nb[static_cast<std::size_t>(i)].empty()) {
      for (std::int64_t c = 0; c < d; ++c) {
        CHECK(ball.at({i, c}) == null_row.data()[static_cast<std::size_t>(c)]);
      }
      mask[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(n), true);
    }
  }
  Tensor dense = global_attention_masked(Q, K, V, mask);
  for (int i = 0; i < m; ++i) {
    if (nb[static_cast<std::size_t>(i)].empty()) continue;
    for (std::int64_t c = 0; c < d; ++c) {
      CHECK(std::abs(ball.at({i, c}) - dense.at({i, c})) < 1e-10);
    }
  }
}

TEST_CASE("single-head identity projections reduce multihead to bq") {
  Rng rng(5);
  const int d = 6;
  Tensor X = random_tensor({4, d}, rng);
  Tensor Kv = random_tensor({7, d}, rng);
  AttentionParams p;
  p.heads = 1;
  p.model_dim = d;
  std::vector<double> eye(static_cast<std::size_t>(d * d), 0.0);
  for (int i = 0; i < d; ++i) eye[static_cast<std::size_t>(i * d + i)] = 1.0;
  p.wq = {Tensor({d, d}, eye)};
  p.wk = {Tensor({d, d}, eye)};
  p.wv = {Tensor({d, d}, eye)};
  p.wo = Tensor({d, d}, eye);
  p.null_context = Tensor::zeros({1, d});
  NeighborLists nb{{0, 1}, {2}, {3, 4, 5}, {6}};
  Tensor mh = multihead_bq(X, Kv, p, nb);
  Tensor plain = bq_attention(X, Kv, Kv, Tensor::zeros({d}), nb);
  CHECK(max_abs_diff(mh, plain) < 1e-12);
}

TEST_CASE("multihead gradient matches finite differences") {
  Rng rng(33);
  const int d = 8, heads = 2;
  Tensor X = random_tensor({4, d}, rng, 0.5);
  Tensor Kv = random_tensor({6, d}, rng, 0.5);
  NeighborLists nb{{0, 1, 2}, {}, {3}, {4, 5}};
  AttentionParams base = AttentionParams::init(d, heads, rng);
  Tensor probe = random_tensor({4, d}, rng);

  // differentiate w.r.t. one head's query projection and the null embedding
  auto loss_with = [&](const Tensor& wq0, const Tensor& null_ctx) {
    AttentionParams p = base;
    p.wq[0] = wq0;
    p.null_context = null_ctx;
    return sum_all(mul(multihead_bq(X, Kv, p, nb), probe));
  };
  auto f_wq = [&](const Tensor& t) { return loss_with(t, base.null_context); };
  CHECK(grad_check(f_wq, base.wq[0], 1e-5) < 1e-4);
  auto f_null = [&](const Tensor& t) { return loss_with(base.wq[0], t); };
  CHECK(grad_check(f_null, base.null_context, 1e-5) < 1e-4);
  // and w.r.t. the inputs themselves
  auto f_x = [&](const Tensor& t) {
    return sum_all(mul(multihead_bq(t, Kv, base, nb), probe));
  };
  CHECK(grad_check(f_x, X, 1e-5) < 1e-4);
  auto f_kv = [&](const Tensor& t) {
    return sum_all(mul(multihead_bq(X, t, base, nb), probe));
  };
  CHECK(grad_check(f_kv, Kv, 1e-5) < 1e-4);
}

TEST_CASE("permuting rows with a consistent index remap is bit-identical") {
  Rng rng(8);
  const int n = 10, d = 4;
  Tensor Q = random_tensor({3, d}, rng);
  Tensor K = random_tensor({n, d}, rng);
  Tensor V = random_tensor({n, d}, rng);
  Tensor null_row = Tensor::zeros({d});
  NeighborLists nb{{1, 4, 7}, {0, 9}, {5}};
  Tensor base = bq_attention(Q, K, V, null_row, nb);

  std::vector<std::int64_t> perm(n);
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i * 3) % n;
  std::vector<std::int64_t> inv(n);
  for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  Tensor Kp = gather_rows(K, perm);
  Tensor Vp = gather_rows(V, perm);
  NeighborLists nb2 = nb;
  for (auto& lst : nb2) {
    for (auto& j : lst) j = static_cast<int>(inv[static_cast<std::size_t>(j)]);
  }
  Tensor remapped = bq_attention(Q, Kp, Vp, null_row, nb2);
  CHECK(base.data() == remapped.data());
}

TEST_CASE("output is invariant to neighbor list ordering") {
  Rng rng(13);
  const int d = 8;
  Tensor Q = random_tensor({2, d}, rng);
  Tensor K = random_tensor({9, d}, rng);
  Tensor V = random_tensor({9, d}, rng);
  Tensor null_row = Tensor::zeros({d});
  NeighborLists nb{{0, 3, 5, 8}, {2, 4}};
  NeighborLists shuffled{{8, 0, 5, 3}, {4, 2}};
  Tensor a = bq_attention(Q, K, V, null_row, nb);
  Tensor b = bq_attention(Q, K, V, null_row, shuffled);
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("empty neighbor lists take the learned null embedding") {
  Rng rng(3);
  const int d = 5;
  Tensor Q = random_tensor({2, d}, rng);
  Tensor K = random_tensor({4, d}, rng);
  Tensor V = random_tensor({4, d}, rng);
  Tensor null_row = random_tensor({d}, rng);
  NeighborLists nb{{}, {1}};
  Tensor out = bq_attention(Q, K, V, null_row, nb);
  for (std::int64_t c = 0; c < d; ++c) {
    CHECK(out.at({0, c}) == null_row.data()[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("masked global attention rejects all-false rows") {
  Rng rng(4);
  Tensor Q = random_tensor({2, 3}, rng);
  Tensor K = random_tensor({4, 3}, rng);
  Tensor V = random_tensor({4, 3}, rng);
  std::vector<std::vector<bool>> mask{{true, false, false, false},
                                      {false, false, false, false}};
  CHECK_THROWS_AS(global_attention_masked(Q, K, V, mask), UsageError);
}

TEST_CASE("single-true mask row copies one value row") {
  Rng rng(6);
  Tensor Q = random_tensor({1, 3}, rng);
  Tensor K = random_tensor({4, 3}, rng);
  Tensor V = random_tensor({4, 3}, rng);
  std::vector<std::vector<bool>> mask{{false, false, true, false}};
  Tensor out = global_attention_masked(Q, K, V, mask);
  for (std::int64_t c = 0; c < 3; ++c) {
    CHECK(out.at({0, c}) == doctest::Approx(V.at({2, c})).epsilon(1e-14));
  }
}

TEST_CASE("flops formula degenerates and scales as documented") {
  CHECK(flops_count(1, 1, 1, 8, 1, AttentionMode::kGlobal) ==
        flops_count(1, 1, 1, 8, 1, AttentionMode::kBall));
  // score/weighted-sum term ratio at the paper-scale extreme
  const double m = 65536, n = 65536, d = 64, k = 32;
  const double global_pairs = 2.0 * m * n * d;
  const double ball_pairs = 2.0 * m * k * d;
  CHECK(ball_pairs / global_pairs == doctest::Approx(1.0 / 2048.0));
  CHECK(flops_count(m, n, k, d, 4, AttentionMode::kBall) <
        flops_count(m, n, n, d, 4, AttentionMode::kGlobal));
  // equality iff k_mean == N
  CHECK(flops_count(m, n, n, d, 4, AttentionMode::kBall) ==
        flops_count(m, n, n, d, 4, AttentionMode::kGlobal));
}

TEST_CASE("flops_count validates sizes") {
  CHECK_THROWS_AS(flops_count(0, 1, 1, 1, 1, AttentionMode::kBall),
                  UsageError);
}
