#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scnp/rng.hpp"
#include "scnp/tensor.hpp"

using namespace scnp;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> d(static_cast<std::size_t>(shape_size(shape)));
  for (auto& v : d) v = rng.normal() * scale;
  return Tensor(std::move(shape), std::move(d));
}

// Scalar loss of one primitive against a fixed random projection, for the
// finite-difference gradient oracle.
double primitive_grad_error(const std::string& kind, Shape in_shape,
                            const PrimOptions& opts, Rng& rng,
                            const std::vector<Tensor>& extra = {},
                            int diff_index = 0) {
  Tensor point = random_tensor(in_shape, rng, 0.5);
  // keep log/softplus arguments positive
  if (kind == "log") {
    std::vector<double> d = point.data();
    for (auto& v : d) v = std::abs(v) + 0.5;
    point = Tensor(in_shape, std::move(d));
  }
  Tensor probe;  // fixed projection so the loss is scalar
  auto f = [&](const Tensor& x) {
    std::vector<Tensor> inputs;
    for (int i = 0; i < diff_index; ++i) inputs.push_back(extra[static_cast<std::size_t>(i)]);
    inputs.push_back(x);
    for (std::size_t i = static_cast<std::size_t>(diff_index); i < extra.size(); ++i) {
      inputs.push_back(extra[i]);
    }
    Tensor y = apply_primitive(kind, inputs, opts);
    if (!probe.defined()) {
      Rng prng(99);
      probe = random_tensor(y.shape(), prng);
    }
    return sum_all(mul(y, probe));
  };
  return grad_check(f, point, 1e-5);
}

}  // namespace

TEST_CASE("matmul identity returns the other operand") {
  Rng rng(1);
  Tensor a = random_tensor({2, 2}, rng);
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor out = matmul(eye, a);
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(out.data()[static_cast<std::size_t>(i)] ==
          doctest::Approx(a.data()[static_cast<std::size_t>(i)]).epsilon(1e-15));
  }
}

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x({3}, {0.0, 0.0, 0.0});
  Tensor y = softmax(x, 0);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax rows are probability vectors") {
  Rng rng(7);
  Tensor x = random_tensor({5, 9}, rng, 3.0);
  Tensor y = softmax(x, 1);
  for (std::int64_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::int64_t c = 0; c < 9; ++c) {
      const double v = y.data()[static_cast<std::size_t>(r * 9 + c)];
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("conv2d all-ones kernel sums the 3x3 neighborhood") {
  const double c = 2.5;
  Tensor img({1, 5, 5}, std::vector<double>(25, c));
  Tensor w({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor out = conv2d(img, w, Tensor(), 1);
  // interior cells see the full kernel
  CHECK(out.at({0, 2, 2}) == doctest::Approx(9.0 * c));
  // corner sees a 2x2 patch under zero padding
  CHECK(out.at({0, 0, 0}) == doctest::Approx(4.0 * c));
}

TEST_CASE("backward of sum is ones") {
  Tensor x({3}, {1.0, 2.0, 3.0}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum_all(x);
  tape.backward(loss);
  const auto* g = tape.grad(x);
  REQUIRE(g != nullptr);
  for (double v : *g) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("backward of sum of squares is 2x") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum_all(mul(x, x));
  tape.backward(loss);
  const auto* g = tape.grad(x);
  REQUIRE(g != nullptr);
  CHECK((*g)[0] == doctest::Approx(2.0));
  CHECK((*g)[1] == doctest::Approx(4.0));
}

TEST_CASE("d(loss)/d(loss) seeds at one and untouched leaves get zeros") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor unused({2}, {5.0, 5.0}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor half = mul(x, Tensor::scalar(0.5));
  Tensor dead = mul(unused, Tensor::scalar(2.0));  // registered, not in loss
  (void)dead;
  Tensor loss = sum_all(half);
  tape.backward(loss);
  const auto* gu = tape.grad(unused);
  REQUIRE(gu != nullptr);
  CHECK((*gu)[0] == 0.0);
  CHECK((*gu)[1] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss and detached graphs") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  Tensor detached = Tensor::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(detached), Error);
}

TEST_CASE("two-layer MLP gradient matches finite differences") {
  Rng rng(23);
  Tensor w2 = random_tensor({6, 1}, rng);
  Tensor b1 = random_tensor({6}, rng, 0.1);
  auto f = [&](const Tensor& w1) {
    Tensor x({2, 4}, {0.3, -0.2, 0.5, 0.1, -0.4, 0.8, 0.2, -0.6});
    Tensor h = scnp::tanh(add(matmul(x, w1), b1));
    Tensor out = matmul(relu(h), w2);
    return sum_all(out);
  };
  const double err = grad_check(f, random_tensor({4, 6}, rng), 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(12345);
  CHECK(primitive_grad_error("relu", {4, 3}, {}, rng) < 1e-4);
  CHECK(primitive_grad_error("tanh", {4, 3}, {}, rng) < 1e-4);
  CHECK(primitive_grad_error("softplus", {4, 3}, {}, rng) < 1e-4);
  CHECK(primitive_grad_error("exp", {4, 3}, {}, rng) < 1e-4);
  CHECK(primitive_grad_error("log", {4, 3}, {}, rng) < 1e-4);
  PrimOptions ax1;
  ax1.axis = 1;
  CHECK(primitive_grad_error("softmax", {4, 5}, ax1, rng) < 1e-4);
  CHECK(primitive_grad_error("sum", {4, 5}, ax1, rng) < 1e-4);
  CHECK(primitive_grad_error("mean", {4, 5}, ax1, rng) < 1e-4);
  PrimOptions all;
  all.axis = -1;
  CHECK(primitive_grad_error("sum", {6}, all, rng) < 1e-4);
  CHECK(primitive_grad_error("mean", {6}, all, rng) < 1e-4);
  PrimOptions rows;
  rows.rows = {2, 0, 2, 1};
  CHECK(primitive_grad_error("gather", {3, 4}, rows, rng) < 1e-4);
  PrimOptions rs;
  rs.shape = {6, 2};
  CHECK(primitive_grad_error("reshape", {3, 4}, rs, rng) < 1e-4);
  CHECK(primitive_grad_error("transpose2d", {3, 4}, {}, rng) < 1e-4);

  // binary ops, both operand slots, including trailing-dim broadcast
  Tensor other = random_tensor({4, 3}, rng);
  CHECK(primitive_grad_error("add", {4, 3}, {}, rng, {other}, 0) < 1e-4);
  CHECK(primitive_grad_error("sub", {4, 3}, {}, rng, {other}, 1) < 1e-4);
  CHECK(primitive_grad_error("mul", {4, 3}, {}, rng, {other}, 0) < 1e-4);
  Tensor big = random_tensor({4, 3}, rng);
  CHECK(primitive_grad_error("add", {3}, {}, rng, {big}, 1) < 1e-4);
  CHECK(primitive_grad_error("mul", {3}, {}, rng, {big}, 1) < 1e-4);
  Tensor rhs = random_tensor({3, 2}, rng);
  CHECK(primitive_grad_error("matmul", {4, 3}, {}, rng, {rhs}, 0) < 1e-4);
  Tensor lhs = random_tensor({4, 3}, rng);
  CHECK(primitive_grad_error("matmul", {3, 2}, {}, rng, {lhs}, 1) < 1e-4);
  // concat in both slots
  PrimOptions cax;
  cax.axis = 1;
  Tensor part = random_tensor({4, 2}, rng);
  CHECK(primitive_grad_error("concat", {4, 3}, cax, rng, {part}, 1) < 1e-4);
}

TEST_CASE("conv2d gradients match finite differences for all dilations") {
  Rng rng(77);
  for (int dil : {1, 2, 4}) {
    PrimOptions o;
    o.dilation = dil;
    Tensor w = random_tensor({2, 3, 3, 3}, rng, 0.4);
    Tensor b = random_tensor({2}, rng, 0.2);
    CHECK(primitive_grad_error("conv2d", {3, 9, 9}, o, rng, {w, b}, 0) < 1e-4);
    Tensor img = random_tensor({3, 9, 9}, rng, 0.4);
    CHECK(primitive_grad_error("conv2d", {2, 3, 3, 3}, o, rng, {img, b}, 1) <
          1e-4);
    CHECK(primitive_grad_error("conv2d", {2}, o, rng, {img, w}, 2) < 1e-4);
  }
}

TEST_CASE("unknown primitive kind is rejected") {
  CHECK_THROWS_AS(apply_primitive("fft", {Tensor::scalar(1.0)}, {}),
                  UsageError);
}

TEST_CASE("shape mismatches are rejected") {
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({4, 2}, std::vector<double>(8, 1.0));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("non-finite forward output is an error") {
  Tensor x({2}, {-1.0, 2.0});
  CHECK_THROWS_AS(scnp::log(x), NumericError);
}

TEST_CASE("forward is bit-deterministic") {
  Rng rng1(5), rng2(5);
  Tensor a1 = random_tensor({16, 16}, rng1), a2 = random_tensor({16, 16}, rng2);
  Tensor b1 = random_tensor({16, 16}, rng1), b2 = random_tensor({16, 16}, rng2);
  Tensor y1 = softmax(matmul(a1, b1), 1);
  Tensor y2 = softmax(matmul(a2, b2), 1);
  CHECK(y1.data() == y2.data());
}

TEST_CASE("adam leaves params unchanged on zero gradients") {
  std::vector<Tensor> params{Tensor({2}, {1.0, -2.0}, true)};
  const std::vector<double> before = params[0].data();
  AdamState st(AdamConfig{});
  std::vector<std::vector<double>> grads{{0.0, 0.0}};
  adam_step(params, grads, st);
  CHECK(params[0].data() == before);
  CHECK(st.step() == 1);
}

TEST_CASE("first adam step moves a scalar by about lr") {
  std::vector<Tensor> params{Tensor({1}, {0.5}, true)};
  AdamState st(AdamConfig{1e-3, 0.9, 0.999, 1e-8});
  std::vector<std::vector<double>> grads{{1.0}};
  adam_step(params, grads, st);
  CHECK(params[0].data()[0] == doctest::Approx(0.5 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam descends on a quadratic") {
  std::vector<Tensor> params{Tensor({1}, {1.0}, true)};
  AdamState st(AdamConfig{1e-2, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 100; ++i) {
    const double w = params[0].data()[0];
    std::vector<std::vector<double>> grads{{2.0 * w}};
    adam_step(params, grads, st);
  }
  CHECK(std::abs(params[0].data()[0]) < 1.0);
}

TEST_CASE("adam rejects mismatched gradient shapes") {
  std::vector<Tensor> params{Tensor({2}, {1.0, 2.0}, true)};
  AdamState st;
  std::vector<std::vector<double>> grads{{1.0, 2.0, 3.0}};
  CHECK_THROWS_AS(adam_step(params, grads, st), ShapeError);
}

TEST_CASE("grad_check on x squared is tight") {
  auto f = [](const Tensor& x) { return mul(x, x); };
  CHECK(grad_check(f, Tensor::scalar(3.0), 1e-5) < 1e-6);
}

TEST_CASE("grad_check on a gaussian likelihood head") {
  // parameters (mu, log sigma) against a fixed observation
  const double h = 0.7;
  auto f = [&](const Tensor& p) {
    Tensor mu = gather_rows(reshape(p, {2, 1}), {0});
    Tensor log_sigma = gather_rows(reshape(p, {2, 1}), {1});
    Tensor diff = sub(Tensor::scalar(h), mu);
    Tensor inv_var = scnp::exp(mul(log_sigma, Tensor::scalar(-2.0)));
    Tensor nll = add(log_sigma,
                     mul(mul(mul(diff, diff), inv_var), Tensor::scalar(0.5)));
    return sum_all(nll);
  };
  Rng rng(3);
  CHECK(grad_check(f, random_tensor({2}, rng, 0.3), 1e-5) < 1e-4);
}

TEST_CASE("checkpoint round trip preserves names, shapes, payload") {
  Rng rng(9);
  ParamStore store;
  store.add("alpha.w", random_tensor({3, 4}, rng));
  store.add("beta", random_tensor({7}, rng));
  const std::string path = "/tmp/scnp_test_ckpt.bin";
  save_checkpoint(path, store);
  ParamStore loaded = load_checkpoint(path);
  REQUIRE(loaded.count() == 2);
  CHECK(loaded.names() == store.names());
  CHECK(loaded.get("alpha.w").shape() == Shape{3, 4});
  CHECK(loaded.get("alpha.w").data() == store.get("alpha.w").data());
  CHECK(loaded.get("beta").data() == store.get("beta").data());
}

TEST_CASE("checkpoint rejects foreign files") {
  const std::string path = "/tmp/scnp_bad_ckpt.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOPE....", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}
