#include "scnp/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scnp {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

namespace {

void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void ensure_finite(const std::vector<double>& v, const char* kind) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(kind) + ": non-finite value in output");
    }
  }
}

// Reduces an out-shaped gradient onto a (possibly broadcast) operand shape.
// mode: 0 = same shape, 1 = scalar operand, 2 = suffix operand.
void reduce_to_operand(const std::vector<double>& gout, int mode,
                       std::int64_t operand_size, std::vector<double>* out) {
  if (mode == 0) {
    *out = gout;
    return;
  }
  if (mode == 1) {
    double s = 0.0;
    for (double g : gout) s += g;
    out->assign(1, s);
    return;
  }
  out->assign(static_cast<std::size_t>(operand_size), 0.0);
  const std::int64_t n = static_cast<std::int64_t>(gout.size());
  for (std::int64_t i = 0; i < n; ++i) {
    (*out)[static_cast<std::size_t>(i % operand_size)] += gout[static_cast<std::size_t>(i)];
  }
}

struct BroadcastPlan {
  Shape out_shape;
  int a_mode = 0;  // 0 full, 1 scalar, 2 suffix
  int b_mode = 0;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i]) return false;
  }
  return true;
}

BroadcastPlan plan_broadcast(const char* kind, const Tensor& a,
                             const Tensor& b) {
  BroadcastPlan p;
  if (a.shape() == b.shape()) {
    p.out_shape = a.shape();
    return p;
  }
  if (b.size() == 1) {
    p.out_shape = a.shape();
    p.b_mode = 1;
    return p;
  }
  if (a.size() == 1) {
    p.out_shape = b.shape();
    p.a_mode = 1;
    return p;
  }
  if (is_suffix(b.shape(), a.shape())) {
    p.out_shape = a.shape();
    p.b_mode = 2;
    return p;
  }
  if (is_suffix(a.shape(), b.shape())) {
    p.out_shape = b.shape();
    p.a_mode = 2;
    return p;
  }
  throw ShapeError(std::string(kind) + ": shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()) + " do not broadcast");
}

// Axis split for reductions/softmax: (outer, n, inner) with the reduced axis
// in the middle.
struct AxisSplit {
  std::int64_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, int axis, const char* kind) {
  check_shape(axis >= 0 && axis < static_cast<int>(s.size()),
              std::string(kind) + ": axis out of range for " + shape_str(s));
  AxisSplit sp{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    sp.inner *= s[i];
  return sp;
}

Shape drop_axis(const Shape& s, int axis) {
  Shape out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::atomic<std::uint64_t> g_tape_counter{1};
thread_local Tape* g_active_tape = nullptr;

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)),
      size_(shape_size(shape_)),
      data_(std::make_shared<std::vector<double>>(std::move(data))),
      requires_grad_(requires_grad) {
  if (static_cast<std::int64_t>(data_->size()) != size_) {
    throw ShapeError("Tensor: data length " + std::to_string(data_->size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::int64_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::int64_t n = shape_size(shape);
  return Tensor(std::move(shape),
                std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::from_vector(std::vector<double> v) {
  Shape s{static_cast<std::int64_t>(v.size())};
  return Tensor(std::move(s), std::move(v));
}

double Tensor::value() const {
  if (size_ != 1) throw ShapeError("value(): tensor is not scalar");
  return (*data_)[0];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  check_shape(idx.size() == shape_.size(), "at(): rank mismatch");
  std::int64_t flat = 0;
  std::size_t i = 0;
  for (auto v : idx) {
    flat = flat * shape_[i] + v;
    ++i;
  }
  return (*data_)[static_cast<std::size_t>(flat)];
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

int Tape::node_of(const Tensor& t) const {
  if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
  auto it = leaves_.find(t.buffer_id());
  return it == leaves_.end() ? -1 : it->second;
}

int Tape::input_node(const Tensor& t) {
  if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
  auto it = leaves_.find(t.buffer_id());
  if (it != leaves_.end()) return it->second;
  if (!t.requires_grad()) return -1;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{"leaf", {}, t.shape(), t.size(), nullptr});
  leaves_.emplace(t.buffer_id(), id);
  return id;
}

int Tape::record(const char* kind, const std::vector<int>& inputs,
                 const Tensor& result, BackwardFn back) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{kind, inputs, result.shape(), result.size(), std::move(back)});
  result.tape_id_ = id_;
  result.node_ = id;
  return id;
}

bool Tape::any_tracked(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (!t->defined()) continue;
    if (t->requires_grad()) return true;
    if (t->tape_id_ == id_ && t->node_ >= 0) return true;
    if (leaves_.count(t->buffer_id())) return true;
  }
  return false;
}

void Tape::accumulate(int node, const double* g, std::int64_t n) {
  if (node < 0) return;
  auto& slot = grads_[static_cast<std::size_t>(node)];
  if (slot.empty()) slot.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].size), 0.0);
  for (std::int64_t i = 0; i < n; ++i) slot[static_cast<std::size_t>(i)] += g[i];
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
  const int ln = node_of(loss);
  if (ln < 0) {
    throw Error("backward: loss is not recorded on this tape (detached graph)");
  }
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(ln)] = {1.0};
  for (int i = ln; i >= 0; --i) {
    auto& g = grads_[static_cast<std::size_t>(i)];
    if (!g.empty() && nodes_[static_cast<std::size_t>(i)].back) {
      nodes_[static_cast<std::size_t>(i)].back(*this, g);
    }
  }
  for (const auto& [ptr, n] : leaves_) {
    (void)ptr;
    auto& g = grads_[static_cast<std::size_t>(n)];
    if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(n)].size), 0.0);
  }
}

const std::vector<double>* Tape::grad(const Tensor& t) const {
  const int n = node_of(t);
  if (n < 0 || grads_.empty()) return nullptr;
  const auto& g = grads_[static_cast<std::size_t>(n)];
  return g.empty() ? nullptr : &g;
}

Tensor Tape::grad_tensor(const Tensor& t) const {
  const std::vector<double>* g = grad(t);
  if (!g) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), *g);
}

std::map<int, Tensor> Tape::leaf_gradients() const {
  std::map<int, Tensor> out;
  for (const auto& [ptr, n] : leaves_) {
    (void)ptr;
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    const auto& g = grads_.empty() ? std::vector<double>{} : grads_[static_cast<std::size_t>(n)];
    if (g.empty()) {
      out.emplace(n, Tensor::zeros(node.shape));
    } else {
      out.emplace(n, Tensor(node.shape, g));
    }
  }
  return out;
}

// ---- op helpers --------------------------------------------------------------

namespace {

Tensor finish(const char* kind, Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs,
              const std::function<Tape::BackwardFn(const std::vector<int>&)>&
                  make_back) {
  ensure_finite(data, kind);
  Tensor out(std::move(shape), std::move(data));
  Tape* tp = Tape::active();
  if (tp && tp->any_tracked(inputs)) {
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Tensor* t : inputs) ids.push_back(tp->input_node(*t));
    tp->record(kind, ids, out, make_back(ids));
  }
  return out;
}

// Elementwise binary op with broadcast; fwd(a_val, b_val) and the two partial
// derivatives given (a_val, b_val, gout).
template <class F, class DA, class DB>
Tensor binary_op(const char* kind, const Tensor& a, const Tensor& b, F fwd,
                 DA da, DB db) {
  BroadcastPlan p = plan_broadcast(kind, a, b);
  const std::int64_t n = shape_size(p.out_shape);
  const std::int64_t an = a.size(), bn = b.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* ap = a.raw();
  const double* bp = b.raw();
  for (std::int64_t i = 0; i < n; ++i) {
    const double av = p.a_mode == 0 ? ap[i] : (p.a_mode == 1 ? ap[0] : ap[i % an]);
    const double bv = p.b_mode == 0 ? bp[i] : (p.b_mode == 1 ? bp[0] : bp[i % bn]);
    out[static_cast<std::size_t>(i)] = fwd(av, bv);
  }
  auto a_store = a.storage();
  auto b_store = b.storage();
  return finish(kind, p.out_shape, std::move(out), {&a, &b},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    const double* av = a_store->data();
                    const double* bv = b_store->data();
                    const std::int64_t nn = static_cast<std::int64_t>(gout.size());
                    if (ids[0] >= 0) {
                      std::vector<double> ga(static_cast<std::size_t>(nn));
                      for (std::int64_t i = 0; i < nn; ++i) {
                        const double x = p.a_mode == 0 ? av[i] : (p.a_mode == 1 ? av[0] : av[i % an]);
                        const double y = p.b_mode == 0 ? bv[i] : (p.b_mode == 1 ? bv[0] : bv[i % bn]);
                        ga[static_cast<std::size_t>(i)] = da(x, y, gout[static_cast<std::size_t>(i)]);
                      }
                      std::vector<double> r;
                      reduce_to_operand(ga, p.a_mode, an, &r);
                      t.accumulate(ids[0], r);
                    }
                    if (ids[1] >= 0) {
                      std::vector<double> gb(static_cast<std::size_t>(nn));
                      for (std::int64_t i = 0; i < nn; ++i) {
                        const double x = p.a_mode == 0 ? av[i] : (p.a_mode == 1 ? av[0] : av[i % an]);
                        const double y = p.b_mode == 0 ? bv[i] : (p.b_mode == 1 ? bv[0] : bv[i % bn]);
                        gb[static_cast<std::size_t>(i)] = db(x, y, gout[static_cast<std::size_t>(i)]);
                      }
                      std::vector<double> r;
                      reduce_to_operand(gb, p.b_mode, bn, &r);
                      t.accumulate(ids[1], r);
                    }
                  };
                });
}

template <class F, class D>
Tensor unary_op(const char* kind, const Tensor& x, F fwd, D dfn) {
  const std::int64_t n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* xp = x.raw();
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fwd(xp[i]);
  auto x_store = x.storage();
  auto y_store = std::make_shared<std::vector<double>>(out);
  return finish(kind, x.shape(), std::move(out), {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    if (ids[0] < 0) return;
                    const std::int64_t nn = static_cast<std::int64_t>(gout.size());
                    std::vector<double> g(static_cast<std::size_t>(nn));
                    const double* xv = x_store->data();
                    const double* yv = y_store->data();
                    for (std::int64_t i = 0; i < nn; ++i) {
                      g[static_cast<std::size_t>(i)] =
                          dfn(xv[i], yv[i]) * gout[static_cast<std::size_t>(i)];
                    }
                    t.accumulate(ids[0], g);
                  };
                });
}

}  // namespace

// ---- primitives ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_shape(a.rank() == 2 && b.rank() == 2,
              "matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                  " x " + shape_str(b.shape()));
  check_shape(a.dim(1) == b.dim(0),
              "matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                  shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    ConstMatMap A(a.raw(), m, k), B(b.raw(), k, n);
    MatMap C(out.data(), m, n);
    C.noalias() = A * B;
  }
  auto a_store = a.storage();
  auto b_store = b.storage();
  return finish("matmul", {m, n}, std::move(out), {&a, &b},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    ConstMatMap G(gout.data(), m, n);
                    if (ids[0] >= 0) {
                      std::vector<double> ga(static_cast<std::size_t>(m * k));
                      ConstMatMap B(b_store->data(), k, n);
                      MatMap(ga.data(), m, k).noalias() = G * B.transpose();
                      t.accumulate(ids[0], ga);
                    }
                    if (ids[1] >= 0) {
                      std::vector<double> gb(static_cast<std::size_t>(k * n));
                      ConstMatMap A(a_store->data(), m, k);
                      MatMap(gb.data(), k, n).noalias() = A.transpose() * G;
                      t.accumulate(ids[1], gb);
                    }
                  };
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x,
      [](double v) {
        if (v > 30.0) return v;
        if (v < -30.0) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor softmax(const Tensor& x, int axis) {
  AxisSplit sp = split_axis(x.shape(), axis, "softmax");
  const std::int64_t n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* xp = x.raw();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t in = 0; in < sp.inner; ++in) {
      const std::int64_t base = o * sp.n * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < sp.n; ++j) {
        mx = std::max(mx, xp[base + j * sp.inner]);
      }
      double denom = 0.0;
      for (std::int64_t j = 0; j < sp.n; ++j) {
        const double e = std::exp(xp[base + j * sp.inner] - mx);
        out[static_cast<std::size_t>(base + j * sp.inner)] = e;
        denom += e;
      }
      for (std::int64_t j = 0; j < sp.n; ++j) {
        out[static_cast<std::size_t>(base + j * sp.inner)] /= denom;
      }
    }
  }
  auto y_store = std::make_shared<std::vector<double>>(out);
  return finish("softmax", x.shape(), std::move(out), {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    if (ids[0] < 0) return;
                    std::vector<double> g(gout.size());
                    const double* yv = y_store->data();
                    for (std::int64_t o = 0; o < sp.outer; ++o) {
                      for (std::int64_t in = 0; in < sp.inner; ++in) {
                        const std::int64_t base = o * sp.n * sp.inner + in;
                        double dot = 0.0;
                        for (std::int64_t j = 0; j < sp.n; ++j) {
                          const std::int64_t k = base + j * sp.inner;
                          dot += gout[static_cast<std::size_t>(k)] * yv[k];
                        }
                        for (std::int64_t j = 0; j < sp.n; ++j) {
                          const std::int64_t k = base + j * sp.inner;
                          g[static_cast<std::size_t>(k)] =
                              yv[k] * (gout[static_cast<std::size_t>(k)] - dot);
                        }
                      }
                    }
                    t.accumulate(ids[0], g);
                  };
                });
}

namespace {

Tensor reduce_axis(const char* kind, const Tensor& x, int axis, bool take_mean) {
  AxisSplit sp = split_axis(x.shape(), axis, kind);
  Shape out_shape = drop_axis(x.shape(), axis);
  std::vector<double> out(static_cast<std::size_t>(sp.outer * sp.inner), 0.0);
  const double* xp = x.raw();
  // fixed left-to-right accumulation along the reduced axis
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t j = 0; j < sp.n; ++j) {
      for (std::int64_t in = 0; in < sp.inner; ++in) {
        out[static_cast<std::size_t>(o * sp.inner + in)] +=
            xp[o * sp.n * sp.inner + j * sp.inner + in];
      }
    }
  }
  const double scale = take_mean ? 1.0 / static_cast<double>(sp.n) : 1.0;
  if (take_mean) {
    for (auto& v : out) v *= scale;
  }
  return finish(kind, std::move(out_shape), std::move(out), {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    if (ids[0] < 0) return;
                    std::vector<double> g(static_cast<std::size_t>(sp.outer * sp.n * sp.inner));
                    for (std::int64_t o = 0; o < sp.outer; ++o) {
                      for (std::int64_t j = 0; j < sp.n; ++j) {
                        for (std::int64_t in = 0; in < sp.inner; ++in) {
                          g[static_cast<std::size_t>(o * sp.n * sp.inner + j * sp.inner + in)] =
                              gout[static_cast<std::size_t>(o * sp.inner + in)] * scale;
                        }
                      }
                    }
                    t.accumulate(ids[0], g);
                  };
                });
}

}  // namespace

Tensor sum(const Tensor& x, int axis) { return reduce_axis("sum", x, axis, false); }

Tensor mean(const Tensor& x, int axis) {
  return reduce_axis("mean", x, axis, true);
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  const double* xp = x.raw();
  for (std::int64_t i = 0; i < x.size(); ++i) acc += xp[i];
  const std::int64_t n = x.size();
  return finish("sum", {}, {acc}, {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    if (ids[0] < 0) return;
                    std::vector<double> g(static_cast<std::size_t>(n), gout[0]);
                    t.accumulate(ids[0], g);
                  };
                });
}

Tensor mean_all(const Tensor& x) {
  double acc = 0.0;
  const double* xp = x.raw();
  for (std::int64_t i = 0; i < x.size(); ++i) acc += xp[i];
  const std::int64_t n = x.size();
  const double scale = 1.0 / static_cast<double>(n);
  return finish("mean", {}, {acc * scale}, {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    if (ids[0] < 0) return;
                    std::vector<double> g(static_cast<std::size_t>(n), gout[0] * scale);
                    t.accumulate(ids[0], g);
                  };
                });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check_shape(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  check_shape(axis >= 0 && axis < static_cast<int>(s0.size()),
              "concat: axis out of range");
  std::int64_t axis_total = 0;
  for (const auto& p : parts) {
    check_shape(p.rank() == parts[0].rank(), "concat: rank mismatch");
    for (int d = 0; d < p.rank(); ++d) {
      if (d != axis) {
        check_shape(p.dim(d) == s0[static_cast<std::size_t>(d)],
                    "concat: non-axis dims differ");
      }
    }
    axis_total += p.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  AxisSplit sp = split_axis(out_shape, axis, "concat");
  std::vector<double> out(static_cast<std::size_t>(shape_size(out_shape)));
  std::vector<std::int64_t> blocks;  // per-part axis length * inner
  blocks.reserve(parts.size());
  for (const auto& p : parts) blocks.push_back(p.dim(axis) * sp.inner);
  const std::int64_t out_row = sp.n * sp.inner;
  {
    std::int64_t off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const double* src = parts[pi].raw();
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        std::memcpy(out.data() + o * out_row + off, src + o * blocks[pi],
                    static_cast<std::size_t>(blocks[pi]) * sizeof(double));
      }
      off += blocks[pi];
    }
  }
  std::vector<const Tensor*> input_ptrs;
  for (const auto& p : parts) input_ptrs.push_back(&p);
  ensure_finite(out, "concat");
  Tensor result(out_shape, std::move(out));
  Tape* tp = Tape::active();
  bool tracked = false;
  if (tp) {
    for (const auto& p : parts) {
      if (tp->any_tracked({&p})) {
        tracked = true;
        break;
      }
    }
  }
  if (tracked) {
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (const auto& p : parts) ids.push_back(tp->input_node(p));
    tp->record("concat", ids, result,
               [=](Tape& t, const std::vector<double>& gout) {
                 std::int64_t off = 0;
                 for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                   if (ids[pi] >= 0) {
                     std::vector<double> g(static_cast<std::size_t>(sp.outer * blocks[pi]));
                     for (std::int64_t o = 0; o < sp.outer; ++o) {
                       std::memcpy(g.data() + o * blocks[pi],
                                   gout.data() + o * out_row + off,
                                   static_cast<std::size_t>(blocks[pi]) * sizeof(double));
                     }
                     t.accumulate(ids[pi], g);
                   }
                   off += blocks[pi];
                 }
               });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& rows) {
  check_shape(x.rank() >= 1, "gather: rank-0 input");
  const std::int64_t nrows = x.dim(0);
  const std::int64_t rowsz = x.size() / std::max<std::int64_t>(nrows, 1);
  for (auto r : rows) {
    check_shape(r >= 0 && r < nrows, "gather: row index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(rows.size());
  std::vector<double> out(static_cast<std::size_t>(rows.size()) * static_cast<std::size_t>(rowsz));
  const double* xp = x.raw();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(out.data() + static_cast<std::int64_t>(i) * rowsz,
                xp + rows[i] * rowsz, static_cast<std::size_t>(rowsz) * sizeof(double));
  }
  const std::int64_t xsize = x.size();
  return finish("gather", std::move(out_shape), std::move(out), {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    if (ids[0] < 0) return;
                    std::vector<double> g(static_cast<std::size_t>(xsize), 0.0);
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      const double* src = gout.data() + static_cast<std::int64_t>(i) * rowsz;
                      double* dst = g.data() + rows[i] * rowsz;
                      for (std::int64_t j = 0; j < rowsz; ++j) dst[j] += src[j];
                    }
                    t.accumulate(ids[0], g);
                  };
                });
}

namespace {

// Scatters image rows into the (C*K*K) x (H*W) patch matrix for `dilation`.
// Used by both conv passes; zero rows correspond to out-of-image taps.
void im2col(const double* img, std::int64_t C, std::int64_t H, std::int64_t W,
            std::int64_t K, int dilation, std::vector<double>* patches) {
  const std::int64_t HW = H * W;
  patches->assign(static_cast<std::size_t>(C * K * K * HW), 0.0);
  const std::int64_t half = (K - 1) / 2;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < K; ++ky) {
      for (std::int64_t kx = 0; kx < K; ++kx) {
        const std::int64_t row = (c * K + ky) * K + kx;
        const std::int64_t dy = (ky - half) * dilation;
        const std::int64_t dx = (kx - half) * dilation;
        double* dst_row = patches->data() + row * HW;
        const std::int64_t xlo = std::max<std::int64_t>(0, -dx);
        const std::int64_t xhi = std::min<std::int64_t>(W, W - dx);
        if (xhi <= xlo) continue;
        for (std::int64_t y = 0; y < H; ++y) {
          const std::int64_t sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          std::memcpy(dst_row + y * W + xlo, img + (c * H + sy) * W + xlo + dx,
                      static_cast<std::size_t>(xhi - xlo) * sizeof(double));
        }
      }
    }
  }
}

// Transpose of im2col: accumulates patch-matrix gradients back into image
// layout.
void col2im(const double* patches, std::int64_t C, std::int64_t H,
            std::int64_t W, std::int64_t K, int dilation, double* img) {
  const std::int64_t HW = H * W;
  const std::int64_t half = (K - 1) / 2;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < K; ++ky) {
      for (std::int64_t kx = 0; kx < K; ++kx) {
        const std::int64_t row = (c * K + ky) * K + kx;
        const std::int64_t dy = (ky - half) * dilation;
        const std::int64_t dx = (kx - half) * dilation;
        const double* src_row = patches + row * HW;
        const std::int64_t xlo = std::max<std::int64_t>(0, -dx);
        const std::int64_t xhi = std::min<std::int64_t>(W, W - dx);
        if (xhi <= xlo) continue;
        for (std::int64_t y = 0; y < H; ++y) {
          const std::int64_t sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          double* dst = img + (c * H + sy) * W + xlo + dx;
          const double* src = src_row + y * W + xlo;
          for (std::int64_t i = 0; i < xhi - xlo; ++i) dst[i] += src[i];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int dilation) {
  check_shape(input.rank() == 3, "conv2d: input must be (C,H,W)");
  check_shape(weight.rank() == 4, "conv2d: weight must be (O,C,K,K)");
  check_shape(dilation == 1 || dilation == 2 || dilation == 4,
              "conv2d: dilation must be 1, 2 or 4");
  const std::int64_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::int64_t O = weight.dim(0), K = weight.dim(2);
  check_shape(weight.dim(1) == C, "conv2d: channel mismatch");
  check_shape(weight.dim(3) == K && K % 2 == 1,
              "conv2d: kernel must be square with odd size");
  const bool has_bias = bias.defined();
  if (has_bias) {
    check_shape(bias.rank() == 1 && bias.dim(0) == O,
                "conv2d: bias must be (O)");
  }
  const std::int64_t HW = H * W;
  const std::int64_t CKK = C * K * K;
  std::vector<double> patches;
  im2col(input.raw(), C, H, W, K, dilation, &patches);
  std::vector<double> out(static_cast<std::size_t>(O * HW));
  {
    ConstMatMap Wm(weight.raw(), O, CKK), P(patches.data(), CKK, HW);
    MatMap(out.data(), O, HW).noalias() = Wm * P;
  }
  if (has_bias) {
    const double* bp = bias.raw();
    for (std::int64_t o = 0; o < O; ++o) {
      double* row = out.data() + o * HW;
      for (std::int64_t i = 0; i < HW; ++i) row[i] += bp[o];
    }
  }
  auto in_store = input.storage();
  auto w_store = weight.storage();
  ensure_finite(out, "conv2d");
  Tensor result({O, H, W}, std::move(out));
  Tape* tp = Tape::active();
  const bool tracked =
      tp && (tp->any_tracked({&input, &weight}) ||
             (has_bias && tp->any_tracked({&bias})));
  if (tracked) {
    std::vector<int> ids{tp->input_node(input), tp->input_node(weight)};
    if (has_bias) ids.push_back(tp->input_node(bias));
    tp->record("conv2d", ids, result,
               [=](Tape& t, const std::vector<double>& gout) {
                 ConstMatMap G(gout.data(), O, HW);
                 if (ids.size() > 2 && ids[2] >= 0) {
                   std::vector<double> gb(static_cast<std::size_t>(O));
                   for (std::int64_t o = 0; o < O; ++o) {
                     gb[static_cast<std::size_t>(o)] = G.row(o).sum();
                   }
                   t.accumulate(ids[2], gb);
                 }
                 if (ids[1] >= 0) {
                   std::vector<double> p;
                   im2col(in_store->data(), C, H, W, K, dilation, &p);
                   std::vector<double> gw(static_cast<std::size_t>(O * CKK));
                   ConstMatMap P(p.data(), CKK, HW);
                   MatMap(gw.data(), O, CKK).noalias() = G * P.transpose();
                   t.accumulate(ids[1], gw);
                 }
                 if (ids[0] >= 0) {
                   std::vector<double> gp(static_cast<std::size_t>(CKK * HW));
                   ConstMatMap Wm(w_store->data(), O, CKK);
                   MatMap(gp.data(), CKK, HW).noalias() = Wm.transpose() * G;
                   std::vector<double> gi(static_cast<std::size_t>(C * HW), 0.0);
                   col2im(gp.data(), C, H, W, K, dilation, gi.data());
                   t.accumulate(ids[0], gi);
                 }
               });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape_size(shape) == x.size(),
              "reshape: element count mismatch, " + shape_str(x.shape()) +
                  " -> " + shape_str(shape));
  std::vector<double> out(x.data());
  return finish("reshape", std::move(shape), std::move(out), {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    t.accumulate(ids[0], gout);
                  };
                });
}

Tensor transpose2d(const Tensor& x) {
  check_shape(x.rank() == 2, "transpose2d: expects rank-2 input");
  const std::int64_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    ConstMatMap X(x.raw(), m, n);
    MatMap(out.data(), n, m) = X.transpose();
  }
  return finish("transpose2d", {n, m}, std::move(out), {&x},
                [=](const std::vector<int>& ids) -> Tape::BackwardFn {
                  return [=](Tape& t, const std::vector<double>& gout) {
                    if (ids[0] < 0) return;
                    std::vector<double> g(static_cast<std::size_t>(m * n));
                    ConstMatMap G(gout.data(), n, m);
                    MatMap(g.data(), m, n) = G.transpose();
                    t.accumulate(ids[0], g);
                  };
                });
}

Tensor apply_primitive(const std::string& kind,
                       const std::vector<Tensor>& in, const PrimOptions& opts) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError("apply_primitive(" + kind + "): expected " +
                       std::to_string(n) + " inputs, got " +
                       std::to_string(in.size()));
    }
  };
  if (kind == "matmul") { need(2); return matmul(in[0], in[1]); }
  if (kind == "add") { need(2); return add(in[0], in[1]); }
  if (kind == "sub") { need(2); return sub(in[0], in[1]); }
  if (kind == "mul") { need(2); return mul(in[0], in[1]); }
  if (kind == "relu") { need(1); return relu(in[0]); }
  if (kind == "tanh") { need(1); return tanh(in[0]); }
  if (kind == "softplus") { need(1); return softplus(in[0]); }
  if (kind == "exp") { need(1); return exp(in[0]); }
  if (kind == "log") { need(1); return log(in[0]); }
  if (kind == "softmax") { need(1); return softmax(in[0], opts.axis); }
  if (kind == "sum") {
    need(1);
    return opts.axis < 0 ? sum_all(in[0]) : sum(in[0], opts.axis);
  }
  if (kind == "mean") {
    need(1);
    return opts.axis < 0 ? mean_all(in[0]) : mean(in[0], opts.axis);
  }
  if (kind == "concat") { return concat(in, opts.axis); }
  if (kind == "gather") { need(1); return gather_rows(in[0], opts.rows); }
  if (kind == "conv2d") {
    if (in.size() == 2) return conv2d(in[0], in[1], Tensor(), opts.dilation);
    need(3);
    return conv2d(in[0], in[1], in[2], opts.dilation);
  }
  if (kind == "reshape") { need(1); return reshape(in[0], opts.shape); }
  if (kind == "transpose2d") { need(1); return transpose2d(in[0]); }
  throw UsageError("apply_primitive: unknown kind '" + kind + "'");
}

// ---- Adam ---------------------------------------------------------------------

void adam_step(std::vector<Tensor>& params,
               const std::vector<std::vector<double>>& grads,
               AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: param/grad count mismatch");
  }
  if (state.m_.empty()) {
    state.m_.resize(params.size());
    state.v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m_[i].assign(static_cast<std::size_t>(params[i].size()), 0.0);
      state.v_[i].assign(static_cast<std::size_t>(params[i].size()), 0.0);
    }
  }
  state.step_ += 1;
  const AdamConfig& c = state.cfg_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = static_cast<std::size_t>(params[i].size());
    if (!grads[i].empty() && grads[i].size() != n) {
      throw ShapeError("adam_step: gradient shape mismatch for param " +
                       std::to_string(i));
    }
    double* p = params[i].raw_mutable();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grads[i].empty() ? 0.0 : grads[i][j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

// ---- ParamStore & checkpoints ---------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (by_name_.count(name)) throw UsageError("ParamStore: duplicate name " + name);
  order_.push_back(name);
  auto [it, ok] = by_name_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UsageError("ParamStore: missing name " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UsageError("ParamStore: missing name " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return by_name_.count(name) != 0;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(order_.size());
  for (const auto& n : order_) out.push_back(by_name_.at(n));
  return out;
}

void ParamStore::replace(const std::string& name, Tensor t) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UsageError("ParamStore: missing name " + name);
  it->second = std::move(t);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
  os.write("SNPM", 4);
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.count()));
  for (const auto& name : params.names()) {
    const Tensor& t = params.get(name);
    write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) {
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim(d)));
    }
    os.write(reinterpret_cast<const char*>(t.raw()),
             static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
  }
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SNPM", 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = read_pod<std::uint32_t>(is);
  ParamStore out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = read_pod<std::uint8_t>(is);
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::int64_t>(read_pod<std::uint32_t>(is)));
    }
    const std::int64_t n = shape_size(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * static_cast<std::int64_t>(sizeof(double))));
    if (!is) throw DataError("checkpoint: truncated tensor payload");
    Tensor t(shape, std::move(data), true);
    out.add(name, std::move(t));
  }
  return out;
}

// ---- gradient checking -----------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& point, double h) {
  Tensor x(point.shape(), point.data(), true);
  std::vector<double> auto_grad;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f(x);
    if (loss.size() != 1) throw ShapeError("grad_check: function is not scalar");
    tape.backward(loss);
    const std::vector<double>* g = tape.grad(x);
    auto_grad = g ? *g : std::vector<double>(static_cast<std::size_t>(x.size()), 0.0);
  }
  double max_err = 0.0;
  for (std::int64_t i = 0; i < point.size(); ++i) {
    std::vector<double> dplus = point.data();
    std::vector<double> dminus = point.data();
    dplus[static_cast<std::size_t>(i)] += h;
    dminus[static_cast<std::size_t>(i)] -= h;
    const double fp = f(Tensor(point.shape(), std::move(dplus))).value();
    const double fm = f(Tensor(point.shape(), std::move(dminus))).value();
    const double cd = (fp - fm) / (2.0 * h);
    if (!std::isfinite(cd)) throw NumericError("grad_check: non-finite difference");
    const double err = std::abs(auto_grad[static_cast<std::size_t>(i)] - cd) /
                       std::max(1.0, std::abs(cd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace scnp
