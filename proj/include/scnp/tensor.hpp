#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "scnp/common.hpp"

namespace scnp {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense row-major f64 tensor. Value-semantic handle: copies share the data
// buffer, which is treated as immutable once it has entered a tape. Rank 0
// (empty shape) is a scalar.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor from_vector(std::vector<double> v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return size_; }
  bool defined() const { return static_cast<bool>(data_); }

  const std::vector<double>& data() const { return *data_; }
  const double* raw() const { return data_->data(); }
  double* raw_mutable() { return data_->data(); }
  double value() const;  // scalar accessor
  double at(std::initializer_list<std::int64_t> idx) const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  const void* buffer_id() const { return data_.get(); }
  std::shared_ptr<std::vector<double>> storage() const { return data_; }

 private:
  friend class Tape;
  Shape shape_;
  std::int64_t size_ = 0;
  std::shared_ptr<std::vector<double>> data_;
  bool requires_grad_ = false;
  // Stamp left by the tape that recorded this tensor as an op result.
  mutable std::uint64_t tape_id_ = 0;
  mutable int node_ = -1;
};

// Define-by-run tape. Nodes are appended in forward order; backward walks
// them in strictly decreasing insertion order. One tape per forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // Registers `t` as an input: returns its node id, creating a leaf node for
  // requires_grad tensors seen for the first time. Returns -1 for constants.
  int input_node(const Tensor& t);

  // Appends an op node and stamps `result` as living at that node.
  int record(const char* kind, const std::vector<int>& inputs,
             const Tensor& result, BackwardFn back);

  // True when at least one of the inputs participates in differentiation.
  bool any_tracked(std::initializer_list<const Tensor*> inputs);

  void accumulate(int node, const double* g, std::int64_t n);
  void accumulate(int node, const std::vector<double>& g) {
    accumulate(node, g.data(), static_cast<std::int64_t>(g.size()));
  }

  // Seeds d(loss)/d(loss) = 1 and propagates. Loss must be a scalar recorded
  // on this tape. Gradients of untouched leaves materialize as zeros.
  void backward(const Tensor& loss);

  // Gradient of the last backward() w.r.t. `t`, or nullptr if `t` is not on
  // the tape. Shape matches the primal.
  const std::vector<double>* grad(const Tensor& t) const;
  Tensor grad_tensor(const Tensor& t) const;

  // Gradients keyed by node id, for callers that walk the tape directly.
  std::map<int, Tensor> leaf_gradients() const;

  static Tape* active();

 private:
  friend class TapeScope;
  struct Node {
    const char* kind;
    std::vector<int> inputs;
    Shape shape;
    std::int64_t size;
    BackwardFn back;  // null for leaves
  };
  int node_of(const Tensor& t) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const void*, int> leaves_;
};

// RAII guard installing a tape as the thread's active tape.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// ---- primitives -----------------------------------------------------------
// Every op validates shapes, checks the output for non-finite values and
// records itself on the active tape when an input is tracked.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& rows);
// 2-D convolution, stride 1, zero padding that preserves H and W.
// input (C,H,W), weight (O,C,K,K) with odd K, optional bias (O).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int dilation);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose2d(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) {
  return mul(Tensor::scalar(c), a);
}
inline Tensor operator+(const Tensor& a, double c) {
  return add(a, Tensor::scalar(c));
}
inline Tensor operator-(const Tensor& a, double c) {
  return sub(a, Tensor::scalar(c));
}

// String-dispatched primitive application; the uniform entry point the
// gradient-oracle tests iterate over. Unknown kinds are an error.
struct PrimOptions {
  int axis = -1;
  int dilation = 1;
  std::vector<std::int64_t> rows;
  Shape shape;
};
Tensor apply_primitive(const std::string& kind,
                       const std::vector<Tensor>& inputs,
                       const PrimOptions& opts = {});

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment state for one parameter list. Step counts updates.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}
  AdamConfig& config() { return cfg_; }
  const AdamConfig& config() const { return cfg_; }
  std::int64_t step() const { return step_; }
  const std::vector<std::vector<double>>& m() const { return m_; }
  const std::vector<std::vector<double>>& v() const { return v_; }

  friend void adam_step(std::vector<Tensor>& params,
                        const std::vector<std::vector<double>>& grads,
                        AdamState& state);

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// In-place Adam update with bias correction. Parameter i receives grads[i];
// an empty gradient vector is treated as all zeros.
void adam_step(std::vector<Tensor>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state);

// ---- parameter store & checkpoints -----------------------------------------

// Ordered collection of named trainable tensors. Order is insertion order and
// is what the optimizer and checkpoint writer iterate.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t count() const { return order_.size(); }
  const std::vector<std::string>& names() const { return order_; }
  std::vector<Tensor> tensors() const;
  void replace(const std::string& name, Tensor t);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> by_name_;
};

// Little-endian binary checkpoint: magic "SNPM", u32 version, u32 tensor
// count, then per tensor u16 name length, name bytes, u8 rank, u32 dims,
// f64 payload.
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

// ---- gradient checking ------------------------------------------------------

// Max over coordinates of |autodiff - central difference| / max(1, |cd|)
// for a scalar-valued function of one tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& point, double h);

}  // namespace scnp
