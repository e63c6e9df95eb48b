#pragma once

#include "advnlg/errors.hpp"
#include "advnlg/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace advnlg {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense double-precision array participating in reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage. Values are
// row-major. `node` indexes into the active Tape when the tensor was produced
// by a recorded operation; leaves (parameters, constants) keep node == -1.
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  int node = -1;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  // Leaf that collects gradients (parameters and gradient-check probes).
  static Tensor leaf(Shape shape, std::vector<double> values);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }

  const std::vector<double>& values() const { return d_->values; }
  std::vector<double>& mutable_values() { return d_->values; }
  double at(std::size_t i) const { return d_->values.at(i); }
  // Scalar convenience; usage error when numel != 1.
  double value() const;

  bool has_grad() const { return d_ && !d_->grad.empty(); }
  const std::vector<double>& grad() const;
  // Gradient buffer, allocated (zeroed) on first use.
  std::vector<double>& grad_buffer();
  void zero_grad();
  bool requires_grad() const { return d_->requires_grad; }

  const std::shared_ptr<TensorData>& impl() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

// Recorded computation history. Nodes are appended in creation order, so the
// list is topological by construction; backward() sweeps it exactly once in
// reverse from the loss node.
class Tape {
 public:
  static Tape* active();

  int record(std::function<void()> backprop);
  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class GradientTape;
  friend class ScopedNoTape;
  std::vector<std::function<void()>> nodes_;
};

// RAII scope that makes a fresh tape active on this thread. A tape is
// confined to the thread that opened it.
class GradientTape {
 public:
  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  void backward(const Tensor& loss) { tape_.backward(loss); }
  Tape& tape() { return tape_; }

 private:
  Tape tape_;
  Tape* prev_;
};

// Temporarily disables recording (forward-only evaluation inside a tape scope).
class ScopedNoTape {
 public:
  ScopedNoTape();
  ~ScopedNoTape();
  ScopedNoTape(const ScopedNoTape&) = delete;
  ScopedNoTape& operator=(const ScopedNoTape&) = delete;

 private:
  Tape* prev_;
};

// ---- Differentiable operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise ops support equal shapes, scalar rhs, or rhs matching
// the trailing dimensions of lhs (e.g. [b x d] + [d]).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
// Domain error on any element <= 0.
Tensor log(const Tensor& x);
// log with values clamped at -1e10 for nonpositive input (zero grad there).
Tensor safe_log(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

// Softmax over the last dimension, computed with max subtraction.
Tensor softmax(const Tensor& x);

// Embedding lookups. The index form gathers rows; the matrix form multiplies
// distribution rows with the table and is the differentiable path generated
// (relaxed) tokens take. Rows must sum to 1 within 1e-6.
Tensor embed(const Tensor& table, std::span<const int> ids);
Tensor embed(const Tensor& table, const Tensor& rows);

Tensor reshape(const Tensor& x, Shape shape);
// Concatenation of two vectors (or single-row matrices) along the last axis.
Tensor concat(const Tensor& a, const Tensor& b);
// Stack n vectors of identical length d into an [n x d] matrix.
Tensor stack_rows(std::span<const Tensor> rows);
// Scalar element at flat index i.
Tensor pick(const Tensor& x, std::size_t i);
// Contiguous slice [start, start+len) of a vector.
Tensor narrow(const Tensor& x, std::size_t start, std::size_t len);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Inverted dropout: scales kept activations by 1/(1-rate) at train time,
// identity at inference.
Tensor dropout(const Tensor& x, double rate, RngStream& rng, bool train);

// Straight-through combination: forward value is `hard`, gradient flows to
// `relaxed` unchanged. `hard` is treated as a constant.
Tensor straight_through(const Tensor& hard, const Tensor& relaxed);

// ---- Batch normalization ---------------------------------------------------

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

// Per-feature batch normalization over [b x d]. Train mode uses batch
// statistics (variance + eps) and folds them into the running stats with the
// given momentum; infer mode uses the running stats. Train mode requires b >= 2.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool train, double eps = 1e-5,
                  double momentum = 0.1);

// ---- Parameters, optimizer, clipping ---------------------------------------

// Named map of trainable tensors plus per-parameter RMSprop accumulators and
// any batch-norm running stats. Iteration is sorted by name. The prefix is
// prepended (dot-separated) to names in checkpoints.
class ParamStore {
 public:
  explicit ParamStore(std::string prefix = "");

  Tensor& add(const std::string& name, Shape shape, std::vector<double> init);
  // Uniform(-bound, bound) initialization from the given stream.
  Tensor& add_uniform(const std::string& name, Shape shape, double bound,
                      RngStream& rng);
  // Xavier/Glorot uniform for a [rows x cols] matrix.
  Tensor& add_xavier(const std::string& name, std::size_t rows,
                     std::size_t cols, RngStream& rng);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  const std::string& prefix() const { return prefix_; }

  BatchNormState& add_batch_norm_state(const std::string& name,
                                       std::size_t features);

  void zero_grads();
  // FNV-1a over the raw value bytes in sorted name order.
  std::uint64_t values_hash() const;

  std::vector<double>& rms_accumulator(const std::string& name);
  const std::map<std::string, BatchNormState>& batch_norm_states() const {
    return bn_;
  }
  std::map<std::string, BatchNormState>& batch_norm_states() { return bn_; }

 private:
  std::string prefix_;
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> rms_;
  std::map<std::string, BatchNormState> bn_;
};

// acc <- decay*acc + (1-decay)*g^2; p <- p - lr*g/(sqrt(acc)+eps); grads zeroed.
// Every parameter in the store must have a populated gradient.
void rmsprop_step(ParamStore& store, double lr = 1e-3, double decay = 0.9,
                  double eps = 1e-8);

// Clamp every parameter value into [-c, c]. c must be positive.
void clip_weights(ParamStore& store, double c);

}  // namespace advnlg
