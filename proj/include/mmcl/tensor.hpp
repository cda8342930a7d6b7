#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmcl/errors.hpp"

namespace mmcl {

using Shape = std::vector<int>;

/// Shared value/gradient storage. The gradient buffer lives here rather than
/// in the Tensor handle so that watching any copy of a tensor makes every
/// copy tracked.
struct TensorStorage {
  std::vector<double> values;
  std::shared_ptr<std::vector<double>> grad;
};

/// Dense 64-bit real tensor in row-major order, rank 1 or 2.
///
/// Copies are shallow: the value buffer and the gradient buffer are shared,
/// so a Tensor behaves like a handle. A tensor participates in reverse-mode
/// differentiation when it owns a gradient buffer and a Tape is active while
/// ops are applied to it.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return storage_ ? storage_->values.size() : 0; }
  bool is_scalar() const { return numel() == 1; }

  double item() const;  // value of a one-element tensor

  double operator()(int i) const { return storage_->values[static_cast<std::size_t>(i)]; }
  double& operator()(int i) { return storage_->values[static_cast<std::size_t>(i)]; }
  double operator()(int i, int j) const { return storage_->values[flat(i, j)]; }
  double& operator()(int i, int j) { return storage_->values[flat(i, j)]; }

  std::vector<double>& values() { return storage_->values; }
  const std::vector<double>& values() const { return storage_->values; }

  /// True when this tensor accumulates gradients during backward().
  bool tracked() const { return storage_ && storage_->grad != nullptr; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void ensure_grad();
  void zero_grad();
  void drop_grad() {
    if (storage_) storage_->grad.reset();
  }

  std::shared_ptr<TensorStorage> data_handle() const { return storage_; }
  std::shared_ptr<std::vector<double>> grad_handle() const {
    return storage_ ? storage_->grad : nullptr;
  }

private:
  std::size_t flat(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(shape_[1]) +
           static_cast<std::size_t>(j);
  }

  Shape shape_;
  std::shared_ptr<TensorStorage> storage_;
};

/// Ordered record of primitive applications. Replayed in reverse by
/// backward(); every record accumulates (never overwrites) into the input
/// gradient buffers, so parameters shared by several consumers collect the
/// sum of their contributions.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void watch(Tensor& t) { t.ensure_grad(); }
  void record(std::function<void()> backward_step);
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }
  void replay_backward();

  static Tape* active();

private:
  friend class TapeScope;
  std::vector<std::function<void()>> records_;
};

/// RAII activation of a tape for the current thread.
class TapeScope {
public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* previous_;
};

// ---------------------------------------------------------------------------
// Primitive ops. Each op checks shapes, computes the forward value, and when
// a tape is active and any input is tracked, records its backward step.
// ---------------------------------------------------------------------------

/// matmul supports [m,k]x[k,n] -> [m,n], [m,k]x[k] -> [m], [k]x[k,n] -> [n].
/// Transpose flags apply to rank-2 operands only.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);

/// add/mul broadcast: identical shapes, a one-element operand against any
/// shape, or a row vector ([d] or [1,d]) against a matrix [n,d].
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.01);
Tensor elu(const Tensor& x);

/// Mean along `axis`; the axis is removed ([n,d] ax0 -> [d], rank-1 -> [1]).
Tensor mean_pool(const Tensor& x, int axis);

/// Contiguous [start,end) slice along `axis`, rank preserving.
Tensor slice(const Tensor& x, int axis, int start, int end);

/// Row gather from a [V,d] table; gradients scatter-add into the table.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

/// Numerically stable softmax along `axis`; slices sum to 1.
Tensor softmax(const Tensor& x, int axis);

// Composites assembled from the primitives above.
Tensor scale(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor sqrt_pos(const Tensor& x);       // exp(log(x)/2); requires x > 0
Tensor reciprocal_pos(const Tensor& x); // exp(-log(x)); requires x > 0
Tensor clamp_min(const Tensor& x, double floor);
Tensor detach(const Tensor& x);

// ---------------------------------------------------------------------------
// Uniform dispatcher over the primitive set, used by the per-primitive
// gradient property tests.
// ---------------------------------------------------------------------------

enum class OpKind {
  kMatmul,
  kAdd,
  kMul,
  kConcatLastAxis,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kLeakyRelu,
  kMeanPool,
  kSlice,
  kEmbeddingLookup,
};

struct OpAttrs {
  double slope = 0.01;
  int axis = 0;
  int start = 0;
  int end = 0;
  std::vector<int> ids;
  bool transpose_a = false;
  bool transpose_b = false;
};

Tensor primitive(OpKind kind, std::span<const Tensor> inputs,
                 const OpAttrs& attrs = {});
std::string op_name(OpKind kind);

/// Seeds d(loss)/d(loss) = 1 and replays the active tape backward.
/// One backward pass per recorded tape; replaying the same records twice
/// double-counts their contributions.
void backward(Tensor& loss);

/// Central finite differences against tape gradients for a scalar-valued f.
/// Returns the max over coordinates of |a-n| / max(1e-8, |a|+|n|); non-finite
/// differences surface as +infinity.
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace mmcl
