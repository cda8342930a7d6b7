#include "mmcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

namespace mmcl {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor: rank must be 1 or 2, got rank " +
                         std::to_string(shape.size()));
  }
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor: non-positive dimension");
  }
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const Shape& b) {
  throw DimensionError(op + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " do not conform");
}

// C[m x n] (+)= op(A) * op(B) over raw row-major buffers.
void raw_gemm(double* c, const double* a, int ar, int ac, bool ta,
              const double* b, int br, int bc, bool tb, bool accumulate) {
  const int m = ta ? ac : ar;
  const int k = ta ? ar : ac;
  const int n = tb ? br : bc;
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      const double* arow = a + static_cast<std::size_t>(i) * ac;
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (int t = 0; t < k; ++t) {
        const double av = arow[t];
        if (av == 0.0) continue;
        const double* brow = b + static_cast<std::size_t>(t) * bc;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) {
        const double av = ta ? a[static_cast<std::size_t>(t) * ac + i]
                             : a[static_cast<std::size_t>(i) * ac + t];
        const double bv = tb ? b[static_cast<std::size_t>(j) * bc + t]
                             : b[static_cast<std::size_t>(t) * bc + j];
        acc += av * bv;
      }
      c[static_cast<std::size_t>(i) * n + j] += acc;
    }
  }
}

// Broadcast index map for add/mul: identity, one-element operand, or a row
// vector repeated over matrix rows.
struct IndexMap {
  enum Kind { kSame, kScalar, kRow } kind = kSame;
  std::size_t cols = 0;
  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case kSame: return i;
      case kScalar: return 0;
      case kRow: return i % cols;
    }
    return i;
  }
};

struct BroadcastPlan {
  Shape out_shape;
  IndexMap map_a;
  IndexMap map_b;
};

bool is_row_of(const Shape& row, const Shape& mat) {
  if (mat.size() != 2) return false;
  if (row.size() == 1) return row[0] == mat[1];
  return row.size() == 2 && row[0] == 1 && row[1] == mat[1];
}

BroadcastPlan broadcast_plan(const std::string& op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out_shape = a;
    return plan;
  }
  if (shape_numel(b) == 1) {
    plan.out_shape = a;
    plan.map_b.kind = IndexMap::kScalar;
    return plan;
  }
  if (shape_numel(a) == 1) {
    plan.out_shape = b;
    plan.map_a.kind = IndexMap::kScalar;
    return plan;
  }
  if (is_row_of(b, a)) {
    plan.out_shape = a;
    plan.map_b = {IndexMap::kRow, static_cast<std::size_t>(a[1])};
    return plan;
  }
  if (is_row_of(a, b)) {
    plan.out_shape = b;
    plan.map_a = {IndexMap::kRow, static_cast<std::size_t>(b[1])};
    return plan;
  }
  dim_error(op, a, b);
}

bool should_record(const Tensor& a) { return g_active_tape && a.tracked(); }
bool should_record(const Tensor& a, const Tensor& b) {
  return g_active_tape && (a.tracked() || b.tracked());
}

}  // namespace

// --------------------------------------------------------------------------
// Tensor
// --------------------------------------------------------------------------

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  storage_ = std::make_shared<TensorStorage>();
  storage_->values.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  validate_shape(shape_);
  if (shape_numel(shape_) != values.size()) {
    throw DimensionError("tensor: value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape_));
  }
  storage_ = std::make_shared<TensorStorage>();
  storage_->values = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank()));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor has " + std::to_string(numel()) +
                        " elements, expected 1");
  }
  return storage_->values[0];
}

std::vector<double>& Tensor::grad() {
  if (!tracked()) throw ContractError("grad: tensor has no gradient buffer");
  return *storage_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!tracked()) throw ContractError("grad: tensor has no gradient buffer");
  return *storage_->grad;
}

void Tensor::ensure_grad() {
  if (!storage_) throw ContractError("ensure_grad: undefined tensor");
  if (!storage_->grad) {
    storage_->grad =
        std::make_shared<std::vector<double>>(storage_->values.size(), 0.0);
  }
}

void Tensor::zero_grad() {
  if (storage_ && storage_->grad) {
    std::fill(storage_->grad->begin(), storage_->grad->end(), 0.0);
  }
}

// --------------------------------------------------------------------------
// Tape
// --------------------------------------------------------------------------

Tape::~Tape() = default;

void Tape::record(std::function<void()> backward_step) {
  records_.push_back(std::move(backward_step));
}

void Tape::replay_backward() {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(Tensor& loss) {
  if (!g_active_tape) throw ContractError("backward: no active tape");
  if (!loss.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  }
  loss.ensure_grad();
  loss.grad()[0] += 1.0;
  g_active_tape->replay_backward();
}

// --------------------------------------------------------------------------
// matmul
// --------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  if ((a.rank() == 1 && transpose_a) || (b.rank() == 1 && transpose_b)) {
    throw ContractError("matmul: transpose flag on a rank-1 operand");
  }
  if (a.rank() == 1 && b.rank() == 1) dim_error("matmul", a.shape(), b.shape());

  // Normalize rank-1 operands to a row (left) or column (right).
  const int ar = a.rank() == 1 ? 1 : a.dim(0);
  const int ac = a.rank() == 1 ? a.dim(0) : a.dim(1);
  const int br = b.rank() == 1 ? b.dim(0) : b.dim(0);
  const int bc = b.rank() == 1 ? 1 : b.dim(1);
  const int m = transpose_a ? ac : ar;
  const int k = transpose_a ? ar : ac;
  const int k2 = transpose_b ? bc : br;
  const int n = transpose_b ? br : bc;
  if (k != k2) dim_error("matmul", a.shape(), b.shape());

  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    out_shape = {m, n};
  } else if (a.rank() == 2) {
    out_shape = {m};
  } else {
    out_shape = {n};
  }
  Tensor out(out_shape);
  raw_gemm(out.values().data(), a.values().data(), ar, ac, transpose_a,
           b.values().data(), br, bc, transpose_b, false);

  if (should_record(a, b)) {
    out.ensure_grad();
    auto ad = a.data_handle(), bd = b.data_handle();
    auto ag = a.grad_handle(), bg = b.grad_handle();
    auto og = out.grad_handle();
    const bool ta = transpose_a, tb = transpose_b;
    g_active_tape->record([=]() {
      const double* g = og->data();
      if (ag) {
        if (!ta) {
          // dA += dC * op(B)^T
          raw_gemm(ag->data(), g, m, n, false, bd->values.data(), br, bc, !tb, true);
        } else {
          // stored A is [k x m]: dA += op(B) * dC^T
          raw_gemm(ag->data(), bd->values.data(), br, bc, tb, g, m, n, true, true);
        }
      }
      if (bg) {
        if (!tb) {
          // dB += op(A)^T * dC
          raw_gemm(bg->data(), ad->values.data(), ar, ac, !ta, g, m, n, false, true);
        } else {
          // stored B is [n x k]: dB += dC^T * op(A)
          raw_gemm(bg->data(), g, m, n, true, ad->values.data(), ar, ac, ta, true);
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// add / mul
// --------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  BroadcastPlan plan = broadcast_plan("add", a.shape(), b.shape());
  Tensor out(plan.out_shape);
  const std::size_t n = out.numel();
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[plan.map_a(i)] + bv[plan.map_b(i)];

  if (should_record(a, b)) {
    out.ensure_grad();
    auto ag = a.grad_handle(), bg = b.grad_handle();
    auto og = out.grad_handle();
    const IndexMap ma = plan.map_a, mb = plan.map_b;
    g_active_tape->record([=]() {
      const auto& g = *og;
      if (ag) {
        auto& da = *ag;
        for (std::size_t i = 0; i < n; ++i) da[ma(i)] += g[i];
      }
      if (bg) {
        auto& db = *bg;
        for (std::size_t i = 0; i < n; ++i) db[mb(i)] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  BroadcastPlan plan = broadcast_plan("mul", a.shape(), b.shape());
  Tensor out(plan.out_shape);
  const std::size_t n = out.numel();
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[plan.map_a(i)] * bv[plan.map_b(i)];

  if (should_record(a, b)) {
    out.ensure_grad();
    auto ad = a.data_handle(), bd = b.data_handle();
    auto ag = a.grad_handle(), bg = b.grad_handle();
    auto og = out.grad_handle();
    const IndexMap ma = plan.map_a, mb = plan.map_b;
    g_active_tape->record([=]() {
      const auto& g = *og;
      if (ag) {
        auto& da = *ag;
        const auto& bvv = bd->values;
        for (std::size_t i = 0; i < n; ++i) da[ma(i)] += g[i] * bvv[mb(i)];
      }
      if (bg) {
        auto& db = *bg;
        const auto& avv = ad->values;
        for (std::size_t i = 0; i < n; ++i) db[mb(i)] += g[i] * avv[ma(i)];
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// concat / slice
// --------------------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) {
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  int axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) dim_error("concat", parts[0].shape(), p.shape());
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.dim(d) != parts[0].dim(d)) {
        dim_error("concat", parts[0].shape(), p.shape());
      }
    }
    axis_total += p.dim(axis);
  }
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  Tensor out(out_shape);

  const int cols = rank == 2 ? out.dim(1) : out.dim(0);
  // Row-major copy; along axis 0 parts are contiguous blocks, along the last
  // axis they interleave per row.
  int offset = 0;
  bool any_tracked = false;
  for (const Tensor& p : parts) {
    any_tracked = any_tracked || p.tracked();
    const int prows = rank == 2 ? p.dim(0) : 1;
    const int pcols = rank == 2 ? p.dim(1) : p.dim(0);
    if (axis == 0 && rank == 2) {
      std::copy(p.values().begin(), p.values().end(),
                out.values().begin() + static_cast<std::size_t>(offset) * cols);
      offset += prows;
    } else {
      // last axis (or rank-1)
      for (int r = 0; r < prows; ++r) {
        for (int c = 0; c < pcols; ++c) {
          out.values()[static_cast<std::size_t>(r) * cols + offset + c] =
              p.values()[static_cast<std::size_t>(r) * pcols + c];
        }
      }
      offset += pcols;
    }
  }

  if (g_active_tape && any_tracked) {
    out.ensure_grad();
    auto og = out.grad_handle();
    struct PartRef {
      std::shared_ptr<std::vector<double>> grad;
      int offset, rows, cols;
    };
    std::vector<PartRef> refs;
    int off = 0;
    for (const Tensor& p : parts) {
      const int prows = rank == 2 ? p.dim(0) : 1;
      const int pcols = rank == 2 ? p.dim(1) : p.dim(0);
      refs.push_back({p.grad_handle(), off, prows, pcols});
      off += (axis == 0 && rank == 2) ? prows : pcols;
    }
    const bool along_rows = (axis == 0 && rank == 2);
    g_active_tape->record([og, refs = std::move(refs), cols, along_rows]() {
      const auto& g = *og;
      for (const PartRef& ref : refs) {
        if (!ref.grad) continue;
        auto& pg = *ref.grad;
        if (along_rows) {
          const std::size_t base = static_cast<std::size_t>(ref.offset) * cols;
          for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[base + i];
        } else {
          for (int r = 0; r < ref.rows; ++r) {
            for (int c = 0; c < ref.cols; ++c) {
              pg[static_cast<std::size_t>(r) * ref.cols + c] +=
                  g[static_cast<std::size_t>(r) * cols + ref.offset + c];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, int start, int end) {
  if (axis < 0 || axis >= x.rank()) {
    throw DimensionError("slice: axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(x.rank()));
  }
  if (start < 0 || end > x.dim(axis) || start >= end) {
    throw ContractError("slice: range [" + std::to_string(start) + "," +
                        std::to_string(end) + ") invalid for axis extent " +
                        std::to_string(x.dim(axis)));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = end - start;
  Tensor out(out_shape);

  const int cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (x.rank() == 1 || axis == 0) {
    if (x.rank() == 1) {
      std::copy(x.values().begin() + start, x.values().begin() + end,
                out.values().begin());
    } else {
      std::copy(x.values().begin() + static_cast<std::size_t>(start) * cols,
                x.values().begin() + static_cast<std::size_t>(end) * cols,
                out.values().begin());
    }
  } else {
    const int rows = x.dim(0);
    const int width = end - start;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < width; ++c) {
        out.values()[static_cast<std::size_t>(r) * width + c] =
            x.values()[static_cast<std::size_t>(r) * cols + start + c];
      }
    }
  }

  if (should_record(x)) {
    out.ensure_grad();
    auto xg = x.grad_handle();
    auto og = out.grad_handle();
    const bool row_slice = (x.rank() == 1 || axis == 0);
    const int rank1 = x.rank() == 1;
    const int rows = x.rank() == 2 ? x.dim(0) : 1;
    const int width = end - start;
    g_active_tape->record([=]() {
      const auto& g = *og;
      auto& dx = *xg;
      if (row_slice) {
        const std::size_t base =
            rank1 ? static_cast<std::size_t>(start)
                  : static_cast<std::size_t>(start) * cols;
        for (std::size_t i = 0; i < g.size(); ++i) dx[base + i] += g[i];
      } else {
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < width; ++c) {
            dx[static_cast<std::size_t>(r) * cols + start + c] +=
                g[static_cast<std::size_t>(r) * width + c];
          }
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Elementwise nonlinearities
// --------------------------------------------------------------------------

namespace {

// y = fn(x); backward uses dfn(x value, y value).
template <typename Fn, typename Dfn>
Tensor elementwise(const Tensor& x, Fn fn, Dfn dfn) {
  Tensor out(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fn(xv[i]);

  if (should_record(x)) {
    out.ensure_grad();
    auto xd = x.data_handle();
    auto od = out.data_handle();
    auto xg = x.grad_handle();
    auto og = out.grad_handle();
    g_active_tape->record([xd, od, xg, og, dfn]() {
      const auto& g = *og;
      const auto& xs = xd->values;
      const auto& ys = od->values;
      auto& dx = *xg;
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * dfn(xs[i], ys[i]);
    });
  }
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return elementwise(
      x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return elementwise(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (v <= 0.0) {
      throw DomainError("log: non-positive value " + std::to_string(v));
    }
  }
  return elementwise(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return elementwise(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& x) {
  return elementwise(
      x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

// --------------------------------------------------------------------------
// mean_pool
// --------------------------------------------------------------------------

Tensor mean_pool(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw DimensionError("mean-pool: axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(x.rank()));
  }
  Tensor out;
  int count = x.dim(axis);
  if (x.rank() == 1) {
    out = Tensor({1});
    double s = 0.0;
    for (double v : x.values()) s += v;
    out.values()[0] = s / count;
  } else {
    const int rows = x.dim(0), cols = x.dim(1);
    if (axis == 0) {
      out = Tensor({cols});
      for (int c = 0; c < cols; ++c) {
        double s = 0.0;
        for (int r = 0; r < rows; ++r) s += x(r, c);
        out.values()[static_cast<std::size_t>(c)] = s / rows;
      }
    } else {
      out = Tensor({rows});
      for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += x(r, c);
        out.values()[static_cast<std::size_t>(r)] = s / cols;
      }
    }
  }

  if (should_record(x)) {
    out.ensure_grad();
    auto xg = x.grad_handle();
    auto og = out.grad_handle();
    const int rank = x.rank();
    const int rows = rank == 2 ? x.dim(0) : 1;
    const int cols = rank == 2 ? x.dim(1) : x.dim(0);
    g_active_tape->record([xg, og, rank, rows, cols, axis, count]() {
      const auto& g = *og;
      auto& dx = *xg;
      const double inv = 1.0 / count;
      if (rank == 1) {
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0] * inv;
      } else if (axis == 0) {
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) {
            dx[static_cast<std::size_t>(r) * cols + c] += g[c] * inv;
          }
        }
      } else {
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) {
            dx[static_cast<std::size_t>(r) * cols + c] += g[r] * inv;
          }
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// embedding_lookup
// --------------------------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw DimensionError("embedding-lookup: table must be rank 2, got " +
                         shape_str(table.shape()));
  }
  if (ids.empty()) throw ContractError("embedding-lookup: empty id list");
  const int vocab = table.dim(0), dim = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw IndexError("embedding-lookup: id " + std::to_string(id) +
                       " outside table of " + std::to_string(vocab) + " rows");
    }
  }
  Tensor out({static_cast<int>(ids.size()), dim});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const double* src = table.values().data() + static_cast<std::size_t>(ids[t]) * dim;
    std::copy(src, src + dim, out.values().data() + t * dim);
  }

  if (should_record(table)) {
    out.ensure_grad();
    auto tg = table.grad_handle();
    auto og = out.grad_handle();
    std::vector<int> ids_copy(ids.begin(), ids.end());
    g_active_tape->record([tg, og, ids_copy = std::move(ids_copy), dim]() {
      const auto& g = *og;
      auto& dt = *tg;
      for (std::size_t t = 0; t < ids_copy.size(); ++t) {
        double* dst = dt.data() + static_cast<std::size_t>(ids_copy[t]) * dim;
        const double* src = g.data() + t * dim;
        for (int c = 0; c < dim; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// softmax
// --------------------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(x.rank()));
  }
  for (double v : x.values()) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  }
  Tensor out(x.shape());
  const int rank = x.rank();
  const int rows = rank == 2 ? x.dim(0) : 1;
  const int cols = rank == 2 ? x.dim(1) : x.dim(0);
  // Slices run along `axis`; stride/extent describe how to walk one slice.
  const int n_slices = rank == 1 ? 1 : (axis == 1 ? rows : cols);
  const int extent = rank == 1 ? cols : (axis == 1 ? cols : rows);
  const int stride = rank == 1 ? 1 : (axis == 1 ? 1 : cols);
  const int slice_step = rank == 1 ? 0 : (axis == 1 ? cols : 1);

  const auto& xv = x.values();
  auto& ov = out.values();
  for (int s = 0; s < n_slices; ++s) {
    const std::size_t base = static_cast<std::size_t>(s) * slice_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < extent; ++i) {
      mx = std::max(mx, xv[base + static_cast<std::size_t>(i) * stride]);
    }
    double denom = 0.0;
    for (int i = 0; i < extent; ++i) {
      const std::size_t idx = base + static_cast<std::size_t>(i) * stride;
      ov[idx] = std::exp(xv[idx] - mx);
      denom += ov[idx];
    }
    for (int i = 0; i < extent; ++i) {
      ov[base + static_cast<std::size_t>(i) * stride] /= denom;
    }
  }

  if (should_record(x)) {
    out.ensure_grad();
    auto od = out.data_handle();
    auto xg = x.grad_handle();
    auto og = out.grad_handle();
    g_active_tape->record([od, xg, og, n_slices, extent, stride, slice_step]() {
      const auto& g = *og;
      const auto& y = od->values;
      auto& dx = *xg;
      for (int s = 0; s < n_slices; ++s) {
        const std::size_t base = static_cast<std::size_t>(s) * slice_step;
        double inner = 0.0;
        for (int i = 0; i < extent; ++i) {
          const std::size_t idx = base + static_cast<std::size_t>(i) * stride;
          inner += g[idx] * y[idx];
        }
        for (int i = 0; i < extent; ++i) {
          const std::size_t idx = base + static_cast<std::size_t>(i) * stride;
          dx[idx] += y[idx] * (g[idx] - inner);
        }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// Composites
// --------------------------------------------------------------------------

Tensor scale(const Tensor& x, double c) { return mul(x, Tensor::scalar(c)); }

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor sum(const Tensor& x, int axis) {
  return scale(mean_pool(x, axis), static_cast<double>(x.dim(axis)));
}

Tensor sum_all(const Tensor& x) {
  if (x.rank() == 1) return sum(x, 0);
  return sum(sum(x, 1), 0);
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum_all(mul(a, b)); }

Tensor sqrt_pos(const Tensor& x) { return exp(scale(log(x), 0.5)); }

Tensor reciprocal_pos(const Tensor& x) { return exp(neg(log(x))); }

Tensor clamp_min(const Tensor& x, double floor) {
  return add(leaky_relu(sub(x, Tensor::scalar(floor)), 0.0), Tensor::scalar(floor));
}

Tensor detach(const Tensor& x) {
  return Tensor(x.shape(), x.values());
}

// --------------------------------------------------------------------------
// Dispatcher
// --------------------------------------------------------------------------

std::string op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kConcatLastAxis: return "concat-last-axis";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kMeanPool: return "mean-pool";
    case OpKind::kSlice: return "slice";
    case OpKind::kEmbeddingLookup: return "embedding-lookup";
  }
  return "unknown";
}

namespace {

void expect_arity(OpKind kind, std::span<const Tensor> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw ContractError(op_name(kind) + ": expected " + std::to_string(n) +
                        " inputs, got " + std::to_string(inputs.size()));
  }
}

}  // namespace

Tensor primitive(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::kMatmul:
      expect_arity(kind, inputs, 2);
      return matmul(inputs[0], inputs[1], attrs.transpose_a, attrs.transpose_b);
    case OpKind::kAdd:
      expect_arity(kind, inputs, 2);
      return add(inputs[0], inputs[1]);
    case OpKind::kMul:
      expect_arity(kind, inputs, 2);
      return mul(inputs[0], inputs[1]);
    case OpKind::kConcatLastAxis: {
      if (inputs.empty()) throw ContractError("concat-last-axis: no inputs");
      return concat(inputs, inputs[0].rank() - 1);
    }
    case OpKind::kSigmoid:
      expect_arity(kind, inputs, 1);
      return sigmoid(inputs[0]);
    case OpKind::kTanh:
      expect_arity(kind, inputs, 1);
      return tanh(inputs[0]);
    case OpKind::kExp:
      expect_arity(kind, inputs, 1);
      return exp(inputs[0]);
    case OpKind::kLog:
      expect_arity(kind, inputs, 1);
      return log(inputs[0]);
    case OpKind::kLeakyRelu:
      expect_arity(kind, inputs, 1);
      return leaky_relu(inputs[0], attrs.slope);
    case OpKind::kMeanPool:
      expect_arity(kind, inputs, 1);
      return mean_pool(inputs[0], attrs.axis);
    case OpKind::kSlice:
      expect_arity(kind, inputs, 1);
      return slice(inputs[0], attrs.axis, attrs.start, attrs.end);
    case OpKind::kEmbeddingLookup:
      expect_arity(kind, inputs, 1);
      return embedding_lookup(inputs[0], attrs.ids);
  }
  throw ContractError("primitive: unknown op kind");
}

// --------------------------------------------------------------------------
// grad_check
// --------------------------------------------------------------------------

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double eps) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    for (Tensor& t : inputs) {
      tape.watch(t);
      t.zero_grad();
    }
    Tensor y = f(inputs);
    if (!y.is_scalar()) {
      throw ContractError("grad_check: function must be scalar-valued");
    }
    backward(y);
    for (Tensor& t : inputs) analytic.push_back(t.grad());
  }

  double max_err = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = inputs[i].values();
    for (std::size_t c = 0; c < vals.size(); ++c) {
      const double saved = vals[c];
      vals[c] = saved + eps;
      const double y_plus = f(inputs).item();
      vals[c] = saved - eps;
      const double y_minus = f(inputs).item();
      vals[c] = saved;
      const double numeric = (y_plus - y_minus) / (2.0 * eps);
      const double a = analytic[i][c];
      double err;
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        err = std::numeric_limits<double>::infinity();
      } else {
        err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      }
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace mmcl
