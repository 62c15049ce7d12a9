#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sgcl {

using Shape = std::vector<std::int64_t>;

namespace detail {
struct TensorNode;
}

/// Dense 64-bit real array participating in reverse-mode gradient
/// accumulation. A Tensor is a cheap value-semantic handle onto a shared
/// graph node; values are immutable after construction, the grad
/// accumulator is the only mutable field.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const;
  int rank() const;
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  const std::vector<double>& values() const;
  double operator[](std::int64_t flat_index) const;
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  /// True while a gradient accumulator is attached (i.e. after a backward
  /// pass reached this leaf).
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Whether backward() can reach trainable leaves through this tensor.
  bool needs_grad() const;

  /// Constant copy of the values, detached from any graph.
  Tensor detach() const;

  /// Replaces the stored values in-place. Only valid on graph-free leaves;
  /// used by the optimizer, which owns its parameters single-writer.
  void assign_values(std::span<const double> new_values);

  detail::TensorNode* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_result(Shape shape, std::vector<double> values,
                               std::vector<Tensor> parents,
                               std::function<void(const std::vector<double>&,
                                                  std::span<std::vector<double>*>)>
                                   backprop);
};

/// A tensor with a stable name, the unit that optimizers, checkpoints and
/// gradient checks operate on.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Disables graph recording for the lifetime of the guard; ops evaluated
/// under it produce constants. Thread-local.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Runs reverse-mode accumulation from a scalar root. Each reachable leaf
/// with requires_grad accumulates d(root)/d(leaf); repeated calls add up
/// until zero_grad().
void backward(const Tensor& root);

// ---- elementwise / scalar-broadcast arithmetic ------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
/// Multiply by a plain constant (no graph node for the constant).
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);

Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor gelu(const Tensor& a);

// ---- reductions --------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Maximum over all entries; gradient routes to the first argmax.
Tensor reduce_max(const Tensor& a);
Tensor l2_norm(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
/// log(sum(exp(x))) over a rank-1 tensor, computed with max-subtraction.
Tensor log_sum_exp(const Tensor& a);

// ---- shape and matrix ops ----------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// v[k] times W[k x n] -> [n].
Tensor vecmat(const Tensor& v, const Tensor& w);
Tensor transpose(const Tensor& a);
Tensor slice_rows(const Tensor& a, std::int64_t row_begin, std::int64_t row_end);
Tensor slice_cols(const Tensor& a, std::int64_t col_begin, std::int64_t col_end);
/// Row i of a rank-2 tensor as a rank-1 vector.
Tensor row(const Tensor& a, std::int64_t i);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
/// n scalar tensors -> rank-1 [n].
Tensor stack_scalars(std::span<const Tensor> scalars);
/// Adds v[n] to every row of m[r x n].
Tensor add_rowvec(const Tensor& m, const Tensor& v);

// ---- neural-net primitives ----------------------------------------------

/// Row-wise softmax with per-row max subtraction. Rejects non-finite input.
Tensor softmax_rows(const Tensor& a);
/// Per-row normalization of x[t x d] with learned gain/bias[d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-12);
/// Gathers rows of table[v x d] at the given ids -> [ids.size() x d].
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
/// Per-dimension max over rows of h[t x d] where mask is nonzero.
Tensor masked_max_rows(const Tensor& h, std::span<const int> mask);
/// Per-dimension mean over rows of h[t x d] where mask is nonzero.
Tensor masked_mean_rows(const Tensor& h, std::span<const int> mask);

}  // namespace sgcl
