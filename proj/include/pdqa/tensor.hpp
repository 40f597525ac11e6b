#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdqa/rng.hpp"

namespace pdqa {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_to_string(const Shape& s);

namespace detail {

struct TensorData {
  Shape shape;
  Eigen::ArrayXd values;
  bool requires_grad = false;
  Eigen::ArrayXd grad;  // persistent; accumulates across backward calls
  bool grad_allocated = false;
  // Scratch gradient for one backward pass. Epochs mark which pass the
  // scratch belongs to so stale buffers are never read.
  Eigen::ArrayXd pass_grad;
  std::uint64_t pass_epoch = 0;
  std::uint64_t sink_epoch = 0;
};

}  // namespace detail

// Dense n-dimensional 64-bit float array with an optional gradient buffer.
// Copies are shallow: Tensor is a value-semantic handle onto shared storage,
// which is what lets recorded operations refer back to their operands.
// Values are treated as immutable once produced by an operation; only leaf
// tensors (parameters) are mutated, through values_mut().
class Tensor {
 public:
  Tensor() = default;

  static Tensor allocate(Shape shape);  // uninitialized values
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  bool is_scalar() const { return size() == 1 && rank() == 0; }

  // 2-D accessors; rows()/cols() require rank <= 2 (rank-1 is a row vector
  // of shape {1, n} for these purposes, rank-0 is {1, 1}).
  std::size_t rows() const;
  std::size_t cols() const;

  double value() const;  // rank-0 only
  double at(std::size_t flat_index) const;
  double at(std::size_t row, std::size_t col) const;

  const Eigen::ArrayXd& values() const;
  Eigen::ArrayXd& values_mut();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  const Eigen::ArrayXd& grad() const;
  void zero_grad();

  // Identity comparison (same underlying storage).
  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

  std::shared_ptr<detail::TensorData> node() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : data_(std::move(d)) {}
  std::shared_ptr<detail::TensorData> data_;
};

// Ordered record of the operations of one forward pass. Each node holds the
// operands it involves and a local backward rule; replaying the rules in
// reverse recorded order is reverse-mode differentiation.
class Tape {
 public:
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  struct Node {
    std::function<void()> backprop;
    std::vector<std::shared_ptr<detail::TensorData>> involved;
  };
  std::vector<Node> nodes_;
};

// While a TapeScope is alive, operations whose inputs require gradients are
// recorded on the given tape. Without an active scope, the same operations
// run as plain math. Single-threaded by contract.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// ---- Operations --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);

// rows of m plus the (broadcast) vector v of length cols(m)
Tensor add_rowvec(const Tensor& m, const Tensor& v);

Tensor matmul(const Tensor& a, const Tensor& b);     // a [m x k] * b [k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a [m x k] * b^T [k x n]

// Softmax along `axis` (rank-1: axis 0; rank-2: axis 0 = down columns,
// axis 1 = along rows). Max-subtracted for stability.
Tensor softmax(const Tensor& x, std::size_t axis);

// Row-wise normalization to zero mean / unit variance (population variance,
// eps-regularized), then an affine map by gain and bias of length cols(x).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

// Exact erf-based Gaussian error linear unit: x * Phi(x).
Tensor gelu(const Tensor& x);

Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);  // rank-0 result

Tensor dot(const Tensor& a, const Tensor& b);  // flat dot product, rank-0

// x / ||x||_2 over the flattened buffer; rejects zero input.
Tensor l2_normalize(const Tensor& x);

Tensor slice_rows(const Tensor& x, std::size_t first, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t first, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// rows of `table` selected by index; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);

// Pack rank-0 tensors into a rank-1 vector.
Tensor stack_scalars(const std::vector<Tensor>& scalars);

// Same data, new shape of identical total size.
Tensor reshape(const Tensor& x, Shape shape);

// ---- Backward ----------------------------------------------------------

// Reverse replay of the tape from a scalar loss. Populates (accumulates
// into) .grad for every tensor with requires_grad that took part in the
// recorded forward; tensors on the tape that the loss does not depend on
// receive zeros. Accumulation is additive: calling backward twice without
// zero_grad doubles every gradient.
void backward(const Tensor& loss, Tape& tape);

// ---- Finite-difference oracle -------------------------------------------

// Central differences (f(p+h) - f(p-h)) / 2h for every scalar of every
// listed parameter. f must be a deterministic function of the parameter
// values; parameters are perturbed in place and restored.
std::vector<std::vector<double>> finite_diff_gradient(
    const std::function<double()>& f, const std::vector<Tensor>& params,
    double step);

// Robust relative error used by all gradient checks:
//   |a - f| / max(|a|, |f|, floor)
// so near-zero gradients are compared on an absolute scale.
double max_relative_error(const std::vector<double>& analytic,
                          const std::vector<double>& numeric,
                          double floor = 1e-6);

}  // namespace pdqa
