#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tensor is a shared handle to a node holding a value and, for nodes that
// require gradients, an accumulator. Operations record themselves on the
// thread's active Tape (see TapeScope) whenever an input requires a gradient;
// with no active tape they only compute values. Tape::backward walks the
// records in reverse creation order, which is a topological order by
// construction.

#include <nci/common.hpp>

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace nci {

struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
  void accumulate(Matrix&& g) {
    if (grad.size() == 0) {
      grad = std::move(g);
    } else {
      grad += g;
    }
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Accumulated gradient; a zero matrix of the value's shape when none yet.
  Matrix grad() const;
  bool has_grad() const { return node_ && node_->grad.size() != 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  /// Value of a 1x1 tensor.
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

enum class Primitive {
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Relu,
  Tanh,
  ConcatCols,
  MeanRows,
  RowMeanPool,
  SoftmaxCrossEntropy,
  FrobeniusSq,
  RbfGram,
  // Internal helpers used by the composites.
  SpdSolve,
  Transpose,
  AddRowBroadcast,
  AddDiagonal,
  SliceRows,
  ConcatRows,
  Sum,
  Fusion,
};

std::string_view primitive_name(Primitive p);
/// Parses a catalog name such as "matmul" or "rbf-gram"; throws UsageError.
Primitive primitive_from_name(std::string_view name);

struct Record {
  Primitive op;
  std::vector<std::shared_ptr<Node>> inputs;
  std::shared_ptr<Node> output;
  std::function<void()> backward;
};

class Tape {
 public:
  void push(Record r) { records_.push_back(std::move(r)); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad leaf.
  /// Leaf gradients accumulate across calls; intermediate ones are reset.
  void backward(const Tensor& loss);

  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

/// The tape operations record on; nullptr outside any TapeScope.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// --- primitive catalog ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Column means, as a 1 x cols row.
Tensor mean_rows(const Tensor& a);
/// Averages consecutive groups of `group` rows: (rows/group) x cols.
Tensor row_mean_pool(const Tensor& a, Index group);
/// Mean over rows of -log softmax(logits)[label].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor frobenius_sq(const Tensor& a);
/// K_ij = exp(-|z_i - z_j|^2 / (2 bandwidth^2)); bandwidth is a constant.
Tensor rbf_gram(const Tensor& z, double bandwidth);

/// X with A X = B for symmetric positive definite A (Cholesky).
Tensor spd_solve(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);
Tensor add_row_broadcast(const Tensor& a, const Tensor& row);
/// a + c I for square a.
Tensor add_diagonal(const Tensor& a, double c);
Tensor slice_rows(const Tensor& a, Index begin, Index count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor sum(const Tensor& a);
/// [a, b, min(a,b)/max(a,b)] from two 1x1 tensors; ratio is 1 when both
/// are <= 1e-12.
Tensor fusion(const Tensor& a, const Tensor& b);

/// Non-tensor arguments for apply_primitive.
struct Attributes {
  double scalar = 1.0;      // scale factor, bandwidth, diagonal shift
  Index group = 1;          // row_mean_pool group size
  std::vector<int> labels;  // softmax_cross_entropy targets
};

/// Name-dispatched entry point over the catalog.
Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs, const Attributes& attrs = {});

// --- gradient checking ------------------------------------------------------

using TensorFunction = std::function<Tensor(std::span<const Tensor>)>;

/// Max over all input entries of |analytic - central| / max(1, |central|).
double grad_check(const TensorFunction& f, std::span<const Matrix> inputs, double eps = 1e-6);

}  // namespace nci
