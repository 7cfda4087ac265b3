#include <nci/diff.hpp>

#include <algorithm>
#include <array>
#include <initializer_list>
#include <utility>

namespace nci {

namespace {

thread_local Tape* g_active_tape = nullptr;

void require_finite(const Tensor& t, std::string_view op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor");
  if (!t.value().allFinite()) throw NumericError(std::string(op) + ": non-finite input");
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
  }
}

// Creates the output node and, when a gradient is needed and a tape is active,
// records the op. `make_backward(out)` returns the closure run during backward.
template <typename MakeBackward>
Tensor emit(Primitive op, Matrix value, std::initializer_list<const Tensor*> inputs,
            MakeBackward&& make_backward) {
  auto out = std::make_shared<Node>();
  out->value = std::move(value);
  out->leaf = false;
  bool need = false;
  for (const Tensor* t : inputs) need = need || t->requires_grad();
  need = need && g_active_tape != nullptr;
  out->requires_grad = need;
  if (need) {
    Record r;
    r.op = op;
    for (const Tensor* t : inputs) r.inputs.push_back(t->node());
    r.output = out;
    r.backward = make_backward(out.get());
    g_active_tape->push(std::move(r));
  }
  return Tensor(std::move(out));
}

void acc(Node* n, const Matrix& g) {
  if (n->requires_grad) n->accumulate(g);
}

}  // namespace

// --- Tensor -------------------------------------------------------------------

Tensor Tensor::constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

Matrix Tensor::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw UsageError("item() on non-scalar " + shape_str(rows(), cols()));
  return node_->value(0, 0);
}

// --- Tape ---------------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw UsageError("backward: loss must be a 1x1 tensor");
  }
  for (auto& r : records_) r.output->grad.resize(0, 0);
  Node* root = loss.node().get();
  if (!root->requires_grad) return;
  root->accumulate(Matrix::Ones(1, 1));
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.size() == 0) continue;
    it->backward();
  }
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

// --- names --------------------------------------------------------------------

namespace {
constexpr std::array<std::pair<Primitive, std::string_view>, 21> kNames{{
    {Primitive::MatMul, "matmul"},
    {Primitive::Add, "add"},
    {Primitive::Sub, "sub"},
    {Primitive::Mul, "mul"},
    {Primitive::Scale, "scale"},
    {Primitive::Relu, "relu"},
    {Primitive::Tanh, "tanh"},
    {Primitive::ConcatCols, "concat-columns"},
    {Primitive::MeanRows, "mean-over-rows"},
    {Primitive::RowMeanPool, "row-mean-pool"},
    {Primitive::SoftmaxCrossEntropy, "softmax-cross-entropy"},
    {Primitive::FrobeniusSq, "frobenius-sq"},
    {Primitive::RbfGram, "rbf-gram"},
    {Primitive::SpdSolve, "spd-solve"},
    {Primitive::Transpose, "transpose"},
    {Primitive::AddRowBroadcast, "add-row-broadcast"},
    {Primitive::AddDiagonal, "add-diagonal"},
    {Primitive::SliceRows, "slice-rows"},
    {Primitive::ConcatRows, "concat-rows"},
    {Primitive::Sum, "sum"},
    {Primitive::Fusion, "fusion"},
}};
}  // namespace

std::string_view primitive_name(Primitive p) {
  for (const auto& [k, v] : kNames)
    if (k == p) return v;
  return "unknown";
}

Primitive primitive_from_name(std::string_view name) {
  for (const auto& [k, v] : kNames)
    if (v == name) return k;
  throw UsageError("unknown primitive: " + std::string(name));
}

// --- primitives ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
  }
  Matrix v = a.value() * b.value();
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return emit(Primitive::MatMul, std::move(v), {&a, &b}, [an, bn](Node* out) {
    return [an, bn, out] {
      if (an->requires_grad) an->accumulate(out->grad * bn->value.transpose());
      if (bn->requires_grad) bn->accumulate(an->value.transpose() * out->grad);
    };
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_finite(a, "add");
  require_finite(b, "add");
  require_same_shape(a, b, "add");
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return emit(Primitive::Add, a.value() + b.value(), {&a, &b}, [an, bn](Node* out) {
    return [an, bn, out] {
      acc(an, out->grad);
      acc(bn, out->grad);
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_finite(a, "sub");
  require_finite(b, "sub");
  require_same_shape(a, b, "sub");
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return emit(Primitive::Sub, a.value() - b.value(), {&a, &b}, [an, bn](Node* out) {
    return [an, bn, out] {
      acc(an, out->grad);
      if (bn->requires_grad) bn->accumulate(-out->grad);
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_finite(a, "mul");
  require_finite(b, "mul");
  require_same_shape(a, b, "mul");
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return emit(Primitive::Mul, a.value().cwiseProduct(b.value()), {&a, &b}, [an, bn](Node* out) {
    return [an, bn, out] {
      if (an->requires_grad) an->accumulate(out->grad.cwiseProduct(bn->value));
      if (bn->requires_grad) bn->accumulate(out->grad.cwiseProduct(an->value));
    };
  });
}

Tensor scale(const Tensor& a, double c) {
  require_finite(a, "scale");
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  Node* an = a.node().get();
  return emit(Primitive::Scale, a.value() * c, {&a}, [an, c](Node* out) {
    return [an, c, out] { an->accumulate(out->grad * c); };
  });
}

Tensor relu(const Tensor& a) {
  require_finite(a, "relu");
  Node* an = a.node().get();
  return emit(Primitive::Relu, a.value().cwiseMax(0.0), {&a}, [an](Node* out) {
    return [an, out] {
      an->accumulate((an->value.array() > 0.0).cast<double>().matrix().cwiseProduct(out->grad));
    };
  });
}

Tensor tanh(const Tensor& a) {
  require_finite(a, "tanh");
  Node* an = a.node().get();
  // 1 - 2/(e^{2x} + 1) vectorizes through Eigen's exp; saturates cleanly at +-1.
  Matrix v = (1.0 - 2.0 / ((2.0 * a.value().array()).exp() + 1.0)).matrix();
  return emit(Primitive::Tanh, std::move(v), {&a}, [an](Node* out) {
    return [an, out] {
      an->accumulate((1.0 - out->value.array().square()).matrix().cwiseProduct(out->grad));
    };
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_finite(a, "concat-columns");
  require_finite(b, "concat-columns");
  if (a.rows() != b.rows()) throw DimensionError("concat-columns: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  Node* an = a.node().get();
  Node* bn = b.node().get();
  const Index ac = a.cols();
  const Index bc = b.cols();
  return emit(Primitive::ConcatCols, std::move(v), {&a, &b}, [an, bn, ac, bc](Node* out) {
    return [an, bn, ac, bc, out] {
      if (an->requires_grad) an->accumulate(out->grad.leftCols(ac));
      if (bn->requires_grad) bn->accumulate(out->grad.rightCols(bc));
    };
  });
}

Tensor mean_rows(const Tensor& a) {
  require_finite(a, "mean-over-rows");
  if (a.rows() == 0) throw DimensionError("mean-over-rows: empty input");
  Node* an = a.node().get();
  const Index r = a.rows();
  return emit(Primitive::MeanRows, a.value().colwise().mean(), {&a}, [an, r](Node* out) {
    return [an, r, out] { an->accumulate(Matrix::Ones(r, 1) * (out->grad / static_cast<double>(r))); };
  });
}

Tensor row_mean_pool(const Tensor& a, Index group) {
  require_finite(a, "row-mean-pool");
  if (group <= 0 || a.rows() % group != 0) {
    throw DimensionError("row-mean-pool: " + std::to_string(a.rows()) + " rows not divisible by group " +
                         std::to_string(group));
  }
  const Index groups = a.rows() / group;
  Matrix v(groups, a.cols());
  for (Index g = 0; g < groups; ++g) v.row(g) = a.value().middleRows(g * group, group).colwise().mean();
  Node* an = a.node().get();
  return emit(Primitive::RowMeanPool, std::move(v), {&a}, [an, group, groups](Node* out) {
    return [an, group, groups, out] {
      Matrix g(an->value.rows(), an->value.cols());
      const double inv = 1.0 / static_cast<double>(group);
      for (Index k = 0; k < groups; ++k) g.middleRows(k * group, group).rowwise() = out->grad.row(k) * inv;
      an->accumulate(g);
    };
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_finite(logits, "softmax-cross-entropy");
  const Index n = logits.rows();
  const Index k = logits.cols();
  if (static_cast<Index>(labels.size()) != n || n == 0) {
    throw DimensionError("softmax-cross-entropy: need one label per row");
  }
  Matrix prob(n, k);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw DimensionError("softmax-cross-entropy: label out of range");
    const double mx = logits.value().row(i).maxCoeff();
    const RowVector e = (logits.value().row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    prob.row(i) = e / z;
    loss += -(logits.value()(i, y) - mx - std::log(z));
  }
  loss /= static_cast<double>(n);
  Node* ln = logits.node().get();
  std::vector<int> lab(labels.begin(), labels.end());
  return emit(Primitive::SoftmaxCrossEntropy, Matrix::Constant(1, 1, loss), {&logits},
              [ln, prob = std::move(prob), lab = std::move(lab)](Node* out) mutable {
                return [ln, prob = std::move(prob), lab = std::move(lab), out] {
                  Matrix g = prob;
                  for (std::size_t i = 0; i < lab.size(); ++i) g(static_cast<Index>(i), lab[i]) -= 1.0;
                  ln->accumulate(g * (out->grad(0, 0) / static_cast<double>(lab.size())));
                };
              });
}

Tensor frobenius_sq(const Tensor& a) {
  require_finite(a, "frobenius-sq");
  Node* an = a.node().get();
  return emit(Primitive::FrobeniusSq, Matrix::Constant(1, 1, a.value().squaredNorm()), {&a}, [an](Node* out) {
    return [an, out] { an->accumulate(an->value * (2.0 * out->grad(0, 0))); };
  });
}

Tensor rbf_gram(const Tensor& z, double bandwidth) {
  require_finite(z, "rbf-gram");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw UsageError("rbf-gram: bandwidth must be > 0");
  const Matrix& zv = z.value();
  const Vector sq = zv.rowwise().squaredNorm();
  Matrix d2 = (sq * Vector::Ones(zv.rows()).transpose() + Vector::Ones(zv.rows()) * sq.transpose()) -
              2.0 * zv * zv.transpose();
  d2 = d2.cwiseMax(0.0);
  d2.diagonal().setZero();
  const double inv2s2 = 1.0 / (2.0 * bandwidth * bandwidth);
  Matrix k = (-d2.array() * inv2s2).exp().matrix();
  Node* zn = z.node().get();
  return emit(Primitive::RbfGram, std::move(k), {&z}, [zn, bandwidth](Node* out) {
    return [zn, bandwidth, out] {
      // dK_ij/dz_i = -K_ij (z_i - z_j) / s^2, symmetric in (i, j).
      const Matrix s = (out->grad + out->grad.transpose()).cwiseProduct(out->value);
      const Vector rs = s.rowwise().sum();
      const Matrix g = (rs.asDiagonal() * zn->value - s * zn->value) * (-1.0 / (bandwidth * bandwidth));
      zn->accumulate(g);
    };
  });
}

Tensor spd_solve(const Tensor& a, const Tensor& b) {
  require_finite(a, "spd-solve");
  require_finite(b, "spd-solve");
  const Matrix& av = a.value();
  if (av.rows() != av.cols()) throw DimensionError("spd-solve: A must be square");
  if (b.rows() != av.rows()) throw DimensionError("spd-solve: B rows must match A");
  const double asym = (av - av.transpose()).cwiseAbs().maxCoeff();
  const double tol = 1e-9 * std::max(1.0, av.cwiseAbs().maxCoeff());
  if (asym > tol) throw NumericError("spd-solve: A is not symmetric");
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(av);
  if (llt->info() != Eigen::Success) throw NotPositiveDefiniteError("spd-solve: Cholesky failed");
  Matrix x = llt->solve(b.value());
  if (!x.allFinite()) throw NumericError("spd-solve: non-finite solution");
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return emit(Primitive::SpdSolve, std::move(x), {&a, &b}, [an, bn, llt](Node* out) {
    return [an, bn, llt, out] {
      const Matrix bbar = llt->solve(out->grad);
      if (bn->requires_grad) bn->accumulate(bbar);
      if (an->requires_grad) {
        const Matrix outer = bbar * out->value.transpose();
        an->accumulate(-0.5 * (outer + outer.transpose()));
      }
    };
  });
}

Tensor transpose(const Tensor& a) {
  require_finite(a, "transpose");
  Node* an = a.node().get();
  return emit(Primitive::Transpose, a.value().transpose(), {&a}, [an](Node* out) {
    return [an, out] { an->accumulate(out->grad.transpose()); };
  });
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& row) {
  require_finite(a, "add-row-broadcast");
  require_finite(row, "add-row-broadcast");
  if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionError("add-row-broadcast: row shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  Node* an = a.node().get();
  Node* rn = row.node().get();
  return emit(Primitive::AddRowBroadcast, std::move(v), {&a, &row}, [an, rn](Node* out) {
    return [an, rn, out] {
      acc(an, out->grad);
      if (rn->requires_grad) rn->accumulate(out->grad.colwise().sum());
    };
  });
}

Tensor add_diagonal(const Tensor& a, double c) {
  require_finite(a, "add-diagonal");
  if (a.rows() != a.cols()) throw DimensionError("add-diagonal: matrix must be square");
  Matrix v = a.value();
  v.diagonal().array() += c;
  Node* an = a.node().get();
  return emit(Primitive::AddDiagonal, std::move(v), {&a}, [an](Node* out) {
    return [an, out] { an->accumulate(out->grad); };
  });
}

Tensor slice_rows(const Tensor& a, Index begin, Index count) {
  if (!a.defined()) throw UsageError("slice-rows: undefined tensor");
  if (begin < 0 || count <= 0 || begin + count > a.rows()) throw DimensionError("slice-rows: range out of bounds");
  if (!a.value().middleRows(begin, count).allFinite()) throw NumericError("slice-rows: non-finite input");
  Node* an = a.node().get();
  return emit(Primitive::SliceRows, a.value().middleRows(begin, count), {&a}, [an, begin, count](Node* out) {
    return [an, begin, count, out] {
      if (an->grad.size() == 0) an->grad = Matrix::Zero(an->value.rows(), an->value.cols());
      an->grad.middleRows(begin, count) += out->grad;
    };
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat-rows: no inputs");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    require_finite(p, "concat-rows");
    if (p.cols() != cols) throw DimensionError("concat-rows: column counts differ");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Index at = 0;
  bool need = false;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    need = need || p.requires_grad();
  }
  // Variadic input list: record by hand rather than through emit().
  auto out = std::make_shared<Node>();
  out->value = std::move(v);
  out->leaf = false;
  need = need && g_active_tape != nullptr;
  out->requires_grad = need;
  if (need) {
    Record r;
    r.op = Primitive::ConcatRows;
    std::vector<Node*> ins;
    for (const auto& p : parts) {
      r.inputs.push_back(p.node());
      ins.push_back(p.node().get());
    }
    r.output = out;
    Node* o = out.get();
    r.backward = [ins = std::move(ins), o] {
      Index off = 0;
      for (Node* n : ins) {
        const Index nr = n->value.rows();
        if (n->requires_grad) n->accumulate(o->grad.middleRows(off, nr));
        off += nr;
      }
    };
    g_active_tape->push(std::move(r));
  }
  return Tensor(std::move(out));
}

Tensor sum(const Tensor& a) {
  require_finite(a, "sum");
  Node* an = a.node().get();
  return emit(Primitive::Sum, Matrix::Constant(1, 1, a.value().sum()), {&a}, [an](Node* out) {
    return [an, out] { an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), out->grad(0, 0))); };
  });
}

Tensor fusion(const Tensor& a, const Tensor& b) {
  require_finite(a, "fusion");
  require_finite(b, "fusion");
  const double x = a.item();
  const double y = b.item();
  double ratio = 1.0, dx = 0.0, dy = 0.0;
  const bool degenerate = x <= 1e-12 && y <= 1e-12;
  if (!degenerate) {
    if (x <= y) {
      ratio = x / y;
      dx = 1.0 / y;
      dy = -x / (y * y);
    } else {
      ratio = y / x;
      dy = 1.0 / x;
      dx = -y / (x * x);
    }
  }
  Matrix v(1, 3);
  v << x, y, ratio;
  Node* an = a.node().get();
  Node* bn = b.node().get();
  return emit(Primitive::Fusion, std::move(v), {&a, &b}, [an, bn, dx, dy](Node* out) {
    return [an, bn, dx, dy, out] {
      const auto& g = out->grad;
      if (an->requires_grad) an->accumulate(Matrix::Constant(1, 1, g(0, 0) + g(0, 2) * dx));
      if (bn->requires_grad) bn->accumulate(Matrix::Constant(1, 1, g(0, 1) + g(0, 2) * dy));
    };
  });
}

// --- dispatch -------------------------------------------------------------------

Tensor apply_primitive(Primitive op, std::span<const Tensor> in, const Attributes& attrs) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw UsageError(std::string(primitive_name(op)) + ": expected " + std::to_string(n) + " inputs");
    }
  };
  switch (op) {
    case Primitive::MatMul: need(2); return matmul(in[0], in[1]);
    case Primitive::Add: need(2); return add(in[0], in[1]);
    case Primitive::Sub: need(2); return sub(in[0], in[1]);
    case Primitive::Mul: need(2); return mul(in[0], in[1]);
    case Primitive::Scale: need(1); return scale(in[0], attrs.scalar);
    case Primitive::Relu: need(1); return relu(in[0]);
    case Primitive::Tanh: need(1); return tanh(in[0]);
    case Primitive::ConcatCols: need(2); return concat_cols(in[0], in[1]);
    case Primitive::MeanRows: need(1); return mean_rows(in[0]);
    case Primitive::RowMeanPool: need(1); return row_mean_pool(in[0], attrs.group);
    case Primitive::SoftmaxCrossEntropy: need(1); return softmax_cross_entropy(in[0], attrs.labels);
    case Primitive::FrobeniusSq: need(1); return frobenius_sq(in[0]);
    case Primitive::RbfGram: need(1); return rbf_gram(in[0], attrs.scalar);
    case Primitive::SpdSolve: need(2); return spd_solve(in[0], in[1]);
    case Primitive::Transpose: need(1); return transpose(in[0]);
    case Primitive::AddRowBroadcast: need(2); return add_row_broadcast(in[0], in[1]);
    case Primitive::AddDiagonal: need(1); return add_diagonal(in[0], attrs.scalar);
    case Primitive::SliceRows: need(1); return slice_rows(in[0], 0, attrs.group);
    case Primitive::ConcatRows: return concat_rows(in);
    case Primitive::Sum: need(1); return sum(in[0]);
    case Primitive::Fusion: need(2); return fusion(in[0], in[1]);
  }
  throw UsageError("apply_primitive: unhandled primitive");
}

// --- gradient check -------------------------------------------------------------

double grad_check(const TensorFunction& f, std::span<const Matrix> inputs, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw UsageError("grad_check: eps must lie in [1e-7, 1e-4]");

  std::vector<Tensor> params;
  params.reserve(inputs.size());
  for (const auto& m : inputs) params.push_back(Tensor::parameter(m));
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor out = f(params);
    if (out.rows() != 1 || out.cols() != 1) throw UsageError("grad_check: f must be scalar-valued");
    if (!std::isfinite(out.item())) throw NumericError("grad_check: non-finite output");
    tape.backward(out);
  }

  auto evaluate = [&](std::size_t which, Index i, Index j, double delta) {
    std::vector<Tensor> c;
    c.reserve(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      Matrix m = inputs[k];
      if (k == which) m(i, j) += delta;
      c.push_back(Tensor::constant(std::move(m)));
    }
    const double v = f(c).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite intermediate");
    return v;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = params[k].grad();
    for (Index j = 0; j < inputs[k].cols(); ++j) {
      for (Index i = 0; i < inputs[k].rows(); ++i) {
        const double central = (evaluate(k, i, j, eps) - evaluate(k, i, j, -eps)) / (2.0 * eps);
        worst = std::max(worst, std::abs(analytic(i, j) - central) / std::max(1.0, std::abs(central)));
      }
    }
  }
  return worst;
}

}  // namespace nci
