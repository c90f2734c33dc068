#include "brar/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace brar::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                              b.shape_string());
}

void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                " operand, got " + t.shape_string());
}

void require_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) throw std::domain_error(std::string(op) + ": non-finite input");
}

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
  return a.tape();
}

RowVector softmax_row(const Eigen::Ref<const RowVector>& x) {
  const double m = x.maxCoeff();
  RowVector e = (x.array() - m).exp().matrix();
  return e / e.sum();
}

double logsumexp_row(const Eigen::Ref<const RowVector>& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

Tensor rank1(const RowVector& v) { return Tensor::vector(v); }

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::matvec: return "matvec";
    case OpKind::vecmat: return "vecmat";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::broadcast_add_row: return "broadcast_add_row";
    case OpKind::elementwise_mul: return "elementwise_mul";
    case OpKind::scalar_scale: return "scalar_scale";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::softmax_vec: return "softmax_vec";
    case OpKind::logsumexp_vec: return "logsumexp_vec";
    case OpKind::logsumexp_rows: return "logsumexp_rows";
    case OpKind::index_row: return "index_row";
    case OpKind::index_elem: return "index_elem";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::sum: return "sum";
    case OpKind::transpose: return "transpose";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) { return record(OpKind::leaf, {}, std::move(value)); }

Var Tape::record(OpKind kind, std::vector<NodeId> inputs, Tensor value, std::vector<Index> aux,
                 double aux_scalar) {
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), Tensor{}, std::move(aux),
                        aux_scalar});
  has_grads_ = false;
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(NodeId id) const {
  if (!has_grads_) throw std::logic_error("gradient requested before backward()");
  return nodes_.at(id).grad;
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  const Tensor& rv = value(root.id());
  if (rv.rank() != 0)
    throw std::invalid_argument("backward: root must be scalar, got " + rv.shape_string());
  for (Node& n : nodes_) n.grad = Tensor::zeros_like(n.value);
  nodes_[root.id()].grad(0, 0) = 1.0;
  for (NodeId i = root.id() + 1; i-- > 0;) propagate(nodes_[i]);
  has_grads_ = true;
}

void Tape::propagate(const Node& node) {
  const Matrix& g = node.grad.mat();
  auto in = [&](std::size_t k) -> Node& { return nodes_[node.inputs[k]]; };
  switch (node.kind) {
    case OpKind::leaf:
      break;
    case OpKind::matmul:
      in(0).grad.mat().noalias() += g * in(1).value.mat().transpose();
      in(1).grad.mat().noalias() += in(0).value.mat().transpose() * g;
      break;
    case OpKind::matvec:
      in(0).grad.mat().noalias() += g.transpose() * in(1).value.mat();
      in(1).grad.mat().noalias() += g * in(0).value.mat();
      break;
    case OpKind::vecmat:
      in(0).grad.mat().noalias() += g * in(1).value.mat().transpose();
      in(1).grad.mat().noalias() += in(0).value.mat().transpose() * g;
      break;
    case OpKind::add:
      in(0).grad.mat() += g;
      in(1).grad.mat() += g;
      break;
    case OpKind::sub:
      in(0).grad.mat() += g;
      in(1).grad.mat() -= g;
      break;
    case OpKind::broadcast_add_row:
      in(0).grad.mat() += g;
      in(1).grad.mat() += g.colwise().sum();
      break;
    case OpKind::elementwise_mul:
      in(0).grad.mat().array() += g.array() * in(1).value.mat().array();
      in(1).grad.mat().array() += g.array() * in(0).value.mat().array();
      break;
    case OpKind::scalar_scale:
      in(0).grad.mat() += node.aux_scalar * g;
      break;
    case OpKind::scalar_mul:
      in(0).grad(0, 0) += (g.array() * in(1).value.mat().array()).sum();
      in(1).grad.mat() += in(0).value.item() * g;
      break;
    case OpKind::concat_cols: {
      const Index left = in(0).value.cols();
      in(0).grad.mat() += g.leftCols(left);
      in(1).grad.mat() += g.rightCols(g.cols() - left);
      break;
    }
    case OpKind::stack_rows:
      for (std::size_t k = 0; k < node.inputs.size(); ++k)
        in(k).grad.mat() += g.row(static_cast<Index>(k));
      break;
    case OpKind::tanh:
      in(0).grad.mat().array() += g.array() * (1.0 - node.value.mat().array().square());
      break;
    case OpKind::sigmoid:
      in(0).grad.mat().array() +=
          g.array() * node.value.mat().array() * (1.0 - node.value.mat().array());
      break;
    case OpKind::exp:
      in(0).grad.mat().array() += g.array() * node.value.mat().array();
      break;
    case OpKind::log:
      in(0).grad.mat().array() += g.array() / in(0).value.mat().array();
      break;
    case OpKind::softmax_vec: {
      const Matrix& y = node.value.mat();
      const double dot = (g.array() * y.array()).sum();
      in(0).grad.mat().array() += y.array() * (g.array() - dot);
      break;
    }
    case OpKind::logsumexp_vec:
      in(0).grad.mat() += g(0, 0) * softmax_row(in(0).value.mat().row(0));
      break;
    case OpKind::logsumexp_rows: {
      const Matrix& x = in(0).value.mat();
      for (Index r = 0; r < x.rows(); ++r) in(0).grad.mat().row(r) += g(0, r) * softmax_row(x.row(r));
      break;
    }
    case OpKind::index_row:
      in(0).grad.mat().row(node.aux[0]) += g.row(0);
      break;
    case OpKind::index_elem:
      in(0).grad.mat()(node.aux[0], node.aux[1]) += g(0, 0);
      break;
    case OpKind::slice_cols:
      in(0).grad.mat().middleCols(node.aux[0], node.aux[1]) += g;
      break;
    case OpKind::sum:
      in(0).grad.mat().array() += g(0, 0);
      break;
    case OpKind::transpose:
      in(0).grad.mat() += g.transpose();
      break;
  }
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) shape_error("matmul", A, B);
  return t.record(OpKind::matmul, {a.id(), b.id()}, Tensor(A.mat() * B.mat()));
}

Var matvec(const Var& a, const Var& x) {
  Tape& t = same_tape(a, x);
  const Tensor& A = a.value();
  const Tensor& X = x.value();
  if (A.rank() != 2 || X.rank() != 1 || A.cols() != X.cols()) shape_error("matvec", A, X);
  return t.record(OpKind::matvec, {a.id(), x.id()}, rank1(X.mat() * A.mat().transpose()));
}

Var vecmat(const Var& x, const Var& a) {
  Tape& t = same_tape(x, a);
  const Tensor& X = x.value();
  const Tensor& A = a.value();
  if (A.rank() != 2 || X.rank() != 1 || A.rows() != X.cols()) shape_error("vecmat", X, A);
  return t.record(OpKind::vecmat, {x.id(), a.id()}, rank1(X.mat() * A.mat()));
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Tensor out = a.value();
  out.mat() += b.value().mat();
  return t.record(OpKind::add, {a.id(), b.id()}, std::move(out));
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Tensor out = a.value();
  out.mat() -= b.value().mat();
  return t.record(OpKind::sub, {a.id(), b.id()}, std::move(out));
}

Var broadcast_add_row(const Var& m, const Var& row) {
  Tape& t = same_tape(m, row);
  const Tensor& M = m.value();
  const Tensor& R = row.value();
  if (M.rank() != 2 || R.rank() != 1 || M.cols() != R.cols()) shape_error("broadcast_add_row", M, R);
  Tensor out = M;
  out.mat().rowwise() += R.mat().row(0);
  return t.record(OpKind::broadcast_add_row, {m.id(), row.id()}, std::move(out));
}

Var elementwise_mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value())) shape_error("elementwise_mul", a.value(), b.value());
  Tensor out = a.value();
  out.mat().array() *= b.value().mat().array();
  return t.record(OpKind::elementwise_mul, {a.id(), b.id()}, std::move(out));
}

Var scalar_scale(const Var& x, double k) {
  Tensor out = x.value();
  out.mat() *= k;
  return x.tape().record(OpKind::scalar_scale, {x.id()}, std::move(out), {}, k);
}

Var scalar_mul(const Var& s, const Var& x) {
  Tape& t = same_tape(s, x);
  if (s.value().rank() != 0) shape_error("scalar_mul", s.value(), x.value());
  Tensor out = x.value();
  out.mat() *= s.value().item();
  return t.record(OpKind::scalar_mul, {s.id(), x.id()}, std::move(out));
}

Var concat_cols(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != B.rank() || A.rank() == 0 || A.rows() != B.rows()) shape_error("concat_cols", A, B);
  Matrix m(A.rows(), A.cols() + B.cols());
  m << A.mat(), B.mat();
  Tensor out = A.rank() == 1 ? rank1(m.row(0)) : Tensor(std::move(m));
  return t.record(OpKind::concat_cols, {a.id(), b.id()}, std::move(out));
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const Tensor& first = rows[0].value();
  require_rank("stack_rows", first, 1);
  Matrix m(static_cast<Index>(rows.size()), first.cols());
  std::vector<NodeId> ids;
  ids.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Tensor& r = rows[k].value();
    if (&rows[k].tape() != &rows[0].tape())
      throw std::invalid_argument("operands recorded on different tapes");
    if (!r.same_shape(first)) shape_error("stack_rows", first, r);
    m.row(static_cast<Index>(k)) = r.mat().row(0);
    ids.push_back(rows[k].id());
  }
  return rows[0].tape().record(OpKind::stack_rows, std::move(ids), Tensor(std::move(m)));
}

Var tanh(const Var& x) {
  Tensor out = x.value();
  out.mat() = out.mat().array().tanh().matrix();
  return x.tape().record(OpKind::tanh, {x.id()}, std::move(out));
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  // 1 / (1 + e^-x), written via tanh so large |x| cannot overflow.
  out.mat() = (0.5 * (0.5 * out.mat().array()).tanh() + 0.5).matrix();
  return x.tape().record(OpKind::sigmoid, {x.id()}, std::move(out));
}

Var exp(const Var& x) {
  Tensor out = x.value();
  out.mat() = out.mat().array().exp().matrix();
  if (!out.all_finite()) throw std::domain_error("exp: overflow");
  return x.tape().record(OpKind::exp, {x.id()}, std::move(out));
}

Var log(const Var& x) {
  const Tensor& X = x.value();
  if (!(X.mat().array() > 0.0).all()) throw std::domain_error("log: non-positive input");
  Tensor out = X;
  out.mat() = out.mat().array().log().matrix();
  return x.tape().record(OpKind::log, {x.id()}, std::move(out));
}

Var softmax_vec(const Var& x) {
  const Tensor& X = x.value();
  require_rank("softmax_vec", X, 1);
  require_finite("softmax_vec", X);
  return x.tape().record(OpKind::softmax_vec, {x.id()}, rank1(softmax_row(X.mat().row(0))));
}

Var logsumexp_vec(const Var& x) {
  const Tensor& X = x.value();
  require_rank("logsumexp_vec", X, 1);
  require_finite("logsumexp_vec", X);
  return x.tape().record(OpKind::logsumexp_vec, {x.id()},
                         Tensor::scalar(logsumexp_row(X.mat().row(0))));
}

Var logsumexp_rows(const Var& m) {
  const Tensor& M = m.value();
  require_rank("logsumexp_rows", M, 2);
  require_finite("logsumexp_rows", M);
  RowVector out(M.rows());
  for (Index r = 0; r < M.rows(); ++r) out(r) = logsumexp_row(M.mat().row(r));
  return m.tape().record(OpKind::logsumexp_rows, {m.id()}, rank1(out));
}

Var index_row(const Var& m, Index row) {
  const Tensor& M = m.value();
  require_rank("index_row", M, 2);
  if (row < 0 || row >= M.rows())
    throw std::out_of_range("index_row: row " + std::to_string(row) + " outside " + M.shape_string());
  return m.tape().record(OpKind::index_row, {m.id()}, rank1(M.mat().row(row)), {row});
}

Var index_elem(const Var& x, Index i) {
  const Tensor& X = x.value();
  require_rank("index_elem", X, 1);
  if (i < 0 || i >= X.cols())
    throw std::out_of_range("index_elem: index " + std::to_string(i) + " outside " + X.shape_string());
  return x.tape().record(OpKind::index_elem, {x.id()}, Tensor::scalar(X(0, i)), {0, i});
}

Var index_elem(const Var& m, Index row, Index col) {
  const Tensor& M = m.value();
  require_rank("index_elem", M, 2);
  if (row < 0 || row >= M.rows() || col < 0 || col >= M.cols())
    throw std::out_of_range("index_elem: (" + std::to_string(row) + ", " + std::to_string(col) +
                            ") outside " + M.shape_string());
  return m.tape().record(OpKind::index_elem, {m.id()}, Tensor::scalar(M(row, col)), {row, col});
}

Var slice_cols(const Var& x, Index start, Index count) {
  const Tensor& X = x.value();
  if (X.rank() == 0) throw std::invalid_argument("slice_cols: scalar operand");
  if (start < 0 || count <= 0 || start + count > X.cols())
    throw std::out_of_range("slice_cols: columns [" + std::to_string(start) + ", " +
                            std::to_string(start + count) + ") outside " + X.shape_string());
  Matrix m = X.mat().middleCols(start, count);
  Tensor out = X.rank() == 1 ? rank1(m.row(0)) : Tensor(std::move(m));
  return x.tape().record(OpKind::slice_cols, {x.id()}, std::move(out), {start, count});
}

Var sum(const Var& x) {
  return x.tape().record(OpKind::sum, {x.id()}, Tensor::scalar(x.value().mat().sum()));
}

Var transpose(const Var& m) {
  const Tensor& M = m.value();
  require_rank("transpose", M, 2);
  return m.tape().record(OpKind::transpose, {m.id()}, Tensor(M.mat().transpose()));
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

FiniteDiffReport finite_diff_check(const LossFn& loss, std::span<Tensor* const> params, double h,
                                   double tol, std::span<const std::string> names) {
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("finite_diff_check: h must be in (0, 1e-3]");
  if (!names.empty() && names.size() != params.size())
    throw std::invalid_argument("finite_diff_check: names and params differ in length");

  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (Tensor* p : params) vars.push_back(tape.leaf(*p));
    const Var root = loss(tape, vars);
    return root.value().item();
  };

  std::vector<Tensor> analytic;
  double reference = 0.0;
  {
    Tape tape;
    std::vector<Var> vars;
    for (Tensor* p : params) vars.push_back(tape.leaf(*p));
    const Var root = loss(tape, vars);
    tape.backward(root);
    reference = root.value().item();
    for (const Var& v : vars) analytic.push_back(v.grad());
  }
  if (evaluate() != reference)
    throw std::runtime_error("finite_diff_check: loss function is not deterministic");

  FiniteDiffReport report;
  report.tolerance = tol;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    FiniteDiffEntry entry;
    entry.name = names.empty() ? "param" + std::to_string(k) : names[k];
    for (Index j = 0; j < p.size(); ++j) {
      const double saved = p[j];
      p[j] = saved + h;
      const double up = evaluate();
      p[j] = saved - h;
      const double down = evaluate();
      p[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[k][j], numeric);
      if (err > tol) ++entry.flagged;
      if (err > entry.max_rel_error || j == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = j;
        entry.analytic = analytic[k][j];
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace brar::ad
