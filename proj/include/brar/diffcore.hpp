#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every forward op as a node (kind, input ids, forward value).
// `Tape::backward` walks the record in reverse and accumulates gradients for
// every node. Tapes are single-use per forward pass and not thread-safe.

#include "brar/tensor.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace brar::ad {

using NodeId = std::size_t;

enum class OpKind {
  leaf,
  matmul,
  matvec,
  vecmat,
  add,
  sub,
  broadcast_add_row,
  elementwise_mul,
  scalar_scale,
  scalar_mul,
  concat_cols,
  stack_rows,
  tanh,
  sigmoid,
  exp,
  log,
  softmax_vec,
  logsumexp_vec,
  logsumexp_rows,
  index_row,
  index_elem,
  slice_cols,
  sum,
  transpose,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records an input tensor (parameter or constant).
  Var leaf(Tensor value);

  /// Runs reverse accumulation from a rank-0 root. Gradients of every node
  /// are reset first, so calling it twice yields identical results.
  void backward(const Var& root);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const Tensor& grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }

  // Used by the op constructors; not part of the public surface.
  Var record(OpKind kind, std::vector<NodeId> inputs, Tensor value,
             std::vector<Index> aux = {}, double aux_scalar = 0.0);

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    std::vector<Index> aux;
    double aux_scalar = 0.0;
  };

  void propagate(const Node& node);

  std::vector<Node> nodes_;
  bool has_grads_ = false;
};

// Forward ops. Each validates shapes and throws std::invalid_argument naming
// both operand shapes on mismatch.

Var matmul(const Var& a, const Var& b);            // [m x k] . [k x n]
Var matvec(const Var& a, const Var& x);            // [m x n] . [n] -> [m]
Var vecmat(const Var& x, const Var& a);            // [m] . [m x n] -> [n]
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var broadcast_add_row(const Var& m, const Var& row);  // adds [c] to each row of [r x c]
Var elementwise_mul(const Var& a, const Var& b);
Var scalar_scale(const Var& x, double k);
Var scalar_mul(const Var& s, const Var& x);        // rank-0 s times x
Var concat_cols(const Var& a, const Var& b);       // vectors or matrices with equal rows
Var stack_rows(std::span<const Var> rows);         // t vectors of width n -> [t x n]
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);                             // throws std::domain_error on x <= 0
Var softmax_vec(const Var& x);
Var logsumexp_vec(const Var& x);
Var logsumexp_rows(const Var& m);                  // [r x c] -> [r]
Var index_row(const Var& m, Index row);            // [r x c] -> [c]
Var index_elem(const Var& x, Index i);             // vector element -> rank 0
Var index_elem(const Var& m, Index row, Index col);
Var slice_cols(const Var& x, Index start, Index count);
Var sum(const Var& x);
Var transpose(const Var& m);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double k, const Var& x) { return scalar_scale(x, k); }

/// Relative error with the max(|a|, |b|, 1e-8) denominator.
double relative_error(double analytic, double numeric);

struct FiniteDiffEntry {
  std::string name;
  double max_rel_error = 0.0;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  Index flagged = 0;  // coordinates above tolerance
};

struct FiniteDiffReport {
  std::vector<FiniteDiffEntry> params;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

using LossFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares reverse-mode gradients of `loss` against central differences
/// (L(p+h) - L(p-h)) / 2h on every coordinate of every parameter. The
/// parameters are perturbed in place and restored before returning.
///
/// Throws std::invalid_argument if h is outside (0, 1e-3], and
/// std::runtime_error if two identical forward passes disagree.
FiniteDiffReport finite_diff_check(const LossFn& loss, std::span<Tensor* const> params,
                                   double h, double tol,
                                   std::span<const std::string> names = {});

}  // namespace brar::ad
