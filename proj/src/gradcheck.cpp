#include "brar/gradcheck.hpp"

#include "brar/crf.hpp"
#include "brar/embeddings.hpp"

#include <stdexcept>

namespace brar::gradcheck {

namespace {

using ad::OpKind;
using ad::Var;

Index dim(Rng& rng) { return 1 + static_cast<Index>(rng.below(4)); }

Tensor normal_matrix(Rng& rng, Index r, Index c, double scale = 1.0) {
  Tensor t = Tensor::zeros(r, c);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

Tensor normal_vector(Rng& rng, Index n, double scale = 1.0) {
  RowVector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.normal(0.0, scale);
  return Tensor::vector(v);
}

Tensor normal_like(Rng& rng, const Tensor& like) {
  Tensor t = Tensor::zeros_like(like);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 1.0);
  return t;
}

Tensor random_operand(Rng& rng) {
  return rng.below(2) ? normal_matrix(rng, dim(rng), dim(rng)) : normal_vector(rng, dim(rng));
}

}  // namespace

std::vector<ad::OpKind> op_kinds() {
  return {OpKind::matmul,         OpKind::matvec,       OpKind::vecmat,        OpKind::add,
          OpKind::sub,            OpKind::broadcast_add_row, OpKind::elementwise_mul,
          OpKind::scalar_scale,   OpKind::scalar_mul,   OpKind::concat_cols,   OpKind::stack_rows,
          OpKind::tanh,           OpKind::sigmoid,      OpKind::exp,           OpKind::log,
          OpKind::softmax_vec,    OpKind::logsumexp_vec, OpKind::logsumexp_rows, OpKind::index_row,
          OpKind::index_elem,     OpKind::slice_cols,   OpKind::sum,           OpKind::transpose};
}

ad::FiniteDiffReport check_op(ad::OpKind kind, Rng& rng, double h, double tol) {
  std::vector<Tensor> inputs;
  std::function<Var(std::span<const Var>)> op;
  switch (kind) {
    case OpKind::matmul: {
      const Index m = dim(rng), k = dim(rng), n = dim(rng);
      inputs = {normal_matrix(rng, m, k), normal_matrix(rng, k, n)};
      op = [](std::span<const Var> v) { return ad::matmul(v[0], v[1]); };
      break;
    }
    case OpKind::matvec: {
      const Index m = dim(rng), n = dim(rng);
      inputs = {normal_matrix(rng, m, n), normal_vector(rng, n)};
      op = [](std::span<const Var> v) { return ad::matvec(v[0], v[1]); };
      break;
    }
    case OpKind::vecmat: {
      const Index m = dim(rng), n = dim(rng);
      inputs = {normal_vector(rng, m), normal_matrix(rng, m, n)};
      op = [](std::span<const Var> v) { return ad::vecmat(v[0], v[1]); };
      break;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::elementwise_mul: {
      Tensor a = random_operand(rng);
      Tensor b = normal_like(rng, a);
      inputs = {std::move(a), std::move(b)};
      if (kind == OpKind::add) op = [](std::span<const Var> v) { return ad::add(v[0], v[1]); };
      if (kind == OpKind::sub) op = [](std::span<const Var> v) { return ad::sub(v[0], v[1]); };
      if (kind == OpKind::elementwise_mul)
        op = [](std::span<const Var> v) { return ad::elementwise_mul(v[0], v[1]); };
      break;
    }
    case OpKind::broadcast_add_row: {
      const Index r = dim(rng), c = dim(rng);
      inputs = {normal_matrix(rng, r, c), normal_vector(rng, c)};
      op = [](std::span<const Var> v) { return ad::broadcast_add_row(v[0], v[1]); };
      break;
    }
    case OpKind::scalar_scale: {
      inputs = {random_operand(rng)};
      const double k = rng.normal(0.0, 2.0);
      op = [k](std::span<const Var> v) { return ad::scalar_scale(v[0], k); };
      break;
    }
    case OpKind::scalar_mul: {
      inputs = {Tensor::scalar(rng.normal(0.0, 1.0)), random_operand(rng)};
      op = [](std::span<const Var> v) { return ad::scalar_mul(v[0], v[1]); };
      break;
    }
    case OpKind::concat_cols: {
      if (rng.below(2)) {
        const Index r = dim(rng);
        inputs = {normal_matrix(rng, r, dim(rng)), normal_matrix(rng, r, dim(rng))};
      } else {
        inputs = {normal_vector(rng, dim(rng)), normal_vector(rng, dim(rng))};
      }
      op = [](std::span<const Var> v) { return ad::concat_cols(v[0], v[1]); };
      break;
    }
    case OpKind::stack_rows: {
      const Index t = dim(rng), n = dim(rng);
      for (Index i = 0; i < t; ++i) inputs.push_back(normal_vector(rng, n));
      op = [](std::span<const Var> v) { return ad::stack_rows(v); };
      break;
    }
    case OpKind::tanh:
    case OpKind::sigmoid:
    case OpKind::exp: {
      inputs = {random_operand(rng)};
      if (kind == OpKind::tanh) op = [](std::span<const Var> v) { return ad::tanh(v[0]); };
      if (kind == OpKind::sigmoid) op = [](std::span<const Var> v) { return ad::sigmoid(v[0]); };
      if (kind == OpKind::exp) op = [](std::span<const Var> v) { return ad::exp(v[0]); };
      break;
    }
    case OpKind::log: {
      Tensor x = random_operand(rng);
      for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.5, 2.0);
      inputs = {std::move(x)};
      op = [](std::span<const Var> v) { return ad::log(v[0]); };
      break;
    }
    case OpKind::softmax_vec:
    case OpKind::logsumexp_vec: {
      inputs = {normal_vector(rng, dim(rng) + 1)};
      if (kind == OpKind::softmax_vec) op = [](std::span<const Var> v) { return ad::softmax_vec(v[0]); };
      else op = [](std::span<const Var> v) { return ad::logsumexp_vec(v[0]); };
      break;
    }
    case OpKind::logsumexp_rows: {
      inputs = {normal_matrix(rng, dim(rng), dim(rng) + 1)};
      op = [](std::span<const Var> v) { return ad::logsumexp_rows(v[0]); };
      break;
    }
    case OpKind::index_row: {
      const Index r = dim(rng);
      inputs = {normal_matrix(rng, r, dim(rng))};
      const auto row = static_cast<Index>(rng.below(static_cast<std::uint64_t>(r)));
      op = [row](std::span<const Var> v) { return ad::index_row(v[0], row); };
      break;
    }
    case OpKind::index_elem: {
      Tensor x = random_operand(rng);
      const auto r = static_cast<Index>(rng.below(static_cast<std::uint64_t>(x.rows())));
      const auto c = static_cast<Index>(rng.below(static_cast<std::uint64_t>(x.cols())));
      if (x.rank() == 1)
        op = [c](std::span<const Var> v) { return ad::index_elem(v[0], c); };
      else
        op = [r, c](std::span<const Var> v) { return ad::index_elem(v[0], r, c); };
      inputs = {std::move(x)};
      break;
    }
    case OpKind::slice_cols: {
      Tensor x = random_operand(rng);
      const auto start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(x.cols())));
      const auto count = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(x.cols() - start)));
      inputs = {std::move(x)};
      op = [start, count](std::span<const Var> v) { return ad::slice_cols(v[0], start, count); };
      break;
    }
    case OpKind::sum: {
      inputs = {random_operand(rng)};
      op = [](std::span<const Var> v) { return ad::sum(v[0]); };
      break;
    }
    case OpKind::transpose: {
      inputs = {normal_matrix(rng, dim(rng), dim(rng))};
      op = [](std::span<const Var> v) { return ad::transpose(v[0]); };
      break;
    }
    case OpKind::leaf:
      throw std::invalid_argument("check_op: leaf has no gradient rule");
  }

  // Random upstream weights so every output coordinate matters differently.
  std::optional<Tensor> weights;
  const ad::LossFn loss = [&](ad::Tape& tape, std::span<const Var> v) {
    const Var out = op(v);
    if (!weights) weights = normal_like(rng, out.value());
    return ad::sum(ad::elementwise_mul(out, tape.leaf(*weights)));
  };
  std::vector<Tensor*> ptrs;
  for (auto& t : inputs) ptrs.push_back(&t);
  ad::FiniteDiffReport report = ad::finite_diff_check(loss, ptrs, h, tol);
  for (auto& p : report.params) p.name = std::string(ad::op_name(kind)) + "." + p.name;
  return report;
}

ad::FiniteDiffReport check_model(const ModelCase& c, double h, double tol) {
  Rng rng(c.seed);
  const Index labels = static_cast<Index>(LabelSet::kSize);
  BrarParams params = init_brar({c.input_dim, c.hidden, c.layers, c.t_max, labels, c.mode}, rng);
  for (Tensor* t : params.tensors())
    for (Index i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(-c.param_scale, c.param_scale);
  params.alpha = Tensor::scalar(rng.uniform(0.5, 1.5));
  CrfParams crf{normal_matrix(rng, labels, labels, 0.5), normal_vector(rng, labels, 0.5),
                normal_vector(rng, labels, 0.5)};
  Tensor table = normal_matrix(rng, c.vocab, c.input_dim, c.param_scale);

  std::vector<Index> ids;
  std::vector<LabelId> gold;
  for (Index i = 0; i < c.length; ++i) {
    ids.push_back(static_cast<Index>(rng.below(static_cast<std::uint64_t>(c.vocab))));
    gold.push_back(static_cast<LabelId>(rng.below(static_cast<std::uint64_t>(labels))));
  }
  LabelStats stats{CountMatrix::Zero(c.vocab, labels)};
  for (Index r = 1; r < c.vocab; ++r)
    for (Index j = 0; j < labels; ++j) stats.counts(r, j) = static_cast<std::int64_t>(rng.below(4));

  ForwardOptions options;
  options.mode = c.mode;
  options.no_attention = c.no_attention;
  options.beta = c.beta;

  std::vector<Tensor*> ptrs{&table};
  std::vector<std::string> names{"embeddings"};
  for (Tensor* t : params.tensors()) ptrs.push_back(t);
  for (auto& n : params.names()) names.push_back(n);
  ptrs.insert(ptrs.end(), {&crf.trans, &crf.start, &crf.end});
  names.insert(names.end(), {"crf.trans", "crf.start", "crf.end"});
  const std::size_t n_brar = params.tensors().size();

  const ad::LossFn loss = [&](ad::Tape&, std::span<const Var> v) {
    const Var inputs = embed_sequence(v[0], ids);
    const BrarVars vars = bind_params(params, v.subspan(1, n_brar));
    const ForwardPass pass = model_forward(vars, inputs, ids, stats, options);
    if (!c.crf) return token_cross_entropy(pass.emissions, gold);
    const CrfVars cv{v[1 + n_brar], v[2 + n_brar], v[3 + n_brar]};
    return crf_nll(cv, pass.emissions, gold);
  };
  return ad::finite_diff_check(loss, ptrs, h, tol, names);
}

}  // namespace brar::gradcheck
