#include "brar/brar.hpp"

#include <cmath>
#include <stdexcept>

namespace brar {

AttentionMode parse_attention_mode(std::string_view name) {
  if (name == "literal") return AttentionMode::literal;
  if (name == "positional") return AttentionMode::positional;
  throw std::invalid_argument("unknown attention mode '" + std::string(name) +
                              "' (expected literal or positional)");
}

std::string_view to_string(AttentionMode mode) {
  return mode == AttentionMode::literal ? "literal" : "positional";
}

std::vector<Tensor*> BrarParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& layer : lstm)
    for (auto& dir : layer) {
      out.push_back(&dir.input);
      out.push_back(&dir.recurrent);
      out.push_back(&dir.bias);
    }
  out.push_back(&attention);
  out.push_back(&alpha);
  out.push_back(&projection);
  return out;
}

std::vector<const Tensor*> BrarParams::tensors() const {
  auto mut = const_cast<BrarParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> BrarParams::names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < lstm.size(); ++l)
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string prefix = "lstm." + std::to_string(l) + "." + dir + ".";
      out.push_back(prefix + "input");
      out.push_back(prefix + "recurrent");
      out.push_back(prefix + "bias");
    }
  out.insert(out.end(), {"attention", "alpha", "projection"});
  return out;
}

namespace {

Tensor uniform_matrix(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

BrarParams init_brar(const BrarShape& shape, Rng& rng) {
  if (shape.hidden < 1 || shape.layers < 1 || shape.input_dim < 1 || shape.t_max < 1)
    throw std::invalid_argument("init_brar: dimensions must be positive");
  const Index h = shape.hidden;
  BrarParams p;
  for (Index l = 0; l < shape.layers; ++l) {
    const Index in = l == 0 ? shape.input_dim : 2 * h;
    std::array<LstmWeights, 2> layer;
    for (auto& dir : layer) {
      dir.input = uniform_matrix(4 * h, in, in, rng);
      dir.recurrent = uniform_matrix(4 * h, h, h, rng);
      RowVector bias = RowVector::Zero(4 * h);
      bias.segment(h, h).setOnes();
      dir.bias = Tensor::vector(bias);
    }
    p.lstm.push_back(std::move(layer));
  }
  const Index attn_cols = shape.mode == AttentionMode::literal ? shape.t_max : 2 * h;
  p.attention = uniform_matrix(2 * h, attn_cols, 2 * h, rng);
  p.alpha = Tensor::scalar(1.0);
  p.projection = uniform_matrix(2 * h, shape.labels, 2 * h, rng);
  return p;
}

BrarVars bind_params(const BrarParams& layout, std::span<const ad::Var> leaves) {
  const std::size_t expected = layout.lstm.size() * 6 + 3;
  if (leaves.size() != expected)
    throw std::invalid_argument("bind: expected " + std::to_string(expected) + " leaves, got " +
                                std::to_string(leaves.size()));
  BrarVars v;
  std::size_t k = 0;
  for (std::size_t l = 0; l < layout.lstm.size(); ++l) {
    std::array<LstmVars, 2> layer;
    for (auto& dir : layer) {
      dir.input = leaves[k++];
      dir.recurrent = leaves[k++];
      dir.bias = leaves[k++];
    }
    v.lstm.push_back(layer);
  }
  v.attention = leaves[k++];
  v.alpha = leaves[k++];
  v.projection = leaves[k++];
  return v;
}

BrarVars bind_params(ad::Tape& tape, const BrarParams& params) {
  std::vector<ad::Var> leaves;
  for (const Tensor* t : params.tensors()) leaves.push_back(tape.leaf(*t));
  return bind_params(params, leaves);
}

namespace {

struct Direction {
  std::vector<ad::Var> hidden;  // indexed by position
  ad::Var last;                 // state after consuming the whole sequence
};

Direction run_direction(const LstmVars& w, const ad::Var& inputs, bool reverse) {
  ad::Tape& tape = inputs.tape();
  const Index t = inputs.value().rows();
  const Index h = w.recurrent.value().cols();
  const ad::Var projected = ad::matmul(inputs, ad::transpose(w.input));  // t x 4h
  ad::Var hidden = tape.leaf(Tensor::zeros_vector(h));
  ad::Var cell = tape.leaf(Tensor::zeros_vector(h));
  Direction out;
  out.hidden.resize(static_cast<std::size_t>(t));
  for (Index step = 0; step < t; ++step) {
    const Index pos = reverse ? t - 1 - step : step;
    const ad::Var gates =
        ad::index_row(projected, pos) + ad::matvec(w.recurrent, hidden) + w.bias;
    const ad::Var in_gate = ad::sigmoid(ad::slice_cols(gates, 0, h));
    const ad::Var forget = ad::sigmoid(ad::slice_cols(gates, h, h));
    const ad::Var candidate = ad::tanh(ad::slice_cols(gates, 2 * h, h));
    const ad::Var out_gate = ad::sigmoid(ad::slice_cols(gates, 3 * h, h));
    cell = ad::elementwise_mul(forget, cell) + ad::elementwise_mul(in_gate, candidate);
    hidden = ad::elementwise_mul(out_gate, ad::tanh(cell));
    out.hidden[static_cast<std::size_t>(pos)] = hidden;
  }
  out.last = hidden;
  return out;
}

}  // namespace

BiLstmOutput bilstm_forward(const BrarVars& vars, const ad::Var& inputs) {
  if (inputs.value().rank() != 2)
    throw std::invalid_argument("bilstm_forward: inputs must be t x d, got " + inputs.value().shape_string());
  ad::Var layer_in = inputs;
  BiLstmOutput out;
  for (const auto& layer : vars.lstm) {
    const Direction fwd = run_direction(layer[0], layer_in, false);
    const Direction bwd = run_direction(layer[1], layer_in, true);
    out.states = ad::concat_cols(ad::stack_rows(fwd.hidden), ad::stack_rows(bwd.hidden));
    out.summary = ad::concat_cols(fwd.last, bwd.last);
    layer_in = out.states;
  }
  return out;
}

ResidualOutput attention_residual(const BrarVars& vars, const BiLstmOutput& lstm, AttentionMode mode) {
  const ad::Var& states = lstm.states;
  const Index t = states.value().rows();
  ResidualOutput out;
  if (mode == AttentionMode::literal) {
    const Index width = vars.attention.value().cols();
    if (t > width)
      throw std::invalid_argument("attention_residual: sequence length " + std::to_string(t) +
                                  " exceeds t_max " + std::to_string(width));
    const ad::Var scores = ad::vecmat(lstm.summary, ad::slice_cols(vars.attention, 0, t));  // t
    out.attention = ad::softmax_vec(ad::vecmat(scores, states));                           // 2h
  } else {
    const ad::Var weights = ad::softmax_vec(ad::matvec(states, ad::matvec(vars.attention, lstm.summary)));
    out.attention = ad::vecmat(weights, states);
  }
  const ad::Var residual = ad::broadcast_add_row(states, ad::scalar_mul(vars.alpha, out.attention));
  out.features = ad::matmul(residual, vars.projection);
  return out;
}

ad::Var label_force(const ad::Var& features, std::span<const Index> ids, const LabelStats& stats,
                    double beta, double smoothing) {
  if (!std::isfinite(beta)) throw std::invalid_argument("label_force: beta must be finite");
  const Tensor& f = features.value();
  if (static_cast<Index>(ids.size()) != f.rows() || stats.label_count() != f.cols())
    throw std::invalid_argument("label_force: features " + f.shape_string() + " do not match " +
                                std::to_string(ids.size()) + " tokens x " +
                                std::to_string(stats.label_count()) + " labels");
  if (beta == 0.0) return features;
  Matrix prior(f.rows(), f.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    prior.row(static_cast<Index>(i)) = beta * label_distribution(stats, ids[i], smoothing);
  return features + features.tape().leaf(Tensor(std::move(prior)));
}

ForwardPass model_forward(const BrarVars& vars, const ad::Var& inputs, std::span<const Index> ids,
                          const LabelStats& stats, const ForwardOptions& options) {
  ForwardPass pass;
  pass.lstm = bilstm_forward(vars, inputs);
  if (options.no_attention) {
    pass.features = ad::matmul(pass.lstm.states, vars.projection);
  } else {
    const ResidualOutput r = attention_residual(vars, pass.lstm, options.mode);
    pass.attention = r.attention;
    pass.features = r.features;
  }
  const double beta = options.no_label_forcing ? 0.0 : options.beta;
  pass.emissions = label_force(pass.features, ids, stats, beta, options.lf_smoothing);
  return pass;
}

BrarActivations model_forward(const BrarParams& params, const EmbeddingMatrix& emb,
                              const LabelStats& stats, std::span<const Index> ids,
                              const ForwardOptions& options) {
  ad::Tape tape;
  const BrarVars vars = bind_params(tape, params);
  const EmbeddedSequence seq = embed_sequence(tape, emb, ids);
  const ForwardPass pass = model_forward(vars, seq.inputs, ids, stats, options);
  BrarActivations out{pass.lstm.states.value(), pass.lstm.summary.value(), std::nullopt,
                      pass.features.value(), pass.emissions.value()};
  if (pass.attention) out.attention = pass.attention->value();
  return out;
}

}  // namespace brar
