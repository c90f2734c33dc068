#include "brar/trainer.hpp"

#include "brar/error.hpp"
#include "brar/rng.hpp"
#include "brar/textio.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace brar {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight-decay must be >= 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size != 1) fail("only batch-size 1 is supported");
  if (layers < 1) fail("layers must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (embed_dim < 1) fail("embed-dim must be >= 1");
  if (t_max < 1) fail("tmax must be >= 1");
  if (!std::isfinite(beta)) fail("beta must be finite");
  if (!(lf_smoothing >= 0.0) || !std::isfinite(lf_smoothing)) fail("lf-smoothing must be >= 0");
  if (min_count < 0) fail("min-count must be >= 0");
}

ForwardOptions TrainConfig::forward_options() const {
  return {attention_mode, no_attention, no_label_forcing, beta, lf_smoothing};
}

BrarShape TrainConfig::shape() const {
  return {embed_dim, hidden, layers, t_max, static_cast<Index>(LabelSet::kSize), attention_mode};
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& c) {
  using textio::format_double;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"lr", format_double(c.lr)},
      {"weight-decay", format_double(c.weight_decay)},
      {"epochs", std::to_string(c.epochs)},
      {"batch-size", std::to_string(c.batch_size)},
      {"seed", std::to_string(c.seed)},
      {"layers", std::to_string(c.layers)},
      {"hidden", std::to_string(c.hidden)},
      {"embed-dim", std::to_string(c.embed_dim)},
      {"tmax", std::to_string(c.t_max)},
      {"beta", format_double(c.beta)},
      {"attention-mode", std::string(to_string(c.attention_mode))},
      {"no-attention", b(c.no_attention)},
      {"no-label-forcing", b(c.no_label_forcing)},
      {"no-crf", b(c.no_crf)},
      {"freeze-embeddings", b(c.freeze_embeddings)},
      {"lf-smoothing", format_double(c.lf_smoothing)},
      {"min-count", std::to_string(c.min_count)},
  };
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  auto bad = [&] { throw std::invalid_argument("config: bad value '" + value + "' for " + key); };
  auto real = [&] {
    const auto v = textio::parse_double(value);
    if (!v) bad();
    return *v;
  };
  auto integer = [&] {
    const auto v = textio::parse_int(value);
    if (!v) bad();
    return *v;
  };
  auto boolean = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad();
    return false;
  };
  if (key == "lr") c.lr = real();
  else if (key == "weight-decay") c.weight_decay = real();
  else if (key == "epochs") c.epochs = integer();
  else if (key == "batch-size") c.batch_size = integer();
  else if (key == "seed") {
    const auto v = integer();
    if (v < 0) bad();
    c.seed = static_cast<std::uint64_t>(v);
  } else if (key == "layers") c.layers = integer();
  else if (key == "hidden") c.hidden = integer();
  else if (key == "embed-dim") c.embed_dim = integer();
  else if (key == "tmax") c.t_max = integer();
  else if (key == "beta") c.beta = real();
  else if (key == "attention-mode") c.attention_mode = parse_attention_mode(value);
  else if (key == "no-attention") c.no_attention = boolean();
  else if (key == "no-label-forcing") c.no_label_forcing = boolean();
  else if (key == "no-crf") c.no_crf = boolean();
  else if (key == "freeze-embeddings") c.freeze_embeddings = boolean();
  else if (key == "lf-smoothing") c.lf_smoothing = real();
  else if (key == "min-count") c.min_count = integer();
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

ModelBundle initialize_model(const std::vector<Utterance>& train, const TrainConfig& config,
                             const std::optional<std::filesystem::path>& vectors) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  ModelBundle m;
  m.config = config;
  m.vocab = build_vocab(train, config.min_count);
  m.stats = label_stats(train, m.vocab, m.labels.size());
  Rng rng(config.seed);
  m.embeddings = vectors ? load_vectors(*vectors, m.vocab, config.embed_dim, rng)
                         : random_embeddings(m.vocab.size(), config.embed_dim, rng);
  m.embeddings.trainable = !config.freeze_embeddings;
  m.brar = init_brar(config.shape(), rng);
  m.crf = CrfParams::zeros(static_cast<Index>(m.labels.size()));
  return m;
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr,
              double weight_decay) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd_step: " + std::to_string(params.size()) + " params vs " +
                                std::to_string(grads.size()) + " gradients");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (!params[k]->same_shape(grads[k]))
      throw std::invalid_argument("sgd_step: shape mismatch " + params[k]->shape_string() + " vs " +
                                  grads[k].shape_string());
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& theta = params[k]->mat();
    theta -= lr * (grads[k].mat() + weight_decay * theta);
  }
}

void sgd_rows(Tensor& table, std::span<const Index> rows, std::span<const Tensor> row_grads, double lr) {
  if (rows.size() != row_grads.size()) throw std::invalid_argument("sgd_rows: count mismatch");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (row_grads[k].size() != table.cols())
      throw std::invalid_argument("sgd_rows: gradient " + row_grads[k].shape_string() +
                                  " does not fit table " + table.shape_string());
    table.mat().row(rows[k]) -= lr * row_grads[k].mat().row(0);
  }
}

namespace {

struct Step {
  std::vector<ad::Var> brar_leaves;
  CrfVars crf;
  EmbeddedSequence embedded;
  ForwardPass pass;
  ad::Var loss;
};

Step forward_utterance(ad::Tape& tape, const ModelBundle& m, const std::vector<Index>& ids,
                       const std::vector<LabelId>* gold) {
  Step s;
  for (const Tensor* t : m.brar.tensors()) s.brar_leaves.push_back(tape.leaf(*t));
  const BrarVars vars = bind_params(m.brar, s.brar_leaves);
  s.crf = bind_crf(tape, m.crf);
  s.embedded = embed_sequence(tape, m.embeddings, ids);
  s.pass = model_forward(vars, s.embedded.inputs, ids, m.stats, m.config.forward_options());
  if (gold)
    s.loss = m.config.no_crf ? token_cross_entropy(s.pass.emissions, *gold)
                             : crf_nll(s.crf, s.pass.emissions, *gold);
  return s;
}

std::string parameter_diagnostics(const ModelBundle& m) {
  std::ostringstream out;
  const auto names = m.brar.names();
  const auto tensors = m.brar.tensors();
  out << "embeddings |.|=" << m.embeddings.table.mat().norm();
  for (std::size_t k = 0; k < names.size(); ++k) out << ", " << names[k] << " |.|=" << tensors[k]->mat().norm();
  out << ", crf.trans |.|=" << m.crf.trans.mat().norm();
  return out.str();
}

}  // namespace

double utterance_loss(const ModelBundle& m, const Utterance& utt) {
  ad::Tape tape;
  const auto ids = token_ids(m.vocab, utt);
  return forward_utterance(tape, m, ids, &utt.labels).loss.value().item();
}

std::vector<LabelId> predict(const ModelBundle& m, const std::vector<std::string>& tokens) {
  if (tokens.empty()) return {};
  std::vector<Index> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(m.vocab.index(t));
  const BrarActivations act = model_forward(m.brar, m.embeddings, m.stats, ids, m.config.forward_options());
  if (m.config.no_crf) return argmax_rows(act.emissions.mat());
  return viterbi(m.crf, act.emissions.mat()).labels;
}

LabelSequences predict_all(const ModelBundle& m, const std::vector<Utterance>& utts) {
  LabelSequences out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(predict(m, u.tokens));
  return out;
}

EvalReport evaluate(const ModelBundle& m, const std::vector<Utterance>& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: test set is empty");
  LabelSequences gold;
  gold.reserve(test.size());
  for (const auto& u : test) gold.push_back(u.labels);
  return score(gold, predict_all(m, test), m.labels);
}

TrainResult train(const std::vector<Utterance>& train_set, const std::vector<Utterance>& dev_set,
                  const TrainConfig& config, const TrainOptions& options) {
  TrainResult result{initialize_model(train_set, config, options.vectors), {}};
  ModelBundle& m = result.model;
  // Visit order has its own stream so it does not depend on the model size.
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(train_set.size());
  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    EpochLog log;
    log.epoch = epoch;
    double total = 0.0;
    for (const std::size_t idx : order) {
      const Utterance& utt = train_set[idx];
      const auto ids = token_ids(m.vocab, utt);
      ad::Tape tape;
      auto diverged = [&](const std::string& what) {
        return NumericError(what + " at training utterance " + std::to_string(idx) + " (line " +
                            std::to_string(utt.source_line) + ", epoch " + std::to_string(epoch) +
                            "): " + parameter_diagnostics(m));
      };
      std::optional<Step> step;
      try {
        step.emplace(forward_utterance(tape, m, ids, &utt.labels));
      } catch (const std::domain_error& e) {
        throw diverged(e.what());
      }
      const Step& s = *step;
      const double loss = s.loss.value().item();
      if (!std::isfinite(loss)) throw diverged("non-finite loss");
      tape.backward(s.loss);

      std::vector<Tensor*> params = m.brar.tensors();
      std::vector<Tensor> grads;
      grads.reserve(params.size() + 3);
      for (const auto& leaf : s.brar_leaves) grads.push_back(leaf.grad());
      for (Tensor* t : {&m.crf.trans, &m.crf.start, &m.crf.end}) params.push_back(t);
      for (const auto* v : {&s.crf.trans, &s.crf.start, &s.crf.end}) grads.push_back(v->grad());
      sgd_step(params, grads, config.lr, config.weight_decay);

      if (!config.freeze_embeddings) {
        std::vector<Tensor> row_grads;
        for (const auto& leaf : s.embedded.leaves) row_grads.push_back(leaf.grad());
        sgd_rows(m.embeddings.table, s.embedded.rows, row_grads, config.lr);
      }
      bool finite = m.embeddings.table.all_finite();
      for (const Tensor* t : params) finite = finite && t->all_finite();
      if (!finite) throw diverged("non-finite parameters");
      total += loss;
      ++log.steps;
    }
    log.mean_loss = total / static_cast<double>(train_set.size());
    if (!dev_set.empty()) log.dev_f1 = evaluate(m, dev_set).overall.f1();
    if (options.on_epoch) options.on_epoch(log);
    result.epochs.push_back(log);
  }
  return result;
}

}  // namespace brar
