#include "brar/selfcheck.hpp"

#include "brar/crf.hpp"
#include "brar/evalkit.hpp"
#include "brar/gradcheck.hpp"
#include "brar/rng.hpp"
#include "brar/textio.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace brar::selfcheck {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) { return textio::format_double(v); }

Tensor normal_tensor(Rng& rng, Index r, Index c) {
  Tensor t = Tensor::zeros(r, c);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 1.0);
  return t;
}

// The tape never sees the second term, finite differences do.
ad::FiniteDiffReport broken_gradient() {
  Tensor x = Tensor::vector(std::vector<double>{0.3, -0.7, 1.1});
  const ad::LossFn loss = [](ad::Tape& tape, std::span<const ad::Var> v) {
    const double hidden = v[0].value().mat().squaredNorm();
    return ad::sum(ad::tanh(v[0])) + tape.leaf(Tensor::scalar(hidden));
  };
  std::vector<Tensor*> ptrs{&x};
  const std::vector<std::string> names{"x"};
  return ad::finite_diff_check(loss, ptrs, 1e-5, 1e-4, names);
}

}  // namespace

GroupResult gradients(const Options& opts, int op_instances, int model_seeds) {
  const auto t0 = Clock::now();
  GroupResult g{"gradients", true, "", 0.0};
  std::ostringstream detail;

  Rng rng(20240601);
  double worst_op = 0.0;
  int failed_ops = 0;
  for (const ad::OpKind kind : gradcheck::op_kinds()) {
    for (int i = 0; i < op_instances; ++i) {
      const auto r = gradcheck::check_op(kind, rng);
      worst_op = std::max(worst_op, r.max_rel_error);
      if (!r.passed()) {
        ++failed_ops;
        if (failed_ops <= 3) detail << " op " << ad::op_name(kind) << " rel " << num(r.max_rel_error) << ";";
      }
    }
  }
  if (opts.inject_fault) {
    const auto r = broken_gradient();
    worst_op = std::max(worst_op, r.max_rel_error);
    if (!r.passed()) ++failed_ops;
  }

  constexpr Index kLengths[] = {1, 2, 3, 5};
  double worst_model = 0.0;
  int failed_models = 0;
  for (int s = 1; s <= model_seeds; ++s) {
    gradcheck::ModelCase c;
    c.seed = static_cast<std::uint64_t>(s);
    c.length = kLengths[s % 4];
    c.layers = 1 + (s / 4) % 2;
    const auto r = gradcheck::check_model(c);
    worst_model = std::max(worst_model, r.max_rel_error);
    if (r.passed()) continue;
    ++failed_models;
    for (const auto& p : r.params) {
      if (p.max_rel_error <= r.tolerance) continue;
      detail << " seed " << s << " (t=" << c.length << " L=" << c.layers << ") " << p.name << " rel "
             << num(p.max_rel_error) << " analytic " << num(p.analytic) << " numeric " << num(p.numeric) << ";";
    }
  }

  g.passed = failed_ops == 0 && failed_models == 0;
  std::ostringstream head;
  head << gradcheck::op_kinds().size() << " ops x " << op_instances << " worst " << num(worst_op) << ", "
       << failed_ops << " failed; " << model_seeds << " model seeds worst " << num(worst_model) << ", "
       << failed_models << " failed;";
  g.detail = head.str() + detail.str();
  g.seconds = since(t0);
  return g;
}

GroupResult crf_oracles(const Options& opts, int instances) {
  const auto t0 = Clock::now();
  GroupResult g{"crf-oracles", true, "", 0.0};
  constexpr Index c = 6;
  Rng rng(99);
  double worst_z = 0.0, worst_score = 0.0;
  int mismatched = 0;
  for (int i = 0; i < instances; ++i) {
    const Index t = 1 + static_cast<Index>(rng.below(5));
    CrfParams crf{normal_tensor(rng, c, c), Tensor::vector(normal_tensor(rng, 1, c).flat()),
                  Tensor::vector(normal_tensor(rng, 1, c).flat())};
    const Matrix em = normal_tensor(rng, t, c).mat();
    double z = log_partition(crf, em);
    if (opts.inject_fault && i == 0) z += 1e-6;
    worst_z = std::max(worst_z, std::abs(z - brute_force_log_partition(crf, em)));
    const auto best = viterbi(crf, em);
    const auto brute = brute_force_best(crf, em);
    if (best.labels != brute.labels) ++mismatched;
    worst_score = std::max(worst_score, std::abs(best.score - brute.score));
  }
  g.passed = worst_z < 1e-8 && worst_score < 1e-9 && mismatched == 0;
  g.detail = std::to_string(instances) + " instances, max |logZ - brute| " + num(worst_z) +
             ", max |score - brute| " + num(worst_score) + ", " + std::to_string(mismatched) +
             " path mismatches";
  g.seconds = since(t0);
  return g;
}

GroupResult label_forcing(const Options& opts) {
  const auto t0 = Clock::now();
  GroupResult g{"label-forcing", true, "", 0.0};
  const LabelSet labels = LabelSet::canonical();
  const LabelId slang = *labels.find("S");

  auto corpus = synthetic_corpus({}, 0).train;
  // "gg" only ever appears as slang.
  for (int i = 0; i < 5; ++i) corpus.push_back({{"gg", "w01"}, {slang, corpus[0].labels[0]}, 0});
  const Vocabulary vocab = build_vocab(corpus, 1);
  const LabelStats stats = label_stats(corpus, vocab, labels.size());

  double worst_sum = 0.0;
  for (Index v = 0; v < vocab.size(); ++v) {
    RowVector p = label_distribution(stats, v);
    if (opts.inject_fault && v == 1) p(0) += 1e-9;
    worst_sum = std::max(worst_sum, std::abs(p.sum() - 1.0));
  }
  const RowVector gg = label_distribution(stats, vocab.index("gg"));
  bool one_hot = true;
  for (Index j = 0; j < gg.size(); ++j) one_hot = one_hot && gg(j) == (j == slang ? 1.0 : 0.0);
  const RowVector unk = label_distribution(stats, Vocabulary::kUnk);
  bool uniform = true;
  for (Index j = 0; j < unk.size(); ++j) uniform = uniform && unk(j) == 1.0 / 6.0;

  g.passed = worst_sum <= 1e-12 && one_hot && uniform;
  g.detail = std::to_string(vocab.size()) + " rows, max |sum - 1| " + num(worst_sum) + ", one-hot " +
             (one_hot ? "exact" : "WRONG") + ", zero-count row " + (uniform ? "uniform" : "WRONG");
  g.seconds = since(t0);
  return g;
}

GroupResult scorer(const Options& opts) {
  const auto t0 = Clock::now();
  GroupResult g{"scorer", true, "", 0.0};
  const LabelSet labels = LabelSet::canonical();
  auto id = [&](const char* n) { return *labels.find(n); };
  const LabelId T = id("T"), S = id("S"), O = id("O");

  LabelSequences gold{{T, O, S}};
  LabelSequences pred{{T, S, S}};
  if (opts.inject_fault) pred[0][0] = O;
  const EvalReport mixed = score(gold, pred, labels);
  const bool f1_ok = std::abs(mixed.overall.f1() - 0.8) < 1e-12;
  const bool s_ok = std::abs(mixed.label("S").counts.f1() - 2.0 / 3.0) < 1e-12;

  const LabelSequences all{{T, S, id("P"), id("D"), id("C"), O}};
  const bool perfect_ok = score(all, all, labels).overall.f1() == 1.0;
  const LabelSequences outside{{O, O, O}};
  const bool outside_ok = score(outside, outside, labels).overall.f1() == 0.0;

  g.passed = f1_ok && s_ok && perfect_ok && outside_ok;
  g.detail = "overall F1 " + num(mixed.overall.f1()) + ", F1(S) " + num(mixed.label("S").counts.f1()) +
             ", all-correct " + (perfect_ok ? "1" : "WRONG") + ", all-O " + (outside_ok ? "0" : "WRONG");
  g.seconds = since(t0);
  return g;
}

std::vector<GroupResult> run_all(const Options& opts) {
  return {gradients(opts), crf_oracles(opts), label_forcing(opts), scorer(opts)};
}

SyntheticCorpus synthetic_corpus(const SyntheticSpec& spec, std::size_t held_out) {
  if (spec.vocab < LabelSet::kSize || spec.min_length < 1 || spec.max_length < spec.min_length)
    throw std::invalid_argument("synthetic_corpus: bad spec");
  Rng rng(spec.seed);
  std::vector<std::string> words;
  std::vector<LabelId> word_label;
  for (std::size_t w = 0; w < spec.vocab; ++w) {
    std::string name = "w" + std::string(w < 10 ? "0" : "") + std::to_string(w);
    words.push_back(std::move(name));
    // The first six words cover every label.
    word_label.push_back(w < LabelSet::kSize ? static_cast<LabelId>(w)
                                             : static_cast<LabelId>(rng.below(LabelSet::kSize)));
  }
  auto draw = [&](std::size_t n, std::size_t line0, bool train) {
    std::vector<Utterance> out;
    for (std::size_t u = 0; u < n; ++u) {
      Utterance utt;
      utt.source_line = line0 + u;
      const std::size_t len = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
      for (std::size_t k = 0; k < len; ++k) {
        // The first tokens of the early training utterances walk the whole
        // vocabulary so every word is seen in training.
        const bool walk = train && k < 2 && u * 2 + k < spec.vocab;
        const std::size_t w = walk ? u * 2 + k : rng.below(spec.vocab);
        utt.tokens.push_back(words[w]);
        utt.labels.push_back(word_label[w]);
      }
      out.push_back(std::move(utt));
    }
    return out;
  };
  SyntheticCorpus c;
  c.train = draw(spec.utterances, 0, true);
  c.held_out = draw(held_out, spec.utterances, false);
  return c;
}

}  // namespace brar::selfcheck
