#pragma once

// BRAR forward pass: stacked Bi-LSTM features, a global attention vector
// added back to every token row as a scaled residual, a linear projection to
// label space, and an additive label-forcing prior from training counts. The
// resulting emission matrix feeds the CRF layer.

#include "brar/corpus.hpp"
#include "brar/crf.hpp"
#include "brar/diffcore.hpp"
#include "brar/embeddings.hpp"
#include "brar/rng.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace brar {

/// How the global attention vector is formed.
///
/// literal:    a = softmax((h_t W_a[:, :t]) H), a distribution over the 2*hidden
///             feature coordinates.
/// positional: w = softmax(H W_p h_t) over positions, a = w^T H.
enum class AttentionMode { literal, positional };

AttentionMode parse_attention_mode(std::string_view name);
std::string_view to_string(AttentionMode mode);

/// Gate blocks are stacked in the order input, forget, candidate, output.
struct LstmWeights {
  Tensor input;      // 4h x in
  Tensor recurrent;  // 4h x h
  Tensor bias;       // 4h
};

struct BrarShape {
  Index input_dim = 50;
  Index hidden = 5;
  Index layers = 1;
  Index t_max = 64;
  Index labels = static_cast<Index>(LabelSet::kSize);
  AttentionMode mode = AttentionMode::literal;
};

struct BrarParams {
  std::vector<std::array<LstmWeights, 2>> lstm;  // [layer][forward, backward]
  Tensor attention;   // literal: 2h x t_max; positional: 2h x 2h
  Tensor alpha;       // rank 0 residual scale
  Tensor projection;  // 2h x c, no bias

  Index hidden() const { return lstm.front()[0].recurrent.cols(); }
  Index layers() const { return static_cast<Index>(lstm.size()); }
  Index input_dim() const { return lstm.front()[0].input.cols(); }
  Index labels() const { return projection.cols(); }

  /// Every tensor in a fixed canonical order, paired with names().
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;
};

/// Weights uniform in +-1/sqrt(fan_in), biases 0 except the forget gate at
/// 1.0, alpha = 1.
BrarParams init_brar(const BrarShape& shape, Rng& rng);

struct LstmVars {
  ad::Var input, recurrent, bias;
};

struct BrarVars {
  std::vector<std::array<LstmVars, 2>> lstm;
  ad::Var attention, alpha, projection;
};

/// Records every tensor of `params` as a leaf.
BrarVars bind_params(ad::Tape& tape, const BrarParams& params);

/// Assembles BrarVars from leaves listed in BrarParams::tensors() order.
BrarVars bind_params(const BrarParams& layout, std::span<const ad::Var> leaves);

struct BiLstmOutput {
  ad::Var states;   // t x 2h, top layer, forward | backward
  ad::Var summary;  // 2h: final forward state | final backward state
};

BiLstmOutput bilstm_forward(const BrarVars& vars, const ad::Var& inputs);

struct ResidualOutput {
  ad::Var attention;  // 2h
  ad::Var features;   // t x c
};

/// Throws std::invalid_argument in literal mode when t exceeds the W_a width.
ResidualOutput attention_residual(const BrarVars& vars, const BiLstmOutput& lstm, AttentionMode mode);

/// emissions[i] = features[i] + beta * label_distribution(stats, ids[i]).
/// With beta == 0 the features are returned unchanged.
ad::Var label_force(const ad::Var& features, std::span<const Index> ids, const LabelStats& stats,
                    double beta, double smoothing = 0.0);

struct ForwardOptions {
  AttentionMode mode = AttentionMode::literal;
  bool no_attention = false;
  bool no_label_forcing = false;
  double beta = 1.0;
  double lf_smoothing = 0.0;
};

struct ForwardPass {
  BiLstmOutput lstm;
  std::optional<ad::Var> attention;
  ad::Var features;
  ad::Var emissions;
};

ForwardPass model_forward(const BrarVars& vars, const ad::Var& inputs, std::span<const Index> ids,
                          const LabelStats& stats, const ForwardOptions& options);

/// Detached snapshot of one forward pass.
struct BrarActivations {
  Tensor states;
  Tensor summary;
  std::optional<Tensor> attention;
  Tensor features;
  Tensor emissions;
};

BrarActivations model_forward(const BrarParams& params, const EmbeddingMatrix& emb,
                              const LabelStats& stats, std::span<const Index> ids,
                              const ForwardOptions& options);

}  // namespace brar
