#pragma once

#include "brar/brar.hpp"
#include "brar/corpus.hpp"
#include "brar/crf.hpp"
#include "brar/embeddings.hpp"
#include "brar/evalkit.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace brar {

/// Training recipe. Defaults: SGD, lr 0.1, weight decay 1e-4, 2 epochs,
/// batch size 1, one Bi-LSTM layer with 5 hidden units per direction, 50-d
/// inputs.
struct TrainConfig {
  double lr = 0.1;
  double weight_decay = 1e-4;
  std::int64_t epochs = 2;
  std::int64_t batch_size = 1;
  std::uint64_t seed = 42;
  std::int64_t layers = 1;
  std::int64_t hidden = 5;
  std::int64_t embed_dim = 50;
  std::int64_t t_max = 64;
  double beta = 1.0;
  AttentionMode attention_mode = AttentionMode::literal;
  bool no_attention = false;
  bool no_label_forcing = false;
  bool no_crf = false;
  bool freeze_embeddings = false;
  double lf_smoothing = 0.0;
  std::int64_t min_count = 1;

  /// Throws std::invalid_argument on out-of-range settings.
  void validate() const;
  ForwardOptions forward_options() const;
  BrarShape shape() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Flat key/value view of a config, in a fixed order. Keys match the CLI
/// flag names without leading dashes.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& config);

/// Applies one key/value pair; throws std::invalid_argument for unknown keys
/// or unparsable values.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

/// Everything needed to tag new text.
struct ModelBundle {
  static constexpr int kFormatVersion = 1;

  TrainConfig config;
  Vocabulary vocab;
  LabelSet labels = LabelSet::canonical();
  LabelStats stats;
  EmbeddingMatrix embeddings;
  BrarParams brar;
  CrfParams crf;
};

/// Vocabulary and label statistics from `train`, embeddings from `vectors`
/// (or random), then the model weights, all drawn from one seeded stream.
ModelBundle initialize_model(const std::vector<Utterance>& train, const TrainConfig& config,
                             const std::optional<std::filesystem::path>& vectors = std::nullopt);

/// theta <- theta - lr * (g + weight_decay * theta). Throws
/// std::invalid_argument on a shape mismatch.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr,
              double weight_decay);

/// Row-sparse update of the embedding table, no weight decay.
void sgd_rows(Tensor& table, std::span<const Index> rows, std::span<const Tensor> row_grads, double lr);

/// Training loss of one utterance: CRF negative log-likelihood, or token
/// cross-entropy when the CRF is disabled.
double utterance_loss(const ModelBundle& model, const Utterance& utt);

/// Viterbi labels (argmax per token when the CRF is disabled).
std::vector<LabelId> predict(const ModelBundle& model, const std::vector<std::string>& tokens);
LabelSequences predict_all(const ModelBundle& model, const std::vector<Utterance>& utts);

/// Decodes every utterance and scores it. Throws std::invalid_argument on an
/// empty set.
EvalReport evaluate(const ModelBundle& model, const std::vector<Utterance>& test);

struct EpochLog {
  std::int64_t epoch = 0;
  double mean_loss = 0.0;
  std::int64_t steps = 0;
  std::optional<double> dev_f1;
};

struct TrainResult {
  ModelBundle model;
  std::vector<EpochLog> epochs;
};

struct TrainOptions {
  std::optional<std::filesystem::path> vectors;
  std::function<void(const EpochLog&)> on_epoch;
};

/// One SGD step per utterance, utterances reshuffled every epoch. Throws
/// std::invalid_argument for an empty training set and NumericError if a
/// loss turns non-finite.
TrainResult train(const std::vector<Utterance>& train_set, const std::vector<Utterance>& dev_set,
                  const TrainConfig& config, const TrainOptions& options = {});

/// Text model file; see README for the layout. Throws DataError on version
/// mismatch or malformed/truncated input.
void write_model(std::ostream& out, const ModelBundle& model);
ModelBundle read_model(std::istream& in);
void save_model(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace brar
