#pragma once

#include "brar/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace brar {

using LabelId = int;

/// Ordered slot-label inventory. The canonical order is T, C, D, S, P, O.
class LabelSet {
 public:
  static constexpr std::size_t kSize = 6;

  static LabelSet canonical();

  /// Requires exactly six distinct labels including "O".
  explicit LabelSet(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& name(LabelId id) const { return labels_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& names() const { return labels_; }
  std::optional<LabelId> find(std::string_view name) const;
  LabelId outside() const { return outside_; }

  bool operator==(const LabelSet& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  LabelId outside_ = 0;
};

struct Utterance {
  std::vector<std::string> tokens;
  std::vector<LabelId> labels;
  std::size_t source_line = 0;

  std::size_t size() const { return tokens.size(); }
};

/// Token index with <unk> reserved at 0.
class Vocabulary {
 public:
  static constexpr Index kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Rebuilds a vocabulary from its token list in index order; entry 0 must
  /// be <unk>.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  Index index(std::string_view token) const;
  const std::string& token(Index i) const { return tokens_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  Index size() const { return static_cast<Index>(tokens_.size()); }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Index> index_;
};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Token-by-label frequency table over the training set.
struct LabelStats {
  CountMatrix counts;  // V x c

  Index vocab_size() const { return counts.rows(); }
  Index label_count() const { return counts.cols(); }
  std::int64_t total(Index token) const { return counts.row(token).sum(); }
};

/// Diagnostics collected while loading a corpus file.
struct LoadReport {
  std::size_t truncated = 0;
  std::size_t rejected_rows = 0;
  std::vector<std::string> warnings;
};

// Readers throw DataError naming the offending line. Utterances longer than
// t_max are truncated with a warning. If `report` is null, warnings go to
// std::cerr.

std::vector<Utterance> read_conll(std::istream& in, const LabelSet& labels, std::size_t t_max,
                                  LoadReport* report = nullptr);
std::vector<Utterance> load_conll(const std::filesystem::path& path, const LabelSet& labels,
                                  std::size_t t_max, LoadReport* report = nullptr);
void write_conll(std::ostream& out, const std::vector<Utterance>& utts, const LabelSet& labels);

std::vector<Utterance> read_conda_csv(std::istream& in, const LabelSet& labels, std::size_t t_max,
                                      LoadReport* report = nullptr);
std::vector<Utterance> load_conda_csv(const std::filesystem::path& path, const LabelSet& labels,
                                      std::size_t t_max, LoadReport* report = nullptr);

/// Picks the CSV reader for *.csv paths and the CoNLL reader otherwise.
std::vector<Utterance> load_corpus(const std::filesystem::path& path, const LabelSet& labels,
                                   std::size_t t_max, LoadReport* report = nullptr);

/// Parses RFC-4180 CSV into records of fields. Exposed for tests.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);

/// Tokens with frequency >= min_count get indices 1.. ordered by
/// (frequency desc, token asc); everything else maps to <unk>.
Vocabulary build_vocab(const std::vector<Utterance>& train, std::int64_t min_count);

LabelStats label_stats(const std::vector<Utterance>& train, const Vocabulary& vocab,
                       std::size_t label_count = LabelSet::kSize);

/// Normalized count row (C_ij + s) / sum_j (C_ij + s). A row with zero mass
/// yields the uniform distribution.
RowVector label_distribution(const LabelStats& stats, Index token, double smoothing = 0.0);

}  // namespace brar
