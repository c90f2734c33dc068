#pragma once

// Token-level slot metrics. The overall score is micro-averaged over
// positions where gold or prediction is a non-O label:
//   TP: pred == gold != O
//   FP: pred != O and pred != gold
//   FN: gold != O and pred != gold
// Per-label scores are one-vs-rest over all positions, O included. Every
// ratio with a zero denominator is 0.

#include "brar/corpus.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace brar {

using LabelSequences = std::vector<std::vector<LabelId>>;

struct PrfCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  double precision() const;
  double recall() const;
  double f1() const;

  bool operator==(const PrfCounts&) const = default;
};

struct LabelMetrics {
  PrfCounts counts;
  std::int64_t support = 0;  // gold occurrences

  bool operator==(const LabelMetrics&) const = default;
};

struct EvalReport {
  std::vector<std::string> label_names;
  PrfCounts overall;
  std::vector<LabelMetrics> per_label;  // label_names order
  std::int64_t tokens = 0;
  std::int64_t correct = 0;
  std::int64_t utterances = 0;

  double accuracy() const { return tokens == 0 ? 0.0 : static_cast<double>(correct) / tokens; }
  const LabelMetrics& label(const std::string& name) const;

  bool operator==(const EvalReport&) const = default;
};

/// Throws std::invalid_argument naming the first utterance whose lengths differ.
PrfCounts micro_f1_non_o(const LabelSequences& gold, const LabelSequences& pred, LabelId outside);
LabelMetrics per_label_f1(const LabelSequences& gold, const LabelSequences& pred, LabelId label);

EvalReport score(const LabelSequences& gold, const LabelSequences& pred, const LabelSet& labels);

/// Flat "key = value" document: overall.precision, overall.f1, label.T.f1,
/// label.T.support, tokens, ... Rates use 17 significant digits.
void write_report(std::ostream& out, const EvalReport& report);
EvalReport read_report(std::istream& in);

/// Column order F1, F1(T), F1(P), F1(S), F1(D), F1(C), F1(O).
std::vector<std::string> table_columns();
std::vector<double> table_row(const EvalReport& report);
std::string format_table_row(const EvalReport& report);

/// "token<TAB>gold<TAB>pred" lines, blank line between utterances.
void write_predictions(std::ostream& out, const std::vector<Utterance>& utts,
                       const LabelSequences& pred, const LabelSet& labels);

struct PredictionSet {
  LabelSequences gold;
  LabelSequences pred;
};

PredictionSet read_predictions(std::istream& in, const LabelSet& labels);

}  // namespace brar
