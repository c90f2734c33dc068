#include "brar/evalkit.hpp"

#include "brar/error.hpp"
#include "brar/textio.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace brar {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_aligned(const LabelSequences& gold, const LabelSequences& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("evaluation: " + std::to_string(gold.size()) + " gold vs " +
                                std::to_string(pred.size()) + " predicted utterances");
  for (std::size_t u = 0; u < gold.size(); ++u)
    if (gold[u].size() != pred[u].size())
      throw std::invalid_argument("evaluation: length mismatch at utterance " + std::to_string(u) + " (" +
                                  std::to_string(gold[u].size()) + " gold vs " +
                                  std::to_string(pred[u].size()) + " predicted)");
}

}  // namespace

double PrfCounts::precision() const { return ratio(tp, tp + fp); }
double PrfCounts::recall() const { return ratio(tp, tp + fn); }
double PrfCounts::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

const LabelMetrics& EvalReport::label(const std::string& name) const {
  const auto it = std::find(label_names.begin(), label_names.end(), name);
  if (it == label_names.end()) throw std::out_of_range("report has no label '" + name + "'");
  return per_label[static_cast<std::size_t>(it - label_names.begin())];
}

PrfCounts micro_f1_non_o(const LabelSequences& gold, const LabelSequences& pred, LabelId outside) {
  check_aligned(gold, pred);
  PrfCounts c;
  for (std::size_t u = 0; u < gold.size(); ++u)
    for (std::size_t i = 0; i < gold[u].size(); ++i) {
      const LabelId g = gold[u][i];
      const LabelId p = pred[u][i];
      if (p == g) {
        if (g != outside) ++c.tp;
        continue;
      }
      if (p != outside) ++c.fp;
      if (g != outside) ++c.fn;
    }
  return c;
}

LabelMetrics per_label_f1(const LabelSequences& gold, const LabelSequences& pred, LabelId label) {
  check_aligned(gold, pred);
  LabelMetrics m;
  for (std::size_t u = 0; u < gold.size(); ++u)
    for (std::size_t i = 0; i < gold[u].size(); ++i) {
      const bool g = gold[u][i] == label;
      const bool p = pred[u][i] == label;
      m.support += g;
      m.counts.tp += g && p;
      m.counts.fp += p && !g;
      m.counts.fn += g && !p;
    }
  return m;
}

EvalReport score(const LabelSequences& gold, const LabelSequences& pred, const LabelSet& labels) {
  EvalReport r;
  r.label_names = labels.names();
  r.overall = micro_f1_non_o(gold, pred, labels.outside());
  for (std::size_t l = 0; l < labels.size(); ++l)
    r.per_label.push_back(per_label_f1(gold, pred, static_cast<LabelId>(l)));
  r.utterances = static_cast<std::int64_t>(gold.size());
  for (std::size_t u = 0; u < gold.size(); ++u)
    for (std::size_t i = 0; i < gold[u].size(); ++i) {
      ++r.tokens;
      r.correct += gold[u][i] == pred[u][i];
    }
  return r;
}

void write_report(std::ostream& out, const EvalReport& r) {
  using textio::format_double;
  auto block = [&](const std::string& prefix, const PrfCounts& c) {
    out << prefix << ".precision = " << format_double(c.precision()) << '\n'
        << prefix << ".recall = " << format_double(c.recall()) << '\n'
        << prefix << ".f1 = " << format_double(c.f1()) << '\n'
        << prefix << ".tp = " << c.tp << '\n'
        << prefix << ".fp = " << c.fp << '\n'
        << prefix << ".fn = " << c.fn << '\n';
  };
  out << "labels =";
  for (const auto& n : r.label_names) out << ' ' << n;
  out << '\n';
  block("overall", r.overall);
  for (std::size_t l = 0; l < r.label_names.size(); ++l) {
    const std::string prefix = "label." + r.label_names[l];
    block(prefix, r.per_label[l].counts);
    out << prefix << ".support = " << r.per_label[l].support << '\n';
  }
  out << "tokens = " << r.tokens << '\n'
      << "correct = " << r.correct << '\n'
      << "accuracy = " << format_double(r.accuracy()) << '\n'
      << "utterances = " << r.utterances << '\n';
}

EvalReport read_report(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto entry = textio::parse_key_value(line);
    if (entry) kv[entry->first] = entry->second;
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError("report is missing '" + key + "'");
    return it->second;
  };
  auto get_int = [&](const std::string& key) {
    const auto v = textio::parse_int(get(key));
    if (!v) throw DataError("report field '" + key + "' is not an integer");
    return *v;
  };
  auto counts = [&](const std::string& prefix) {
    return PrfCounts{get_int(prefix + ".tp"), get_int(prefix + ".fp"), get_int(prefix + ".fn")};
  };
  EvalReport r;
  for (const auto f : textio::split(get("labels"))) r.label_names.emplace_back(f);
  r.overall = counts("overall");
  for (const auto& n : r.label_names)
    r.per_label.push_back({counts("label." + n), get_int("label." + n + ".support")});
  r.tokens = get_int("tokens");
  r.correct = get_int("correct");
  r.utterances = get_int("utterances");
  return r;
}

std::vector<std::string> table_columns() {
  return {"F1", "F1(T)", "F1(P)", "F1(S)", "F1(D)", "F1(C)", "F1(O)"};
}

std::vector<double> table_row(const EvalReport& r) {
  std::vector<double> row{r.overall.f1()};
  for (const char* name : {"T", "P", "S", "D", "C", "O"}) row.push_back(r.label(name).counts.f1());
  return row;
}

std::string format_table_row(const EvalReport& r) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(1);
  const auto row = table_row(r);
  for (std::size_t k = 0; k < row.size(); ++k) s << (k ? "\t" : "") << 100.0 * row[k];
  return s.str();
}

void write_predictions(std::ostream& out, const std::vector<Utterance>& utts,
                       const LabelSequences& pred, const LabelSet& labels) {
  if (utts.size() != pred.size()) throw std::invalid_argument("write_predictions: count mismatch");
  for (std::size_t u = 0; u < utts.size(); ++u) {
    if (utts[u].size() != pred[u].size())
      throw std::invalid_argument("write_predictions: length mismatch at utterance " + std::to_string(u));
    if (u > 0) out << '\n';
    for (std::size_t i = 0; i < utts[u].size(); ++i)
      out << utts[u].tokens[i] << '\t' << labels.name(utts[u].labels[i]) << '\t'
          << labels.name(pred[u][i]) << '\n';
  }
}

PredictionSet read_predictions(std::istream& in, const LabelSet& labels) {
  PredictionSet out;
  std::vector<LabelId> gold, pred;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (gold.empty()) return;
    out.gold.push_back(std::move(gold));
    out.pred.push_back(std::move(pred));
    gold.clear();
    pred.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = textio::split(line);
    if (f.empty()) {
      flush();
      continue;
    }
    if (f.size() != 3)
      throw DataError("line " + std::to_string(lineno) + ": expected token, gold, pred columns");
    const auto g = labels.find(f[1]);
    const auto p = labels.find(f[2]);
    if (!g || !p) throw DataError("line " + std::to_string(lineno) + ": unknown label");
    gold.push_back(*g);
    pred.push_back(*p);
  }
  flush();
  return out;
}

}  // namespace brar
