#include "brar/corpus.hpp"

#include "brar/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace brar {

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

void warn(LoadReport* report, std::string msg) {
  if (report)
    report->warnings.push_back(std::move(msg));
  else
    std::cerr << "warning: " << msg << '\n';
}

void truncate(Utterance& u, std::size_t t_max, LoadReport* report) {
  if (u.size() <= t_max) return;
  warn(report, "line " + std::to_string(u.source_line) + ": utterance of length " +
                   std::to_string(u.size()) + " truncated to " + std::to_string(t_max));
  u.tokens.resize(t_max);
  u.labels.resize(t_max);
  if (report) ++report->truncated;
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

LabelSet LabelSet::canonical() { return LabelSet({"T", "C", "D", "S", "P", "O"}); }

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() != kSize)
    throw DataError("label set must have exactly " + std::to_string(kSize) + " labels");
  std::vector<std::string> sorted = labels_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw DataError("label set contains duplicates");
  const auto o = find("O");
  if (!o) throw DataError("label set must contain O");
  outside_ = *o;
}

std::optional<LabelId> LabelSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == name) return static_cast<LabelId>(i);
  return std::nullopt;
}

Vocabulary::Vocabulary() { add(std::string(kUnkToken)); }

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != kUnkToken)
    throw DataError("vocabulary must start with " + std::string(kUnkToken));
  Vocabulary v;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (v.index_.count(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(std::move(tokens[i]));
  }
  return v;
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, static_cast<Index>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Index Vocabulary::index(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<Utterance> read_conll(std::istream& in, const LabelSet& labels, std::size_t t_max,
                                  LoadReport* report) {
  std::vector<Utterance> out;
  Utterance current;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (current.tokens.empty()) return;
    truncate(current, t_max, report);
    out.push_back(std::move(current));
    current = Utterance{};
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto cols = split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols.size() != 2)
      throw DataError("line " + std::to_string(lineno) + ": expected 2 columns (token, label), got " +
                      std::to_string(cols.size()));
    const auto id = labels.find(cols[1]);
    if (!id) throw DataError("line " + std::to_string(lineno) + ": unknown label '" + cols[1] + "'");
    if (current.tokens.empty()) current.source_line = lineno;
    current.tokens.push_back(cols[0]);
    current.labels.push_back(*id);
  }
  flush();
  return out;
}

std::vector<Utterance> load_conll(const std::filesystem::path& path, const LabelSet& labels,
                                  std::size_t t_max, LoadReport* report) {
  auto in = open(path);
  try {
    return read_conll(in, labels, t_max, report);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_conll(std::ostream& out, const std::vector<Utterance>& utts, const LabelSet& labels) {
  for (std::size_t u = 0; u < utts.size(); ++u) {
    if (u > 0) out << '\n';
    for (std::size_t i = 0; i < utts[u].size(); ++i)
      out << utts[u].tokens[i] << '\t' << labels.name(utts[u].labels[i]) << '\n';
  }
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    any = false;
  };
  while (in.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    any = true;
    switch (ch) {
      case '"': quoted = true; break;
      case ',': end_field(); break;
      case '\r':
        if (in.peek() == '\n') in.get(ch);
        end_record();
        break;
      case '\n': end_record(); break;
      default: field += ch;
    }
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  if (any || !field.empty() || !record.empty()) end_record();
  return records;
}

std::vector<Utterance> read_conda_csv(std::istream& in, const LabelSet& labels, std::size_t t_max,
                                      LoadReport* report) {
  const auto records = parse_csv(in);
  if (records.empty()) throw DataError("CSV has no header");
  const auto& header = records[0];
  auto column = [&](std::string_view name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("CSV header lacks required column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t utt_col = column("utterance");
  const std::size_t slot_col = column("slots");

  std::vector<Utterance> out;
  auto reject = [&](std::size_t row, const std::string& why) {
    if (report) ++report->rejected_rows;
    warn(report, "row " + std::to_string(row) + ": " + why);
  };
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() <= std::max(utt_col, slot_col)) {
      reject(r, "missing fields");
      continue;
    }
    Utterance u;
    u.source_line = r;
    u.tokens = split_ws(rec[utt_col]);
    const auto slots = split_ws(rec[slot_col]);
    if (u.tokens.empty()) {
      reject(r, "empty utterance");
      continue;
    }
    if (slots.size() != u.tokens.size()) {
      reject(r, std::to_string(u.tokens.size()) + " tokens vs " + std::to_string(slots.size()) + " labels");
      continue;
    }
    bool ok = true;
    for (const auto& s : slots) {
      const auto id = labels.find(s);
      if (!id) {
        reject(r, "unknown label '" + s + "'");
        ok = false;
        break;
      }
      u.labels.push_back(*id);
    }
    if (!ok) continue;
    truncate(u, t_max, report);
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<Utterance> load_conda_csv(const std::filesystem::path& path, const LabelSet& labels,
                                      std::size_t t_max, LoadReport* report) {
  auto in = open(path);
  try {
    return read_conda_csv(in, labels, t_max, report);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<Utterance> load_corpus(const std::filesystem::path& path, const LabelSet& labels,
                                   std::size_t t_max, LoadReport* report) {
  if (path.extension() == ".csv") return load_conda_csv(path, labels, t_max, report);
  return load_conll(path, labels, t_max, report);
}

Vocabulary build_vocab(const std::vector<Utterance>& train, std::int64_t min_count) {
  std::map<std::string, std::int64_t> freq;
  for (const auto& u : train)
    for (const auto& t : u.tokens) ++freq[t];
  std::vector<std::pair<std::string, std::int64_t>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(Vocabulary::kUnkToken)};
  for (auto& [tok, n] : entries)
    if (n >= min_count && tok != Vocabulary::kUnkToken) tokens.push_back(tok);
  return Vocabulary::from_tokens(std::move(tokens));
}

LabelStats label_stats(const std::vector<Utterance>& train, const Vocabulary& vocab,
                       std::size_t label_count) {
  LabelStats stats{CountMatrix::Zero(vocab.size(), static_cast<Index>(label_count))};
  for (const auto& u : train)
    for (std::size_t i = 0; i < u.size(); ++i) ++stats.counts(vocab.index(u.tokens[i]), u.labels[i]);
  return stats;
}

RowVector label_distribution(const LabelStats& stats, Index token, double smoothing) {
  if (token < 0 || token >= stats.vocab_size())
    throw std::out_of_range("label_distribution: token index " + std::to_string(token) +
                            " outside vocabulary of size " + std::to_string(stats.vocab_size()));
  const Index c = stats.label_count();
  RowVector row = stats.counts.row(token).cast<double>().array() + smoothing;
  const double total = row.sum();
  if (total <= 0.0) return RowVector::Constant(c, 1.0 / static_cast<double>(c));
  return row / total;
}

}  // namespace brar
