#include "brar/embeddings.hpp"

#include "brar/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <unordered_map>

namespace brar {

namespace {

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

EmbeddingMatrix random_embeddings(Index vocab_size, Index dim, Rng& rng) {
  EmbeddingMatrix e{Tensor::zeros(vocab_size, dim)};
  for (Index i = 0; i < e.table.size(); ++i) e.table[i] = rng.normal(0.0, 0.1);
  return e;
}

EmbeddingMatrix read_vectors(std::istream& in, const Vocabulary& vocab, Index dim, Rng& rng) {
  EmbeddingMatrix e = random_embeddings(vocab.size(), dim, rng);
  std::vector<bool> filled(static_cast<std::size_t>(vocab.size()), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = fields(line);
    if (f.empty()) continue;
    if (lineno == 1 && f.size() == 2) {
      long long n = 0, d = 0;
      if (parse_number(f[0], n) && parse_number(f[1], d)) {
        if (d != dim)
          throw DataError("vector header declares d=" + std::to_string(d) + ", expected " +
                          std::to_string(dim));
        continue;
      }
    }
    if (static_cast<Index>(f.size()) != dim + 1)
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                      " floats, got " + std::to_string(f.size() - 1));
    RowVector v(dim);
    for (Index k = 0; k < dim; ++k) {
      if (!parse_number(f[static_cast<std::size_t>(k) + 1], v(k)) || !std::isfinite(v(k)))
        throw DataError("line " + std::to_string(lineno) + ": bad float '" +
                        std::string(f[static_cast<std::size_t>(k) + 1]) + "'");
    }
    const Index row = vocab.index(f[0]);
    if (row == Vocabulary::kUnk && f[0] != Vocabulary::kUnkToken) continue;
    if (filled[static_cast<std::size_t>(row)]) continue;
    filled[static_cast<std::size_t>(row)] = true;
    e.table.mat().row(row) = v;
  }
  return e;
}

EmbeddingMatrix load_vectors(const std::filesystem::path& path, const Vocabulary& vocab, Index dim,
                             Rng& rng) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_vectors(in, vocab, dim, rng);
  } catch (const DataError& err) {
    throw DataError(path.string() + ": " + err.what());
  }
}

std::vector<Index> token_ids(const Vocabulary& vocab, const Utterance& utt) {
  std::vector<Index> ids;
  ids.reserve(utt.size());
  for (const auto& t : utt.tokens) ids.push_back(vocab.index(t));
  return ids;
}

EmbeddedSequence embed_sequence(ad::Tape& tape, const EmbeddingMatrix& emb,
                                std::span<const Index> ids) {
  EmbeddedSequence seq;
  std::unordered_map<Index, std::size_t> slot;
  std::vector<ad::Var> steps;
  steps.reserve(ids.size());
  for (const Index id : ids) {
    if (id < 0 || id >= emb.vocab_size())
      throw std::out_of_range("embed_sequence: token index " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(emb.vocab_size()));
    auto [it, inserted] = slot.try_emplace(id, seq.rows.size());
    if (inserted) {
      seq.rows.push_back(id);
      seq.leaves.push_back(tape.leaf(Tensor::vector(emb.table.mat().row(id))));
    }
    steps.push_back(seq.leaves[it->second]);
  }
  seq.inputs = ad::stack_rows(steps);
  return seq;
}

ad::Var embed_sequence(const ad::Var& table, std::span<const Index> ids) {
  std::vector<ad::Var> steps;
  steps.reserve(ids.size());
  for (const Index id : ids) steps.push_back(ad::index_row(table, id));
  return ad::stack_rows(steps);
}

}  // namespace brar
