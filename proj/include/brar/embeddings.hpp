#pragma once

#include "brar/corpus.hpp"
#include "brar/diffcore.hpp"
#include "brar/rng.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace brar {

/// V x d input vectors, one row per vocabulary entry.
struct EmbeddingMatrix {
  Tensor table;
  bool trainable = true;

  Index vocab_size() const { return table.rows(); }
  Index dim() const { return table.cols(); }
};

/// Every row drawn from N(0, 0.1) in row-major order.
EmbeddingMatrix random_embeddings(Index vocab_size, Index dim, Rng& rng);

/// Reads word2vec-style text vectors ("token v1 ... vd" per line, optional
/// "V d" header). Rows are first random-initialized from `rng`, then rows of
/// tokens present in both the file and `vocab` are overwritten, so the draw
/// sequence does not depend on file contents. Throws DataError on a line with
/// the wrong number of floats or a header whose d disagrees.
EmbeddingMatrix read_vectors(std::istream& in, const Vocabulary& vocab, Index dim, Rng& rng);
EmbeddingMatrix load_vectors(const std::filesystem::path& path, const Vocabulary& vocab, Index dim,
                             Rng& rng);

std::vector<Index> token_ids(const Vocabulary& vocab, const Utterance& utt);

/// The looked-up sequence plus one tape leaf per distinct vocabulary row, so
/// gradients land only on rows the utterance touched.
struct EmbeddedSequence {
  ad::Var inputs;                // t x d
  std::vector<Index> rows;       // distinct vocabulary rows, first-use order
  std::vector<ad::Var> leaves;   // leaves[k] holds table row rows[k]
};

EmbeddedSequence embed_sequence(ad::Tape& tape, const EmbeddingMatrix& emb,
                                std::span<const Index> ids);

/// Lookup through a whole-table leaf (V x d). Gradients land on the full
/// table; used where the table itself is the differentiated parameter.
ad::Var embed_sequence(const ad::Var& table, std::span<const Index> ids);

}  // namespace brar
