#include "brar/crf.hpp"

namespace brar {

namespace {

void check_labels(const ad::Var& emissions, std::span<const LabelId> labels) {
  const Tensor& em = emissions.value();
  if (em.rank() != 2) throw std::invalid_argument("crf: emissions must be a matrix, got " + em.shape_string());
  if (static_cast<Index>(labels.size()) != em.rows())
    throw std::invalid_argument("crf: " + std::to_string(labels.size()) + " labels for sequence of length " +
                                std::to_string(em.rows()));
  for (const LabelId y : labels)
    if (y < 0 || y >= em.cols())
      throw std::out_of_range("crf: label index " + std::to_string(y) + " out of range");
}

}  // namespace

CrfVars bind_crf(ad::Tape& tape, const CrfParams& crf) {
  return {tape.leaf(crf.trans), tape.leaf(crf.start), tape.leaf(crf.end)};
}

ad::Var sequence_score(const CrfVars& crf, const ad::Var& emissions, std::span<const LabelId> labels) {
  check_labels(emissions, labels);
  const std::size_t t = labels.size();
  ad::Var s = ad::index_elem(crf.start, labels[0]) + ad::index_elem(crf.end, labels[t - 1]);
  for (std::size_t i = 0; i < t; ++i) s = s + ad::index_elem(emissions, static_cast<Index>(i), labels[i]);
  for (std::size_t i = 1; i < t; ++i) s = s + ad::index_elem(crf.trans, labels[i - 1], labels[i]);
  return s;
}

ad::Var log_partition(const CrfVars& crf, const ad::Var& emissions) {
  const Tensor& em = emissions.value();
  const Tensor& trans = crf.trans.value();
  if (em.rank() != 2 || trans.rank() != 2 || em.cols() != trans.rows() || trans.rows() != trans.cols())
    throw std::invalid_argument("log_partition: shape mismatch " + em.shape_string() + " vs " +
                                trans.shape_string());
  const Index t = em.rows();
  // incoming(j, k) = trans(k, j) + alpha(k)
  const ad::Var incoming = ad::transpose(crf.trans);
  ad::Var alpha = crf.start + ad::index_row(emissions, 0);
  for (Index i = 1; i < t; ++i)
    alpha = ad::logsumexp_rows(ad::broadcast_add_row(incoming, alpha)) + ad::index_row(emissions, i);
  return ad::logsumexp_vec(alpha + crf.end);
}

ad::Var crf_nll(const CrfVars& crf, const ad::Var& emissions, std::span<const LabelId> gold) {
  return log_partition(crf, emissions) - sequence_score(crf, emissions, gold);
}

ad::Var token_cross_entropy(const ad::Var& emissions, std::span<const LabelId> gold) {
  check_labels(emissions, gold);
  ad::Var loss;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto row = static_cast<Index>(i);
    const ad::Var term =
        ad::logsumexp_vec(ad::index_row(emissions, row)) - ad::index_elem(emissions, row, gold[i]);
    loss = i == 0 ? term : loss + term;
  }
  return loss;
}

}  // namespace brar
