#pragma once

// Linear-chain CRF: sequence scoring, forward-algorithm log partition,
// Viterbi decoding and exhaustive-enumeration oracles.
//
// A labeling y_1..y_t scores
//   start[y_1] + sum_i emissions(i, y_i) + sum_{i>=2} trans(y_{i-1}, y_i) + end[y_t]
// with trans rows indexed by the previous label.

#include "brar/corpus.hpp"
#include "brar/diffcore.hpp"
#include "brar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace brar {

template <typename Scalar>
struct BasicCrfParams {
  BasicTensor<Scalar> trans;  // c x c
  BasicTensor<Scalar> start;  // c
  BasicTensor<Scalar> end;    // c

  static BasicCrfParams zeros(Index labels) {
    using Row = typename BasicTensor<Scalar>::RowVector;
    return {BasicTensor<Scalar>::zeros(labels, labels), BasicTensor<Scalar>::vector(Row::Zero(labels)),
            BasicTensor<Scalar>::vector(Row::Zero(labels))};
  }

  Index labels() const { return trans.rows(); }
};

using CrfParams = BasicCrfParams<double>;

template <typename Scalar>
struct Decoded {
  std::vector<LabelId> labels;
  Scalar score{};
};

namespace crf_detail {

template <typename Scalar, typename Derived>
void check(const BasicCrfParams<Scalar>& crf, const Eigen::MatrixBase<Derived>& em) {
  const Index c = crf.labels();
  if (crf.trans.cols() != c || crf.start.size() != c || crf.end.size() != c)
    throw std::invalid_argument("crf: inconsistent parameter shapes");
  if (em.rows() < 1) throw std::invalid_argument("crf: empty sequence");
  if (em.cols() != c)
    throw std::invalid_argument("crf: emissions have " + std::to_string(em.cols()) +
                                " columns, expected " + std::to_string(c));
}

template <typename Scalar>
Scalar logsumexp(std::span<const Scalar> v) {
  using std::exp;
  using std::log;
  const Scalar m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(static_cast<double>(m))) return m;
  Scalar s{0};
  for (const Scalar x : v) s += exp(x - m);
  return m + log(s);
}

}  // namespace crf_detail

template <typename Scalar, typename Derived>
Scalar sequence_score(const BasicCrfParams<Scalar>& crf, const Eigen::MatrixBase<Derived>& em,
                      std::span<const LabelId> labels) {
  crf_detail::check(crf, em);
  if (static_cast<Index>(labels.size()) != em.rows())
    throw std::invalid_argument("sequence_score: label count differs from sequence length");
  for (const LabelId y : labels)
    if (y < 0 || y >= crf.labels())
      throw std::out_of_range("sequence_score: label index " + std::to_string(y) + " out of range");
  const std::size_t t = labels.size();
  Scalar s = crf.start[labels[0]] + crf.end[labels[t - 1]];
  for (std::size_t i = 0; i < t; ++i) s += em(static_cast<Index>(i), labels[i]);
  for (std::size_t i = 1; i < t; ++i) s += crf.trans(labels[i - 1], labels[i]);
  return s;
}

/// Forward algorithm in log space.
template <typename Scalar, typename Derived>
Scalar log_partition(const BasicCrfParams<Scalar>& crf, const Eigen::MatrixBase<Derived>& em) {
  crf_detail::check(crf, em);
  const Index c = crf.labels();
  std::vector<Scalar> alpha(static_cast<std::size_t>(c)), next(alpha.size()), terms(alpha.size());
  for (Index j = 0; j < c; ++j) alpha[j] = crf.start[j] + em(0, j);
  for (Index i = 1; i < em.rows(); ++i) {
    for (Index j = 0; j < c; ++j) {
      for (Index k = 0; k < c; ++k) terms[k] = alpha[k] + crf.trans(k, j);
      next[j] = crf_detail::logsumexp<Scalar>(terms) + em(i, j);
    }
    std::swap(alpha, next);
  }
  for (Index j = 0; j < c; ++j) alpha[j] += crf.end[j];
  return crf_detail::logsumexp<Scalar>(alpha);
}

/// Highest-scoring labeling. Ties go to the lower label index at every
/// backpointer and at the final state.
template <typename Scalar, typename Derived>
Decoded<Scalar> viterbi(const BasicCrfParams<Scalar>& crf, const Eigen::MatrixBase<Derived>& em) {
  crf_detail::check(crf, em);
  const Index c = crf.labels();
  const Index t = em.rows();
  std::vector<Scalar> score(static_cast<std::size_t>(c)), next(score.size());
  std::vector<LabelId> back(static_cast<std::size_t>(t * c), 0);
  for (Index j = 0; j < c; ++j) score[j] = crf.start[j] + em(0, j);
  for (Index i = 1; i < t; ++i) {
    for (Index j = 0; j < c; ++j) {
      Scalar best = score[0] + crf.trans(0, j);
      LabelId arg = 0;
      for (Index k = 1; k < c; ++k) {
        const Scalar s = score[k] + crf.trans(k, j);
        if (s > best) {
          best = s;
          arg = static_cast<LabelId>(k);
        }
      }
      next[j] = best + em(i, j);
      back[i * c + j] = arg;
    }
    std::swap(score, next);
  }
  Decoded<Scalar> out;
  LabelId last = 0;
  out.score = score[0] + crf.end[0];
  for (Index j = 1; j < c; ++j) {
    const Scalar s = score[j] + crf.end[j];
    if (s > out.score) {
      out.score = s;
      last = static_cast<LabelId>(j);
    }
  }
  out.labels.assign(static_cast<std::size_t>(t), 0);
  out.labels[t - 1] = last;
  for (Index i = t - 1; i > 0; --i) out.labels[i - 1] = back[i * c + out.labels[i]];
  return out;
}

namespace crf_detail {

/// Calls fn(labels) for every labeling in lexicographic order.
template <typename Fn>
void enumerate(Index t, Index c, Fn&& fn) {
  double total = std::pow(static_cast<double>(c), static_cast<double>(t));
  if (total > 1e6)
    throw std::invalid_argument("brute force: " + std::to_string(c) + "^" + std::to_string(t) +
                                " labelings exceeds 10^6");
  std::vector<LabelId> y(static_cast<std::size_t>(t), 0);
  while (true) {
    fn(std::span<const LabelId>(y));
    Index pos = t - 1;
    while (pos >= 0 && ++y[pos] == c) y[pos--] = 0;
    if (pos < 0) return;
  }
}

}  // namespace crf_detail

template <typename Scalar, typename Derived>
Scalar brute_force_log_partition(const BasicCrfParams<Scalar>& crf,
                                 const Eigen::MatrixBase<Derived>& em) {
  crf_detail::check(crf, em);
  std::vector<Scalar> scores;
  crf_detail::enumerate(em.rows(), crf.labels(), [&](std::span<const LabelId> y) {
    scores.push_back(sequence_score(crf, em, y));
  });
  return crf_detail::logsumexp<Scalar>(scores);
}

/// First maximizer in lexicographic order.
template <typename Scalar, typename Derived>
Decoded<Scalar> brute_force_best(const BasicCrfParams<Scalar>& crf,
                                 const Eigen::MatrixBase<Derived>& em) {
  crf_detail::check(crf, em);
  Decoded<Scalar> best;
  best.score = -std::numeric_limits<Scalar>::infinity();
  crf_detail::enumerate(em.rows(), crf.labels(), [&](std::span<const LabelId> y) {
    const Scalar s = sequence_score(crf, em, y);
    if (s > best.score) {
      best.score = s;
      best.labels.assign(y.begin(), y.end());
    }
  });
  return best;
}

// Tape-recorded versions used for training.

struct CrfVars {
  ad::Var trans;
  ad::Var start;
  ad::Var end;
};

CrfVars bind_crf(ad::Tape& tape, const CrfParams& crf);

ad::Var sequence_score(const CrfVars& crf, const ad::Var& emissions, std::span<const LabelId> labels);
ad::Var log_partition(const CrfVars& crf, const ad::Var& emissions);

/// log Z - score(gold).
ad::Var crf_nll(const CrfVars& crf, const ad::Var& emissions, std::span<const LabelId> gold);

/// Sum over tokens of softmax cross-entropy on the emission rows; the
/// training loss when the CRF layer is disabled.
ad::Var token_cross_entropy(const ad::Var& emissions, std::span<const LabelId> gold);

/// Per-row argmax with ties to the lower index.
template <typename Derived>
std::vector<LabelId> argmax_rows(const Eigen::MatrixBase<Derived>& em) {
  std::vector<LabelId> out(static_cast<std::size_t>(em.rows()));
  for (Index i = 0; i < em.rows(); ++i) {
    Index arg = 0;
    for (Index j = 1; j < em.cols(); ++j)
      if (em(i, j) > em(i, arg)) arg = j;
    out[static_cast<std::size_t>(i)] = static_cast<LabelId>(arg);
  }
  return out;
}

}  // namespace brar
