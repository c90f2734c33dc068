#pragma once

// Randomized finite-difference fixtures shared by the selfcheck command and
// the test suites.

#include "brar/brar.hpp"
#include "brar/diffcore.hpp"
#include "brar/rng.hpp"

#include <cstdint>
#include <vector>

namespace brar::gradcheck {

/// Every differentiable op kind (everything except leaf).
std::vector<ad::OpKind> op_kinds();

/// Builds a random-shape instance of `kind`, reduces its output to a scalar
/// through a random weighting, and checks it against central differences.
ad::FiniteDiffReport check_op(ad::OpKind kind, Rng& rng, double h = 1e-5, double tol = 1e-4);

struct ModelCase {
  std::uint64_t seed = 1;
  Index length = 3;
  Index layers = 1;
  Index hidden = 5;
  Index input_dim = 8;
  Index vocab = 6;
  Index t_max = 8;
  AttentionMode mode = AttentionMode::literal;
  bool no_attention = false;
  double beta = 1.0;
  bool crf = true;  // false: token cross-entropy
  /// Weights are drawn uniform in +-scale and embeddings from N(0, scale).
  double param_scale = 1.0;
};

/// Full embedding -> BRAR -> CRF loss on a random utterance, checked over the
/// embedding table and every model and CRF parameter.
ad::FiniteDiffReport check_model(const ModelCase& c, double h = 1e-5, double tol = 1e-4);

}  // namespace brar::gradcheck
