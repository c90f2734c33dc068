#pragma once

// Embedded verification groups shared by `brar selfcheck` and the acceptance
// binary. Each group is deterministic and needs no data files.

#include "brar/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace brar::selfcheck {

struct GroupResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Test-only negative control: when set, each group perturbs one of its own
/// computed quantities so the comparison must fail.
struct Options {
  bool inject_fault = false;
};

/// Every op kind, 20 random instances each, then the full loss on utterances
/// with t in {1,2,3,5}, L in {1,2} for `model_seeds` seeds (hidden 5, d 8).
GroupResult gradients(const Options& opts = {}, int op_instances = 20, int model_seeds = 24);

/// Forward algorithm and Viterbi against exhaustive enumeration on random
/// instances with t <= 5, c = 6.
GroupResult crf_oracles(const Options& opts = {}, int instances = 100);

/// Normalization of every row of a random count table, the single-label
/// one-hot case and the zero-count uniform case.
GroupResult label_forcing(const Options& opts = {});

/// Hand-computed scorer cases.
GroupResult scorer(const Options& opts = {});

std::vector<GroupResult> run_all(const Options& opts = {});

/// Labelled toy corpus where each token has a fixed label drawn so that all
/// six labels occur. Same seed, same corpus.
struct SyntheticSpec {
  std::size_t utterances = 64;
  std::size_t vocab = 40;
  std::size_t min_length = 2;
  std::size_t max_length = 8;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<Utterance> train;
  std::vector<Utterance> held_out;
};

SyntheticCorpus synthetic_corpus(const SyntheticSpec& spec, std::size_t held_out = 32);

}  // namespace brar::selfcheck
