#include "brar/embeddings.hpp"
#include "brar/error.hpp"
#include "brar/rng.hpp"

#include <doctest.h>

#include <sstream>

using namespace brar;

namespace {

Vocabulary toy_vocab() { return Vocabulary::from_tokens({"<unk>", "gg", "wp"}); }

std::string floats(int n, double start) {
  std::string s;
  for (int i = 0; i < n; ++i) s += " " + std::to_string(start + 0.01 * i);
  return s;
}

}  // namespace

TEST_SUITE("embeddings") {

TEST_CASE("random embeddings are reproducible") {
  Rng a(42), b(42);
  const auto ea = random_embeddings(3, 50, a);
  const auto eb = random_embeddings(3, 50, b);
  CHECK(ea.table.shape() == std::vector<Index>{3, 50});
  CHECK((ea.table.mat().array() == eb.table.mat().array()).all());
  CHECK(ea.table.all_finite());
}

TEST_CASE("file vectors are copied exactly") {
  std::istringstream in("gg 0.1" + floats(49, 0.2) + "\n");
  Rng rng(42);
  const auto e = read_vectors(in, toy_vocab(), 50, rng);
  double expected = 0.1;
  CHECK(e.table(1, 0) == expected);
  for (int i = 0; i < 49; ++i) {
    std::istringstream parse(std::to_string(0.2 + 0.01 * i));
    parse >> expected;
    CHECK(e.table(1, i + 1) == expected);
  }
}

TEST_CASE("empty vector file leaves the seeded random rows") {
  std::istringstream in("");
  Rng a(42), b(42);
  const auto e = read_vectors(in, toy_vocab(), 50, a);
  const auto r = random_embeddings(3, 50, b);
  CHECK((e.table.mat().array() == r.table.mat().array()).all());
}

TEST_CASE("header line is skipped and checked") {
  std::istringstream ok("2 3\ngg 1 2 3\nzz 4 5 6\n");
  Rng rng(1);
  const auto e = read_vectors(ok, toy_vocab(), 3, rng);
  CHECK(e.table(1, 2) == 3.0);
  std::istringstream bad("2 4\ngg 1 2 3\n");
  CHECK_THROWS_AS(read_vectors(bad, toy_vocab(), 3, rng), DataError);
}

TEST_CASE("wrong float count is an error naming the line") {
  std::istringstream in("wp" + floats(50, 0.0) + "\ngg" + floats(49, 0.0) + "\n");
  Rng rng(1);
  try {
    read_vectors(in, toy_vocab(), 50, rng);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("embed_sequence looks up rows") {
  Rng rng(3);
  const auto e = random_embeddings(3, 50, rng);
  const std::vector<Index> ids{1, 2, 0};
  ad::Tape tape;
  const auto seq = embed_sequence(tape, e, ids);
  CHECK(seq.inputs.value().shape() == std::vector<Index>{3, 50});
  for (std::size_t i = 0; i < ids.size(); ++i)
    CHECK((seq.inputs.value().mat().row(static_cast<Index>(i)).array() == e.table.mat().row(ids[i]).array()).all());
}

TEST_CASE("repeated token gets the sum of both row gradients") {
  Rng rng(5);
  const auto e = random_embeddings(3, 4, rng);
  const std::vector<Index> ids{1, 1};
  ad::Tape tape;
  const auto seq = embed_sequence(tape, e, ids);
  REQUIRE(seq.rows == std::vector<Index>{1});
  // loss = sum(X .* W): gradient on row k of X is row k of W.
  Tensor w = Tensor::zeros(2, 4);
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 1.0);
  tape.backward(ad::sum(ad::elementwise_mul(seq.inputs, tape.leaf(w))));
  CHECK((seq.inputs.value().mat().row(0).array() == seq.inputs.value().mat().row(1).array()).all());
  for (Index j = 0; j < 4; ++j) CHECK(seq.leaves[0].grad()[j] == doctest::Approx(w(0, j) + w(1, j)).epsilon(1e-15));
}

TEST_CASE("embed_sequence is deterministic") {
  Rng rng(6);
  const auto e = random_embeddings(4, 5, rng);
  const std::vector<Index> ids{3, 0, 3, 2};
  ad::Tape t1, t2;
  const auto a = embed_sequence(t1, e, ids);
  const auto b = embed_sequence(t2, e, ids);
  CHECK((a.inputs.value().mat().array() == b.inputs.value().mat().array()).all());
  CHECK(a.rows == b.rows);
}

TEST_CASE("gradient check through embed_sequence") {
  Rng rng(7);
  Tensor table = random_embeddings(5, 3, rng).table;
  Tensor w = Tensor::zeros(3, 2);
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 1.0);
  const std::vector<Index> ids{4, 1, 4};
  const ad::LossFn loss = [&](ad::Tape&, std::span<const ad::Var> v) {
    return ad::sum(ad::logsumexp_rows(ad::tanh(ad::matmul(embed_sequence(v[0], ids), v[1]))));
  };
  std::vector<Tensor*> ptrs{&table, &w};
  CHECK(ad::finite_diff_check(loss, ptrs, 1e-5, 1e-4).max_rel_error < 1e-4);
}

TEST_CASE("out-of-range id is rejected") {
  Rng rng(8);
  const auto e = random_embeddings(2, 3, rng);
  ad::Tape tape;
  const std::vector<Index> ids{2};
  CHECK_THROWS_AS(embed_sequence(tape, e, ids), std::out_of_range);
}

}  // TEST_SUITE
