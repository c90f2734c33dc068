#include "brar/diffcore.hpp"
#include "brar/gradcheck.hpp"
#include "brar/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace brar;
using namespace brar::ad;

namespace {

Tensor random_matrix(Rng& rng, Index r, Index c) {
  Tensor t = Tensor::zeros(r, c);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 1.0);
  return t;
}

Tensor random_vector(Rng& rng, Index n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return Tensor::vector(v);
}

}  // namespace

TEST_SUITE("diffcore") {

TEST_CASE("tensor shapes and ranks") {
  CHECK(Tensor::scalar(2.0).rank() == 0);
  CHECK(Tensor::scalar(2.0).shape().empty());
  const Tensor v = Tensor::vector(std::vector<double>{1, 2, 3});
  CHECK(v.rank() == 1);
  CHECK(v.shape() == std::vector<Index>{3});
  CHECK(v.shape_string() == "[3]");
  const Tensor m = Tensor::zeros(2, 3);
  CHECK(m.rank() == 2);
  CHECK(m.shape_string() == "[2 x 3]");
  CHECK(static_cast<Index>(m.size()) == 6);
  CHECK_THROWS_AS(Tensor::zeros(0, 3), std::invalid_argument);
}

TEST_CASE("softmax of a constant vector is uniform") {
  Tape tape;
  const Var y = softmax_vec(tape.leaf(Tensor::vector(std::vector<double>{0, 0, 0, 0})));
  for (Index i = 0; i < 4; ++i) CHECK(y.value()[i] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("logsumexp of log 2 and log 3 is log 5") {
  Tape tape;
  const Var y = logsumexp_vec(tape.leaf(Tensor::vector(std::vector<double>{std::log(2.0), std::log(3.0)})));
  CHECK(std::abs(y.value().item() - std::log(5.0)) < 1e-15);
  CHECK(y.value().item() == doctest::Approx(1.6094379).epsilon(1e-7));
}

TEST_CASE("matmul agrees with a triple loop") {
  Rng rng(42);
  const Tensor a = random_matrix(rng, 2, 3);
  const Tensor b = random_matrix(rng, 3, 2);
  Tape tape;
  const Var c = matmul(tape.leaf(a), tape.leaf(b));
  REQUIRE(c.value().shape() == std::vector<Index>{2, 2});
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) {
      double s = 0.0;
      for (Index k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      CHECK(std::abs(c.value()(i, j) - s) < 1e-14);
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  const Var a = tape.leaf(Tensor::zeros(2, 3));
  const Var b = tape.leaf(Tensor::zeros(2, 3));
  try {
    matmul(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    CHECK(what.find("[2 x 3]") != std::string::npos);
  }
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  CHECK_THROWS_AS(log(tape.leaf(Tensor::vector(std::vector<double>{1.0, 0.0}))), std::domain_error);
  CHECK_THROWS_AS(log(tape.leaf(Tensor::vector(std::vector<double>{-1.0}))), std::domain_error);
}

TEST_CASE("softmax and logsumexp reject non-finite input") {
  Tape tape;
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS(softmax_vec(tape.leaf(Tensor::vector(std::vector<double>{1.0, inf}))));
  CHECK_THROWS(logsumexp_vec(tape.leaf(Tensor::vector(std::vector<double>{std::nan(""), 0.0}))));
}

TEST_CASE("softmax and logsumexp are stable for large inputs") {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector(std::vector<double>{1000.0, 1000.0}));
  CHECK(softmax_vec(x).value()[0] == doctest::Approx(0.5));
  CHECK(logsumexp_vec(x).value().item() == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("gradient of sum of squares is 2x") {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector(std::vector<double>{1, 2, 3}));
  const Var root = sum(elementwise_mul(x, x));
  tape.backward(root);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK(x.grad()[2] == 6.0);
  CHECK(root.grad().item() == 1.0);
}

TEST_CASE("gradient of logsumexp is softmax") {
  Rng rng(3);
  Tape tape;
  const Var x = tape.leaf(random_vector(rng, 5));
  const Var root = logsumexp_vec(x);
  tape.backward(root);
  Tape ref;
  const Var p = softmax_vec(ref.leaf(x.value()));
  for (Index i = 0; i < 5; ++i) CHECK(std::abs(x.grad()[i] - p.value()[i]) < 1e-15);
}

TEST_CASE("grad before backward is an error") {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(x.grad(), std::logic_error);
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector(std::vector<double>{1, 2}));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("nodes are recorded in topological order") {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(0.5));
  const Var y = tanh(x);
  const Var z = y + x;
  CHECK(x.id() < y.id());
  CHECK(y.id() < z.id());
  CHECK(tape.kind(z.id()) == OpKind::add);
}

TEST_CASE("replaying backward gives bit-identical gradients") {
  Rng rng(11);
  Tape tape;
  const Var a = tape.leaf(random_matrix(rng, 3, 4));
  const Var x = tape.leaf(random_vector(rng, 4));
  const Var root = logsumexp_vec(tanh(matvec(a, x)));
  tape.backward(root);
  const Tensor ga = a.grad();
  const Tensor gx = x.grad();
  tape.backward(root);
  CHECK((a.grad().mat().array() == ga.mat().array()).all());
  CHECK((x.grad().mat().array() == gx.mat().array()).all());
}

TEST_CASE("backward is linear in the root") {
  Rng rng(5);
  const Tensor xv = random_vector(rng, 4);
  const double a = 0.7, b = -1.3;
  auto f = [](const Var& x) { return logsumexp_vec(x); };
  auto g = [](const Var& x) { return sum(elementwise_mul(tanh(x), x)); };

  Tape t1;
  const Var x1 = t1.leaf(xv);
  t1.backward(f(x1));
  const Tensor gf = x1.grad();
  Tape t2;
  const Var x2 = t2.leaf(xv);
  t2.backward(g(x2));
  const Tensor gg = x2.grad();
  Tape t3;
  const Var x3 = t3.leaf(xv);
  t3.backward(a * f(x3) + b * g(x3));
  for (Index i = 0; i < 4; ++i) CHECK(std::abs(x3.grad()[i] - (a * gf[i] + b * gg[i])) < 1e-10);
}

TEST_CASE("softmax is a probability vector and shift invariant") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(8));
    const Tensor x = random_vector(rng, n);
    Tensor shifted = x;
    const double k = rng.normal(0.0, 10.0);
    for (Index i = 0; i < n; ++i) shifted[i] += k;
    Tape tape;
    const Tensor p = softmax_vec(tape.leaf(x)).value();
    const Tensor q = softmax_vec(tape.leaf(shifted)).value();
    CHECK((p.mat().array() >= 0.0).all());
    CHECK(std::abs(p.mat().sum() - 1.0) <= 1e-12);
    CHECK((p.mat() - q.mat()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("forward ops keep finite inputs finite") {
  Rng rng(21);
  Tape tape;
  const Var x = tape.leaf(random_matrix(rng, 3, 3));
  for (const Var& y : {tanh(x), sigmoid(x), exp(x), logsumexp_rows(x), transpose(x), 2.0 * x})
    CHECK(y.value().all_finite());
}

TEST_CASE("finite_diff_check is exact for a quadratic") {
  Rng rng(1);
  Tensor a = random_matrix(rng, 3, 2);
  Tensor b = random_vector(rng, 2);
  const LossFn loss = [](Tape&, std::span<const Var> v) {
    const Var r = broadcast_add_row(v[0], v[1]);
    return sum(elementwise_mul(r, r));
  };
  std::vector<Tensor*> ptrs{&a, &b};
  const auto report = finite_diff_check(loss, ptrs, 1e-5, 1e-8);
  CHECK(report.max_rel_error < 1e-8);
  CHECK(report.passed());
}

TEST_CASE("finite_diff_check on a tanh chain of depth 3") {
  Rng rng(2);
  Tensor x = random_vector(rng, 4);
  const LossFn loss = [](Tape&, std::span<const Var> v) { return sum(tanh(tanh(tanh(v[0])))); };
  std::vector<Tensor*> ptrs{&x};
  CHECK(finite_diff_check(loss, ptrs, 1e-5, 1e-4).max_rel_error < 1e-4);
}

TEST_CASE("finite_diff_check on a softmax cross-entropy toy") {
  Rng rng(4);
  Tensor w = random_matrix(rng, 3, 4);
  Tensor x = random_vector(rng, 4);
  const LossFn loss = [](Tape&, std::span<const Var> v) {
    const Var logits = matvec(v[0], v[1]);
    return logsumexp_vec(logits) - index_elem(logits, 1);
  };
  std::vector<Tensor*> ptrs{&w, &x};
  CHECK(finite_diff_check(loss, ptrs, 1e-5, 1e-4).max_rel_error < 1e-4);
}

TEST_CASE("finite_diff_check restores parameters and validates h") {
  Tensor x = Tensor::vector(std::vector<double>{0.1, 0.2});
  const Tensor before = x;
  const LossFn loss = [](Tape&, std::span<const Var> v) { return sum(exp(v[0])); };
  std::vector<Tensor*> ptrs{&x};
  finite_diff_check(loss, ptrs, 1e-5, 1e-4);
  CHECK((x.mat().array() == before.mat().array()).all());
  CHECK_THROWS_AS(finite_diff_check(loss, ptrs, 0.0, 1e-4), std::invalid_argument);
  CHECK_THROWS_AS(finite_diff_check(loss, ptrs, 1e-2, 1e-4), std::invalid_argument);
}

TEST_CASE("finite_diff_check flags a gradient the tape cannot see") {
  Tensor x = Tensor::vector(std::vector<double>{0.3, -0.4});
  const LossFn loss = [](Tape& tape, std::span<const Var> v) {
    return sum(v[0]) + tape.leaf(Tensor::scalar(v[0].value().mat().squaredNorm()));
  };
  std::vector<Tensor*> ptrs{&x};
  const auto report = finite_diff_check(loss, ptrs, 1e-5, 1e-4);
  CHECK_FALSE(report.passed());
  CHECK(report.params[0].flagged == 2);
}

TEST_CASE("finite_diff_check rejects a non-deterministic loss") {
  Tensor x = Tensor::vector(std::vector<double>{0.3});
  int calls = 0;
  const LossFn loss = [&](Tape& tape, std::span<const Var> v) {
    return sum(v[0]) + tape.leaf(Tensor::scalar(static_cast<double>(++calls)));
  };
  std::vector<Tensor*> ptrs{&x};
  CHECK_THROWS_AS(finite_diff_check(loss, ptrs, 1e-5, 1e-4), std::runtime_error);
}

TEST_CASE("relative error uses the 1e-8 floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(1e-10, 0.0) == doctest::Approx(1e-2));
}

TEST_CASE("every op kind passes 20 random gradient checks") {
  Rng rng(20240601);
  for (const OpKind kind : gradcheck::op_kinds()) {
    CAPTURE(op_name(kind));
    for (int i = 0; i < 20; ++i) CHECK(gradcheck::check_op(kind, rng).max_rel_error < 1e-4);
  }
}

}  // TEST_SUITE
