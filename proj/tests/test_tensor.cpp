#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pdqa/rng.hpp"
#include "pdqa/tensor.hpp"

using namespace pdqa;

namespace {

// Runs forward once under a fresh tape, backpropagates, and compares the
// analytic gradient of every leaf against central finite differences.
double grad_check(const std::function<Tensor()>& forward,
                  const std::vector<Tensor>& leaves, double step = 1e-5) {
  for (const Tensor& leaf : leaves) const_cast<Tensor&>(leaf).zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = forward();
    backward(loss, tape);
  }
  const auto numeric = finite_diff_gradient(
      [&]() { return forward().value(); }, leaves, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::vector<double> analytic(leaves[i].grad().data(),
                                 leaves[i].grad().data() + leaves[i].size());
    worst = std::max(worst, max_relative_error(analytic, numeric[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul examples") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor r = matmul(a, eye);
  CHECK(r.at(0, 0) == 1.0);
  CHECK(r.at(0, 1) == 2.0);
  CHECK(r.at(1, 0) == 3.0);
  CHECK(r.at(1, 1) == 4.0);

  Tensor ones = Tensor::from_values({2, 2}, {1, 1, 1, 1});
  Tensor s = matmul(a, ones);
  CHECK(s.at(0, 0) == 3.0);
  CHECK(s.at(0, 1) == 3.0);
  CHECK(s.at(1, 0) == 7.0);
  CHECK(s.at(1, 1) == 7.0);

  Tensor z = Tensor::zeros({2, 3});
  Rng rng(7);
  Tensor any = Tensor::randn({3, 2}, rng, 1.0);
  Tensor zr = matmul(z, any);
  for (std::size_t i = 0; i < zr.size(); ++i) CHECK(zr.at(i) == 0.0);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  try {
    matmul(a, b);
    FAIL("expected shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  Tensor s0 = softmax(Tensor::from_values({2}, {0, 0}), 0);
  CHECK(s0.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s0.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  Tensor s1 = softmax(Tensor::from_values({2}, {1, 0}), 0);
  CHECK(s1.at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(s1.at(1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));

  Tensor s2 = softmax(Tensor::from_values({2}, {1000, 0}), 0);
  CHECK(std::isfinite(s2.at(0)));
  CHECK(std::isfinite(s2.at(1)));
  CHECK(s2.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s2.at(1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = Tensor::randn({5, 7}, rng, 3.0);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      Tensor y = softmax(x, axis);
      const std::size_t slices = axis == 1 ? 5 : 7;
      const std::size_t len = axis == 1 ? 7 : 5;
      for (std::size_t s = 0; s < slices; ++s) {
        double total = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const double v = axis == 1 ? y.at(s, i) : y.at(i, s);
          CHECK(v > 0.0);
          total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("layer_norm examples") {
  Tensor gain1 = Tensor::from_values({3}, {1, 1, 1});
  Tensor bias0 = Tensor::zeros({3});
  Tensor y = layer_norm(Tensor::from_values({1, 3}, {1, 1, 1}), gain1, bias0,
                        1e-5);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(y.at(i) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor y2 = layer_norm(Tensor::from_values({1, 2}, {1, -1}),
                         Tensor::from_values({2}, {1, 1}), Tensor::zeros({2}),
                         1e-14);
  CHECK(y2.at(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y2.at(1) == doctest::Approx(-1.0).epsilon(1e-9));

  Tensor y3 = layer_norm(Tensor::from_values({1, 2}, {0.3, 0.9}),
                         Tensor::zeros({2}), Tensor::full({2}, 4.25), 1e-5);
  CHECK(y3.at(0) == 4.25);
  CHECK(y3.at(1) == 4.25);
}

TEST_CASE("gelu examples against the erf definition") {
  CHECK(gelu(Tensor::scalar(0.0)).value() == 0.0);

  Tensor big = gelu(Tensor::scalar(10.0));
  CHECK(big.value() == doctest::Approx(10.0).epsilon(1e-12));

  // Independent evaluation of x * Phi(x) at x = 1.
  const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  Tensor one = gelu(Tensor::scalar(1.0));
  CHECK(one.value() == doctest::Approx(1.0 * phi1).epsilon(1e-14));
  CHECK(one.value() == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("backward populates gradients") {
  SUBCASE("sum gives ones") {
    Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(x);
    backward(loss, tape);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 1.0);
  }

  SUBCASE("sum of squares") {
    Tensor x = Tensor::from_values({2}, {1, 2}, true);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(mul(x, x));
    backward(loss, tape);
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-14));
  }

  SUBCASE("disconnected tensor gets zeros") {
    Tensor x = Tensor::from_values({2}, {1, 2}, true);
    Tensor y = Tensor::from_values({2}, {3, 4}, true);
    Tape tape;
    TapeScope scope(tape);
    Tensor unused = mul(y, y);
    Tensor loss = sum(mul(x, x));
    backward(loss, tape);
    CHECK(y.has_grad());
    CHECK(y.grad()[0] == 0.0);
    CHECK(y.grad()[1] == 0.0);
  }

  SUBCASE("non-scalar loss rejected") {
    Tensor x = Tensor::from_values({2}, {1, 2}, true);
    Tape tape;
    TapeScope scope(tape);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(backward(y, tape), std::invalid_argument);
  }
}

TEST_CASE("backward accumulation is additive") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum(mul(x, x));
    backward(loss, tape);
    backward(loss, tape);
  }
  CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(x.grad()[1] == doctest::Approx(8.0).epsilon(1e-14));

  // A fresh tape accumulates on top unless grads are zeroed.
  Tape tape2;
  {
    TapeScope scope(tape2);
    Tensor loss = sum(x);
    backward(loss, tape2);
  }
  CHECK(x.grad()[0] == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("no recording happens outside a tape scope") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tape tape;
  Tensor y = mul(x, x);
  CHECK(tape.size() == 0);
  CHECK(y.requires_grad());
}

TEST_CASE("finite differences oracle") {
  SUBCASE("square function") {
    Tensor p = Tensor::scalar(3.0);
    auto f = [&]() { return p.value() * p.value(); };
    auto g = finite_diff_gradient(f, {p}, 1e-4);
    CHECK(g[0][0] == doctest::Approx(6.0).epsilon(1e-6));
    CHECK(p.value() == 3.0);  // restored
  }

  SUBCASE("constant function") {
    Tensor p = Tensor::from_values({3}, {1, 2, 3});
    auto g = finite_diff_gradient([]() { return 42.0; }, {p}, 1e-4);
    for (double v : g[0]) CHECK(v == 0.0);
  }

  SUBCASE("linear function is step independent") {
    Tensor w = Tensor::from_values({2, 3}, {0.5, -1, 2, 3, 0.25, -0.75});
    const std::vector<double> xv = {1.5, -2.0, 0.5};
    auto f = [&]() {
      double total = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) total += w.at(i, j) * xv[j];
      return total;
    };
    auto coarse = finite_diff_gradient(f, {w}, 1e-3);
    auto fine = finite_diff_gradient(f, {w}, 1e-5);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(coarse[0][i * 3 + j] == doctest::Approx(xv[j]).epsilon(1e-8));
        CHECK(fine[0][i * 3 + j] == doctest::Approx(xv[j]).epsilon(1e-8));
      }
  }
}

TEST_CASE("gradients match finite differences on composed graphs") {
  // Dense pipeline: matmul + bias + layer_norm + gelu + softmax + hadamard.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(1234, seed));
    const std::size_t m = 2 + seed % 3;
    const std::size_t k = 2 + (seed / 3) % 3;
    const std::size_t n = 3;
    Tensor a = Tensor::randn({m, k}, rng, 1.0, true);
    Tensor b = Tensor::randn({k, n}, rng, 1.0, true);
    Tensor v = Tensor::randn({n}, rng, 1.0, true);
    Tensor g = Tensor::randn({n}, rng, 0.5, true);
    Tensor bias = Tensor::randn({n}, rng, 0.5, true);
    auto forward = [&]() {
      Tensor x = add_rowvec(matmul(a, b), v);
      Tensor h = layer_norm(x, g, bias, 1e-5);
      Tensor act = gelu(h);
      Tensor s = softmax(act, 1);
      return sum(mul(s, x));
    };
    CHECK(grad_check(forward, {a, b, v, g, bias}) < 1e-4);
  }

  // Slice / concat / transpose-product pipeline.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(mix_seed(99, seed));
    Tensor p = Tensor::randn({2, 4}, rng, 1.0, true);
    Tensor w = Tensor::randn({3, 4}, rng, 1.0, true);
    auto forward = [&]() {
      Tensor c = concat_rows({p, w});
      Tensor qk = matmul_nt(c, c);
      Tensor attn = softmax(scale(qk, 0.5), 1);
      Tensor out = matmul(attn, c);
      Tensor kept = slice_rows(out, 2, 3);
      Tensor left = slice_cols(kept, 0, 2);
      Tensor right = slice_cols(kept, 2, 2);
      Tensor joined = concat_cols({right, left});
      return sum(mul(joined, joined));
    };
    CHECK(grad_check(forward, {p, w}) < 1e-4);
  }

  // Gather with repeated ids, normalization, dot, sigmoid.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(mix_seed(7, seed));
    Tensor table = Tensor::randn({4, 3}, rng, 1.0, true);
    Tensor probe = Tensor::randn({3}, rng, 1.0, true);
    const std::vector<std::size_t> ids = {1, 3, 1, 0};
    auto forward = [&]() {
      Tensor rows = gather_rows(table, ids);
      Tensor pooled = slice_rows(rows, 1, 1);
      Tensor u = l2_normalize(reshape(pooled, {3}));
      Tensor s1 = dot(u, probe);
      Tensor s2 = dot(u, l2_normalize(probe));
      Tensor score = sigmoid(sub(s1, s2));
      std::vector<Tensor> parts = {score, s1, sum(rows)};
      return sum(mul(stack_scalars(parts), stack_scalars(parts)));
    };
    CHECK(grad_check(forward, {table, probe}) < 1e-4);
  }
}

TEST_CASE("l2_normalize rejects the zero vector") {
  CHECK_THROWS_AS(l2_normalize(Tensor::zeros({3})), std::invalid_argument);
}

TEST_CASE("frozen operands are not recorded") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor c = matmul(a, b);
    CHECK_FALSE(c.requires_grad());
  }
  CHECK(tape.size() == 0);
}
