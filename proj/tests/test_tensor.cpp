#include <cmath>
#include <limits>

#include "doctest.h"

#include "gsamia/grad_check.hpp"
#include "gsamia/rng.hpp"
#include "gsamia/tensor.hpp"
#include "test_util.hpp"

using namespace gsamia;
using testutil::random_tensor;

TEST_CASE("tensor construction validates external data") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2}, std::vector<double>{1, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({1}, std::vector<double>{std::numeric_limits<double>::infinity()}), std::invalid_argument);
  const Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 6);
}

TEST_CASE("matmul by the identity returns the input") {
  Tape tape;
  const Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
  const Var r = matmul(tape.constant(a), tape.constant(Tensor::identity(2)));
  CHECK(r.value() == a);
}

TEST_CASE("mean of a constant fill") {
  Tape tape;
  CHECK(mean(tape.constant(Tensor({4}, 3.0))).value().item() == 3.0);
}

TEST_CASE("sum of squares of [1,2,3] is 14") {
  Tape tape;
  CHECK(sum_squares(tape.constant(Tensor({3}, std::vector<double>{1, 2, 3}))).value().item() == 14.0);
}

TEST_CASE("shape errors name the op and both shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor({2, 3}));
  const Var b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("matmul accepted mismatched shapes");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, tape.constant(Tensor({3, 2}))), std::invalid_argument);
  CHECK_THROWS_AS(add_bias(a, tape.constant(Tensor({2}))), std::invalid_argument);
  CHECK_THROWS_AS(concat_cols(a, tape.constant(Tensor({3, 1}))), std::invalid_argument);
  CHECK_THROWS_AS(reshape(a, {4}), std::invalid_argument);
}

TEST_CASE("backward of w * x gives grad(w) = x") {
  Parameter w("w", Tensor::scalar(2.0));
  Tape tape;
  Var root = mul(tape.param(w), tape.constant(Tensor::scalar(3.0)));
  tape.backward(root);
  CHECK(w.grad.item() == 3.0);
}

TEST_CASE("squared residual gradient matches the symbolic expansion") {
  Rng rng(7);
  const std::size_t n = 3;
  Parameter W("W", random_tensor(rng, {n, n}));
  const Tensor x = random_tensor(rng, {1, n});
  const Tensor eps = random_tensor(rng, {1, n});
  Tape tape;
  tape.backward(sum_squares(sub(tape.constant(eps), matmul(tape.constant(x), tape.param(W)))));
  // d/dW_ij ||eps - xW||^2 = 2 ((xW)_j - eps_j) x_i
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double xw = 0.0;
      for (std::size_t k = 0; k < n; ++k) xw += x[k] * W.value.at(k, j);
      CHECK(W.grad.at(i, j) == doctest::Approx(2.0 * (xw - eps[j]) * x[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward accumulates: calling it twice doubles the grad") {
  Rng rng(1);
  Parameter w("w", random_tensor(rng, {3}));
  const Tensor c = random_tensor(rng, {3});
  auto run = [&] {
    Tape tape;
    tape.backward(sum(mul(tape.param(w), tape.constant(c))));
  };
  run();
  const Tensor once = w.grad;
  run();
  for (std::size_t i = 0; i < 3; ++i) CHECK(w.grad[i] == 2.0 * once[i]);
}

TEST_CASE("backward rejects non-scalar roots and detached vars") {
  Parameter w("w", Tensor({2}, 1.0));
  Tape tape;
  CHECK_THROWS(tape.backward(tape.param(w)));
  CHECK_THROWS(backward(Var{}));
}

TEST_CASE("gaussian_sample is deterministic and standard normal") {
  Rng a(42), b(42), c(43);
  const Tensor ta = gaussian_sample(a, {1000});
  CHECK(ta == gaussian_sample(b, {1000}));
  CHECK_FALSE(ta == gaussian_sample(c, {1000}));

  Rng big(5);
  const Tensor s = gaussian_sample(big, {100000});
  double m = 0.0;
  for (double v : s.data()) m += v;
  m /= 1e5;
  double var = 0.0;
  for (double v : s.data()) var += (v - m) * (v - m);
  var /= 1e5;
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng primitives stay in range") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(rng.uniform_int(7) < 7);
    CHECK(rng.exponential(2.0) >= 0.0);
  }
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
}

TEST_CASE("grad_check on quadratic and linear functions") {
  Rng rng(3);
  Parameter w("w", random_tensor(rng, {4}));
  const Tensor c = random_tensor(rng, {4});
  Parameter* ps[] = {&w};
  const double quad = grad_check([&](Tape& t) { return sum_squares(mul(t.param(w), t.constant(c))); }, ps, 1e-5);
  CHECK(quad < 1e-6);
  const double lin = grad_check([&](Tape& t) { return sum(mul(t.param(w), t.constant(c))); }, ps, 1e-5);
  CHECK(lin < 1e-10);
  CHECK(w.grad == Tensor({4}));
}

namespace {

// Random projection so that every output entry carries a distinct weight.
Var project(Tape& t, Var v, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(v, t.constant(random_tensor(rng, v.shape()))));
}

}  // namespace

TEST_CASE("every op passes a finite-difference check") {
  Rng rng(11);
  Parameter a("a", random_tensor(rng, {3, 4}));
  Parameter b("b", random_tensor(rng, {4, 2}));
  Parameter c("c", random_tensor(rng, {3, 4}));
  Parameter bias("bias", random_tensor(rng, {4}));
  Parameter d("d", random_tensor(rng, {3, 2}));
  Parameter* ps[] = {&a, &b, &c, &bias, &d};
  const Tensor targets({3}, std::vector<double>{1, 0, 1});

  const std::vector<std::pair<std::string, ScalarFn>> ops = {
      {"matmul", [&](Tape& t) { return project(t, matmul(t.param(a), t.param(b)), 1); }},
      {"add", [&](Tape& t) { return project(t, add(t.param(a), t.param(c)), 2); }},
      {"sub", [&](Tape& t) { return project(t, sub(t.param(a), t.param(c)), 3); }},
      {"mul", [&](Tape& t) { return project(t, mul(t.param(a), t.param(c)), 4); }},
      {"scale", [&](Tape& t) { return project(t, scale(t.param(a), -1.7), 5); }},
      {"add_bias", [&](Tape& t) { return project(t, add_bias(t.param(a), t.param(bias)), 6); }},
      {"concat_cols", [&](Tape& t) { return project(t, concat_cols(t.param(a), t.param(d)), 7); }},
      {"silu", [&](Tape& t) { return project(t, silu(t.param(a)), 8); }},
      {"sigmoid", [&](Tape& t) { return project(t, sigmoid(t.param(a)), 9); }},
      {"reshape", [&](Tape& t) { return project(t, reshape(t.param(a), {2, 6}), 10); }},
      {"sum", [&](Tape& t) { return scale(sum(t.param(a)), 0.3); }},
      {"mean", [&](Tape& t) { return scale(mean(t.param(a)), 0.3); }},
      {"sum_squares", [&](Tape& t) { return sum_squares(t.param(a)); }},
      {"row_sum_squares", [&](Tape& t) { return project(t, row_sum_squares(t.param(a)), 11); }},
      {"bce_with_logits", [&](Tape& t) {
         const Tensor proj({2, 1}, std::vector<double>{0.8, -0.3});
         return bce_with_logits(reshape(matmul(t.param(d), t.constant(proj)), {3}), targets);
       }},
  };
  for (const auto& [name, fn] : ops) {
    CAPTURE(name);
    CHECK(grad_check(fn, ps, 1e-5) <= 1e-4);
  }
}

TEST_CASE("gradients are linear in the root") {
  Rng rng(12);
  Parameter w("w", random_tensor(rng, {2, 3}));
  const Tensor x = random_tensor(rng, {4, 2});
  auto f = [&](Tape& t) { return sum_squares(silu(matmul(t.constant(x), t.param(w)))); };
  auto g = [&](Tape& t) { return sum(sigmoid(matmul(t.constant(x), t.param(w)))); };
  const double alpha = 0.7, beta = -1.3;
  auto grad_of = [&](auto&& build) {
    w.zero_grad();
    Tape t;
    t.backward(build(t));
    return w.grad;
  };
  const Tensor gf = grad_of(f), gg = grad_of(g);
  const Tensor gc = grad_of([&](Tape& t) { return add(scale(f(t), alpha), scale(g(t), beta)); });
  for (std::size_t i = 0; i < gc.numel(); ++i) CHECK(std::abs(gc[i] - (alpha * gf[i] + beta * gg[i])) <= 1e-12);
}

TEST_CASE("identical inputs give bit-identical grads") {
  auto run = [] {
    Rng rng(99);
    Parameter w("w", random_tensor(rng, {5, 3}));
    const Tensor x = random_tensor(rng, {7, 5});
    Tape t;
    t.backward(sum_squares(silu(matmul(t.constant(x), t.param(w)))));
    return w.grad;
  };
  CHECK(run() == run());
}

TEST_CASE("per-sample gradient norms match explicit per-row gradients") {
  Rng rng(21);
  Parameter w1("w1", random_tensor(rng, {3, 5}));
  Parameter b1("b1", random_tensor(rng, {5}));
  Parameter w2("w2", random_tensor(rng, {5, 2}));
  const std::size_t B = 4;
  const Tensor x = random_tensor(rng, {B, 3});
  const Tensor y = random_tensor(rng, {B, 2});
  auto per_row = [&](Tape& t, const Tensor& xs, const Tensor& ys) {
    Var h = silu(add_bias(matmul(t.constant(xs), t.param(w1)), t.param(b1)));
    return row_sum_squares(sub(t.constant(ys), matmul(h, t.param(w2))));
  };
  Tape tape;
  tape.enable_per_sample_norms(B);
  tape.backward(sum(per_row(tape, x, y)));
  const auto ghost = tape.per_sample_sq_norms();
  REQUIRE(ghost.size() == B);
  for (std::size_t r = 0; r < B; ++r) {
    for (auto* p : {&w1, &b1, &w2}) p->zero_grad();
    Tape single;
    Tensor xr({1, 3}), yr({1, 2});
    for (std::size_t c = 0; c < 3; ++c) xr[c] = x.at(r, c);
    for (std::size_t c = 0; c < 2; ++c) yr[c] = y.at(r, c);
    single.backward(sum(per_row(single, xr, yr)));
    double sq = 0.0;
    for (auto* p : {&w1, &b1, &w2})
      for (double g : p->grad.data()) sq += g * g;
    CHECK(ghost[r] == doctest::Approx(sq).epsilon(1e-12));
  }
}

TEST_CASE("per-sample norms reject parameters used outside matmul or bias") {
  Parameter w("w", Tensor({2, 2}, 1.0));
  Tape tape;
  tape.enable_per_sample_norms(2);
  Var p = tape.param(w);
  CHECK_THROWS_AS(tape.backward(sum(mul(p, p))), std::logic_error);
}
