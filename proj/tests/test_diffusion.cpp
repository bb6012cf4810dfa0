#include <cmath>
#include <fstream>
#include <numbers>

#include "doctest.h"

#include "gsamia/defenses.hpp"
#include "gsamia/diffusion.hpp"
#include "manual_net.hpp"
#include "test_util.hpp"

using namespace gsamia;
using testutil::random_tensor;

namespace {

// Returns a fixed tensor for every row, independent of x and t.
class ConstantPredictor : public NoisePredictor {
 public:
  ConstantPredictor(ImageShape shape, Tensor value) : shape_(shape), value_(std::move(value)) {}
  Var forward(Tape& tape, Var x, std::span<const int>) override {
    const std::size_t rows = x.shape()[0], d = shape_.numel();
    Tensor out({rows, d});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < d; ++c) out.at(r, c) = value_[c];
    return tape.constant(std::move(out));
  }
  std::vector<Parameter*> parameters() override { return {}; }
  ImageShape input_shape() const override { return shape_; }

 private:
  ImageShape shape_;
  Tensor value_;
};

DenoiserNet tiny_net(std::uint64_t seed, std::vector<std::size_t> widths = {16}) {
  DenoiserConfig c;
  c.input_shape = {1, 2, 2};
  c.hidden_widths = std::move(widths);
  c.embed_dim = 8;
  c.max_t = 100;
  Rng rng(seed);
  return DenoiserNet::init(c, rng);
}

}  // namespace

TEST_CASE("linear schedule with T=2 matches the cumulative product") {
  const auto s = make_linear_schedule(2, 1e-4, 0.02);
  CHECK(s.alpha_bar_at(1) == doctest::Approx(0.9999).epsilon(1e-15));
  CHECK(s.alpha_bar_at(2) == doctest::Approx(0.9999 * 0.98).epsilon(1e-15));
  CHECK(s.alpha_bar_at(2) == doctest::Approx(0.979902).epsilon(1e-12));
}

TEST_CASE("linear schedule with T=1") {
  const auto s = make_linear_schedule(1, 1e-4, 0.02);
  CHECK(s.alpha_bar_at(1) == 1.0 - s.beta_at(1));
}

TEST_CASE("schedules are strictly decreasing in alpha_bar") {
  for (const auto& s : {make_linear_schedule(100), make_cosine_schedule(100), make_linear_schedule(1000)}) {
    for (int t = 1; t <= s.T; ++t) {
      CHECK(s.beta_at(t) > 0.0);
      CHECK(s.beta_at(t) < 1.0);
      CHECK(s.sigma_at(t) * s.sigma_at(t) == doctest::Approx(s.beta_at(t)).epsilon(1e-14));
      if (t > 1) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    }
  }
}

TEST_CASE("linear schedule rejects invalid ranges") {
  CHECK_THROWS(make_linear_schedule(0));
  CHECK_THROWS(make_linear_schedule(10, 0.0, 0.02));
  CHECK_THROWS(make_linear_schedule(10, 0.02, 0.01));
  CHECK_THROWS(make_linear_schedule(10, 1e-4, 1.0));
}

TEST_CASE("cosine schedule follows the closed form") {
  const int T = 100;
  const double s = 0.008;
  const auto sch = make_cosine_schedule(T, s);
  auto f = [&](double t) {
    const double c = std::cos(((t / T + s) / (1 + s)) * std::numbers::pi / 2);
    return c * c;
  };
  CHECK(f(0) / f(0) == 1.0);
  CHECK(sch.alpha_bar_at(50) == doctest::Approx(f(50) / f(0)).epsilon(1e-12));
  CHECK(sch.alpha_bar_at(T) < sch.alpha_bar_at(1));
  for (int t = 1; t <= T; ++t) CHECK(sch.beta_at(t) <= 0.999);
}

TEST_CASE("forward noising limits and a hand value") {
  Rng rng(1);
  const Tensor x0 = random_tensor(rng, {1, 2, 2});
  const Tensor eps = random_tensor(rng, {1, 2, 2});

  const auto clean = schedule_from_betas(ScheduleKind::linear, {1e-300});
  CHECK(forward_noise(clean, x0, 1, eps) == x0);

  const auto noisy = schedule_from_betas(ScheduleKind::linear, std::vector<double>(50, 0.9999));
  CHECK(forward_noise(noisy, x0, 50, eps) == eps);

  const auto lin = make_linear_schedule(100);
  double ab = 1.0;
  for (int t = 1; t <= 10; ++t) ab *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 99.0);
  const Tensor one({1}, 1.0), zero({1});
  CHECK(forward_noise(lin, one, 10, zero)[0] == doctest::Approx(std::sqrt(ab)).epsilon(1e-13));

  CHECK_THROWS(forward_noise(lin, x0, 1, Tensor({4})));
  CHECK_THROWS(forward_noise(lin, x0, 0, eps));
  CHECK_THROWS(forward_noise(lin, x0, 101, eps));
}

TEST_CASE("loss is zero for a perfect prediction and ||eps||^2 for a zero one") {
  const auto sch = make_linear_schedule(10);
  const ImageShape shape{1, 2, 2};
  Rng rng(2);
  const Tensor x0 = random_tensor(rng, {1, 2, 2});
  const Tensor eps = random_tensor(rng, {1, 2, 2});
  ConstantPredictor exact(shape, eps);
  CHECK(diffusion_loss_value(exact, sch, x0, 3, eps) == 0.0);

  Tensor basis({1, 2, 2});
  basis[2] = 1.0;
  ConstantPredictor zero(shape, Tensor({1, 2, 2}));
  CHECK(diffusion_loss_value(zero, sch, x0, 3, basis) == 1.0);
}

TEST_CASE("loss matches an elementwise squared-difference oracle") {
  const auto sch = make_linear_schedule(100);
  auto net = tiny_net(3);
  Rng rng(4);
  const Tensor x0 = random_tensor(rng, {1, 2, 2});
  const Tensor eps = random_tensor(rng, {1, 2, 2});
  const int t = 37;
  const Tensor pred = net.forward(forward_noise(sch, x0, t, eps), t);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 4; ++i) oracle += (eps[i] - pred[i]) * (eps[i] - pred[i]);
  CHECK(diffusion_loss_value(net, sch, x0, t, eps) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(oracle >= 0.0);
}

TEST_CASE("autodiff loss gradient equals 2 (eps_theta - eps)^T d eps_theta / d theta") {
  const auto sch = make_linear_schedule(100);
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    auto net = tiny_net(100 + inst, inst % 2 ? std::vector<std::size_t>{8, 6} : std::vector<std::size_t>{10});
    Rng rng(200 + inst);
    const Tensor x0 = random_tensor(rng, {1, 2, 2});
    const Tensor eps = random_tensor(rng, {1, 2, 2});
    const int t = 1 + static_cast<int>(rng.uniform_int(100));

    net.zero_grad();
    Tape tape;
    tape.backward(diffusion_loss(tape, net, sch, x0, t, eps));

    const Tensor xt = forward_noise(sch, x0, t, eps);
    const manual::Vec xv(xt.data().begin(), xt.data().end());
    const auto out = manual::forward(net, xv, t).output;
    manual::Vec v(out.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * (out[i] - eps[i]);
    const auto ref = manual::vjp(net, xv, t, v);
    for (std::size_t p = 0; p < ref.size(); ++p) {
      const auto& g = net.registry()[p].grad;
      REQUIRE(g.numel() == ref[p].size());
      for (std::size_t i = 0; i < g.numel(); ++i) worst = std::max(worst, std::abs(g[i] - ref[p][i]));
    }
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
  auto net = tiny_net(5);
  const auto before = net;
  Rng rng(6);
  const Tensor images = random_tensor(rng, {8, 1, 2, 2}, 0.5);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.learning_rate = 0.0;
  train(net, images, make_linear_schedule(100), tc);
  for (std::size_t i = 0; i < net.num_layers(); ++i) CHECK(net.registry()[i].value == before.registry()[i].value);
}

TEST_CASE("a single image is overfitted") {
  auto net = tiny_net(7, {32, 32});
  Rng rng(8);
  const Tensor images = random_tensor(rng, {1, 1, 2, 2}, 0.5);
  TrainConfig tc;
  tc.epochs = 400;
  tc.batch_size = 1;
  tc.learning_rate = 1e-3;
  const auto res = train(net, images, make_linear_schedule(100), tc);
  REQUIRE(res.loss_trace.size() == 400);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    first += res.loss_trace[static_cast<std::size_t>(i)];
    last += res.loss_trace[res.loss_trace.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(last < first);
}

TEST_CASE("training is deterministic under a fixed seed") {
  Rng rng(9);
  const Tensor images = random_tensor(rng, {10, 1, 2, 2}, 0.5);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 3;
  tc.seed = 11;
  for (DefenseKind kind : {DefenseKind::none, DefenseKind::dpsgd, DefenseKind::randaug_lite}) {
    DefenseSpec d;
    d.kind = kind;
    d.augmentation.cutout_size = 1;
    d.augmentation.translate = 1;
    auto a = tiny_net(10), b = tiny_net(10);
    const auto ra = train(a, images, make_linear_schedule(50), tc, d);
    const auto rb = train(b, images, make_linear_schedule(50), tc, d);
    CHECK(ra.loss_trace == rb.loss_trace);
    for (std::size_t i = 0; i < a.num_layers(); ++i) CHECK(a.registry()[i].value == b.registry()[i].value);
  }
}

TEST_CASE("non-finite loss aborts training") {
  class Exploding : public NoisePredictor {
   public:
    Parameter w{"w", Tensor({1, 4}, 1e200)};
    Var forward(Tape& tape, Var x, std::span<const int>) override {
      return add(x, tape.param(w));
    }
    std::vector<Parameter*> parameters() override { return {&w}; }
    ImageShape input_shape() const override { return {1, 2, 2}; }
  } net;
  TrainConfig tc;
  tc.batch_size = 1;
  CHECK_THROWS_AS(train(net, Tensor({1, 1, 2, 2}), make_linear_schedule(10), tc), std::runtime_error);
}

TEST_CASE("batched DP-SGD gradient equals clip-and-noise over explicit per-sample gradients") {
  auto net = tiny_net(12, {6, 5});
  const auto sch = make_linear_schedule(100);
  Rng rng(13);
  const std::size_t B = 5, d = 4;
  const Tensor xt = random_tensor(rng, {B, d});
  const Tensor eps = random_tensor(rng, {B, d});
  const std::vector<int> ts{1, 17, 50, 99, 3};
  for (double clip : {0.05, 1.0, 1e6}) {
    for (double sigma : {0.0, 0.7}) {
      DpSgdConfig dp;
      dp.clip_bound = clip;
      dp.noise_multiplier = sigma;

      std::vector<std::vector<double>> per_sample;
      for (std::size_t r = 0; r < B; ++r) {
        net.zero_grad();
        Tensor xr({1, d}), er({1, d});
        for (std::size_t c = 0; c < d; ++c) {
          xr[c] = xt.at(r, c);
          er[c] = eps.at(r, c);
        }
        Tape tape;
        const int tr[] = {ts[r]};
        tape.backward(sum_squares(sub(tape.constant(er), net.forward(tape, tape.constant(xr), tr))));
        std::vector<double> flat;
        for (auto* p : net.parameters()) flat.insert(flat.end(), p->grad.data().begin(), p->grad.data().end());
        per_sample.push_back(flat);
      }
      Rng ra(77), rb(77);
      const auto expected = dp_sgd_step(per_sample, dp, ra);
      dp_sgd_gradient(net, xt, eps, ts, dp, rb);
      std::size_t off = 0;
      double worst = 0.0;
      for (auto* p : net.parameters()) {
        for (double g : p->grad.data()) worst = std::max(worst, std::abs(g - expected[off++]));
      }
      CAPTURE(clip);
      CAPTURE(sigma);
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("reverse process with a zero predictor") {
  const ImageShape shape{1, 2, 2};
  ConstantPredictor zero(shape, Tensor({1, 2, 2}));
  const Predictor predict = [&](const Tensor& x, int t) {
    Tape tape;
    const int ts[] = {t};
    return zero.forward(tape, tape.constant(x.reshaped({1, 4})), ts).value().reshaped(x.shape());
  };
  Rng rng(1);
  const Tensor x1 = random_tensor(rng, {1, 2, 2});

  const auto one = make_linear_schedule(1, 0.3, 0.3);
  Rng r1(5);
  const Tensor x0 = denoise_from(predict, one, x1, r1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(x0[i] == doctest::Approx(x1[i] / std::sqrt(0.7)).epsilon(1e-15));

  const auto two = make_linear_schedule(2, 0.1, 0.2);
  Rng r2(5), oracle_rng(5);
  const Tensor out = denoise_from(predict, two, x1, r2);
  for (std::size_t i = 0; i < 4; ++i) {
    const double step2 = x1[i] / std::sqrt(0.8) + std::sqrt(0.2) * oracle_rng.normal();
    CHECK(out[i] == doctest::Approx(step2 / std::sqrt(0.9)).epsilon(1e-14));
  }
}

TEST_CASE("ancestral sampling is seeded and finite") {
  auto net = tiny_net(14);
  const auto sch = make_linear_schedule(20);
  Rng a(3), b(3);
  const auto sa = ancestral_sample(net, sch, a, 3);
  const auto sb = ancestral_sample(net, sch, b, 3);
  REQUIRE(sa.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(sa[i] == sb[i]);
    CHECK(sa[i].shape() == Shape{1, 2, 2});
    for (double v : sa[i].data()) CHECK(std::isfinite(v));
  }
  CHECK_THROWS(ancestral_sample(net, sch, a, 0));
}

TEST_CASE("loss trace CSV") {
  const auto dir = testutil::temp_dir("loss_trace");
  write_loss_trace_csv(dir / "l.csv", {2.5, 1.25});
  std::ifstream is(dir / "l.csv");
  std::string header, l1, l2;
  std::getline(is, header);
  std::getline(is, l1);
  std::getline(is, l2);
  CHECK(header == "epoch,mean_loss");
  CHECK(l1 == "1,2.5");
  CHECK(l2 == "2,1.25");
}
