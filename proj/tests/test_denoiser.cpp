#include <cmath>
#include <set>

#include "doctest.h"

#include "gsamia/container.hpp"
#include "gsamia/denoiser.hpp"
#include "gsamia/grad_check.hpp"
#include "test_util.hpp"

using namespace gsamia;

namespace {

DenoiserConfig small_config(std::vector<std::size_t> widths) {
  DenoiserConfig c;
  c.input_shape = {1, 8, 8};
  c.hidden_widths = std::move(widths);
  c.embed_dim = 16;
  c.max_t = 100;
  return c;
}

}  // namespace

TEST_CASE("one hidden layer gives four parameter groups") {
  Rng rng(1);
  auto net = DenoiserNet::init(small_config({64}), rng);
  CHECK(net.num_layers() == 4);
  const auto named = net.named_parameters();
  CHECK(named[0].first == "fc0.weight");
  CHECK(named[1].first == "fc0.bias");
  CHECK(named[2].first == "fc1.weight");
  CHECK(named[3].first == "fc1.bias");
}

TEST_CASE("two hidden layers give six parameter groups with unique names") {
  Rng rng(1);
  auto net = DenoiserNet::init(small_config({64, 64}), rng);
  CHECK(net.num_layers() == 6);
  std::set<std::string> names;
  for (const auto& [name, p] : net.named_parameters()) names.insert(name);
  CHECK(names.size() == 6);
}

TEST_CASE("init is seeded, He-scaled, with zero biases") {
  Rng a(5), b(5);
  auto n1 = DenoiserNet::init(small_config({128}), a);
  auto n2 = DenoiserNet::init(small_config({128}), b);
  std::vector<std::string> names1, names2;
  for (const auto& [name, p] : n1.named_parameters()) names1.push_back(name);
  for (const auto& [name, p] : n2.named_parameters()) names2.push_back(name);
  CHECK(names1 == names2);
  for (std::size_t i = 0; i < n1.num_layers(); ++i) CHECK(n1.registry()[i].value == n2.registry()[i].value);

  const auto& w = n1.registry()[0].value;
  double var = 0.0;
  for (double v : w.data()) var += v * v;
  var /= static_cast<double>(w.numel());
  CHECK(var == doctest::Approx(2.0 / static_cast<double>(w.dim(0))).epsilon(0.1));
  for (double v : n1.registry()[1].value.data()) CHECK(v == 0.0);
}

TEST_CASE("init rejects empty or zero-sized layers") {
  Rng rng(1);
  CHECK_THROWS(DenoiserNet::init(small_config({}), rng));
  CHECK_THROWS(DenoiserNet::init(small_config({16, 0}), rng));
  auto odd = small_config({16});
  odd.embed_dim = 7;
  CHECK_THROWS(DenoiserNet::init(odd, rng));
}

TEST_CASE("forward keeps the image shape and is deterministic") {
  Rng rng(2);
  auto net = DenoiserNet::init(small_config({32}), rng);
  const Tensor zero({1, 8, 8});
  const Tensor out = net.forward(zero, 1);
  CHECK(out.shape() == Shape{1, 8, 8});
  for (double v : out.data()) CHECK(std::isfinite(v));
  CHECK(net.forward(zero, 1) == out);
  CHECK_FALSE(net.forward(zero, 2) == out);
  CHECK_THROWS_AS(net.forward(zero, 0), std::out_of_range);
  CHECK_THROWS_AS(net.forward(zero, 101), std::out_of_range);
}

TEST_CASE("time embeddings are pairwise distinct over [1, T]") {
  const TimeEmbedding emb(16, 100);
  for (int a = 1; a <= 100; ++a) {
    for (int b = a + 1; b <= 100; ++b) CHECK_FALSE(emb(a) == emb(b));
  }
}

TEST_CASE("denoiser output passes a finite-difference check") {
  Rng rng(3);
  auto net = DenoiserNet::init(small_config({12, 10}), rng);
  const Tensor x = testutil::random_tensor(rng, {2, 64});
  const int ts[] = {3, 77};
  const auto params = net.parameters();
  const double err = grad_check([&](Tape& t) { return sum_squares(net.forward(t, t.constant(x), ts)); },
                                params, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(4);
  auto net = DenoiserNet::init(small_config({16, 8}), rng);
  const auto dir = testutil::temp_dir("denoiser_ckpt");
  net.save(dir / "m.bin");
  auto back = DenoiserNet::load(dir / "m.bin", 100);
  REQUIRE(back.num_layers() == net.num_layers());
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    CHECK(back.registry()[i].name == net.registry()[i].name);
    CHECK(back.registry()[i].value == net.registry()[i].value);
  }
  const Container c = read_container(dir / "m.bin", "GSAMIA01");
  CHECK(c.header.back() == net.num_layers());
  CHECK_THROWS(read_container(dir / "m.bin", "GSAATK01"));
}
