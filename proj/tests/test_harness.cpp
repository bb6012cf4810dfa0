#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "gsamia/config.hpp"
#include "gsamia/dataset.hpp"
#include "gsamia/experiment.hpp"
#include "gsamia/plots.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace gsamia;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  c.data.count = 120;
  c.split = {20, 20, 60, 20};
  c.schedule.steps = 20;
  c.model.widths = {16};
  c.model.embed_dim = 8;
  c.target.epochs = 3;
  c.target.batch_size = 16;
  c.features.k = 3;
  c.run.out = out;
  c.run.workers = 2;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GSA_MIA_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("ini parsing and overrides") {
  const auto doc = parse_ini("# comment\n[data]\ncount = 300  # trailing\nside=16\n\n[run]\nseed = 7\n");
  CHECK(doc.at("data").at("count") == "300");
  CHECK(doc.at("data").at("side") == "16");
  const auto c = config_from_ini(doc);
  CHECK(c.data.count == 300);
  CHECK(c.data.side == 16);
  CHECK(c.run.seed == 7);
  CHECK(c.split.members == 500);

  ExperimentConfig o;
  apply_override(o, "features.k", "4");
  apply_override(o, "defense.kind", "dpsgd");
  apply_override(o, "defense.sigma", "1.5");
  apply_override(o, "model.widths", "32,16");
  apply_override(o, "attack.kind", "lsa");
  CHECK(o.features.k == 4);
  CHECK(o.defense.spec.kind == DefenseKind::dpsgd);
  CHECK(o.defense.spec.dp.noise_multiplier == 1.5);
  CHECK(o.model.widths == std::vector<std::size_t>{32, 16});
  CHECK(o.attack.feature == AttackFeature::lsa);
  CHECK_THROWS_AS(apply_override(o, "features.nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(o, "features.k", "ten"), ConfigError);
  CHECK_THROWS_AS(config_from_ini(parse_ini("[bogus]\nx = 1\n")), ConfigError);
  CHECK_THROWS_AS(parse_ini("[data\ncount = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/gsamia.ini"), ConfigError);
}

TEST_CASE("config validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  c.features.k = 101;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.features.layer_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.split.nonmembers = 400;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.split.shadow_pool = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("canonical ini round trip and digest") {
  ExperimentConfig c = tiny_config("somewhere");
  c.defense.spec.kind = DefenseKind::cutout;
  c.defense.spec.dp.clip_bound = 0.3;
  c.features.sampler = SamplerMethod::poisson;
  c.shadow.epochs = 9;
  const std::string text = to_ini(c);
  const auto back = config_from_ini(parse_ini(text));
  CHECK(to_ini(back) == text);
  CHECK(back.shadow.epochs == 9);
  CHECK(experiment_digest(back) == experiment_digest(c));

  ExperimentConfig moved = c;
  moved.run.out = "elsewhere";
  moved.run.cache = "/tmp/x";
  moved.run.workers = 7;
  CHECK(experiment_digest(moved) == experiment_digest(c));
  moved.run.seed = 1;
  CHECK(experiment_digest(moved) != experiment_digest(c));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("splits are disjoint and seeded") {
  ExperimentConfig c;
  Rng rng(1);
  const auto s = make_splits(2000, c.split, rng);
  CHECK(s.target_members.size() == 500);
  CHECK(s.target_nonmembers.size() == 500);
  CHECK(s.shadow_pool.size() == 1000);
  std::set<std::size_t> all(s.target_members.begin(), s.target_members.end());
  all.insert(s.target_nonmembers.begin(), s.target_nonmembers.end());
  all.insert(s.shadow_pool.begin(), s.shadow_pool.end());
  CHECK(all.size() == 2000);
  Rng again(1);
  CHECK(make_splits(2000, c.split, again).target_members == s.target_members);
  CHECK_THROWS(make_splits(1999, c.split, rng));

  auto data = generate_synthetic_dataset(2000, 8, 10, 3);
  CHECK_NOTHROW(check_pool_disjointness(data, s));
  Splits bad = s;
  bad.shadow_pool.push_back(bad.target_members.front());
  CHECK_THROWS_AS(check_pool_disjointness(data, bad), std::logic_error);
}

TEST_CASE("seed streams are distinct") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t root : {0ull, 1ull}) {
    for (auto s : {SeedStream::dataset, SeedStream::split, SeedStream::target, SeedStream::shadow_plan,
                   SeedStream::shadow, SeedStream::feature_noise, SeedStream::sampler, SeedStream::attack}) {
      for (std::uint64_t i = 0; i < 3; ++i) seen.insert(stage_seed(root, s, i));
    }
  }
  CHECK(seen.size() == 48);
  CHECK(stage_seed(5, SeedStream::shadow, 1) == stage_seed(5, SeedStream::shadow, 1));
}

TEST_CASE("synthetic dataset") {
  const auto a = generate_synthetic_dataset(100, 8, 4, 9);
  const auto b = generate_synthetic_dataset(100, 8, 4, 9);
  CHECK(a.images.shape() == Shape{100, 1, 8, 8});
  CHECK(a.images == b.images);
  CHECK(a.classes == b.classes);
  std::set<std::uint64_t> ids(a.ids.begin(), a.ids.end());
  CHECK(ids.size() == 100);
  for (double v : a.images.data()) CHECK((v >= -1.0 && v <= 1.0));
  CHECK_FALSE(generate_synthetic_dataset(100, 8, 4, 10).images == a.images);
  CHECK(generate_synthetic_dataset(3, 16, 2, 0).images.shape() == Shape{3, 1, 16, 16});

  // Mean image distance between classes exceeds the average distance of an
  // image to its own class mean.
  const auto d = generate_synthetic_dataset(400, 8, 4, 11);
  const std::size_t px = 64;
  std::vector<std::vector<double>> mean(4, std::vector<double>(px, 0.0));
  std::vector<double> count(4, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = static_cast<std::size_t>(d.classes[i]);
    count[c] += 1.0;
    for (std::size_t p = 0; p < px; ++p) mean[c][p] += d.images[i * px + p];
  }
  for (std::size_t c = 0; c < 4; ++c)
    for (auto& v : mean[c]) v /= count[c];
  auto dist = [&](auto&& f, auto&& g) {
    double s = 0.0;
    for (std::size_t p = 0; p < px; ++p) s += (f(p) - g(p)) * (f(p) - g(p));
    return std::sqrt(s);
  };
  double intra = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = static_cast<std::size_t>(d.classes[i]);
    intra += dist([&](std::size_t p) { return d.images[i * px + p]; }, [&](std::size_t p) { return mean[c][p]; });
  }
  intra /= static_cast<double>(d.size());
  double inter = std::numeric_limits<double>::infinity();
  for (std::size_t a1 = 0; a1 < 4; ++a1)
    for (std::size_t b1 = a1 + 1; b1 < 4; ++b1)
      inter = std::min(inter, dist([&](std::size_t p) { return mean[a1][p]; }, [&](std::size_t p) { return mean[b1][p]; }));
  CHECK(inter > intra);
}

TEST_CASE("cifar10 records") {
  const auto dir = testutil::temp_dir("cifar");
  std::string bytes(2 * 3073, '\0');
  bytes[0] = 3;
  bytes[1] = static_cast<char>(255);
  bytes[2] = 0;
  bytes[3073] = 7;
  bytes[3073 + 3072] = static_cast<char>(128);
  {
    std::ofstream os(dir / "b.bin", std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  const auto d = import_cifar10(dir / "b.bin");
  CHECK(d.size() == 2);
  CHECK(d.images.shape() == Shape{2, 3, 32, 32});
  CHECK(d.classes == std::vector<int>{3, 7});
  CHECK(d.ids == std::vector<std::uint64_t>{0, 1});
  CHECK(d.images[0] == 1.0);
  CHECK(d.images[1] == -1.0);
  CHECK(d.images[3071 + 3072] == 128.0 / 127.5 - 1.0);

  export_cifar10(d, dir / "c.bin");
  CHECK(slurp(dir / "c.bin") == bytes);
  const auto back = import_cifar10(dir / "c.bin");
  CHECK(back.images == d.images);

  {
    std::ofstream os(dir / "t.bin", std::ios::binary);
    os.write(bytes.data(), 3073 + 100);
  }
  try {
    import_cifar10(dir / "t.bin");
    FAIL("expected truncation error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("3073") != std::string::npos);
  }
}

TEST_CASE("dataset save and subset") {
  const auto d = generate_synthetic_dataset(10, 8, 3, 1);
  const auto dir = testutil::temp_dir("dataset");
  save_dataset(d, dir / "d.bin");
  const auto back = load_dataset(dir / "d.bin");
  CHECK(back.images == d.images);
  CHECK(back.ids == d.ids);
  CHECK(back.classes == d.classes);
  const auto sub = d.subset({4, 1});
  CHECK(sub.ids == std::vector<std::uint64_t>{d.ids[4], d.ids[1]});
  CHECK(sub.image(0) == d.image(4));
}

TEST_CASE("roc plots") {
  RocCurve diag;
  diag.points = {{0.0, 0.0, 1.0}, {1.0, 1.0, 0.0}};
  const std::string svg = roc_svg(diag);
  std::size_t polylines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++polylines;
  CHECK(polylines == 1);
  CHECK(svg.find(roc_point_coord(0.0, 0.0) + " " + roc_point_coord(1.0, 1.0)) != std::string::npos);
  CHECK(roc_svg(diag) == svg);

  RocCurve perfect;
  perfect.points = {{0.0, 0.0, 2.0}, {0.0, 1.0, 1.0}, {1.0, 1.0, 0.0}};
  CHECK(roc_svg(perfect).find(roc_point_coord(0.0, 1.0)) != std::string::npos);
  CHECK(roc_svg(perfect, true).find(roc_point_coord(0.0, 1.0, true)) != std::string::npos);

  const auto dir = testutil::temp_dir("plots");
  write_roc_csv(dir / "roc.csv", perfect);
  emit_roc_plot(dir / "roc.csv", dir / "a.svg");
  emit_roc_plot(dir / "roc.csv", dir / "b.svg");
  CHECK(slurp(dir / "a.svg") == slurp(dir / "b.svg"));
  CHECK(slurp(dir / "a.svg") == roc_svg(perfect));
  CHECK_THROWS(emit_roc_plot(dir / "missing.csv", dir / "c.svg"));

  std::vector<SweepRow> rows{{"1", {0.6, 0.7, 0.1, 0.0, 5, 5, ""}}, {"10", {0.9, 0.95, 0.5, 0.2, 5, 5, ""}}};
  write_sweep_csv(dir / "s.csv", rows);
  CHECK(slurp(dir / "s.csv").rfind("axis_value,asr,auc,tpr1,tpr01\n", 0) == 0);
  emit_sweep_plot(dir / "s.csv", dir / "s.svg", "k");
  CHECK(slurp(dir / "s.svg").find("<polyline") != std::string::npos);
  CHECK_THROWS(emit_sweep_plot(dir / "nope.csv", dir / "t.svg", "k"));
}

TEST_CASE("tiny pipeline is deterministic and resumable") {
  const auto root = testutil::temp_dir("pipeline");
  auto c1 = tiny_config(root / "a");
  auto c2 = tiny_config(root / "b");
  c2.run.workers = 1;
  const auto r1 = run_experiment(c1);
  const auto r2 = run_experiment(c2);
  CHECK(slurp(root / "a" / "report.json") == slurp(root / "b" / "report.json"));
  CHECK(slurp(root / "a" / "features" / "target.csv") == slurp(root / "b" / "features" / "target.csv"));
  CHECK(slurp(root / "a" / "features" / "shadow.csv") == slurp(root / "b" / "features" / "shadow.csv"));
  CHECK(r1.report.auc == r2.report.auc);
  CHECK(r1.timesteps == std::vector<int>{1, 7, 13});

  const auto report = nlohmann::json::parse(slurp(root / "a" / "report.json"));
  for (const char* key : {"config_digest", "seed", "attack", "asr", "auc", "tpr_at_1pct_fpr", "tpr_at_01pct_fpr",
                          "n_members", "n_nonmembers", "loss_matched"}) {
    CHECK_MESSAGE(report.contains(key), key);
  }
  CHECK(report["n_members"] == 20);
  CHECK(report["feature_dim"] == 4);
  for (const char* f : {"scores.csv", "roc.csv", "roc.svg", "roc_log.svg", "config.ini", "splits.json", "attack.bin"}) {
    CHECK_MESSAGE(fs::exists(root / "a" / f), f);
  }

  const auto again = run_experiment(c1);
  CHECK(again.report.auc == r1.report.auc);
  CHECK(slurp(root / "a" / "report.json") == slurp(root / "b" / "report.json"));

  const auto loaded = load_config(root / "a" / "config.ini");
  CHECK(experiment_digest(loaded) == experiment_digest(c1));
}

TEST_CASE("cli exit codes") {
  const auto dir = testutil::temp_dir("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("--config /nonexistent.ini run") == 2);
  CHECK(run_cli("--set features.k=zero run") == 2);
  CHECK(run_cli("--attack bogus run") == 2);
  CHECK(run_cli("--no-such-flag run") == 2);
  CHECK(run_cli("plot --roc " + (dir / "missing.csv").string() + " --output " + (dir / "x.svg").string()) == 3);
  CHECK(run_cli("gen-data --count 5 --side 8 --classes 2 --output " + (dir / "d.bin").string()) == 0);
  CHECK(load_dataset(dir / "d.bin").size() == 5);
  CHECK(run_cli("import-cifar10 --input " + (dir / "missing.bin").string() + " --output " + (dir / "e.bin").string()) == 3);
}
