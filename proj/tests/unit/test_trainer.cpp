#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "deepgin/archive.hpp"
#include "deepgin/errors.hpp"
#include "deepgin/trainer.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace deepgin;
using nn::Tensor;

namespace {

Config tiny_config() {
  Config c = Config::toy();
  c.model.base_width = 4;
  c.disc.widths = {8, 8, 8};
  c.train.g_lr = 1e-3;
  return c;
}

std::vector<ImageTensor> tiny_images(int n, std::uint64_t seed = 1) {
  std::vector<ImageTensor> out;
  for (int i = 0; i < n; ++i) out.push_back(testutil::random_image(40, 40, 3, seed + i));
  return out;
}

Batch tiny_batch(const Config& cfg, std::uint64_t seed) {
  return to_batch(make_batch(tiny_images(1, seed), seed, cfg.model.image_size));
}

std::vector<std::vector<double>> snapshot(const nn::ParamRegistry& reg) {
  std::vector<std::vector<double>> out;
  for (const auto& p : reg.params()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

std::set<std::string> keys_of(const LossRecord& r) {
  std::set<std::string> s;
  for (const auto& [k, v] : r.terms) s.insert(k);
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const TrainConfig t;
  for (int e = 0; e < 10; ++e) CHECK(lr_at(e, 1e-4, t) == 1e-4);
  CHECK(lr_at(99, 1e-4, t) == doctest::Approx(1e-4 / 90).epsilon(1e-12));
  CHECK(lr_at(55, 1e-4, t) == doctest::Approx(0.5e-4).epsilon(1e-12));
  double prev = 1.0;
  for (int e = 0; e < 100; ++e) {
    const double lr = lr_at(e, 1.0, t);
    CHECK(lr <= prev);
    CHECK(lr > 0.0);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_at(100, 1.0, t), ArgumentError);
  CHECK_THROWS_AS(lr_at(-1, 1.0, t), ArgumentError);
}

TEST_CASE("reference configuration values") {
  const Config c = Config::paper();
  CHECK(c.train.warmup_epochs == 10);
  CHECK(c.train.main_epochs == 100);
  CHECK(c.train.const_epochs == 10);
  CHECK(c.train.decay_epochs == 90);
  CHECK(c.train.g_lr == 1e-4);
  CHECK(c.train.d_lr == 4e-4);
  CHECK(c.train.beta1 == 0.5);
  CHECK(c.train.batch_images == 4);
  CHECK(c.loss.weights.hole == 5.0);
  CHECK(c.loss.weights.adv == 0.001);
  CHECK(c.loss.weights.perceptual == 0.05);
  CHECK(c.loss.weights.style == 80.0);
  CHECK(c.loss.weights.tv == 0.1);
  CHECK(c.model.base_width == 64);
  CHECK(c.model.coarse_rates == 8);
  CHECK(c.model.refine_rates == 4);
  CHECK(Config::toy().model.base_width == 16);
  CHECK_NOTHROW(c.validate());
  CHECK_NOTHROW(Config::toy().validate());
}

TEST_CASE("config keys, text round trip and fingerprints") {
  Config c = Config::toy();
  c.set("train.g_lr", "0.00025");
  c.set("model.block", "dilated");
  CHECK(c.train.g_lr == 0.00025);
  CHECK(c.get("model.block") == "dilated");
  CHECK_THROWS_AS(c.set("train.nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("train.batch_images", "two"), ConfigError);

  const Config back = Config::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.fingerprint() == c.fingerprint());
  Config other = c;
  other.set("loss.tv", "0.2");
  CHECK(other.fingerprint() != c.fingerprint());
  Config moved = c;
  moved.set("loss.extractor_weights", "/somewhere/else.dga");
  CHECK(moved.fingerprint() == c.fingerprint());

  const Config parsed = Config::from_text("preset=toy\n# comment\ntrain.seed = 9  # trailing\n");
  CHECK(parsed.train.seed == 9);
  CHECK(parsed.model.base_width == 16);
  CHECK_THROWS_AS(Config::from_text("train.seed=1\npreset=toy\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_text("train.seed\n"), ConfigError);
  CHECK_THROWS_AS(Config::preset("huge"), ConfigError);

  Config bad = Config::paper();
  bad.train.decay_epochs = 80;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = Config::paper();
  bad.train.g_lr = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("environment overrides") {
  ::setenv("DEEPGIN_TRAIN_G_LR", "0.125", 1);
  ::setenv("DEEPGIN_LOSS_STYLE", "3", 1);
  Config c = Config::toy();
  c.apply_env();
  ::unsetenv("DEEPGIN_TRAIN_G_LR");
  ::unsetenv("DEEPGIN_LOSS_STYLE");
  CHECK(c.train.g_lr == 0.125);
  CHECK(c.loss.weights.style == 3.0);
}

TEST_CASE("archive round trip and corruption") {
  Archive a;
  a.fingerprint = 0x1234abcdull;
  a.metadata["k"] = "v=1";
  a.group("g").tensors.push_back({"t", {2, 3}, {1, 2, 3, 4, 5, 6.5}});
  a.group("h").tensors.push_back({"s", {1}, {-0.0}});
  const std::string bytes = serialize_archive(a);
  const Archive b = parse_archive(bytes);
  CHECK(b.fingerprint == a.fingerprint);
  CHECK(b.metadata == a.metadata);
  REQUIRE(b.find("g") != nullptr);
  CHECK(b.find("g")->find("t")->values == a.find("g")->find("t")->values);
  CHECK(b.find("g")->find("t")->shape == nn::Shape{2, 3});
  CHECK(serialize_archive(b) == bytes);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x20;
  CHECK_THROWS_AS(parse_archive(flipped), FormatError);
  CHECK_THROWS_AS(parse_archive(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(parse_archive("NOTANARCHIVE-------------"), FormatError);

  testutil::TempDir dir;
  save_archive(a, dir.path / "a.dga");
  CHECK(slurp(dir.path / "a.dga") == bytes);
  CHECK(load_archive(dir.path / "a.dga").metadata.at("k") == "v=1");
  CHECK_THROWS_AS(load_archive(dir.path / "missing.dga"), IoError);
}

TEST_CASE("critic spectral estimates start at the top singular value") {
  Config cfg = tiny_config();
  Trainer tr(cfg);
  for (PatchDiscriminator* pd : {&tr.disc().d1(), &tr.disc().d2()})
    for (auto& layer : pd->layers()) {
      double sigma = 0;
      layer.normalized_weight(&sigma);
      const int rows = layer.weight.dim(0), cols = static_cast<int>(layer.weight.numel()) / rows;
      const auto wv = layer.weight.values();
      Eigen::MatrixXd m(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int k = 0; k < cols; ++k) m(r, k) = wv[static_cast<std::size_t>(r) * cols + k];
      CHECK(sigma == doctest::Approx(Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0)).epsilon(1e-3));
    }
  cfg.train.sn_prime_iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("warm-up step: record keys, untouched critics and extractor") {
  const Config cfg = tiny_config();
  Trainer tr(cfg);
  const auto d1 = snapshot(tr.disc().d1_params()), d2 = snapshot(tr.disc().d2_params());
  const auto g2 = snapshot(tr.model().g2_params());
  const Tensor probe = to_tensor(std::vector<ImageTensor>{testutil::random_image(32, 32, 3, 5)});
  const auto feats_before = tr.extractor().extract(probe);
  const LossRecord r = tr.warmup_step(tiny_batch(cfg, 1));
  CHECK(keys_of(r) == std::set<std::string>{"L_hole", "L_valid", "L_L1"});
  CHECK(r.at("L_L1") == doctest::Approx(cfg.loss.weights.hole * r.at("L_hole") + r.at("L_valid")));
  CHECK(snapshot(tr.disc().d1_params()) == d1);
  CHECK(snapshot(tr.disc().d2_params()) == d2);
  CHECK(snapshot(tr.model().g2_params()) != g2);
  const auto feats_after = tr.extractor().extract(probe);
  for (std::size_t l = 0; l < feats_before.size(); ++l)
    CHECK(std::equal(feats_before[l].values().begin(), feats_before[l].values().end(), feats_after[l].values().begin()));
  CHECK(tr.global_step() == 1);
}

TEST_CASE("warm-up overfits a single repeated batch") {
  const Config cfg = Config::toy();
  Trainer tr(cfg);
  const Batch batch = tiny_batch(cfg, 7);
  std::vector<double> l1;
  for (int s = 0; s < 50; ++s) l1.push_back(tr.warmup_step(batch).at("L_L1"));
  // Ten-step window means decrease strictly; the last step beats the first.
  double prev = 1e300;
  for (int w = 0; w < 5; ++w) {
    double m = 0;
    for (int j = 0; j < 10; ++j) m += l1[w * 10 + j];
    CHECK(m < prev);
    prev = m;
  }
  CHECK(l1.back() < 0.5 * l1.front());
}

TEST_CASE("main step with only the L1 weight equals a warm-up step") {
  Config cfg = tiny_config();
  cfg.loss.weights.adv = cfg.loss.weights.perceptual = cfg.loss.weights.style = cfg.loss.weights.tv = 0.0;
  Trainer a(cfg), b(cfg);
  b.begin_main_stage();
  const Batch batch = tiny_batch(cfg, 2);
  const LossRecord ra = a.warmup_step(batch);
  const LossRecord rb = b.main_step(batch);
  CHECK(ra.at("L_L1") == rb.at("L_L1"));
  CHECK(snapshot(a.model().g1_params()) == snapshot(b.model().g1_params()));
  CHECK(snapshot(a.model().g2_params()) == snapshot(b.model().g2_params()));
}

TEST_CASE("main step: record, finite nonnegative critic loss, gain gradients") {
  const Config cfg = tiny_config();
  Trainer tr(cfg);
  tr.begin_main_stage();
  const auto d1 = snapshot(tr.disc().d1_params());
  const auto u = tr.disc().d1().layers()[0].state->u;
  for (int s = 0; s < 3; ++s) {
    const LossRecord r = tr.main_step(tiny_batch(cfg, 10 + s));
    for (const char* k : {"L_D", "L_hole", "L_valid", "L_L1", "L_adv", "L_perceptual", "L_style", "L_tv", "L_total"})
      CHECK(r.has(k));
    CHECK(std::isfinite(r.at("L_D")));
    CHECK(r.at("L_D") >= 0.0);
    CHECK(std::isfinite(r.at("L_total")));
  }
  CHECK(snapshot(tr.disc().d1_params()) != d1);
  CHECK(tr.disc().d1().layers()[0].state->u != u);
  const auto& seen = tr.gain_grad_seen();
  CHECK(seen.size() == 5);  // SA, three MSSA branches, BP
  for (const auto& [name, flag] : seen) CHECK_MESSAGE(flag, name);
}

TEST_CASE("fixed seeds reproduce loss records") {
  const Config cfg = tiny_config();
  Trainer a(cfg), b(cfg);
  for (int s = 0; s < 3; ++s) {
    const Batch batch = tiny_batch(cfg, 20 + s);
    CHECK(a.warmup_step(batch).terms == b.warmup_step(batch).terms);
  }
  a.begin_main_stage();
  b.begin_main_stage();
  const Batch batch = tiny_batch(cfg, 30);
  CHECK(a.main_step(batch).terms == b.main_step(batch).terms);
}

TEST_CASE("checkpoints round-trip exactly") {
  const Config cfg = tiny_config();
  testutil::TempDir dir;
  Trainer a(cfg);
  a.warmup_step(tiny_batch(cfg, 40));
  a.begin_main_stage();
  a.set_epoch(1);
  a.main_step(tiny_batch(cfg, 41));
  a.save_checkpoint(dir.path / "a.dgck");

  Trainer b(cfg);
  b.load_checkpoint(dir.path / "a.dgck");
  CHECK(snapshot(b.model().g1_params()) == snapshot(a.model().g1_params()));
  CHECK(snapshot(b.model().g2_params()) == snapshot(a.model().g2_params()));
  CHECK(snapshot(b.disc().d2_params()) == snapshot(a.disc().d2_params()));
  CHECK(b.disc().d2().layers()[3].state->u == a.disc().d2().layers()[3].state->u);
  CHECK(b.stage() == Stage::main);
  CHECK(b.epoch() == 1);
  CHECK(b.global_step() == 2);
  CHECK(lr_at(b.epoch(), cfg.train.g_lr, b.config().train) == lr_at(a.epoch(), cfg.train.g_lr, cfg.train));
  b.save_checkpoint(dir.path / "b.dgck");
  CHECK(slurp(dir.path / "a.dgck") == slurp(dir.path / "b.dgck"));

  // Continuing from the checkpoint matches continuing in memory.
  const Batch next = tiny_batch(cfg, 42);
  CHECK(a.main_step(next).terms == b.main_step(next).terms);

  CHECK(checkpoint_config(dir.path / "a.dgck").to_text() == cfg.to_text());
  DeepGin g(cfg.model);
  load_generator(g, load_archive(dir.path / "b.dgck"));

  Config other = cfg;
  other.train.seed = 77;
  Trainer c(other);
  CHECK_THROWS_AS(c.load_checkpoint(dir.path / "a.dgck"), IncompatibleCheckpointError);

  Archive tampered = load_archive(dir.path / "a.dgck");
  tampered.fingerprint ^= 1;
  save_archive(tampered, dir.path / "t.dgck");
  CHECK_THROWS_AS(b.load_checkpoint(dir.path / "t.dgck"), IncompatibleCheckpointError);
  CHECK_THROWS_AS(checkpoint_config(dir.path / "t.dgck"), IncompatibleCheckpointError);

  std::string bytes = slurp(dir.path / "a.dgck");
  bytes[bytes.size() / 3] ^= 0x01;
  std::ofstream(dir.path / "c.dgck", std::ios::binary) << bytes;
  CHECK_THROWS_AS(b.load_checkpoint(dir.path / "c.dgck"), FormatError);
}

TEST_CASE("run_training writes the log and per-epoch checkpoints") {
  Config cfg = tiny_config();
  cfg.train.warmup_epochs = 1;
  cfg.train.main_epochs = 2;
  cfg.train.const_epochs = 1;
  cfg.train.decay_epochs = 1;
  cfg.train.steps_per_epoch = 2;
  testutil::TempDir dir;
  Trainer tr(cfg);
  int calls = 0;
  TrainRunOptions opt;
  opt.out_dir = dir.path / "run";
  opt.on_step = [&](int, std::int64_t, const LossRecord&) { ++calls; };
  run_training(tr, tiny_images(3), opt);
  CHECK(calls == 6);
  for (const char* f : {"loss.csv", "latest.dgck", "ckpt_warmup_0.dgck", "ckpt_main_0.dgck", "ckpt_main_1.dgck"})
    CHECK_MESSAGE(std::filesystem::exists(opt.out_dir / f), f);
  std::ifstream csv(opt.out_dir / "loss.csv");
  std::string header, row;
  std::getline(csv, header);
  CHECK(header == "epoch,step,term,value");
  std::getline(csv, row);
  CHECK(row.rfind("0,1,L_hole,", 0) == 0);
  int rows = 1;
  while (std::getline(csv, row)) ++rows;
  CHECK(rows == 2 * 3 + 4 * 9);

  // Same seed, fresh run: identical log.
  Trainer again(cfg);
  TrainRunOptions opt2 = opt;
  opt2.out_dir = dir.path / "run2";
  opt2.on_step = nullptr;
  run_training(again, tiny_images(3), opt2);
  CHECK(slurp(opt.out_dir / "loss.csv") == slurp(opt2.out_dir / "loss.csv"));
  CHECK_THROWS_AS(run_training(again, {}, opt2), ArgumentError);
}

TEST_CASE("batch seeds separate stages, epochs and steps") {
  std::set<std::uint64_t> seen;
  for (Stage st : {Stage::warmup, Stage::main})
    for (int e = 0; e < 5; ++e)
      for (int s = 0; s < 5; ++s) seen.insert(batch_seed(3, st, e, s));
  CHECK(seen.size() == 50);
  CHECK(batch_seed(3, Stage::main, 1, 2) == batch_seed(3, Stage::main, 1, 2));
}
