#include <cmath>
#include <map>

#include "deepgin/errors.hpp"
#include "deepgin/generators.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace deepgin;
using nn::Tensor;
using testutil::random_tensor;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.base_width = 4;
  c.image_size = 32;
  return c;
}

GeneratorConfig paper_config(nn::BlockKind kind) {
  GeneratorConfig c;
  c.block = kind;
  return c;
}

Tensor random_mask_tensor(int n, int size, std::uint64_t seed) {
  std::vector<MaskTensor> masks;
  for (int i = 0; i < n; ++i) masks.push_back(testutil::random_mask(size, size, seed + i));
  return to_tensor(masks);
}

void randomize(nn::ParamRegistry& reg, std::uint64_t seed, double amp) {
  CounterRng rng(seed);
  for (auto& p : reg.params())
    for (double& v : p.tensor.values()) v = rng.uniform(-amp, amp);
}

bool all_in_unit(const Tensor& t) {
  for (double v : t.values())
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return true;
}

bool identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

double delta_m(std::size_t with, std::size_t without) {
  return (static_cast<double>(with) - static_cast<double>(without)) / 1e6;
}

}  // namespace

TEST_CASE("back projection closed forms") {
  Tensor gamma({3}, 1.0);
  Tensor i_pre({1, 3, 16, 16}, 0.5);
  Tensor i_lr({1, 3, 4, 4}, 0.75);
  const Tensor lifted = back_project(i_pre, i_lr, gamma);
  for (double v : lifted.values()) CHECK(v == 0.75);

  Tensor pre = random_tensor({2, 3, 16, 16}, 1, 0, 1, false);
  Tensor lr = random_tensor({2, 3, 4, 4}, 2, 0, 1, false);
  CHECK(identical(back_project(pre, lr, Tensor({3}, 0.0)), pre));
  Tensor consistent = nn::avg_pool(pre, 4);
  Tensor out = back_project(pre, consistent, random_tensor({3}, 3, -2, 2, false));
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.values()[i] == doctest::Approx(pre.values()[i]).epsilon(1e-12));

  // Large residual weights saturate at the unit-range bounds.
  Tensor big = back_project(pre, lr, Tensor({3}, 50.0));
  CHECK(all_in_unit(big));
  CHECK_THROWS_AS(back_project(pre, Tensor({2, 3, 8, 8}), gamma), ArgumentError);
}

TEST_CASE("multi-scale attention: residual identity and shape") {
  nn::ParamRegistry reg;
  Mssa mssa(reg, "m", 16);
  randomize(reg, 4, 0.3);
  for (auto* sa : {&mssa.sa_a, &mssa.sa_b, &mssa.sa_c}) sa->gamma.values()[0] = 0.0;
  for (double& v : mssa.fuse.weight.values()) v = 0.0;
  for (double& v : mssa.fuse.bias.values()) v = 0.0;
  for (int n = 1; n <= 4; ++n) {
    Tensor f = random_tensor({n, 16, 8, 8}, 10 + n, -1, 1, false);
    Tensor y = mssa.forward(f);
    CHECK(identical(y, f));
  }
  randomize(reg, 5, 0.3);
  Tensor f = random_tensor({3, 16, 8, 8}, 20, -1, 1, false);
  CHECK(mssa.forward(f).shape() == f.shape());
  CHECK(reg.count() == mssa_param_count(16));
  CHECK_THROWS_AS(mssa.forward(random_tensor({1, 16, 6, 6}, 1, -1, 1, false)), ArgumentError);
}

TEST_CASE("multi-scale attention gradient") {
  nn::ParamRegistry reg;
  Mssa mssa(reg, "m", 8);
  randomize(reg, 6, 0.4);
  Tensor f = random_tensor({1, 8, 8, 8}, 7);
  auto fn = [&] { return testutil::project(mssa.forward(f)); };
  CHECK(testutil::grad_rel_error(fn, f) < 1e-4);
  CHECK(testutil::grad_rel_error(fn, mssa.sa_c.gamma) < 1e-4);
  CHECK(testutil::grad_rel_error(fn, mssa.reduce_b.weight) < 1e-4);
}

TEST_CASE("generator outputs: shapes and unit range for any weights") {
  const GeneratorConfig cfg = tiny_config();
  DeepGin model(cfg);
  Tensor i_in = random_tensor({2, 3, 32, 32}, 1, 0, 1, false);
  Tensor m = random_mask_tensor(2, 32, 2);
  for (double amp : {0.05, 1.0, 5.0}) {
    randomize(model.g1_params(), 3, amp);
    randomize(model.g2_params(), 4, amp);
    const InpaintResult r = model.forward(i_in, m);
    CHECK(r.i_coarse.shape() == nn::Shape{2, 3, 32, 32});
    CHECK(r.i_out.shape() == nn::Shape{2, 3, 32, 32});
    CHECK(r.i_lr.shape() == nn::Shape{2, 3, 8, 8});
    CHECK(all_in_unit(r.i_coarse));
    CHECK(all_in_unit(r.i_out));
    CHECK(all_in_unit(r.i_lr));
    CHECK(identical(r.i_compltd, r.i_out));
  }
  CHECK_THROWS_AS(model.forward(random_tensor({1, 3, 16, 16}, 1, 0, 1, false), random_mask_tensor(1, 16, 1)),
                  ArgumentError);
  CHECK_THROWS_AS(model.forward(i_in, random_mask_tensor(1, 32, 1)), ArgumentError);
  CHECK_THROWS_AS(model.forward(i_in, m, Tensor({2, 3, 16, 16})), ArgumentError);
}

TEST_CASE("generators are deterministic for a fixed seed") {
  const GeneratorConfig cfg = tiny_config();
  DeepGin a(cfg), b(cfg);
  for (DeepGin* g : {&a, &b}) {
    nn::init_weights(g->g1_params(), 0.1, 11, nn::in_residual_block);
    nn::init_weights(g->g2_params(), 0.1, 12, nn::in_residual_block);
  }
  Tensor i_in = random_tensor({1, 3, 32, 32}, 5, 0, 1, false);
  Tensor m = random_mask_tensor(1, 32, 6);
  nn::NoGradGuard guard;
  const InpaintResult ra = a.forward(i_in, m), rb = b.forward(i_in, m);
  CHECK(identical(ra.i_out, rb.i_out));
  CHECK(identical(ra.i_coarse, rb.i_coarse));
  CHECK(identical(a.forward(i_in, m).i_out, ra.i_out));
}

TEST_CASE("zero attention and projection gains reduce G2 to its plain path") {
  GeneratorConfig full = tiny_config();
  GeneratorConfig plain = full;
  plain.use_sa = plain.use_mssa = plain.use_bp = false;
  DeepGin with(full), without(plain);
  nn::init_weights(with.g1_params(), 0.1, 21, nn::in_residual_block);
  nn::init_weights(with.g2_params(), 0.1, 22, nn::in_residual_block);
  // Give the lr head something to say so that a nonzero γ_bp would show.
  randomize(with.g2_params(), 23, 0.2);
  std::map<std::string, Tensor> by_name;
  for (auto& p : with.g1_params().params()) by_name.emplace(p.name, p.tensor);
  for (auto& p : with.g2_params().params()) by_name.emplace(p.name, p.tensor);
  for (auto& [name, t] : by_name) {
    if (name.ends_with(".gamma") || name.starts_with("g2.mssa.fuse"))
      for (double& v : t.values()) v = 0.0;
  }
  for (auto* reg : {&without.g1_params(), &without.g2_params()})
    for (auto& p : reg->params()) {
      auto src = by_name.at(p.name).values();
      std::copy(src.begin(), src.end(), p.tensor.values().begin());
    }
  Tensor i_in = random_tensor({2, 3, 32, 32}, 24, 0, 1, false);
  Tensor m = random_mask_tensor(2, 32, 25);
  nn::NoGradGuard guard;
  CHECK(identical(with.forward(i_in, m).i_out, without.forward(i_in, m).i_out));
}

TEST_CASE("composite keeps valid ground-truth pixels bit-exact") {
  DeepGin model(tiny_config());
  nn::init_weights(model.g1_params(), 0.1, 31, nn::in_residual_block);
  nn::init_weights(model.g2_params(), 0.1, 32, nn::in_residual_block);
  Tensor gt = random_tensor({2, 3, 32, 32}, 33, 0, 1, false);
  Tensor m = random_mask_tensor(2, 32, 34);
  Tensor i_in = nn::select(m, Tensor(gt.shape(), 0.0), gt);
  const InpaintResult r = model.forward(i_in, m, gt);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 32 * 32; ++p) {
        const std::size_t i = (n * 3 + c) * 1024 + p;
        const bool hole = m.values()[n * 1024 + p] != 0.0;
        CHECK(r.i_compltd.values()[i] == (hole ? r.i_out.values()[i] : gt.values()[i]));
      }
  const InpaintResult none = model.forward(gt, Tensor({2, 1, 32, 32}, 0.0), gt);
  CHECK(identical(none.i_compltd, gt));
}

TEST_CASE("end-to-end gradients reach both generators") {
  DeepGin model(tiny_config());
  nn::init_weights(model.g1_params(), 0.1, 41, nn::in_residual_block);
  nn::init_weights(model.g2_params(), 0.1, 42, nn::in_residual_block);
  Tensor i_in = random_tensor({1, 3, 32, 32}, 43, 0, 1, false);
  Tensor m = random_mask_tensor(1, 32, 44);
  auto loss = [&] { return nn::sum(model.forward(i_in, m).i_out); };
  loss().backward();

  struct Probe {
    nn::ParamRegistry* reg;
    const char* name;
    std::size_t index;
  };
  const Probe probes[] = {{&model.g1_params(), "g1.stem.weight", 17},
                          {&model.g1_params(), "g1.block2.conv2.weight", 5},
                          {&model.g2_params(), "g2.out.weight", 40}};
  for (const Probe& p : probes) {
    Tensor w;
    for (auto& q : p.reg->params())
      if (q.name == p.name) w = q.tensor;
    REQUIRE(w.defined());
    const double analytic = w.grad()[p.index];
    CHECK(analytic != 0.0);
    nn::NoGradGuard guard;
    const double h = 1e-5, orig = w.values()[p.index];
    w.values()[p.index] = orig + h;
    const double fp = loss().item();
    w.values()[p.index] = orig - h;
    const double fm = loss().item();
    w.values()[p.index] = orig;
    const double numeric = (fp - fm) / (2 * h);
    CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(analytic), std::abs(numeric)));
  }
}

TEST_CASE("parameter tallies match the registries") {
  for (nn::BlockKind kind : {nn::BlockKind::standard, nn::BlockKind::dilated, nn::BlockKind::spd})
    for (bool toggle : {false, true}) {
      GeneratorConfig c = tiny_config();
      c.base_width = 8;
      c.block = kind;
      c.use_sa = c.use_bp = toggle;
      c.use_mssa = !toggle;
      DeepGin model(c);
      CHECK(model.g1_params().count() == g1_param_count(c));
      CHECK(model.g2_params().count() == g2_param_count(c));
    }
}

TEST_CASE("reference-width parameter deltas and total") {
  GeneratorConfig base = paper_config(nn::BlockKind::standard);
  base.use_sa = base.use_mssa = base.use_bp = false;
  GeneratorConfig sa = base;
  sa.use_sa = true;
  GeneratorConfig mssa = sa;
  mssa.use_mssa = true;
  GeneratorConfig bp = mssa;
  bp.use_bp = true;
  // Reported increments: +0.526M (SA), +1.516M (MSSA), +0.038M (BP).
  CHECK(std::abs(delta_m(g2_param_count(sa), g2_param_count(base)) - 0.526) <= 0.1 * 0.526);
  CHECK(std::abs(delta_m(g2_param_count(mssa), g2_param_count(sa)) - 1.516) <= 0.1 * 1.516);
  CHECK(std::abs(delta_m(g2_param_count(bp), g2_param_count(mssa)) - 0.038) <= 0.1 * 0.038);

  const GeneratorConfig full = paper_config(nn::BlockKind::spd);
  const double total = (g1_param_count(full) + g2_param_count(full)) / 1e6;
  CHECK(std::abs(total - 42.930) <= 0.15 * 42.930);
  // SPD keeps the standard block's tally.
  CHECK(g2_param_count(full) == g2_param_count(bp));
}

TEST_CASE("config validation") {
  GeneratorConfig c = tiny_config();
  c.image_size = 40;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.base_width = 3;  // 12 bottleneck channels over 8 rates
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(DeepGin{c}, ConfigError);
}

TEST_CASE("image tensor adapters round-trip") {
  std::vector<ImageTensor> imgs{testutil::random_image(5, 6, 3, 1), testutil::random_image(5, 6, 3, 2)};
  Tensor t = to_tensor(imgs);
  CHECK(t.shape() == nn::Shape{2, 3, 5, 6});
  CHECK(to_image(t, 1) == imgs[1]);
  CHECK_THROWS_AS(to_image(t, 2), ArgumentError);
  imgs.push_back(testutil::random_image(6, 6, 3, 3));
  CHECK_THROWS_AS(to_tensor(imgs), ArgumentError);
}
