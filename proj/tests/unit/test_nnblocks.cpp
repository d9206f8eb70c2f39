#include <Eigen/Dense>
#include <cmath>

#include "deepgin/errors.hpp"
#include "deepgin/nnblocks.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace deepgin;
using namespace deepgin::nn;
using testutil::grad_rel_error;
using testutil::project;
using testutil::random_tensor;

namespace {

void fill_random(ParamRegistry& reg, std::uint64_t seed, double amp = 0.3) {
  CounterRng rng(seed);
  for (auto& p : reg.params())
    for (double& v : p.tensor.values()) v = rng.uniform(-amp, amp);
}

void fill_zero(ParamRegistry& reg) {
  for (auto& p : reg.params())
    for (double& v : p.tensor.values()) v = 0.0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

double top_singular_value(const Tensor& w) {
  const int rows = w.dim(0);
  const int cols = static_cast<int>(w.numel()) / rows;
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = w.values()[r * cols + c];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace

TEST_CASE("registry rejects duplicate names and counts scalars") {
  ParamRegistry reg;
  reg.add("a.weight", {2, 3}, ParamKind::conv_weight, 3);
  CHECK_THROWS_AS(reg.add("a.weight", {1}, ParamKind::bias), ArgumentError);
  reg.add("a.bias", {2}, ParamKind::bias);
  CHECK(reg.count() == 8);
  REQUIRE(reg.find("a.bias") != nullptr);
  CHECK(reg.find("missing") == nullptr);
  auto& st = reg.add_spectral("sn", 4, 6, 11);
  double n = 0;
  for (double v : st.u) n += v * v;
  CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("init_weights: fan-in scaled std, zero biases, determinism") {
  ParamRegistry reg;
  Conv2d c(reg, "c", 64, 32, 3, Conv2dOptions::same(1));  // 18432 weights
  SaBlock sa(reg, "sa", 4);
  init_weights(reg, 0.1, 5);
  double s2 = 0;
  for (double v : c.weight.values()) s2 += v * v;
  const double std = std::sqrt(s2 / c.weight.numel());
  const double expect = 0.1 * std::sqrt(2.0 / (64 * 9));
  CHECK(std::abs(std - expect) < 0.1 * expect);
  for (double v : c.bias.values()) CHECK(v == 0.0);
  CHECK(sa.gamma.values()[0] == 0.0);

  ParamRegistry reg2;
  Conv2d c2(reg2, "c", 64, 32, 3, Conv2dOptions::same(1));
  SaBlock sa2(reg2, "sa", 4);
  init_weights(reg2, 0.1, 5);
  CHECK(std::equal(c.weight.values().begin(), c.weight.values().end(), c2.weight.values().begin()));
  init_weights(reg2, 0.0, 5);
  for (double v : c2.weight.values()) CHECK(v == 0.0);
}

TEST_CASE("init_weights: scale restricted to residual blocks") {
  ParamRegistry reg;
  Conv2d stem(reg, "g.stem", 64, 32, 3, Conv2dOptions::same(1));
  ResBlock block(reg, "g.block0", 32, BlockKind::standard, {});
  init_weights(reg, 0.1, 9, in_residual_block);
  auto rms = [](const Tensor& t) {
    double s = 0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s / t.numel());
  };
  CHECK(rms(stem.weight) == doctest::Approx(std::sqrt(2.0 / (64 * 9))).epsilon(0.1));
  CHECK(rms(block.conv2.weight) == doctest::Approx(0.1 * std::sqrt(2.0 / (32 * 9))).epsilon(0.1));
}

TEST_CASE("residual blocks: zero weights are the identity and shapes are preserved") {
  for (BlockKind kind : {BlockKind::standard, BlockKind::dilated, BlockKind::spd}) {
    ParamRegistry reg;
    ResBlock b(reg, "b", 8, kind, {1, 2, 4, 8});
    Tensor x = random_tensor({2, 8, 5, 7}, 3, -1, 1, false);
    fill_zero(reg);
    Tensor y = b.forward(x);
    CHECK(y.shape() == x.shape());
    CHECK(max_abs_diff(x, y) == 0.0);
    fill_random(reg, 4);
    CHECK(b.forward(x).shape() == x.shape());
  }
}

TEST_CASE("1x1x3x3 convolution with hand-set weights") {
  ParamRegistry reg;
  Conv2d c = Conv2d::same(reg, "c", 1, 1, 3);
  for (int i = 0; i < 9; ++i) c.weight.values()[i] = i + 1;  // 1..9
  c.bias.values()[0] = 0.5;
  Tensor x({1, 1, 3, 3}, std::vector<double>{1, 0, 0, 0, 2, 0, 0, 0, 3});
  Tensor y = c.forward(x);
  // Centre: 1·1 + 5·2 + 9·3 = 38; corner (0,0): taps 5·1 + 9·2 = 23.
  CHECK(y.values()[4] == 38.5);
  CHECK(y.values()[0] == 23.5);
  // Corner (2,2): taps 1·1 + 5·3 ... with padding: w[0]·x[1,1] + w[4]·x[2,2] = 2 + 15.
  CHECK(y.values()[8] == 17.5);
}

TEST_CASE("SPD with one rate equals the standard block under copied weights") {
  ParamRegistry ra, rb;
  ResBlock std_block(ra, "s", 6, BlockKind::standard, {});
  ResBlock spd_block(rb, "p", 6, BlockKind::spd, {1});
  fill_random(ra, 7);
  for (std::size_t i = 0; i < ra.params().size(); ++i) {
    auto src = ra.params()[i].tensor.values();
    auto dst = rb.params()[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  Tensor x = random_tensor({1, 6, 6, 6}, 8, -1, 1, false);
  CHECK(max_abs_diff(std_block.forward(x), spd_block.forward(x)) == 0.0);
}

TEST_CASE("dilated first conv spans a 5x5 footprint") {
  ParamRegistry reg;
  ResBlock b(reg, "d", 2, BlockKind::dilated, {});
  fill_zero(reg);
  for (double& v : b.branches[0].weight.values()) v = 1.0;
  Tensor x({1, 2, 11, 11}, 0.0);
  x.values()[5 * 11 + 5] = 1.0;
  Tensor h = b.branches[0].forward(x);
  int ymin = 99, ymax = -1, xmin = 99, xmax = -1;
  for (int y = 0; y < 11; ++y)
    for (int xx = 0; xx < 11; ++xx)
      if (h.values()[y * 11 + xx] != 0.0) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, xx);
        xmax = std::max(xmax, xx);
      }
  CHECK(ymax - ymin + 1 == 5);
  CHECK(xmax - xmin + 1 == 5);
}

TEST_CASE("parameter parity across block kinds") {
  CHECK(resblock_param_count(256, BlockKind::standard, 1) == 1180160);
  CHECK(resblock_param_count(256, BlockKind::spd, 4) == 1180160);
  for (int c : {32, 64, 256})
    for (int k : {1, 2, 4, 8}) {
      ParamRegistry a, b;
      ResBlock(a, "a", c, BlockKind::standard, {});
      std::vector<int> rates(k);
      for (int i = 0; i < k; ++i) rates[i] = i + 1;
      ResBlock(b, "b", c, BlockKind::spd, rates);
      CHECK(a.count() == b.count());
      CHECK(b.count() == resblock_param_count(c, BlockKind::spd, k));
    }
  ParamRegistry d;
  ResBlock(d, "d", 64, BlockKind::dilated, {});
  CHECK(d.count() == resblock_param_count(64, BlockKind::standard, 1));
  ParamRegistry bad;
  CHECK_THROWS_AS(ResBlock(bad, "x", 6, BlockKind::spd, {1, 2, 4, 8}), ConfigError);
}

TEST_CASE("attention block: gamma zero, row sums, single position") {
  ParamRegistry reg;
  SaBlock sa(reg, "sa", 6);
  fill_random(reg, 12);
  sa.gamma.values()[0] = 0.0;
  Tensor x = random_tensor({2, 6, 3, 4}, 13, -1, 1, false);
  CHECK(max_abs_diff(sa.forward(x), x) == 0.0);

  Tensor attn = sa.attention(x);
  for (int r = 0; r < 2 * 12; ++r) {
    double total = 0;
    for (int j = 0; j < 12; ++j) total += attn.values()[r * 12 + j];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  // One position: attention is [[1]] so y = x + γ·(W_out·(W_g·x + b_g) + b_out).
  sa.gamma.values()[0] = 0.7;
  Tensor p = random_tensor({1, 6, 1, 1}, 14, -1, 1, false);
  Tensor y = sa.forward(p);
  const auto wg = sa.g.weight.values(), bg = sa.g.bias.values();
  const auto wo = sa.out.weight.values(), bo = sa.out.bias.values();
  std::vector<double> v(3);
  for (int r = 0; r < 3; ++r) {
    v[r] = bg[r];
    for (int c = 0; c < 6; ++c) v[r] += wg[r * 6 + c] * p.values()[c];
  }
  for (int c = 0; c < 6; ++c) {
    double o = bo[c];
    for (int r = 0; r < 3; ++r) o += wo[c * 3 + r] * v[r];
    CHECK(y.values()[c] == doctest::Approx(p.values()[c] + 0.7 * o).epsilon(1e-12));
  }
}

TEST_CASE("attention parameter tally") {
  const int c = 256, r = c / 2;
  const std::size_t expect = 3 * (c * r + r) + (r * c + c) + 1;
  CHECK(sa_param_count(c) == expect);
  ParamRegistry reg;
  SaBlock(reg, "sa", c);
  CHECK(reg.count() == expect);
}

TEST_CASE("spectral normalization: rank one, SVD oracle, scale invariance, linearity") {
  {
    ParamRegistry reg;
    SnConv2d sn(reg, "r1", 2, 3, 1, {}, 4);
    // W = a bᵀ with a = (1,2,2), b = (3,4) → σ = 3·5 = 15.
    const double a[] = {1, 2, 2}, b[] = {3, 4};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 2; ++c) sn.weight.values()[r * 2 + c] = a[r] * b[c];
    sn.power_iterate();
    double sigma = 0;
    sn.normalized_weight(&sigma);
    CHECK(sigma == doctest::Approx(15.0).epsilon(1e-12));
  }
  ParamRegistry reg;
  SnConv2d sn(reg, "sn", 6, 8, 4, {2, 1, 1, 1, 1, 1}, 21);
  init_weights(reg, 1.0, 22);
  for (int i = 0; i < 5; ++i) sn.power_iterate();
  Tensor wbar = sn.normalized_weight();
  const double s = top_singular_value(wbar);
  CHECK(s >= 0.95);
  CHECK(s <= 1.05);

  // Same starting estimate, weights ×10: one more step gives the same W̄.
  const SpectralState saved = *sn.state;
  sn.power_iterate();
  Tensor before = sn.normalized_weight().clone();
  *sn.state = saved;
  for (double& v : sn.weight.values()) v *= 10.0;
  sn.power_iterate();
  CHECK(max_abs_diff(sn.normalized_weight(), before) < 1e-12);

  Tensor x1 = random_tensor({1, 6, 8, 8}, 30, -1, 1, false);
  Tensor x2 = random_tensor({1, 6, 8, 8}, 31, -1, 1, false);
  for (double& v : sn.bias.values()) v = 0.0;
  Tensor lhs = sn.forward(add(scale(x1, 2.0), x2), false);
  Tensor rhs = add(scale(sn.forward(x1, false), 2.0), sn.forward(x2, false));
  CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("evaluation-mode forwards leave the spectral state alone") {
  ParamRegistry reg;
  SnConv2d sn(reg, "sn", 3, 4, 3, Conv2dOptions::same(1), 5);
  init_weights(reg, 1.0, 6);
  sn.power_iterate();
  const auto u = sn.state->u;
  Tensor x = random_tensor({1, 3, 5, 5}, 7, -1, 1, false);
  sn.forward(x, false);
  CHECK(sn.state->u == u);
  sn.forward(x, true);
  CHECK(sn.state->u != u);
}

TEST_CASE("block gradients match central differences") {
  Tensor x = random_tensor({2, 8, 6, 6}, 40);
  for (BlockKind kind : {BlockKind::standard, BlockKind::dilated, BlockKind::spd}) {
    ParamRegistry reg;
    ResBlock b(reg, "b", 8, kind, {1, 2, 4, 8});
    fill_random(reg, 41);
    auto f = [&] { return project(b.forward(x)); };
    CHECK(grad_rel_error(f, x) < 1e-4);
    CHECK(grad_rel_error(f, b.branches.back().weight) < 1e-4);
    CHECK(grad_rel_error(f, b.conv2.weight) < 1e-4);
    CHECK(grad_rel_error(f, b.conv2.bias) < 1e-4);
  }
  ParamRegistry reg;
  SaBlock sa(reg, "sa", 8);
  fill_random(reg, 42);
  sa.gamma.values()[0] = 0.5;
  auto f = [&] { return project(sa.forward(x)); };
  CHECK(grad_rel_error(f, x) < 1e-4);
  CHECK(grad_rel_error(f, sa.theta.weight) < 1e-4);
  CHECK(grad_rel_error(f, sa.phi.weight) < 1e-4);
  CHECK(grad_rel_error(f, sa.g.weight) < 1e-4);
  CHECK(grad_rel_error(f, sa.out.weight) < 1e-4);
  CHECK(grad_rel_error(f, sa.gamma) < 1e-4);
}

TEST_CASE("block kind names") {
  CHECK(parse_block_kind("spd") == BlockKind::spd);
  CHECK(std::string(to_string(BlockKind::dilated)) == "dilated");
  CHECK(parse_block_kind(to_string(BlockKind::standard)) == BlockKind::standard);
  CHECK_THROWS_AS(parse_block_kind("dense"), ConfigError);
}
