#include <Eigen/Dense>
#include <cmath>

#include "deepgin/discriminators.hpp"
#include "deepgin/errors.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace deepgin;
using nn::Tensor;
using testutil::random_tensor;

namespace {

DiscConfig small_config() {
  DiscConfig c;
  c.widths = {8, 16, 16};
  return c;
}

void init(MultiScaleDiscriminator& d, std::uint64_t seed) {
  nn::init_weights(d.d1_params(), 1.0, seed);
  nn::init_weights(d.d2_params(), 1.0, seed + 1);
}

bool identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// Input rows [lo, hi] reached by output row o of a conv with kernel k,
// stride s and leading pad p.
struct Interval {
  int lo, hi;
};
Interval pull_back(Interval out, int k, int s, int p) { return {out.lo * s - p, out.hi * s - p + k - 1}; }

}  // namespace

TEST_CASE("patch maps are a quarter of the input at both scales") {
  MultiScaleDiscriminator d(small_config());
  init(d, 1);
  for (int side : {32, 48, 64}) {
    Tensor a = random_tensor({2, 3, side, side}, 2, 0, 1, false);
    Tensor b = random_tensor({2, 3, side, side}, 3, 0, 1, false);
    const PatchMaps maps = d.forward(a, b, false);
    CHECK(maps.full.shape() == nn::Shape{2, 1, side / 4, side / 4});
    CHECK(maps.half.shape() == nn::Shape{2, 1, side / 8, side / 8});
  }
  CHECK_THROWS_AS(d.forward(Tensor({1, 3, 32, 32}), Tensor({1, 3, 16, 16}), false), ArgumentError);
  CHECK_THROWS_AS(d.forward(Tensor({1, 3, 30, 30}), Tensor({1, 3, 30, 30}), false), ArgumentError);
}

TEST_CASE("reference input size gives 64x64 and 32x32 maps") {
  DiscConfig c;
  c.widths = {4, 4, 4};
  MultiScaleDiscriminator d(c);
  init(d, 2);
  Tensor a = random_tensor({1, 3, 256, 256}, 4, 0, 1, false);
  nn::NoGradGuard guard;
  const PatchMaps maps = d.forward(a, a, false);
  CHECK(maps.full.shape() == nn::Shape{1, 1, 64, 64});
  CHECK(maps.half.shape() == nn::Shape{1, 1, 32, 32});
}

TEST_CASE("zero weights give a zero map") {
  MultiScaleDiscriminator d(small_config());
  nn::init_weights(d.d1_params(), 0.0, 1);
  nn::init_weights(d.d2_params(), 0.0, 1);
  Tensor a = random_tensor({1, 3, 32, 32}, 5, 0, 1, false);
  const PatchMaps maps = d.forward(a, a, true);
  for (double v : maps.full.values()) CHECK(v == 0.0);
  for (double v : maps.half.values()) CHECK(v == 0.0);
}

TEST_CASE("batch permutation permutes the outputs") {
  MultiScaleDiscriminator d(small_config());
  init(d, 3);
  const int n = 3, side = 32, per = 3 * side * side;
  Tensor a = random_tensor({n, 3, side, side}, 6, 0, 1, false);
  Tensor b = random_tensor({n, 3, side, side}, 7, 0, 1, false);
  const int perm[] = {2, 0, 1};
  Tensor pa({n, 3, side, side}), pb({n, 3, side, side});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < per; ++j) {
      pa.values()[i * per + j] = a.values()[perm[i] * per + j];
      pb.values()[i * per + j] = b.values()[perm[i] * per + j];
    }
  const PatchMaps m = d.forward(a, b, false);
  const PatchMaps pm = d.forward(pa, pb, false);
  for (auto [orig, permuted] : {std::pair{m.full, pm.full}, std::pair{m.half, pm.half}}) {
    const int cells = static_cast<int>(orig.numel()) / n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < cells; ++j) CHECK(permuted.values()[i * cells + j] == orig.values()[perm[i] * cells + j]);
  }
}

TEST_CASE("evaluation mode is deterministic and leaves the spectral state alone") {
  MultiScaleDiscriminator d(small_config());
  init(d, 4);
  Tensor a = random_tensor({1, 3, 32, 32}, 8, 0, 1, false);
  d.forward(a, a, true);  // prime
  const auto u = d.d1().layers()[0].state->u;
  const PatchMaps first = d.forward(a, a, false);
  const PatchMaps second = d.forward(a, a, false);
  CHECK(identical(first.full, second.full));
  CHECK(identical(first.half, second.half));
  CHECK(d.d1().layers()[0].state->u == u);
}

TEST_CASE("the two critics do not share weights") {
  MultiScaleDiscriminator d(small_config());
  init(d, 5);
  CHECK(d.d1_params().count() == disc_param_count(small_config()));
  CHECK(d.d2_params().count() == disc_param_count(small_config()));
  d.d1_params().params()[0].tensor.values()[0] += 1.0;
  CHECK(d.d1_params().params()[0].tensor.values()[0] != d.d2_params().params()[0].tensor.values()[0]);
}

TEST_CASE("effective weights have unit top singular value after power iterations") {
  MultiScaleDiscriminator d(small_config());
  init(d, 6);
  Tensor a = random_tensor({1, 3, 32, 32}, 9, 0, 1, false);
  for (int i = 0; i < 8; ++i) d.forward(a, a, true);
  for (PatchDiscriminator* pd : {&d.d1(), &d.d2()})
    for (auto& layer : pd->layers()) {
      Tensor w = layer.normalized_weight();
      const int rows = w.dim(0), cols = static_cast<int>(w.numel()) / rows;
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(w.values().data(), rows,
                                                                                                  cols);
      const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
      CHECK(s >= 0.95);
      CHECK(s <= 1.05);
    }
}

TEST_CASE("zeroing a 4x4 patch changes only its receptive neighbourhood") {
  DiscConfig c = small_config();
  nn::ParamRegistry reg;
  PatchDiscriminator pd(reg, "d", c, 7);
  nn::init_weights(reg, 1.0, 8);
  const int side = 48;
  Tensor a = random_tensor({1, 3, side, side}, 10, 0.1, 1, false);
  Tensor img = random_tensor({1, 3, side, side}, 11, 0.1, 1, false);
  Tensor cut = img.clone();
  const int p0 = 20;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = p0; y < p0 + 4; ++y)
      for (int x = p0; x < p0 + 4; ++x) cut.values()[(ch * side + y) * side + x] = 0.0;

  // Compose the four layers' footprints: (kernel, stride, leading pad).
  const int geometry[4][3] = {{4, 2, 1}, {4, 2, 1}, {4, 1, 1}, {4, 1, 1}};
  const int out_side = side / 4;
  std::vector<bool> may_change(out_side, false);
  for (int o = 0; o < out_side; ++o) {
    Interval r{o, o};
    for (int l = 3; l >= 0; --l) r = pull_back(r, geometry[l][0], geometry[l][1], geometry[l][2]);
    may_change[o] = r.lo <= p0 + 3 && r.hi >= p0;
  }
  const Tensor before = pd.forward(a, img, false), after = pd.forward(a, cut, false);
  int changed = 0;
  for (int y = 0; y < out_side; ++y)
    for (int x = 0; x < out_side; ++x) {
      const bool diff = before.values()[y * out_side + x] != after.values()[y * out_side + x];
      changed += diff;
      if (diff) CHECK((may_change[y] && may_change[x]));
    }
  CHECK(changed > 0);
  int bound = 0;
  for (bool b : may_change) bound += b;
  CHECK(bound < out_side);
}

TEST_CASE("input gradients flow through both maps") {
  MultiScaleDiscriminator d(small_config());
  init(d, 12);
  Tensor a = random_tensor({1, 3, 16, 16}, 13, 0, 1, false);
  Tensor img = random_tensor({1, 3, 16, 16}, 14);
  d.forward(a, img, true);  // settle the spectral estimates
  for (bool use_full : {true, false}) {
    auto f = [&] {
      const PatchMaps maps = d.forward(a, img, false);
      return testutil::project(use_full ? maps.full : maps.half);
    };
    img.zero_grad();
    f().backward();
    const std::vector<double> g(img.grad().begin(), img.grad().end());
    nn::NoGradGuard guard;
    for (std::size_t i : {std::size_t{5}, std::size_t{300}, std::size_t{700}}) {
      const double h = 1e-5, orig = img.values()[i];
      img.values()[i] = orig + h;
      const double fp = f().item();
      img.values()[i] = orig - h;
      const double fm = f().item();
      img.values()[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      CHECK(g[i] != 0.0);
      CHECK(std::abs(g[i] - numeric) <= 1e-5 * std::max(1.0, std::abs(numeric)));
    }
  }
}
