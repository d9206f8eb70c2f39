#include <cmath>
#include <filesystem>
#include <fstream>

#include "deepgin/errors.hpp"
#include "deepgin/image.hpp"
#include "deepgin/png_io.hpp"
#include "deepgin/rng.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace deepgin;
namespace fs = std::filesystem;

TEST_CASE("png: 2x2 all-255 RGB decodes to ones") {
  testutil::TempDir dir;
  ImageTensor ones(2, 2, 3, 1.0);
  save_png(ones, dir.path / "a.png");
  const ImageTensor back = load_png(dir.path / "a.png");
  CHECK(back == ones);
}

TEST_CASE("png: gray pixel 128 replicates into three channels") {
  testutil::TempDir dir;
  ImageTensor gray(1, 1, 1, 128.0 / 255.0);
  save_png(gray, dir.path / "g.png");
  const ImageTensor back = load_png(dir.path / "g.png");
  REQUIRE(back.channels() == 3);
  for (int c = 0; c < 3; ++c) CHECK(back.at(c, 0, 0) == 128.0 / 255.0);
}

TEST_CASE("png: truncated file raises a format error") {
  testutil::TempDir dir;
  ImageTensor img = testutil::random_image(8, 8, 3);
  save_png(img, dir.path / "t.png");
  const auto size = fs::file_size(dir.path / "t.png");
  fs::resize_file(dir.path / "t.png", size / 2);
  CHECK_THROWS_AS(load_png(dir.path / "t.png"), FormatError);
  std::ofstream(dir.path / "junk.png") << "not a png";
  CHECK_THROWS_AS(load_png(dir.path / "junk.png"), FormatError);
  CHECK_THROWS_AS(load_png(dir.path / "missing.png"), IoError);
}

TEST_CASE("png: quantization rounds half up and round-trips within 1/510") {
  CHECK(quantize_unit(0.5) == 128);
  CHECK(quantize_unit(0.0) == 0);
  CHECK(quantize_unit(1.0) == 255);
  for (int b = 0; b < 256; ++b) CHECK(quantize_unit(b / 255.0) == b);
  testutil::TempDir dir;
  const ImageTensor img = testutil::random_image(17, 23, 3, 5);
  save_png(img, dir.path / "r.png");
  const ImageTensor back = load_png(dir.path / "r.png");
  double worst = 0;
  for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(img.data()[i] - back.data()[i]));
  CHECK(worst <= 1.0 / 510.0 + 1e-15);
}

TEST_CASE("png: unwritable path raises an I/O error") {
  CHECK_THROWS_AS(save_png(ImageTensor(2, 2, 3), "/nonexistent-dir/x.png"), IoError);
}

TEST_CASE("mask png round trip") {
  testutil::TempDir dir;
  MaskTensor m(5, 7);
  m.at(1, 2) = 1;
  m.at(4, 6) = 1;
  save_mask_png(m, dir.path / "m.png");
  CHECK(load_mask_png(dir.path / "m.png") == m);
}

TEST_CASE("resize_bilinear: identity, constants and a per-pixel oracle") {
  const ImageTensor img = testutil::random_image(12, 12, 3, 9);
  CHECK(resize_bilinear(img, 12, 12) == img);
  ImageTensor c(5, 9, 3, 0.3);
  const ImageTensor up = resize_bilinear(c, 13, 4);
  for (double v : up.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(resize_bilinear(img, 0, 4), ArgumentError);

  // [[0,1],[0,1]] → 4×4 against align-corners-false evaluated directly.
  ImageTensor two(2, 2, 1, std::vector<double>{0, 1, 0, 1});
  const ImageTensor r = resize_bilinear(two, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double sx = std::clamp((x + 0.5) * 0.5 - 0.5, 0.0, 1.0);
      CHECK(r.at(0, y, x) == doctest::Approx(sx).epsilon(1e-15));
    }
}

TEST_CASE("resize_bilinear output stays in the unit range") {
  const ImageTensor img = testutil::random_image(9, 14, 3, 2);
  CHECK(resize_bilinear(img, 31, 5).in_unit_range());
  CHECK(resize_bilinear(img, 3, 40).in_unit_range());
}

TEST_CASE("composite: mask selection and valid-pixel bit equality") {
  const ImageTensor out = testutil::random_image(8, 8, 3, 1);
  const ImageTensor gt = testutil::random_image(8, 8, 3, 2);
  CHECK(composite(out, gt, MaskTensor(8, 8, 1)) == out);
  CHECK(composite(out, gt, MaskTensor(8, 8, 0)) == gt);
  MaskTensor checker(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) checker.at(y, x) = (x + y) % 2;
  const ImageTensor r = composite(out, gt, checker);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) CHECK(r.at(c, y, x) == (checker.at(y, x) ? out.at(c, y, x) : gt.at(c, y, x)));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MaskTensor m = testutil::random_mask(8, 8, 100 + s);
    CHECK(composite(gt, gt, m) == gt);
  }
  CHECK_THROWS_AS(composite(out, gt, MaskTensor(4, 8)), ArgumentError);
}

TEST_CASE("scale4: constants, block means and global mean") {
  ImageTensor c(8, 12, 3, 0.4);
  const ImageTensor down_c = scale4(c, ScaleDirection::down);
  const ImageTensor up_c = scale4(c, ScaleDirection::up);
  for (double v : down_c.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));
  for (double v : up_c.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));
  const ImageTensor back = scale4(scale4(c, ScaleDirection::down), ScaleDirection::up);
  for (double v : back.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));

  ImageTensor ramp(4, 4, 1);
  for (int i = 0; i < 16; ++i) ramp.data()[i] = i / 15.0;
  const ImageTensor one = scale4(ramp, ScaleDirection::down);
  REQUIRE(one.size() == 1);
  CHECK(one.data()[0] == doctest::Approx(0.5).epsilon(1e-15));

  const ImageTensor img = testutil::random_image(16, 8, 3, 4);
  const ImageTensor down = scale4(img, ScaleDirection::down);
  double a = 0, b = 0;
  for (double v : img.data()) a += v;
  for (double v : down.data()) b += v;
  CHECK(a / img.size() == doctest::Approx(b / down.size()).epsilon(1e-13));
  CHECK_THROWS_AS(scale4(ImageTensor(6, 8, 3), ScaleDirection::down), ArgumentError);
}

TEST_CASE("zero_fill, resize_nearest and majority downsampling") {
  const ImageTensor gt = testutil::random_image(8, 8, 3, 6);
  const MaskTensor m = testutil::random_mask(8, 8, 7);
  const ImageTensor z = zero_fill(gt, m);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) CHECK(z.at(c, y, x) == (m.at(y, x) ? 0.0 : gt.at(c, y, x)));

  MaskTensor small(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1});
  const MaskTensor big = resize_nearest(small, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(big.at(y, x) == small.at(y / 2, x / 2));

  MaskTensor blocks(4, 8);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) blocks.at(y, x) = (x < 4) ? (y < 2) : (y < 1);
  const MaskTensor maj = downsample_majority(blocks, 4);
  CHECK(maj.at(0, 0) == 1);  // 8 of 16
  CHECK(maj.at(0, 1) == 0);  // 4 of 16
}
