#include "deepgin/discriminators.hpp"

#include <string>

#include "deepgin/errors.hpp"

namespace deepgin {

using nn::Tensor;
using nn::shape_string;

namespace {

// Stride-1 layers pad one pixel before and two after so a 4×4 kernel keeps
// the spatial size.
nn::Conv2dOptions layer_options(int stride) {
  if (stride == 2) return nn::Conv2dOptions::same(1, 1, 2);
  return {1, 1, 1, 1, 2, 2};
}

}  // namespace

PatchDiscriminator::PatchDiscriminator(nn::ParamRegistry& reg, const std::string& name,
                                       const DiscConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.widths.size() != 3 || cfg.out_channels < 1) {
    throw ConfigError("discriminator needs three hidden widths and a positive output width");
  }
  const int strides[] = {2, 2, 1, 1};
  int in = 6;
  layers_.reserve(4);
  for (int i = 0; i < 4; ++i) {
    const int out = i < 3 ? cfg.widths[i] : cfg.out_channels;
    layers_.emplace_back(reg, name + ".conv" + std::to_string(i), in, out, 4,
                         layer_options(strides[i]), seed);
    in = out;
  }
}

Tensor PatchDiscriminator::forward(const Tensor& i_in, const Tensor& i, bool training) {
  if (i_in.shape() != i.shape() || i.ndim() != 4 || i.dim(1) != 3) {
    throw ArgumentError("discriminator inputs must be matching [N,3,H,W] images, got " +
                        shape_string(i_in.shape()) + " and " + shape_string(i.shape()));
  }
  if (i.dim(2) % 4 != 0 || i.dim(3) % 4 != 0) {
    throw ArgumentError("discriminator input size must be divisible by 4");
  }
  Tensor h = nn::concat_channels({i_in, i});
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    h = layers_[k].forward(h, training);
    if (k + 1 < layers_.size()) h = nn::leaky_relu(h, cfg_.slope);
  }
  return h;
}

MultiScaleDiscriminator::MultiScaleDiscriminator(const DiscConfig& cfg, std::uint64_t seed)
    : d1_(d1_reg_, "d1", cfg, seed), d2_(d2_reg_, "d2", cfg, seed + 1) {}

PatchMaps MultiScaleDiscriminator::forward(const Tensor& i_in, const Tensor& i, bool training) {
  PatchMaps maps;
  maps.full = d1_.forward(i_in, i, training);
  const int h = i.dim(2) / 2;
  const int w = i.dim(3) / 2;
  maps.half = d2_.forward(nn::resize_bilinear(i_in, h, w), nn::resize_bilinear(i, h, w), training);
  return maps;
}

std::size_t disc_param_count(const DiscConfig& cfg) {
  std::size_t n = 0;
  int in = 6;
  for (int i = 0; i < 4; ++i) {
    const int out = i < 3 ? cfg.widths[i] : cfg.out_channels;
    n += nn::conv_param_count(in, out, 4);
    in = out;
  }
  return n;
}

}  // namespace deepgin
