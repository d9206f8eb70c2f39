#pragma once

#include <cstdint>
#include <vector>

#include "deepgin/nnblocks.hpp"

namespace deepgin {

struct DiscConfig {
  std::vector<int> widths{64, 128, 256};
  int out_channels = 1;
  double slope = 0.2;
};

// Conditional patch critic on concat(i_in, i): four 4×4 spectrally
// normalized convs with strides 2,2,1,1 giving an H/4×W/4 score map.
class PatchDiscriminator {
 public:
  PatchDiscriminator(nn::ParamRegistry& reg, const std::string& name, const DiscConfig& cfg,
                     std::uint64_t seed);

  nn::Tensor forward(const nn::Tensor& i_in, const nn::Tensor& i, bool training);

  std::vector<nn::SnConv2d>& layers() { return layers_; }

 private:
  DiscConfig cfg_;
  std::vector<nn::SnConv2d> layers_;
};

struct PatchMaps {
  nn::Tensor full;  // from the full-resolution critic
  nn::Tensor half;  // from the critic on half-resolution copies
};

// D1 at the input scale, D2 on bilinear half-size copies; no shared weights.
class MultiScaleDiscriminator {
 public:
  explicit MultiScaleDiscriminator(const DiscConfig& cfg, std::uint64_t seed = 0x5d15c0ull);

  PatchMaps forward(const nn::Tensor& i_in, const nn::Tensor& i, bool training);

  nn::ParamRegistry& d1_params() { return d1_reg_; }
  nn::ParamRegistry& d2_params() { return d2_reg_; }
  PatchDiscriminator& d1() { return d1_; }
  PatchDiscriminator& d2() { return d2_; }

 private:
  nn::ParamRegistry d1_reg_;
  nn::ParamRegistry d2_reg_;
  PatchDiscriminator d1_;
  PatchDiscriminator d2_;
};

std::size_t disc_param_count(const DiscConfig& cfg);

}  // namespace deepgin
