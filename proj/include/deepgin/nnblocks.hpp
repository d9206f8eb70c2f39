#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "deepgin/ops.hpp"

namespace deepgin::nn {

enum class ParamKind { conv_weight, bias, gain };

struct Parameter {
  std::string name;
  Tensor tensor;
  ParamKind kind = ParamKind::conv_weight;
  int fan_in = 1;  // meaningful for conv weights only
};

// Spectral-normalization state of one weight: the left/right singular
// vector estimates over the [out, in·kh·kw] flattening.
struct SpectralState {
  std::string name;
  std::vector<double> u;
  std::vector<double> v;
  bool primed = false;  // v has been derived from u at least once
};

// Owns the named parameters of one network. Modules hold aliasing Tensor
// handles, so optimizer updates through the registry are seen by them.
class ParamRegistry {
 public:
  Tensor add(const std::string& name, Shape shape, ParamKind kind, int fan_in = 1);
  SpectralState& add_spectral(const std::string& name, int rows, int cols, std::uint64_t seed);

  std::vector<Parameter>& params() noexcept { return params_; }
  const std::vector<Parameter>& params() const noexcept { return params_; }
  std::vector<std::unique_ptr<SpectralState>>& spectral() noexcept { return spectral_; }
  const std::vector<std::unique_ptr<SpectralState>>& spectral() const noexcept {
    return spectral_;
  }

  std::size_t count() const noexcept;
  const Parameter* find(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::vector<std::unique_ptr<SpectralState>> spectral_;
};

// Fan-in scaled normal init: weights ~ N(0, (scale·√(2/fan_in))²),
// biases 0, gains 0. Deterministic per (seed, parameter name).
void init_weights(ParamRegistry& reg, double scale, std::uint64_t seed);
// As above, but only weights accepted by `scaled` use `scale`; the rest use 1.
void init_weights(ParamRegistry& reg, double scale, std::uint64_t seed,
                  const std::function<bool(const Parameter&)>& scaled);
// True for conv weights inside a residual block ("<prefix>.block<...>.").
bool in_residual_block(const Parameter& p);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamRegistry& reg, const std::string& name, int in, int out, int kernel,
         Conv2dOptions opt);
  // Square kernel with "same" padding scaled by dilation.
  static Conv2d same(ParamRegistry& reg, const std::string& name, int in, int out, int kernel,
                     int dilation = 1);

  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, opt); }

  Tensor weight;
  Tensor bias;
  Conv2dOptions opt;
};

// Convolution whose weight is divided by a power-iteration estimate of its
// largest singular value.
class SnConv2d {
 public:
  SnConv2d() = default;
  SnConv2d(ParamRegistry& reg, const std::string& name, int in, int out, int kernel,
           Conv2dOptions opt, std::uint64_t seed);

  // training → one power-iteration step updates u, v before use.
  Tensor forward(const Tensor& x, bool training);
  // Advance the spectral estimate without running a convolution.
  void power_iterate();
  // Weight / σ̂ as currently estimated (no state change when primed).
  Tensor normalized_weight(double* sigma = nullptr);

  Tensor weight;
  Tensor bias;
  Conv2dOptions opt;
  SpectralState* state = nullptr;
};

enum class BlockKind { standard, dilated, spd };

const char* to_string(BlockKind kind);
BlockKind parse_block_kind(const std::string& s);

// Residual block y = x + conv2(relu(conv1(x))). conv1 is a single 3×3 conv
// (standard: dilation 1, dilated: dilation 2) or, for SPD, parallel dilated
// 3×3 convs over C/k output channels each, concatenated.
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParamRegistry& reg, const std::string& name, int channels, BlockKind kind,
           const std::vector<int>& rates);

  Tensor forward(const Tensor& x) const;

  BlockKind kind = BlockKind::standard;
  std::vector<Conv2d> branches;
  Conv2d conv2;
};

// Embedded-Gaussian non-local block with θ/φ/g reductions to C/2 and a
// learnable output gain γ (zero at init).
class SaBlock {
 public:
  SaBlock() = default;
  SaBlock(ParamRegistry& reg, const std::string& name, int channels);

  Tensor forward(const Tensor& x) const;
  // Row-stochastic [N, HW, HW] attention map, for inspection.
  Tensor attention(const Tensor& x) const;

  Conv2d theta, phi, g, out;
  Tensor gamma;
};

// Rate sets used by the reference configuration.
std::vector<int> default_rates(int count);

// Closed-form parameter tallies.
std::size_t conv_param_count(int in, int out, int kernel, bool bias = true);
std::size_t resblock_param_count(int channels, BlockKind kind, int rate_count);
std::size_t sa_param_count(int channels);

}  // namespace deepgin::nn
