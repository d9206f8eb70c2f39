#pragma once

#include <span>
#include <vector>

#include "deepgin/tensor.hpp"

// Differentiable operations over NCHW feature maps and small batched
// matrices. Each op validates shapes and throws ArgumentError on mismatch.
namespace deepgin::nn {

struct Conv2dOptions {
  int stride = 1;
  int dilation = 1;
  int pad_top = 0;
  int pad_left = 0;
  int pad_bottom = 0;
  int pad_right = 0;

  // Symmetric zero padding on all four sides.
  static Conv2dOptions same(int padding, int dilation = 1, int stride = 1) {
    return {stride, dilation, padding, padding, padding, padding};
  }
};

int conv_output_size(int in, int kernel, int stride, int dilation, int pad_before, int pad_after);

// x [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dOptions& opt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// x [N,C,...] times gain [1] or [C], broadcast per channel.
Tensor channel_scale(const Tensor& x, const Tensor& gain);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor abs(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& parts);

Tensor upsample_nearest(const Tensor& x, int factor);
Tensor avg_pool(const Tensor& x, int factor);
// Non-overlapping factor×factor max; ties send the gradient to the first maximum.
Tensor max_pool(const Tensor& x, int factor);
// Align-corners-false bilinear resampling; shares kernels with imagecore.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

Tensor reshape(const Tensor& x, Shape shape);
// [N,A,B] → [N,B,A]
Tensor transpose_last2(const Tensor& x);
// [N,A,K] × [N,K,B] → [N,A,B]
Tensor bmm(const Tensor& a, const Tensor& b);
// Softmax over the last axis.
Tensor softmax_last(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Σ x ⊙ w with w a constant of identical shape.
Tensor weighted_sum(const Tensor& x, const Tensor& weights);

// Elementwise pick: mask ≠ 0 → a, else b. `mask` is a constant of shape
// [N,1,H,W] broadcast over channels, or the full shape.
Tensor select(const Tensor& mask, const Tensor& a, const Tensor& b);

// weight / σ with σ = uᵀ W v over the [rows, cols] flattening of weight.
// u, v are treated as constants (power-iteration estimates); the gradient
// flows through σ as dσ/dW = u vᵀ. σ below 1e-12 leaves weight unscaled.
Tensor spectral_normalized(const Tensor& weight, std::span<const double> u,
                           std::span<const double> v, double* sigma_out = nullptr);

}  // namespace deepgin::nn
