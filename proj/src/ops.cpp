#include "deepgin/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "deepgin/errors.hpp"
#include "deepgin/image.hpp"

namespace deepgin::nn {

using detail::make_result;
using detail::Node;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ArgumentError(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined() && a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

void require_nchw(const Tensor& x, const char* op) {
  require(x.defined() && x.ndim() == 4, std::string(op) + ": expected NCHW input, got " +
                                            (x.defined() ? shape_string(x.shape()) : "undefined"));
}

struct ConvGeometry {
  int n, cin, h, w;
  int cout, kh, kw;
  int oh, ow;
  Conv2dOptions opt;

  std::size_t k() const { return static_cast<std::size_t>(cin) * kh * kw; }
  std::size_t p() const { return static_cast<std::size_t>(oh) * ow; }
  std::size_t in_plane() const { return static_cast<std::size_t>(cin) * h * w; }
  std::size_t out_plane() const { return static_cast<std::size_t>(cout) * p(); }
  bool pointwise() const {
    return kh == 1 && kw == 1 && opt.stride == 1 && opt.pad_top == 0 && opt.pad_left == 0 &&
           opt.pad_bottom == 0 && opt.pad_right == 0;
  }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const int s = g.opt.stride;
  const int d = g.opt.dilation;
  const std::size_t P = g.p();
  for (int c = 0; c < g.cin; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* dst = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * P;
        const int xoff = kj * d - g.opt.pad_left;
        // Output columns whose source column lies inside the frame.
        int ox_lo = 0;
        while (ox_lo < g.ow && ox_lo * s + xoff < 0) ++ox_lo;
        int ox_hi = g.ow;
        while (ox_hi > ox_lo && (ox_hi - 1) * s + xoff >= g.w) --ox_hi;
        for (int oy = 0; oy < g.oh; ++oy) {
          double* row = dst + static_cast<std::size_t>(oy) * g.ow;
          const int iy = oy * s - g.opt.pad_top + ki * d;
          if (iy < 0 || iy >= g.h) {
            std::fill(row, row + g.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          std::fill(row, row + ox_lo, 0.0);
          if (s == 1) {
            std::copy(src + ox_lo + xoff, src + ox_hi + xoff, row + ox_lo);
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) row[ox] = src[ox * s + xoff];
          }
          std::fill(row + ox_hi, row + g.ow, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* x) {
  const int s = g.opt.stride;
  const int d = g.opt.dilation;
  const std::size_t P = g.p();
  for (int c = 0; c < g.cin; ++c) {
    double* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* srcrow = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * P;
        const int xoff = kj * d - g.opt.pad_left;
        int ox_lo = 0;
        while (ox_lo < g.ow && ox_lo * s + xoff < 0) ++ox_lo;
        int ox_hi = g.ow;
        while (ox_hi > ox_lo && (ox_hi - 1) * s + xoff >= g.w) --ox_hi;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * s - g.opt.pad_top + ki * d;
          if (iy < 0 || iy >= g.h) continue;
          const double* row = srcrow + static_cast<std::size_t>(oy) * g.ow;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox * s + xoff] += row[ox];
        }
      }
    }
  }
}

// Adjoint of resample_plane: scatters dst gradients back onto src.
void resample_plane_adjoint(std::span<const double> gdst, std::span<double> gsrc, int in_w,
                            const BilinearAxis& ys, const BilinearAxis& xs) {
  const int out_h = static_cast<int>(ys.lo.size());
  const int out_w = static_cast<int>(xs.lo.size());
  for (int y = 0; y < out_h; ++y) {
    double* r0 = gsrc.data() + static_cast<std::size_t>(ys.lo[y]) * in_w;
    double* r1 = gsrc.data() + static_cast<std::size_t>(ys.hi[y]) * in_w;
    const double fy = ys.frac[y];
    const double* g = gdst.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) {
      const double fx = xs.frac[x];
      const double top = g[x] * (1.0 - fy);
      const double bot = g[x] * fy;
      r0[xs.lo[x]] += top * (1.0 - fx);
      r0[xs.hi[x]] += top * fx;
      r1[xs.lo[x]] += bot * (1.0 - fx);
      r1[xs.hi[x]] += bot * fx;
    }
  }
}

template <typename Fn>
Tensor unary(const Tensor& x, Fn&& forward, std::function<void(Node&)> backward) {
  std::vector<double> out(x.numel());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_result(x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

int conv_output_size(int in, int kernel, int stride, int dilation, int pad_before, int pad_after) {
  const int span = dilation * (kernel - 1) + 1;
  const int padded = in + pad_before + pad_after;
  if (padded < span) return 0;
  return (padded - span) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dOptions& opt) {
  require_nchw(x, "conv2d");
  require(weight.defined() && weight.ndim() == 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
  require(opt.stride >= 1 && opt.dilation >= 1, "conv2d: stride and dilation must be >= 1");
  ConvGeometry g{x.dim(0),      x.dim(1),      x.dim(2), x.dim(3), weight.dim(0),
                 weight.dim(2), weight.dim(3), 0,        0,        opt};
  require(weight.dim(1) == g.cin, "conv2d: channel mismatch, input has " + std::to_string(g.cin) +
                                      " channels, weight expects " + std::to_string(weight.dim(1)));
  if (bias.defined()) {
    require(bias.numel() == static_cast<std::size_t>(g.cout), "conv2d: bias size mismatch");
  }
  g.oh = conv_output_size(g.h, g.kh, opt.stride, opt.dilation, opt.pad_top, opt.pad_bottom);
  g.ow = conv_output_size(g.w, g.kw, opt.stride, opt.dilation, opt.pad_left, opt.pad_right);
  require(g.oh > 0 && g.ow > 0, "conv2d: input " + shape_string(x.shape()) + " too small for kernel");

  const std::size_t K = g.k();
  const std::size_t P = g.p();
  std::vector<double> out(static_cast<std::size_t>(g.n) * g.out_plane());
  std::vector<double> col(g.pointwise() ? 0 : K * P);
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  for (int n = 0; n < g.n; ++n) {
    const double* xn = xv + n * g.in_plane();
    const double* src = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      src = col.data();
    }
    double* on = out.data() + n * g.out_plane();
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.cout, static_cast<int>(P),
                static_cast<int>(K), 1.0, wv, static_cast<int>(K), src, static_cast<int>(P), 0.0,
                on, static_cast<int>(P));
    if (bias.defined()) {
      const double* bv = bias.values().data();
      for (int o = 0; o < g.cout; ++o) {
        double* row = on + static_cast<std::size_t>(o) * P;
        for (std::size_t i = 0; i < P; ++i) row[i] += bv[o];
      }
    }
  }

  Shape shape{g.n, g.cout, g.oh, g.ow};
  return make_result(std::move(shape), std::move(out), {x, weight, bias}, [g](Node& self) {
    Node* xn = self.inputs[0].get();
    Node* wn = self.inputs[1].get();
    Node* bn = self.inputs[2].get();
    const bool need_x = xn->requires_grad;
    const bool need_w = wn->requires_grad;
    const bool need_b = bn && bn->requires_grad;
    const std::size_t K = g.k();
    const std::size_t P = g.p();
    const int iK = static_cast<int>(K);
    const int iP = static_cast<int>(P);
    std::vector<double> col((need_w && !g.pointwise()) ? K * P : 0);
    std::vector<double> dcol((need_x && !g.pointwise()) ? K * P : 0);
    double* dw = need_w ? wn->grad_buffer().data() : nullptr;
    double* db = need_b ? bn->grad_buffer().data() : nullptr;
    double* dx = need_x ? xn->grad_buffer().data() : nullptr;
    const double* wv = wn->value.data();
    for (int n = 0; n < g.n; ++n) {
      const double* go = self.grad.data() + n * g.out_plane();
      const double* xin = xn->value.data() + n * g.in_plane();
      if (need_b) {
        for (int o = 0; o < g.cout; ++o) {
          const double* row = go + static_cast<std::size_t>(o) * P;
          double acc = 0.0;
          for (std::size_t i = 0; i < P; ++i) acc += row[i];
          db[o] += acc;
        }
      }
      if (need_w) {
        const double* src = xin;
        if (!g.pointwise()) {
          im2col(xin, g, col.data());
          src = col.data();
        }
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.cout, iK, iP, 1.0, go, iP, src, iP,
                    1.0, dw, iK);
      }
      if (need_x) {
        double* dxn = dx + n * g.in_plane();
        if (g.pointwise()) {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, iK, iP, g.cout, 1.0, wv, iK, go, iP,
                      1.0, dxn, iP);
        } else {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, iK, iP, g.cout, 1.0, wv, iK, go, iP,
                      0.0, dcol.data(), iP);
          col2im_add(dcol.data(), g, dxn);
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node* in = self.inputs[k].get();
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node* in = self.inputs[k].get();
      if (!in->requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node* an = self.inputs[0].get();
    Node* bn = self.inputs[1].get();
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor channel_scale(const Tensor& x, const Tensor& gain) {
  require(x.defined() && x.ndim() >= 2, "channel_scale: expected [N,C,...] input");
  const int n = x.dim(0);
  const int c = x.dim(1);
  require(gain.defined() && (gain.numel() == 1 || gain.numel() == static_cast<std::size_t>(c)),
          "channel_scale: gain must have 1 or C elements");
  const std::size_t inner = x.numel() / (static_cast<std::size_t>(n) * c);
  const bool shared = gain.numel() == 1;
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  const auto gv = gain.values();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double s = gv[shared ? 0 : ch];
      const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[base + i] = xv[base + i] * s;
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain}, [n, c, inner, shared](Node& self) {
    Node* xn = self.inputs[0].get();
    Node* gn = self.inputs[1].get();
    double* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
    double* dg = gn->requires_grad ? gn->grad_buffer().data() : nullptr;
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const int gi = shared ? 0 : ch;
        const double s = gn->value[gi];
        const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * inner;
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const double go = self.grad[base + i];
          if (dx) dx[base + i] += go * s;
          acc += go * xn->value[base + i];
        }
        if (dg) dg[gi] += acc;
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  return leaky_relu(x, 0.0);
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(x, [slope](double v) { return v > 0.0 ? v : slope * v; }, [slope](Node& self) {
    Node* in = self.inputs[0].get();
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * (in->value[i] > 0.0 ? 1.0 : slope);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); }, [lo, hi](Node& self) {
    Node* in = self.inputs[0].get();
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in->value[i];
      if (v > lo && v < hi) g[i] += self.grad[i];
    }
  });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) { return std::fabs(v); }, [](Node& self) {
    Node* in = self.inputs[0].get();
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in->value[i];
      g[i] += v > 0.0 ? self.grad[i] : (v < 0.0 ? -self.grad[i] : 0.0);
    }
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Tensor& first = parts.front();
  require(first.defined() && first.ndim() >= 2, "concat_channels: expected [N,C,...] inputs");
  const int n = first.dim(0);
  Shape rest(first.shape().begin() + 2, first.shape().end());
  const std::size_t inner = shape_numel(rest);
  std::vector<int> channels;
  int total = 0;
  for (const auto& p : parts) {
    require(p.defined() && p.ndim() == first.ndim() && p.dim(0) == n &&
                Shape(p.shape().begin() + 2, p.shape().end()) == rest,
            "concat_channels: inputs must agree on batch and spatial dims");
    channels.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(n) * total * inner);
  for (int b = 0; b < n; ++b) {
    std::size_t offset = static_cast<std::size_t>(b) * total * inner;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t chunk = channels[k] * inner;
      const double* src = parts[k].values().data() + b * chunk;
      std::copy(src, src + chunk, out.begin() + offset);
      offset += chunk;
    }
  }
  Shape shape = first.shape();
  shape[1] = total;
  return make_result(std::move(shape), std::move(out), parts,
                     [n, total, inner, channels](Node& self) {
                       for (int b = 0; b < n; ++b) {
                         std::size_t offset = static_cast<std::size_t>(b) * total * inner;
                         for (std::size_t k = 0; k < channels.size(); ++k) {
                           const std::size_t chunk = channels[k] * inner;
                           Node* in = self.inputs[k].get();
                           if (in->requires_grad) {
                             double* g = in->grad_buffer().data() + b * chunk;
                             for (std::size_t i = 0; i < chunk; ++i) g[i] += self.grad[offset + i];
                           }
                           offset += chunk;
                         }
                       }
                     });
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  require_nchw(x, "upsample_nearest");
  require(factor >= 1, "upsample_nearest: factor must be >= 1");
  const int nc = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const int oh = h * factor;
  const int ow = w * factor;
  std::vector<double> out(static_cast<std::size_t>(nc) * oh * ow);
  const auto xv = x.values();
  for (int p = 0; p < nc; ++p) {
    const double* src = xv.data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const double* srow = src + static_cast<std::size_t>(y / factor) * w;
      double* drow = dst + static_cast<std::size_t>(y) * ow;
      for (int xx = 0; xx < ow; ++xx) drow[xx] = srow[xx / factor];
    }
  }
  return make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                     [nc, h, w, oh, ow, factor](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (int p = 0; p < nc; ++p) {
                         double* gs = g.data() + static_cast<std::size_t>(p) * h * w;
                         const double* gd = self.grad.data() + static_cast<std::size_t>(p) * oh * ow;
                         for (int y = 0; y < oh; ++y) {
                           double* grow = gs + static_cast<std::size_t>(y / factor) * w;
                           const double* drow = gd + static_cast<std::size_t>(y) * ow;
                           for (int xx = 0; xx < ow; ++xx) grow[xx / factor] += drow[xx];
                         }
                       }
                     });
}

Tensor avg_pool(const Tensor& x, int factor) {
  require_nchw(x, "avg_pool");
  require(factor >= 1 && x.dim(2) % factor == 0 && x.dim(3) % factor == 0,
          "avg_pool: factor must divide spatial dims of " + shape_string(x.shape()));
  const int nc = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const int oh = h / factor;
  const int ow = w / factor;
  const double inv = 1.0 / (factor * factor);
  std::vector<double> out(static_cast<std::size_t>(nc) * oh * ow, 0.0);
  const auto xv = x.values();
  for (int p = 0; p < nc; ++p) {
    const double* src = xv.data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < h; ++y) {
      const double* srow = src + static_cast<std::size_t>(y) * w;
      double* drow = dst + static_cast<std::size_t>(y / factor) * ow;
      for (int xx = 0; xx < w; ++xx) drow[xx / factor] += srow[xx];
    }
    for (int i = 0; i < oh * ow; ++i) dst[i] *= inv;
  }
  return make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                     [nc, h, w, ow, factor, inv](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       const int oh = h / factor;
                       for (int p = 0; p < nc; ++p) {
                         double* gs = g.data() + static_cast<std::size_t>(p) * h * w;
                         const double* gd = self.grad.data() + static_cast<std::size_t>(p) * oh * ow;
                         for (int y = 0; y < h; ++y) {
                           double* grow = gs + static_cast<std::size_t>(y) * w;
                           const double* drow = gd + static_cast<std::size_t>(y / factor) * ow;
                           for (int xx = 0; xx < w; ++xx) grow[xx] += drow[xx / factor] * inv;
                         }
                       }
                     });
}

Tensor max_pool(const Tensor& x, int factor) {
  require_nchw(x, "max_pool");
  require(factor >= 1 && x.dim(2) % factor == 0 && x.dim(3) % factor == 0,
          "max_pool: factor must divide spatial dims of " + shape_string(x.shape()));
  const int nc = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const int oh = h / factor;
  const int ow = w / factor;
  std::vector<double> out(static_cast<std::size_t>(nc) * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto xv = x.values();
  for (int p = 0; p < nc; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        std::size_t best = base + static_cast<std::size_t>(oy * factor) * w + ox * factor;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            const std::size_t i = base + static_cast<std::size_t>(oy * factor + dy) * w + ox * factor + dx;
            if (xv[i] > xv[best]) best = i;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result({x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, [argmax](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < argmax->size(); ++o) g[(*argmax)[o]] += self.grad[o];
  });
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  require_nchw(x, "resize_bilinear");
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: target size must be positive");
  const int nc = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  auto ys = std::make_shared<BilinearAxis>(BilinearAxis::make(h, out_h));
  auto xs = std::make_shared<BilinearAxis>(BilinearAxis::make(w, out_w));
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  std::vector<double> out(nc * out_plane);
  const auto xv = x.values();
  for (int p = 0; p < nc; ++p) {
    resample_plane(xv.subspan(p * in_plane, in_plane), h, w,
                   std::span<double>(out).subspan(p * out_plane, out_plane), *ys, *xs);
  }
  return make_result({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x},
                     [nc, w, in_plane, out_plane, ys, xs](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (int p = 0; p < nc; ++p) {
                         resample_plane_adjoint(
                             std::span<const double>(self.grad).subspan(p * out_plane, out_plane),
                             std::span<double>(g).subspan(p * in_plane, in_plane), w, *ys, *xs);
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(x.defined() && shape_numel(shape) == x.numel(),
          "reshape: cannot view " + (x.defined() ? shape_string(x.shape()) : "undefined") + " as " +
              shape_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose_last2(const Tensor& x) {
  require(x.defined() && x.ndim() == 3, "transpose_last2: expected [N,A,B]");
  const int n = x.dim(0);
  const int a = x.dim(1);
  const int b = x.dim(2);
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (int k = 0; k < n; ++k) {
    const double* src = xv.data() + static_cast<std::size_t>(k) * a * b;
    double* dst = out.data() + static_cast<std::size_t>(k) * a * b;
    for (int i = 0; i < a; ++i) {
      for (int j = 0; j < b; ++j) dst[static_cast<std::size_t>(j) * a + i] = src[static_cast<std::size_t>(i) * b + j];
    }
  }
  return make_result({n, b, a}, std::move(out), {x}, [n, a, b](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (int k = 0; k < n; ++k) {
      double* dst = g.data() + static_cast<std::size_t>(k) * a * b;
      const double* src = self.grad.data() + static_cast<std::size_t>(k) * a * b;
      for (int i = 0; i < a; ++i) {
        for (int j = 0; j < b; ++j) dst[static_cast<std::size_t>(i) * b + j] += src[static_cast<std::size_t>(j) * a + i];
      }
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined() && a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) &&
              a.dim(2) == b.dim(1),
          "bmm: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const int n = a.dim(0);
  const int m = a.dim(1);
  const int k = a.dim(2);
  const int p = b.dim(2);
  std::vector<double> out(static_cast<std::size_t>(n) * m * p);
  for (int i = 0; i < n; ++i) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, p, k, 1.0,
                a.values().data() + static_cast<std::size_t>(i) * m * k, k,
                b.values().data() + static_cast<std::size_t>(i) * k * p, p, 0.0,
                out.data() + static_cast<std::size_t>(i) * m * p, p);
  }
  return make_result({n, m, p}, std::move(out), {a, b}, [n, m, k, p](Node& self) {
    Node* an = self.inputs[0].get();
    Node* bn = self.inputs[1].get();
    for (int i = 0; i < n; ++i) {
      const double* gc = self.grad.data() + static_cast<std::size_t>(i) * m * p;
      if (an->requires_grad) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, k, p, 1.0, gc, p,
                    bn->value.data() + static_cast<std::size_t>(i) * k * p, p, 1.0,
                    an->grad_buffer().data() + static_cast<std::size_t>(i) * m * k, k);
      }
      if (bn->requires_grad) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, p, m, 1.0,
                    an->value.data() + static_cast<std::size_t>(i) * m * k, k, gc, p, 1.0,
                    bn->grad_buffer().data() + static_cast<std::size_t>(i) * k * p, p);
      }
    }
  });
}

Tensor softmax_last(const Tensor& x) {
  require(x.defined() && x.ndim() >= 1, "softmax_last: undefined input");
  const int cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * cols;
    double* dst = out.data() + r * cols;
    const double mx = *std::max_element(src, src + cols);
    double total = 0.0;
    for (int j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (int j = 0; j < cols; ++j) dst[j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* gy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
      double* gx = g.data() + r * cols;
      for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total}, {x}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require(x.defined() && x.numel() > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor weighted_sum(const Tensor& x, const Tensor& weights) {
  require_same_shape(x, weights, "weighted_sum");
  double total = 0.0;
  const auto xv = x.values();
  const auto wv = weights.values();
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * wv[i];
  return make_result({1}, {total}, {x, weights}, [](Node& self) {
    Node* xn = self.inputs[0].get();
    Node* wn = self.inputs[1].get();
    if (xn->requires_grad) {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * wn->value[i];
    }
    if (wn->requires_grad) {
      auto& g = wn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * xn->value[i];
    }
  });
}

Tensor select(const Tensor& mask, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "select");
  require(mask.defined(), "select: undefined mask");
  const bool full = mask.shape() == a.shape();
  std::size_t inner = 0;
  int channels = 1;
  if (!full) {
    require(a.ndim() == 4 && mask.ndim() == 4 && mask.dim(0) == a.dim(0) && mask.dim(1) == 1 &&
                mask.dim(2) == a.dim(2) && mask.dim(3) == a.dim(3),
            "select: mask must be [N,1,H,W] or match the operands");
    inner = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
    channels = a.dim(1);
  }
  // Index of the mask entry governing flat element i.
  auto mask_index = [full, inner, channels](std::size_t i) {
    if (full) return i;
    const std::size_t plane = i / inner;
    return (plane / channels) * inner + i % inner;
  };
  std::vector<double> out(a.numel());
  const auto mv = mask.values();
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[mask_index(i)] != 0.0 ? av[i] : bv[i];
  return make_result(a.shape(), std::move(out), {a, b, mask}, [mask_index](Node& self) {
    Node* an = self.inputs[0].get();
    Node* bn = self.inputs[1].get();
    const auto& mv = self.inputs[2]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool pick_a = mv[mask_index(i)] != 0.0;
      Node* target = pick_a ? an : bn;
      if (target->requires_grad) target->grad_buffer()[i] += self.grad[i];
    }
  });
}

Tensor spectral_normalized(const Tensor& weight, std::span<const double> u,
                           std::span<const double> v, double* sigma_out) {
  require(weight.defined() && weight.ndim() >= 2, "spectral_normalized: weight must be >= 2-D");
  const int rows = weight.dim(0);
  const std::size_t cols = weight.numel() / rows;
  require(u.size() == static_cast<std::size_t>(rows) && v.size() == cols,
          "spectral_normalized: singular vector sizes do not match weight");
  const auto wv = weight.values();
  double sigma = 0.0;
  for (int r = 0; r < rows; ++r) {
    double dot = 0.0;
    const double* row = wv.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dot += row[c] * v[c];
    sigma += u[r] * dot;
  }
  if (sigma_out) *sigma_out = sigma;
  const bool scaled = std::fabs(sigma) > 1e-12;
  std::vector<double> out(wv.begin(), wv.end());
  if (scaled) {
    for (double& x : out) x /= sigma;
  }
  std::vector<double> uu(u.begin(), u.end());
  std::vector<double> vv(v.begin(), v.end());
  return make_result(weight.shape(), std::move(out), {weight},
                     [sigma, scaled, rows, cols, uu = std::move(uu), vv = std::move(vv)](Node& self) {
                       Node* wn = self.inputs[0].get();
                       auto& g = wn->grad_buffer();
                       if (!scaled) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                         return;
                       }
                       double inner = 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i) inner += self.grad[i] * wn->value[i];
                       const double coeff = inner / (sigma * sigma);
                       for (int r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           const std::size_t i = r * cols + c;
                           g[i] += self.grad[i] / sigma - coeff * uu[r] * vv[c];
                         }
                       }
                     });
}

}  // namespace deepgin::nn
