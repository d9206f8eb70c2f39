#include "deepgin/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deepgin/errors.hpp"

namespace deepgin {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) throw ArgumentError("negative image dimension");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ArgumentError("image data size does not match " + std::to_string(height) + "x" +
                        std::to_string(width) + "x" + std::to_string(channels));
  }
}

bool ImageTensor::in_unit_range() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

MaskTensor::MaskTensor(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw ArgumentError("negative mask dimension");
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

MaskTensor::MaskTensor(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(height) * width) {
    throw ArgumentError("mask data size does not match dimensions");
  }
  for (auto& v : data_) v = v ? 1 : 0;
}

BilinearAxis BilinearAxis::make(int in_size, int out_size) {
  BilinearAxis axis;
  axis.lo.resize(out_size);
  axis.hi.resize(out_size);
  axis.frac.resize(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in_size - 1) lo = in_size - 1;
    const int hi = std::min(lo + 1, in_size - 1);
    axis.lo[i] = lo;
    axis.hi[i] = hi;
    axis.frac[i] = hi == lo ? 0.0 : src - lo;
  }
  return axis;
}

void resample_plane(std::span<const double> src, int in_h, int in_w, std::span<double> dst,
                    const BilinearAxis& ys, const BilinearAxis& xs) {
  const int out_h = static_cast<int>(ys.lo.size());
  const int out_w = static_cast<int>(xs.lo.size());
  for (int y = 0; y < out_h; ++y) {
    const double* r0 = src.data() + static_cast<std::size_t>(ys.lo[y]) * in_w;
    const double* r1 = src.data() + static_cast<std::size_t>(ys.hi[y]) * in_w;
    const double fy = ys.frac[y];
    double* out = dst.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) {
      const double fx = xs.frac[x];
      const double top = r0[xs.lo[x]] * (1.0 - fx) + r0[xs.hi[x]] * fx;
      const double bot = r1[xs.lo[x]] * (1.0 - fx) + r1[xs.hi[x]] * fx;
      out[x] = top * (1.0 - fy) + bot * fy;
    }
  }
  (void)in_h;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ArgumentError("resize target must be positive, got " + std::to_string(out_h) + "x" +
                        std::to_string(out_w));
  }
  if (img.height() < 1 || img.width() < 1) throw ArgumentError("cannot resize an empty image");
  if (out_h == img.height() && out_w == img.width()) return img;
  const auto ys = BilinearAxis::make(img.height(), out_h);
  const auto xs = BilinearAxis::make(img.width(), out_w);
  ImageTensor out(out_h, out_w, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    resample_plane(img.plane(c), img.height(), img.width(), out.plane(c), ys, xs);
  }
  // Convex combinations stay in range up to rounding; clamp the rounding.
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

ImageTensor composite(const ImageTensor& i_out, const ImageTensor& i_gt, const MaskTensor& m) {
  if (!i_out.same_size(i_gt) || !m.matches(i_out) || i_out.channels() != i_gt.channels()) {
    throw ArgumentError("composite: i_out, i_gt and mask must share spatial size and channels");
  }
  ImageTensor out = i_gt;
  const auto mask = m.data();
  for (int c = 0; c < out.channels(); ++c) {
    auto dst = out.plane(c);
    const auto src = i_out.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (mask[i]) dst[i] = src[i];
    }
  }
  return out;
}

ImageTensor scale4(const ImageTensor& img, ScaleDirection direction) {
  constexpr int kFactor = 4;
  if (direction == ScaleDirection::up) {
    return resize_bilinear(img, img.height() * kFactor, img.width() * kFactor);
  }
  if (img.height() % kFactor != 0 || img.width() % kFactor != 0 || img.height() == 0 ||
      img.width() == 0) {
    throw ArgumentError("scale4 down needs dimensions divisible by 4, got " +
                        std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  const int oh = img.height() / kFactor;
  const int ow = img.width() / kFactor;
  ImageTensor out(oh, ow, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < kFactor; ++dy) {
          for (int dx = 0; dx < kFactor; ++dx) acc += img.at(c, y * kFactor + dy, x * kFactor + dx);
        }
        out.at(c, y, x) = acc / (kFactor * kFactor);
      }
    }
  }
  return out;
}

ImageTensor zero_fill(const ImageTensor& i_gt, const MaskTensor& m) {
  if (!m.matches(i_gt)) throw ArgumentError("zero_fill: mask and image sizes differ");
  ImageTensor out = i_gt;
  const auto mask = m.data();
  for (int c = 0; c < out.channels(); ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (mask[i]) p[i] = 0.0;
    }
  }
  return out;
}

MaskTensor resize_nearest(const MaskTensor& m, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ArgumentError("mask resize target must be positive");
  if (out_h == m.height() && out_w == m.width()) return m;
  MaskTensor out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = static_cast<int>((2LL * y + 1) * m.height() / (2LL * out_h));
    for (int x = 0; x < out_w; ++x) {
      const int sx = static_cast<int>((2LL * x + 1) * m.width() / (2LL * out_w));
      out.at(y, x) = m.at(sy, sx);
    }
  }
  return out;
}

MaskTensor downsample_majority(const MaskTensor& m, int factor) {
  if (factor < 1 || m.height() % factor != 0 || m.width() % factor != 0) {
    throw ArgumentError("mask downsample factor must divide both dimensions");
  }
  const int oh = m.height() / factor;
  const int ow = m.width() / factor;
  MaskTensor out(oh, ow);
  const int area = factor * factor;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int ones = 0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) ones += m.at(y * factor + dy, x * factor + dx);
      }
      out.at(y, x) = 2 * ones >= area ? 1 : 0;
    }
  }
  return out;
}

}  // namespace deepgin
