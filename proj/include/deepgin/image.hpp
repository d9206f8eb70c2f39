#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace deepgin {

// Planar (channel-major) real-valued image. RGB images carry 3 channels,
// derived maps may carry 1. Values are expected to lie in [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels = 3, double fill = 0.0);
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

  std::span<double> plane(int c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const noexcept {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_size(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  // True when every element lies in [0, 1].
  bool in_unit_range() const noexcept;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Binary hole map: 1 = missing pixel, 0 = valid.
class MaskTensor {
 public:
  MaskTensor() = default;
  MaskTensor(int height, int width, std::uint8_t fill = 0);
  MaskTensor(int height, int width, std::vector<std::uint8_t> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::uint8_t& at(int y, int x) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  bool matches(const ImageTensor& img) const noexcept {
    return height_ == img.height() && width_ == img.width();
  }

  friend bool operator==(const MaskTensor&, const MaskTensor&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// Precomputed separable sampling taps for align-corners-false bilinear
// resampling along one axis. Shared by the image resizer and the
// differentiable resize op so both use the same convention.
struct BilinearAxis {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;  // weight on `hi`; `lo` gets 1 - frac

  static BilinearAxis make(int in_size, int out_size);
};

// Resamples one plane; `dst` must hold out_h*out_w values.
void resample_plane(std::span<const double> src, int in_h, int in_w, std::span<double> dst,
                    const BilinearAxis& ys, const BilinearAxis& xs);

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

// m ⊙ i_out + (1 − m) ⊙ i_gt, realised as a per-pixel selection so valid
// pixels are bit-identical copies of the ground truth.
ImageTensor composite(const ImageTensor& i_out, const ImageTensor& i_gt, const MaskTensor& m);

enum class ScaleDirection { down, up };

// Fixed ×4 rescaling: 4×4 average pooling down, bilinear ×4 up.
ImageTensor scale4(const ImageTensor& img, ScaleDirection direction);

// Holes become 0, valid pixels copy i_gt.
ImageTensor zero_fill(const ImageTensor& i_gt, const MaskTensor& m);

// Nearest-neighbour mask resize (pixel-centre sampling).
MaskTensor resize_nearest(const MaskTensor& m, int out_h, int out_w);

// Majority vote over factor×factor blocks (block mean ≥ 0.5 → hole).
MaskTensor downsample_majority(const MaskTensor& m, int factor);

}  // namespace deepgin
