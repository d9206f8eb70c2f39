#include "deepgin/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "deepgin/errors.hpp"

namespace deepgin {
namespace {

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::vector<std::uint8_t> read_pixels(const std::filesystem::path& path, png_uint_32 format,
                                      int* height, int* width) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw IoError("cannot open image file: " + path.string());
  }
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw FormatError("not a decodable PNG: " + path.string() + " (" + png.image.message + ")");
  }
  png.image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
    throw FormatError("failed to decode PNG: " + path.string() + " (" + png.image.message + ")");
  }
  *height = static_cast<int>(png.image.height);
  *width = static_cast<int>(png.image.width);
  return buffer;
}

void write_pixels(const std::filesystem::path& path, png_uint_32 format, int height, int width,
                  const std::vector<std::uint8_t>& pixels) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG: " + path.string() + " (" + png.image.message + ")");
  }
}

}  // namespace

std::uint8_t quantize_unit(double v) noexcept {
  const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

ImageTensor load_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto rgba = read_pixels(path, PNG_FORMAT_RGBA, &h, &w);
  ImageTensor img(h, w, 3);
  const std::size_t n = img.plane_size();
  for (int c = 0; c < 3; ++c) {
    auto plane = img.plane(c);
    for (std::size_t i = 0; i < n; ++i) plane[i] = rgba[4 * i + c] / 255.0;
  }
  return img;
}

void save_png(const ImageTensor& img, const std::filesystem::path& path) {
  if (img.channels() != 3 && img.channels() != 1) {
    throw ArgumentError("save_png supports 1 or 3 channels, got " +
                        std::to_string(img.channels()));
  }
  const int ch = img.channels();
  const std::size_t n = img.plane_size();
  std::vector<std::uint8_t> pixels(n * ch);
  for (int c = 0; c < ch; ++c) {
    const auto plane = img.plane(c);
    for (std::size_t i = 0; i < n; ++i) pixels[ch * i + c] = quantize_unit(plane[i]);
  }
  write_pixels(path, ch == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY, img.height(), img.width(), pixels);
}

MaskTensor load_mask_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto gray = read_pixels(path, PNG_FORMAT_GRAY, &h, &w);
  for (auto& v : gray) v = v >= 128 ? 1 : 0;
  return MaskTensor(h, w, std::move(gray));
}

void save_mask_png(const MaskTensor& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> pixels(mask.data().begin(), mask.data().end());
  for (auto& v : pixels) v = v ? 255 : 0;
  write_pixels(path, PNG_FORMAT_GRAY, mask.height(), mask.width(), pixels);
}

}  // namespace deepgin
