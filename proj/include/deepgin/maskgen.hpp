#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "deepgin/image.hpp"

namespace deepgin {

enum class MaskKind : std::uint8_t { rect = 0, freeform = 1, cellular = 2 };

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& name);

// Accepted hole-fraction interval; masks outside it are resampled.
struct FractionBounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct RectParams {
  double lo = 0.3;  // side length, as a fraction of each dimension
  double hi = 0.7;
};

// Lengths and widths are in pixels at a 256-pixel reference side and are scaled
// linearly with min(height, width).
struct FreeformParams {
  int min_strokes = 1;
  int max_strokes = 8;
  int min_vertices = 4;
  int max_vertices = 12;
  double min_brush_width = 12.0;
  double max_brush_width = 40.0;
  double min_segment_length = 10.0;
  double max_segment_length = 40.0;
  double max_angle_step = 1.5707963267948966;  // π/2
  std::optional<FractionBounds> bounds = FractionBounds{0.05, 0.50};
};

struct CellularParams {
  double init_density = 0.5;
  int threshold = 5;  // out of 9 Moore-neighbourhood cells, self included
  int iterations = 4;
  int grid_size = 64;
  std::optional<FractionBounds> bounds = FractionBounds{0.1, 0.7};
};

inline constexpr int kMaskRetryBudget = 100;
inline constexpr const char* kCellularRuleTag = "moore-5/9-it4";

struct MaskSpec {
  MaskKind kind = MaskKind::rect;
  int height = 256;
  int width = 256;
  std::uint64_t seed = 0;
  std::variant<RectParams, FreeformParams, CellularParams> params = RectParams{};

  static MaskSpec rect(int h, int w, std::uint64_t seed, RectParams p = {});
  static MaskSpec freeform(int h, int w, std::uint64_t seed, FreeformParams p = {});
  static MaskSpec cellular(int h, int w, std::uint64_t seed, CellularParams p = {});
  // Default parameters for `kind`.
  static MaskSpec of_kind(MaskKind kind, int h, int w, std::uint64_t seed);

  // Throws ArgumentError when parameters break their invariants.
  void validate() const;
  // One-line `key=value` rendering used by the mask manifest.
  std::string describe() const;
};

MaskTensor gen_rect(const MaskSpec& spec);
MaskTensor gen_freeform(const MaskSpec& spec);
MaskTensor gen_cellular(const MaskSpec& spec);
// Dispatches on spec.kind.
MaskTensor generate_mask(const MaskSpec& spec);

double hole_fraction(const MaskTensor& m) noexcept;

// Draws a filled disk of the given radius centred at (cy, cx), clipped.
void stamp_disk(MaskTensor& m, double cy, double cx, double radius);
// Thick segment: every pixel centre within `radius` of the segment.
void stamp_segment(MaskTensor& m, double y0, double x0, double y1, double x1, double radius);

// One synchronous step of the cellular smoothing rule over a grid[h*w] of
// 0/1 values. A cell becomes 1 iff ones/cells ≥ threshold/9 over the in-frame
// part of its 3×3 neighbourhood.
void cellular_step(const std::uint8_t* src, std::uint8_t* dst, int h, int w, int threshold);

}  // namespace deepgin
