#include "deepgin/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "deepgin/errors.hpp"
#include "deepgin/rng.hpp"

namespace deepgin {
namespace {

CounterRng mask_rng(const MaskSpec& spec, int attempt) {
  return CounterRng(derive_key({spec.seed, static_cast<std::uint64_t>(spec.kind),
                                static_cast<std::uint64_t>(attempt)}));
}

bool within(const std::optional<FractionBounds>& bounds, double fraction) {
  return !bounds || (fraction >= bounds->lo && fraction <= bounds->hi);
}

void check_bounds(const std::optional<FractionBounds>& bounds) {
  if (bounds && !(bounds->lo >= 0.0 && bounds->lo <= bounds->hi && bounds->hi <= 1.0)) {
    throw ArgumentError("hole-fraction bounds must satisfy 0 <= lo <= hi <= 1");
  }
}

template <typename Attempt>
MaskTensor with_rejection(const MaskSpec& spec, const std::optional<FractionBounds>& bounds,
                          Attempt&& attempt) {
  for (int i = 0; i < kMaskRetryBudget; ++i) {
    MaskTensor m = attempt(i);
    if (within(bounds, hole_fraction(m))) return m;
  }
  std::ostringstream msg;
  msg << to_string(spec.kind) << " mask: hole fraction bounds [" << bounds->lo << ", "
      << bounds->hi << "] not reached within " << kMaskRetryBudget << " attempts (seed "
      << spec.seed << ")";
  throw GenerationError(msg.str());
}

}  // namespace

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::rect:
      return "rect";
    case MaskKind::freeform:
      return "freeform";
    case MaskKind::cellular:
      return "cellular";
  }
  return "unknown";
}

MaskKind parse_mask_kind(const std::string& name) {
  if (name == "rect") return MaskKind::rect;
  if (name == "freeform") return MaskKind::freeform;
  if (name == "cellular") return MaskKind::cellular;
  throw ArgumentError("unknown mask kind '" + name + "' (expected rect, freeform or cellular)");
}

MaskSpec MaskSpec::rect(int h, int w, std::uint64_t seed, RectParams p) {
  return {MaskKind::rect, h, w, seed, p};
}
MaskSpec MaskSpec::freeform(int h, int w, std::uint64_t seed, FreeformParams p) {
  return {MaskKind::freeform, h, w, seed, p};
}
MaskSpec MaskSpec::cellular(int h, int w, std::uint64_t seed, CellularParams p) {
  return {MaskKind::cellular, h, w, seed, p};
}

MaskSpec MaskSpec::of_kind(MaskKind kind, int h, int w, std::uint64_t seed) {
  switch (kind) {
    case MaskKind::rect:
      return rect(h, w, seed);
    case MaskKind::freeform:
      return freeform(h, w, seed);
    case MaskKind::cellular:
      return cellular(h, w, seed);
  }
  throw ArgumentError("unknown mask kind");
}

void MaskSpec::validate() const {
  if (height < 1 || width < 1) throw ArgumentError("mask dimensions must be positive");
  const bool kind_matches =
      (kind == MaskKind::rect && std::holds_alternative<RectParams>(params)) ||
      (kind == MaskKind::freeform && std::holds_alternative<FreeformParams>(params)) ||
      (kind == MaskKind::cellular && std::holds_alternative<CellularParams>(params));
  if (!kind_matches) throw ArgumentError("mask parameters do not match mask kind");

  if (const auto* r = std::get_if<RectParams>(&params)) {
    if (!(r->lo > 0.0 && r->lo <= r->hi && r->hi < 1.0)) {
      throw ArgumentError("rect mask needs 0 < lo <= hi < 1");
    }
  } else if (const auto* f = std::get_if<FreeformParams>(&params)) {
    if (f->min_strokes < 1 || f->min_strokes > f->max_strokes || f->min_vertices < 1 ||
        f->min_vertices > f->max_vertices || !(f->min_brush_width > 0.0) ||
        f->min_brush_width > f->max_brush_width || !(f->min_segment_length > 0.0) ||
        f->min_segment_length > f->max_segment_length || !(f->max_angle_step >= 0.0)) {
      throw ArgumentError("freeform mask counts/widths/lengths must be positive ranges");
    }
    check_bounds(f->bounds);
  } else if (const auto* c = std::get_if<CellularParams>(&params)) {
    if (!(c->init_density >= 0.0 && c->init_density <= 1.0) || c->threshold < 0 ||
        c->threshold > 9 || c->iterations < 0 || c->grid_size < 1) {
      throw ArgumentError("cellular mask parameters out of range");
    }
    check_bounds(c->bounds);
  }
}

std::string MaskSpec::describe() const {
  std::ostringstream out;
  out << "kind=" << to_string(kind) << " height=" << height << " width=" << width
      << " seed=" << seed;
  auto bounds_text = [&](const std::optional<FractionBounds>& b) {
    if (b) {
      out << " bounds=" << b->lo << "," << b->hi;
    } else {
      out << " bounds=none";
    }
  };
  if (const auto* r = std::get_if<RectParams>(&params)) {
    out << " lo=" << r->lo << " hi=" << r->hi;
  } else if (const auto* f = std::get_if<FreeformParams>(&params)) {
    out << " strokes=" << f->min_strokes << "-" << f->max_strokes << " vertices="
        << f->min_vertices << "-" << f->max_vertices << " brush=" << f->min_brush_width << "-"
        << f->max_brush_width << " segment=" << f->min_segment_length << "-"
        << f->max_segment_length << " max_angle_step=" << f->max_angle_step;
    bounds_text(f->bounds);
  } else if (const auto* c = std::get_if<CellularParams>(&params)) {
    out << " rule=" << kCellularRuleTag << " density=" << c->init_density
        << " threshold=" << c->threshold << " iterations=" << c->iterations
        << " grid=" << c->grid_size;
    bounds_text(c->bounds);
  }
  return out.str();
}

double hole_fraction(const MaskTensor& m) noexcept {
  if (m.size() == 0) return 0.0;
  std::size_t ones = 0;
  for (auto v : m.data()) ones += v;
  return static_cast<double>(ones) / static_cast<double>(m.size());
}

MaskTensor gen_rect(const MaskSpec& spec) {
  if (spec.kind != MaskKind::rect) throw ArgumentError("gen_rect needs a rect MaskSpec");
  spec.validate();
  const auto& p = std::get<RectParams>(spec.params);
  // Inclusive integer side ranges inside [lo·N, hi·N]; the epsilon guards
  // against products like 0.3·256 landing a hair below an integer.
  auto side_range = [&](int n) {
    const int lo = static_cast<int>(std::ceil(p.lo * n - 1e-9));
    const int hi = static_cast<int>(std::floor(p.hi * n + 1e-9));
    if (lo < 1 || lo > hi || hi > n) {
      throw ArgumentError("rect mask cannot fit a side in [" + std::to_string(p.lo * n) + ", " +
                          std::to_string(p.hi * n) + "] pixels");
    }
    return std::pair{lo, hi};
  };
  const auto [hlo, hhi] = side_range(spec.height);
  const auto [wlo, whi] = side_range(spec.width);
  CounterRng rng = mask_rng(spec, 0);
  const int rh = static_cast<int>(rng.uniform_int(hlo, hhi));
  const int rw = static_cast<int>(rng.uniform_int(wlo, whi));
  const int top = static_cast<int>(rng.uniform_int(0, spec.height - rh));
  const int left = static_cast<int>(rng.uniform_int(0, spec.width - rw));
  MaskTensor m(spec.height, spec.width);
  for (int y = top; y < top + rh; ++y) {
    for (int x = left; x < left + rw; ++x) m.at(y, x) = 1;
  }
  return m;
}

void stamp_disk(MaskTensor& m, double cy, double cx, double radius) {
  stamp_segment(m, cy, cx, cy, cx, radius);
}

void stamp_segment(MaskTensor& m, double y0, double x0, double y1, double x1, double radius) {
  const int ymin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - radius)));
  const int ymax = std::min(m.height() - 1, static_cast<int>(std::ceil(std::max(y0, y1) + radius)));
  const int xmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - radius)));
  const int xmax = std::min(m.width() - 1, static_cast<int>(std::ceil(std::max(x0, x1) + radius)));
  const double dy = y1 - y0;
  const double dx = x1 - x0;
  const double len2 = dy * dy + dx * dx;
  const double r2 = radius * radius;
  for (int y = ymin; y <= ymax; ++y) {
    for (int x = xmin; x <= xmax; ++x) {
      double t = 0.0;
      if (len2 > 0.0) t = std::clamp(((y - y0) * dy + (x - x0) * dx) / len2, 0.0, 1.0);
      const double py = y0 + t * dy - y;
      const double px = x0 + t * dx - x;
      if (py * py + px * px <= r2) m.at(y, x) = 1;
    }
  }
}

MaskTensor gen_freeform(const MaskSpec& spec) {
  if (spec.kind != MaskKind::freeform) throw ArgumentError("gen_freeform needs a freeform MaskSpec");
  spec.validate();
  const auto& p = std::get<FreeformParams>(spec.params);
  const double scale = std::min(spec.height, spec.width) / 256.0;
  return with_rejection(spec, p.bounds, [&](int attempt) {
    CounterRng rng = mask_rng(spec, attempt);
    MaskTensor m(spec.height, spec.width);
    const auto strokes = rng.uniform_int(p.min_strokes, p.max_strokes);
    for (std::int64_t s = 0; s < strokes; ++s) {
      double y = rng.uniform(0.0, spec.height);
      double x = rng.uniform(0.0, spec.width);
      const auto vertices = rng.uniform_int(p.min_vertices, p.max_vertices);
      const double radius = 0.5 * rng.uniform(p.min_brush_width, p.max_brush_width) * scale;
      double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
      stamp_disk(m, y, x, radius);
      for (std::int64_t v = 1; v < vertices; ++v) {
        heading += rng.uniform(-p.max_angle_step, p.max_angle_step);
        const double length = rng.uniform(p.min_segment_length, p.max_segment_length) * scale;
        const double ny = std::clamp(y + length * std::sin(heading), 0.0, spec.height - 1.0);
        const double nx = std::clamp(x + length * std::cos(heading), 0.0, spec.width - 1.0);
        stamp_segment(m, y, x, ny, nx, radius);
        y = ny;
        x = nx;
      }
    }
    return m;
  });
}

void cellular_step(const std::uint8_t* src, std::uint8_t* dst, int h, int w, int threshold) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int ones = 0;
      int cells = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          ++cells;
          ones += src[yy * w + xx];
        }
      }
      dst[y * w + x] = 9 * ones >= threshold * cells ? 1 : 0;
    }
  }
}

MaskTensor gen_cellular(const MaskSpec& spec) {
  if (spec.kind != MaskKind::cellular) throw ArgumentError("gen_cellular needs a cellular MaskSpec");
  spec.validate();
  const auto& p = std::get<CellularParams>(spec.params);
  const int gh = std::min(p.grid_size, spec.height);
  const int gw = std::min(p.grid_size, spec.width);
  return with_rejection(spec, p.bounds, [&](int attempt) {
    CounterRng rng = mask_rng(spec, attempt);
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(gh) * gw);
    std::vector<std::uint8_t> next(grid.size());
    for (auto& cell : grid) cell = rng.bernoulli(p.init_density) ? 1 : 0;
    for (int it = 0; it < p.iterations; ++it) {
      cellular_step(grid.data(), next.data(), gh, gw, p.threshold);
      grid.swap(next);
    }
    return resize_nearest(MaskTensor(gh, gw, std::move(grid)), spec.height, spec.width);
  });
}

MaskTensor generate_mask(const MaskSpec& spec) {
  switch (spec.kind) {
    case MaskKind::rect:
      return gen_rect(spec);
    case MaskKind::freeform:
      return gen_freeform(spec);
    case MaskKind::cellular:
      return gen_cellular(spec);
  }
  throw ArgumentError("unknown mask kind");
}

}  // namespace deepgin
