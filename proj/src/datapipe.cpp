#include "deepgin/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "deepgin/errors.hpp"
#include "deepgin/rng.hpp"

namespace deepgin {
namespace {

template <typename Grid>
void check_half_size(const Grid& g, Phase phase) {
  if (g.height() % 2 != 0 || g.width() % 2 != 0 || g.height() != g.width() || g.height() == 0) {
    throw ArgumentError("subsample_select needs an even square input, got " +
                        std::to_string(g.height()) + "x" + std::to_string(g.width()));
  }
  if (phase.row < 0 || phase.row > 1 || phase.col < 0 || phase.col > 1) {
    throw ArgumentError("subsample phase must lie in {0,1}^2");
  }
}

ImageTensor strided_view(const ImageTensor& img, int stride, Phase phase) {
  const int oh = img.height() / stride;
  const int ow = img.width() / stride;
  ImageTensor out(oh, ow, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        out.at(c, y, x) = img.at(c, stride * y + phase.row, stride * x + phase.col);
      }
    }
  }
  return out;
}

MaskTensor strided_view(const MaskTensor& m, int stride, Phase phase) {
  const int oh = m.height() / stride;
  const int ow = m.width() / stride;
  MaskTensor out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) out.at(y, x) = m.at(stride * y + phase.row, stride * x + phase.col);
  }
  return out;
}

}  // namespace

TileLayout TileLayout::make(int height, int width, int tile) {
  if (tile < 1 || height < tile || width < tile || height % tile != 0 || width % tile != 0) {
    throw ArgumentError("tile decomposition needs dimensions divisible by " +
                        std::to_string(tile) + ", got " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  if (height / tile != width / tile) {
    throw ArgumentError("tile decomposition needs equal row and column strides");
  }
  TileLayout layout;
  layout.stride = height / tile;
  layout.height = height;
  layout.width = width;
  for (int i = 0; i < layout.stride; ++i) {
    for (int j = 0; j < layout.stride; ++j) layout.phases.push_back({i, j});
  }
  return layout;
}

ImageTensor subsample_select(const ImageTensor& img, Phase phase) {
  check_half_size(img, phase);
  return strided_view(img, 2, phase);
}

MaskTensor subsample_select(const MaskTensor& m, Phase phase) {
  check_half_size(m, phase);
  return strided_view(m, 2, phase);
}

std::pair<std::vector<ImageTensor>, TileLayout> tile_decompose(const ImageTensor& img, int tile) {
  TileLayout layout = TileLayout::make(img.height(), img.width(), tile);
  std::vector<ImageTensor> tiles;
  tiles.reserve(layout.phases.size());
  for (const Phase& p : layout.phases) tiles.push_back(strided_view(img, layout.stride, p));
  return {std::move(tiles), std::move(layout)};
}

std::pair<std::vector<MaskTensor>, TileLayout> tile_decompose(const MaskTensor& m, int tile) {
  TileLayout layout = TileLayout::make(m.height(), m.width(), tile);
  std::vector<MaskTensor> tiles;
  tiles.reserve(layout.phases.size());
  for (const Phase& p : layout.phases) tiles.push_back(strided_view(m, layout.stride, p));
  return {std::move(tiles), std::move(layout)};
}

ImageTensor tile_regroup(const std::vector<ImageTensor>& tiles, const TileLayout& layout) {
  const int s = layout.stride;
  if (s < 1 || tiles.size() != layout.phases.size() ||
      tiles.size() != static_cast<std::size_t>(s) * s) {
    throw ArgumentError("tile_regroup: expected " + std::to_string(s * s) + " tiles, got " +
                        std::to_string(tiles.size()));
  }
  const int th = layout.height / s;
  const int tw = layout.width / s;
  const int channels = tiles.front().channels();
  for (const auto& t : tiles) {
    if (t.height() != th || t.width() != tw || t.channels() != channels) {
      throw ArgumentError("tile_regroup: tile size mismatch");
    }
  }
  ImageTensor out(layout.height, layout.width, channels);
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    const Phase p = layout.phases[k];
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) out.at(c, s * y + p.row, s * x + p.col) = tiles[k].at(c, y, x);
      }
    }
  }
  return out;
}

MaskSpec batch_mask_spec(std::uint64_t batch_seed, std::size_t image_index, MaskKind kind,
                         int tile) {
  const std::uint64_t seed =
      derive_key({batch_seed, static_cast<std::uint64_t>(image_index),
                  static_cast<std::uint64_t>(kind), 0x6d61736bull /* "mask" */});
  return MaskSpec::of_kind(kind, tile, tile, seed);
}

std::vector<TrainingSample> make_batch(const std::vector<ImageTensor>& images,
                                       std::uint64_t batch_seed, int tile) {
  if (images.empty()) throw ArgumentError("make_batch needs at least one image");
  if (tile < 1) throw ArgumentError("make_batch tile size must be positive");
  constexpr MaskKind kKinds[] = {MaskKind::rect, MaskKind::freeform, MaskKind::cellular};
  std::vector<TrainingSample> batch;
  batch.reserve(images.size() * 3);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTensor big = resize_bilinear(images[i], 2 * tile, 2 * tile);
    CounterRng phase_rng(derive_key({batch_seed, static_cast<std::uint64_t>(i), 0x7068617365ull}));
    const Phase phase{static_cast<int>(phase_rng.uniform_int(0, 1)),
                      static_cast<int>(phase_rng.uniform_int(0, 1))};
    const ImageTensor gt = subsample_select(big, phase);
    for (MaskKind kind : kKinds) {
      MaskTensor m = generate_mask(batch_mask_spec(batch_seed, i, kind, tile));
      batch.push_back({zero_fill(gt, m), std::move(m), gt, kind});
    }
  }
  return batch;
}

std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw IoError("not a directory: " + root.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(derive_key({seed, epoch, 0x73687566ull}));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace deepgin
