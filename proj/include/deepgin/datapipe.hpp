#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "deepgin/image.hpp"
#include "deepgin/maskgen.hpp"

namespace deepgin {

struct TrainingSample {
  ImageTensor i_in;  // (1 − m) ⊙ i_gt, holes zero-filled
  MaskTensor m;
  ImageTensor i_gt;
  MaskKind kind = MaskKind::rect;
};

struct Phase {
  int row = 0;
  int col = 0;
  friend bool operator==(const Phase&, const Phase&) = default;
};

// Strided phase decomposition of an image into stride² equally sized tiles.
struct TileLayout {
  int stride = 1;
  std::vector<Phase> phases;  // row-major over [0, stride)²
  int height = 0;
  int width = 0;

  static TileLayout make(int height, int width, int tile);
};

// out[y, x] = img[2y + phase.row, 2x + phase.col] for a 2T×2T image.
ImageTensor subsample_select(const ImageTensor& img, Phase phase);
MaskTensor subsample_select(const MaskTensor& m, Phase phase);

std::pair<std::vector<ImageTensor>, TileLayout> tile_decompose(const ImageTensor& img, int tile);
std::pair<std::vector<MaskTensor>, TileLayout> tile_decompose(const MaskTensor& m, int tile);
ImageTensor tile_regroup(const std::vector<ImageTensor>& tiles, const TileLayout& layout);

// Forms 3 training samples per image (rect, freeform, cellular, in that
// order): resize to 2T×2T, choose a phase, subsample to T×T, mask and
// zero-fill. Mask seeds derive from (batch_seed, image index, kind).
// `tile` is 256 for the reference configuration.
std::vector<TrainingSample> make_batch(const std::vector<ImageTensor>& images,
                                       std::uint64_t batch_seed, int tile = 256);

// Mask spec used for (batch_seed, image index, kind) with default parameters.
MaskSpec batch_mask_spec(std::uint64_t batch_seed, std::size_t image_index, MaskKind kind,
                         int tile);

// Lexicographically ordered *.png files directly under `root`.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& root);

// Deterministic permutation of [0, n) for (seed, epoch); Fisher-Yates with
// a counter-based stream.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

}  // namespace deepgin
