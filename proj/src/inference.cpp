#include "deepgin/inference.hpp"

#include <algorithm>
#include <cmath>

#include "deepgin/datapipe.hpp"
#include "deepgin/errors.hpp"

namespace deepgin {

int working_side(int height, int width, int tile) {
  if (height < 1 || width < 1 || tile < 1) throw ArgumentError("working_side: sizes must be positive");
  const int s = std::max(1, static_cast<int>(std::lround(static_cast<double>(std::max(height, width)) / tile)));
  return s * tile;
}

ImageTensor inpaint(const DeepGin& model, const ImageTensor& image, const MaskTensor& mask,
                    InferOutput which) {
  if (!mask.matches(image)) throw ArgumentError("inpaint: mask and image sizes differ");
  if (image.channels() != 3) throw ArgumentError("inpaint: expected a 3-channel image");
  nn::NoGradGuard no_grad;
  const int tile = model.config().image_size;
  const int side = working_side(image.height(), image.width(), tile);
  const bool resized = side != image.height() || side != image.width();
  const ImageTensor work_img = resized ? resize_bilinear(image, side, side) : image;
  const MaskTensor work_mask = resized ? resize_nearest(mask, side, side) : mask;

  auto [img_tiles, layout] = tile_decompose(zero_fill(work_img, work_mask), tile);
  auto [mask_tiles, mask_layout] = tile_decompose(work_mask, tile);
  std::vector<ImageTensor> outs;
  outs.reserve(img_tiles.size());
  for (std::size_t i = 0; i < img_tiles.size(); ++i) {
    const InpaintResult r = model.forward(to_tensor({img_tiles[i]}), to_tensor({mask_tiles[i]}));
    outs.push_back(to_image(which == InferOutput::coarse ? r.i_coarse : r.i_out, 0));
  }
  ImageTensor out = tile_regroup(outs, layout);
  if (resized) out = resize_bilinear(out, image.height(), image.width());
  if (which == InferOutput::composite) out = composite(out, image, mask);
  return out;
}

}  // namespace deepgin
