#pragma once

#include "deepgin/generators.hpp"
#include "deepgin/image.hpp"

namespace deepgin {

enum class InferOutput { composite, raw, coarse };

// Square working side s·tile with s = max(1, round(max(h, w) / tile)).
int working_side(int height, int width, int tile);

// Tiled inference: resize to the working side when needed, sub-sample into
// tile×tile phases, run the model on each, regroup and resize back. The
// composite output then restores every valid pixel of `image` exactly.
ImageTensor inpaint(const DeepGin& model, const ImageTensor& image, const MaskTensor& mask,
                    InferOutput which = InferOutput::composite);

}  // namespace deepgin
