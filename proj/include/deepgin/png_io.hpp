#pragma once

#include <cstdint>
#include <filesystem>

#include "deepgin/image.hpp"

namespace deepgin {

// 8-bit PNG ingestion: v ↦ v/255, grayscale replicated to RGB, alpha dropped.
// Throws IoError for missing files and FormatError for undecodable content.
ImageTensor load_png(const std::filesystem::path& path);

// Writes an 8-bit RGB PNG (or grayscale for 1-channel images). Values are
// quantised with round-half-away-from-zero after clamping to [0, 1].
void save_png(const ImageTensor& img, const std::filesystem::path& path);

// Masks: single-channel 8-bit, byte ≥ 128 decodes to hole.
MaskTensor load_mask_png(const std::filesystem::path& path);
// Holes written as 255, valid pixels as 0.
void save_mask_png(const MaskTensor& mask, const std::filesystem::path& path);

std::uint8_t quantize_unit(double v) noexcept;

}  // namespace deepgin
