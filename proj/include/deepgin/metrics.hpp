#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepgin/image.hpp"

namespace deepgin {

// PSNR on [0,1] values, 10·log10(1/MSE). Identical images give kPsnrCap.
inline constexpr double kPsnrCap = 99.0;
double psnr(const ImageTensor& a, const ImageTensor& b);

// Mean local SSIM over every fully-inside 11×11 Gaussian window (σ = 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1), per channel, then averaged.
double ssim(const ImageTensor& a, const ImageTensor& b);

// 100 · mean |a − b|.
double mean_l1_pct(const ImageTensor& a, const ImageTensor& b);

struct EvalRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double l1_pct = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // sorted by name
  EvalRow aggregate;          // arithmetic means, name "AGGREGATE"
  std::uint64_t fingerprint = 0;

  // name,psnr,ssim,l1_pct rows followed by the AGGREGATE row.
  std::string to_csv() const;
  std::string to_text() const;
};

EvalRow evaluate_pair(const std::string& name, const ImageTensor& completed, const ImageTensor& gt);
// Sorts rows by name and fills the aggregate.
EvalReport make_report(std::vector<EvalRow> rows);

// Pairs PNGs by filename. Unpaired files raise ArgumentError naming every one.
EvalReport evaluate_dataset(const std::filesystem::path& completed_dir,
                            const std::filesystem::path& gt_dir);

}  // namespace deepgin
