#pragma once

#include <optional>
#include <string>

#include "deepgin/image.hpp"
#include "deepgin/nnblocks.hpp"

namespace deepgin {

struct GeneratorConfig {
  int base_width = 64;
  int image_size = 256;  // tile side; bottleneck = image_size / 4
  nn::BlockKind block = nn::BlockKind::spd;
  int coarse_blocks = 6;
  int refine_blocks = 6;  // split evenly around the SA block
  int coarse_rates = 8;
  int refine_rates = 4;
  bool use_sa = true;
  bool use_mssa = true;
  bool use_bp = true;

  int bottleneck_width() const { return 4 * base_width; }
  int refine_width() const { return 8 * base_width; }
  int bottleneck_size() const { return image_size / 4; }
  void validate() const;
};

// Multi-scale self-attention over a C-channel bottleneck map: attention at
// full, half and quarter resolution on C/4-channel reductions, fused by a
// 1×1 conv and added back to the input.
class Mssa {
 public:
  Mssa() = default;
  Mssa(nn::ParamRegistry& reg, const std::string& name, int channels);

  nn::Tensor forward(const nn::Tensor& f) const;

  nn::Conv2d reduce_a, reduce_b, reduce_c, fuse;
  nn::SaBlock sa_a, sa_b, sa_c;
};

std::size_t mssa_param_count(int channels);

// e = i_lr − down4(i_pre); clamp₀¹(i_pre + γ_bp ⊙ up4(e)).
nn::Tensor back_project(const nn::Tensor& i_pre, const nn::Tensor& i_lr, const nn::Tensor& gamma_bp);

class CoarseGenerator {
 public:
  CoarseGenerator(nn::ParamRegistry& reg, const GeneratorConfig& cfg);

  // i_in [N,3,S,S], m [N,1,S,S] → i_coarse [N,3,S,S].
  nn::Tensor forward(const nn::Tensor& i_in, const nn::Tensor& m) const;

 private:
  GeneratorConfig cfg_;
  nn::Conv2d stem_, down1_, down2_;
  std::vector<nn::ResBlock> blocks_;
  nn::Conv2d up1_, up2_, out_;
};

struct RefineOutput {
  nn::Tensor i_out;
  nn::Tensor i_lr;   // undefined when back projection is disabled
  nn::Tensor i_pre;  // decoder output before back projection
};

class RefineGenerator {
 public:
  RefineGenerator(nn::ParamRegistry& reg, const GeneratorConfig& cfg);

  RefineOutput forward(const nn::Tensor& i_coarse, const nn::Tensor& m) const;

  const nn::Tensor& gamma_bp() const { return gamma_bp_; }

 private:
  GeneratorConfig cfg_;
  nn::Conv2d stem_, down1_, down2_, expand_;
  std::vector<nn::ResBlock> blocks_a_, blocks_b_;
  std::optional<nn::SaBlock> sa_;
  std::optional<Mssa> mssa_;
  nn::Conv2d reduce_;
  nn::Conv2d lr_head_;
  nn::Tensor gamma_bp_;
  nn::Conv2d up1_, up2_, out_;
};

struct InpaintResult {
  nn::Tensor i_coarse;
  nn::Tensor i_lr;
  nn::Tensor i_out;
  nn::Tensor i_compltd;
};

// Both generators with their own parameter registries.
class DeepGin {
 public:
  explicit DeepGin(const GeneratorConfig& cfg);

  // i_compltd = composite(i_out, i_gt, m) when i_gt is defined, else i_out.
  InpaintResult forward(const nn::Tensor& i_in, const nn::Tensor& m,
                        const nn::Tensor& i_gt = {}) const;

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamRegistry& g1_params() { return g1_reg_; }
  nn::ParamRegistry& g2_params() { return g2_reg_; }
  const nn::ParamRegistry& g1_params() const { return g1_reg_; }
  const nn::ParamRegistry& g2_params() const { return g2_reg_; }
  std::size_t param_count() const { return g1_reg_.count() + g2_reg_.count(); }

 private:
  GeneratorConfig cfg_;
  nn::ParamRegistry g1_reg_;
  nn::ParamRegistry g2_reg_;
  CoarseGenerator g1_;
  RefineGenerator g2_;
};

// Parameter totals without allocating weights (shapes only).
std::size_t g1_param_count(const GeneratorConfig& cfg);
std::size_t g2_param_count(const GeneratorConfig& cfg);

// Tensor adapters between images and [1,C,H,W] / batched tensors.
nn::Tensor to_tensor(const std::vector<ImageTensor>& images);
nn::Tensor to_tensor(const std::vector<MaskTensor>& masks);
ImageTensor to_image(const nn::Tensor& t, int index);

}  // namespace deepgin
