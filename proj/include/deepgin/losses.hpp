#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "deepgin/discriminators.hpp"
#include "deepgin/generators.hpp"

namespace deepgin {

struct LossWeights {
  double hole = 5.0;
  double adv = 0.001;
  double perceptual = 0.05;
  double style = 80.0;
  double tv = 0.1;

  void validate() const;
};

// Frozen feature extractor for the perceptual and style terms. Extractor
// weights never require gradients; gradients flow only to the input.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // x [N,3,H,W] in [0,1] → one feature map per tapped layer.
  virtual std::vector<nn::Tensor> extract(const nn::Tensor& x) const = 0;
  virtual std::vector<int> channels() const = 0;
  virtual std::string name() const = 0;
};

// φ(x) = x, a single layer. For closed-form loss checks.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::vector<nn::Tensor> extract(const nn::Tensor& x) const override { return {x}; }
  std::vector<int> channels() const override { return {3}; }
  std::string name() const override { return "identity"; }
};

// Five fixed-seed random 3×3 conv stages with the layer geometry of the
// reference network's conv1_1 … conv5_1 taps: widths 64,128,256,512,512 at
// H, H/2, … H/16, relu after each conv and 2×2 average pooling between.
// Pooling stops once a map is 1×1.
class StubExtractor final : public FeatureExtractor {
 public:
  explicit StubExtractor(std::uint64_t seed = 0x76676731ull);

  std::vector<nn::Tensor> extract(const nn::Tensor& x) const override;
  std::vector<int> channels() const override;
  std::string name() const override { return "stub"; }

 private:
  std::vector<nn::Conv2d> stages_;
  nn::ParamRegistry reg_;
};

// The 19-layer reference network up to conv5_1, loaded from a tensor
// archive (see tools/export_vgg19.py). Inputs are normalized with the
// ImageNet channel statistics; taps follow the relu of each convN_1.
class Vgg19Extractor final : public FeatureExtractor {
 public:
  explicit Vgg19Extractor(const std::filesystem::path& weights);

  std::vector<nn::Tensor> extract(const nn::Tensor& x) const override;
  std::vector<int> channels() const override { return {64, 128, 256, 512, 512}; }
  std::string name() const override { return "vgg19"; }

 private:
  struct Layer {
    nn::Tensor weight;
    nn::Tensor bias;
    bool pool_before = false;
    bool tap = false;
  };
  std::vector<Layer> layers_;
};

// kind ∈ {stub, vgg19, identity}. vgg19 without a readable weight file
// raises CapabilityError.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& kind,
                                                 const std::filesystem::path& weights = {},
                                                 std::uint64_t seed = 0x76676731ull);

struct L1Terms {
  nn::Tensor hole;
  nn::Tensor valid;
  nn::Tensor total;  // λ_hole·hole + valid
};

// Per-region mean absolute error summed over the pairs (i_coarse, i_gt),
// (i_out, i_gt) and, when i_lr is defined, (i_lr, down4(i_gt)) with a 4×4
// majority-vote mask. An empty region contributes 0.
L1Terms l1_loss(const nn::Tensor& i_coarse, const nn::Tensor& i_out, const nn::Tensor& i_lr,
                const nn::Tensor& i_gt, const nn::Tensor& m, double lambda_hole);

// −mean(map₁) − mean(map₂).
nn::Tensor adv_g_loss(const PatchMaps& fake);
// Σ_d mean(relu(1 − real_d)) + mean(relu(1 + fake_d)).
nn::Tensor adv_d_loss(const PatchMaps& real, const PatchMaps& fake);

// f [N,C,H,W] → [N,C,C], F Fᵀ / (C·H·W) per sample.
nn::Tensor gram(const nn::Tensor& f);

nn::Tensor perceptual_loss(const nn::Tensor& i_out, const nn::Tensor& i_compltd,
                           const nn::Tensor& i_gt, const FeatureExtractor& extractor);
nn::Tensor style_loss(const nn::Tensor& i_out, const nn::Tensor& i_compltd, const nn::Tensor& i_gt,
                      const FeatureExtractor& extractor);
// Feature-level forms used by the two losses above; `gt` features are
// constants.
nn::Tensor perceptual_from_features(const std::vector<nn::Tensor>& out,
                                    const std::vector<nn::Tensor>& compltd,
                                    const std::vector<nn::Tensor>& gt);
nn::Tensor style_from_features(const std::vector<nn::Tensor>& out,
                               const std::vector<nn::Tensor>& compltd,
                               const std::vector<nn::Tensor>& gt);

// Mean absolute vertical plus horizontal neighbour differences.
nn::Tensor tv_loss(const nn::Tensor& img);

struct GeneratorLossParts {
  nn::Tensor l1;  // already includes λ_hole
  nn::Tensor adv;
  nn::Tensor perceptual;
  nn::Tensor style;
  nn::Tensor tv;
};

// L_L1 + λ_adv·adv + λ_perc·perceptual + λ_style·style + λ_tv·tv. Parts
// whose weight is 0 may be undefined and are skipped. A non-finite part
// throws NonFiniteError naming it.
nn::Tensor total_g_loss(const GeneratorLossParts& parts, const LossWeights& w);

// Throws NonFiniteError(term, value) unless t holds a finite scalar.
void check_finite(const nn::Tensor& t, const std::string& term);

}  // namespace deepgin
