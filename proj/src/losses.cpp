#include "deepgin/losses.hpp"

#include <cmath>
#include <string>

#include "deepgin/archive.hpp"
#include "deepgin/errors.hpp"

namespace deepgin {

using nn::Tensor;
using nn::shape_string;

void LossWeights::validate() const {
  for (double w : {hole, adv, perceptual, style, tv}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

namespace {

void freeze(nn::ParamRegistry& reg) {
  for (auto& p : reg.params()) p.tensor.set_requires_grad(false);
}

// Region weights for a pooled mean over the selected pixels of every
// channel: w = sel / (count·C), all zeros for an empty region.
Tensor region_weights(const Tensor& m, int channels, bool holes) {
  const int n = m.dim(0);
  const std::size_t plane = static_cast<std::size_t>(m.dim(2)) * m.dim(3);
  const auto mv = m.values();
  std::size_t count = 0;
  for (double v : mv) count += ((v != 0.0) == holes) ? 1 : 0;
  Tensor w({n, channels, m.dim(2), m.dim(3)}, 0.0);
  if (count == 0) return w;
  const double inv = 1.0 / (static_cast<double>(count) * channels);
  auto wv = w.values();
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const bool sel = (mv[b * plane + i] != 0.0) == holes;
        wv[(static_cast<std::size_t>(b) * channels + c) * plane + i] = sel ? inv : 0.0;
      }
    }
  }
  return w;
}

// 4×4 majority vote, matching downsample_majority on MaskTensor.
Tensor lr_mask(const Tensor& m) {
  const int n = m.dim(0);
  const int h = m.dim(2);
  const int w = m.dim(3);
  if (h % 4 != 0 || w % 4 != 0) throw ArgumentError("mask size must be divisible by 4");
  Tensor out({n, 1, h / 4, w / 4}, 0.0);
  const auto mv = m.values();
  auto ov = out.values();
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h / 4; ++y) {
      for (int x = 0; x < w / 4; ++x) {
        int ones = 0;
        for (int dy = 0; dy < 4; ++dy) {
          for (int dx = 0; dx < 4; ++dx) {
            ones += mv[(static_cast<std::size_t>(b) * h + 4 * y + dy) * w + 4 * x + dx] != 0.0;
          }
        }
        ov[(static_cast<std::size_t>(b) * (h / 4) + y) * (w / 4) + x] = 2 * ones >= 16 ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

void check_pair(const Tensor& pred, const Tensor& target, const Tensor& m, const char* what) {
  if (pred.shape() != target.shape() || pred.ndim() != 4 || m.ndim() != 4 ||
      m.dim(0) != pred.dim(0) || m.dim(1) != 1 || m.dim(2) != pred.dim(2) ||
      m.dim(3) != pred.dim(3)) {
    throw ArgumentError(std::string("l1_loss: ") + what + " shapes " + shape_string(pred.shape()) +
                        ", " + shape_string(target.shape()) + ", mask " + shape_string(m.shape()) +
                        " disagree");
  }
}

Tensor sum_all(std::vector<Tensor> terms) {
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = nn::add(acc, terms[i]);
  return acc;
}

Tensor constant_like(const Tensor& x) { return x.requires_grad() ? x.detach() : x; }

Tensor normalize_imagenet(const Tensor& x) {
  static const double kMean[3] = {0.485, 0.456, 0.406};
  static const double kStd[3] = {0.229, 0.224, 0.225};
  Tensor inv_std({3}, std::vector<double>{1 / kStd[0], 1 / kStd[1], 1 / kStd[2]});
  Tensor offset(x.shape(), 0.0);
  auto ov = offset.values();
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  for (int b = 0; b < x.dim(0); ++b) {
    for (int c = 0; c < 3; ++c) {
      std::fill_n(ov.begin() + (static_cast<std::size_t>(b) * 3 + c) * plane, plane,
                  -kMean[c] / kStd[c]);
    }
  }
  return nn::add(nn::channel_scale(x, inv_std), offset);
}

}  // namespace

StubExtractor::StubExtractor(std::uint64_t seed) {
  const int widths[] = {64, 128, 256, 512, 512};
  int in = 3;
  for (int i = 0; i < 5; ++i) {
    stages_.push_back(nn::Conv2d::same(reg_, "stub.conv" + std::to_string(i + 1) + "_1", in,
                                       widths[i], 3));
    in = widths[i];
  }
  nn::init_weights(reg_, 1.0, seed);
  freeze(reg_);
}

std::vector<int> StubExtractor::channels() const { return {64, 128, 256, 512, 512}; }

std::vector<Tensor> StubExtractor::extract(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != 3) {
    throw ArgumentError("feature extractor needs [N,3,H,W], got " + shape_string(x.shape()));
  }
  std::vector<Tensor> feats;
  Tensor h = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    // Pooling stops at 1×1, so small fixtures keep all five taps.
    if (i > 0 && (h.dim(2) > 1 || h.dim(3) > 1)) {
      if (h.dim(2) % 2 != 0 || h.dim(3) % 2 != 0) {
        throw ArgumentError("feature extractor input " + shape_string(x.shape()) +
                            " does not halve evenly down to its last tap");
      }
      h = nn::avg_pool(h, 2);
    }
    h = nn::relu(stages_[i].forward(h));
    feats.push_back(h);
  }
  return feats;
}

Vgg19Extractor::Vgg19Extractor(const std::filesystem::path& weights) {
  if (weights.empty() || !std::filesystem::exists(weights)) {
    throw CapabilityError(
        "pretrained extractor weights not found" +
        (weights.empty() ? std::string() : " at " + weights.string()) +
        "; export them with tools/export_vgg19.py or set loss.extractor=stub");
  }
  const Archive a = load_archive(weights);
  const ArchiveGroup* g = a.find("vgg19");
  if (!g) throw FormatError(weights.string() + " has no vgg19 tensor group");
  // (name, pool before, tapped)
  struct Spec {
    const char* name;
    bool pool;
    bool tap;
  };
  const Spec specs[] = {{"conv1_1", false, true}, {"conv1_2", false, false},
                        {"conv2_1", true, true},  {"conv2_2", false, false},
                        {"conv3_1", true, true},  {"conv3_2", false, false},
                        {"conv3_3", false, false}, {"conv3_4", false, false},
                        {"conv4_1", true, true},  {"conv4_2", false, false},
                        {"conv4_3", false, false}, {"conv4_4", false, false},
                        {"conv5_1", true, true}};
  for (const Spec& s : specs) {
    const ArchiveTensor* w = g->find(std::string(s.name) + ".weight");
    const ArchiveTensor* b = g->find(std::string(s.name) + ".bias");
    if (!w || !b || w->shape.size() != 4 || b->values.size() != static_cast<std::size_t>(w->shape[0])) {
      throw FormatError(weights.string() + ": missing or malformed " + s.name);
    }
    layers_.push_back({Tensor(w->shape, w->values), Tensor(b->shape, b->values), s.pool, s.tap});
  }
}

std::vector<Tensor> Vgg19Extractor::extract(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0) {
    throw ArgumentError("feature extractor needs [N,3,H,W] with H, W divisible by 16, got " +
                        shape_string(x.shape()));
  }
  std::vector<Tensor> feats;
  Tensor h = normalize_imagenet(x);
  for (const auto& layer : layers_) {
    if (layer.pool_before) h = nn::max_pool(h, 2);
    h = nn::relu(nn::conv2d(h, layer.weight, layer.bias, nn::Conv2dOptions::same(1)));
    if (layer.tap) feats.push_back(h);
  }
  return feats;
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& kind,
                                                 const std::filesystem::path& weights,
                                                 std::uint64_t seed) {
  if (kind == "stub") return std::make_unique<StubExtractor>(seed);
  if (kind == "identity") return std::make_unique<IdentityExtractor>();
  if (kind == "vgg19") return std::make_unique<Vgg19Extractor>(weights);
  throw ConfigError("unknown extractor '" + kind + "' (expected stub, vgg19 or identity)");
}

L1Terms l1_loss(const Tensor& i_coarse, const Tensor& i_out, const Tensor& i_lr, const Tensor& i_gt,
                const Tensor& m, double lambda_hole) {
  check_pair(i_coarse, i_gt, m, "coarse");
  check_pair(i_out, i_gt, m, "refined");
  const Tensor gt = constant_like(i_gt);
  const Tensor mask = constant_like(m);
  const Tensor w_hole = region_weights(mask, 3, true);
  const Tensor w_valid = region_weights(mask, 3, false);

  std::vector<Tensor> holes;
  std::vector<Tensor> valids;
  for (const Tensor* pred : {&i_coarse, &i_out}) {
    Tensor diff = nn::abs(nn::sub(*pred, gt));
    holes.push_back(nn::weighted_sum(diff, w_hole));
    valids.push_back(nn::weighted_sum(diff, w_valid));
  }
  if (i_lr.defined()) {
    Tensor gt_lr = nn::avg_pool(gt, 4);
    Tensor m_lr = lr_mask(mask);
    check_pair(i_lr, gt_lr, m_lr, "low-resolution");
    Tensor diff = nn::abs(nn::sub(i_lr, gt_lr));
    holes.push_back(nn::weighted_sum(diff, region_weights(m_lr, 3, true)));
    valids.push_back(nn::weighted_sum(diff, region_weights(m_lr, 3, false)));
  }
  L1Terms t;
  t.hole = sum_all(holes);
  t.valid = sum_all(valids);
  t.total = nn::add(nn::scale(t.hole, lambda_hole), t.valid);
  return t;
}

Tensor adv_g_loss(const PatchMaps& fake) {
  return nn::scale(nn::add(nn::mean(fake.full), nn::mean(fake.half)), -1.0);
}

Tensor adv_d_loss(const PatchMaps& real, const PatchMaps& fake) {
  std::vector<Tensor> terms;
  for (const Tensor* r : {&real.full, &real.half}) {
    terms.push_back(nn::mean(nn::relu(nn::add_scalar(nn::scale(*r, -1.0), 1.0))));
  }
  for (const Tensor* f : {&fake.full, &fake.half}) {
    terms.push_back(nn::mean(nn::relu(nn::add_scalar(*f, 1.0))));
  }
  return sum_all(terms);
}

Tensor gram(const Tensor& f) {
  if (f.ndim() != 4) throw ArgumentError("gram expects [N,C,H,W], got " + shape_string(f.shape()));
  const int n = f.dim(0);
  const int c = f.dim(1);
  const int hw = f.dim(2) * f.dim(3);
  Tensor flat = nn::reshape(f, {n, c, hw});
  return nn::scale(nn::bmm(flat, nn::transpose_last2(flat)), 1.0 / (static_cast<double>(c) * hw));
}

Tensor perceptual_from_features(const std::vector<Tensor>& out, const std::vector<Tensor>& compltd,
                                const std::vector<Tensor>& gt) {
  if (out.size() != gt.size() || compltd.size() != gt.size() || gt.empty()) {
    throw ArgumentError("perceptual loss: feature stacks differ in depth");
  }
  std::vector<Tensor> terms;
  for (std::size_t l = 0; l < gt.size(); ++l) {
    const Tensor target = constant_like(gt[l]);
    terms.push_back(nn::mean(nn::abs(nn::sub(out[l], target))));
    terms.push_back(nn::mean(nn::abs(nn::sub(compltd[l], target))));
  }
  return sum_all(terms);
}

Tensor style_from_features(const std::vector<Tensor>& out, const std::vector<Tensor>& compltd,
                           const std::vector<Tensor>& gt) {
  if (out.size() != gt.size() || compltd.size() != gt.size() || gt.empty()) {
    throw ArgumentError("style loss: feature stacks differ in depth");
  }
  std::vector<Tensor> terms;
  for (std::size_t l = 0; l < gt.size(); ++l) {
    const int c = gt[l].dim(1);
    const int n = gt[l].dim(0);
    // ‖G − G_gt‖₁ / C², averaged over the batch.
    const double w = 1.0 / (static_cast<double>(c) * c * n);
    const Tensor g_gt = gram(constant_like(gt[l]));
    terms.push_back(nn::scale(nn::sum(nn::abs(nn::sub(gram(out[l]), g_gt))), w));
    terms.push_back(nn::scale(nn::sum(nn::abs(nn::sub(gram(compltd[l]), g_gt))), w));
  }
  return sum_all(terms);
}

namespace {

struct Stacks {
  std::vector<Tensor> out, compltd, gt;
};

Stacks extract_three(const Tensor& i_out, const Tensor& i_compltd, const Tensor& i_gt,
                     const FeatureExtractor& ex) {
  if (i_out.shape() != i_gt.shape() || i_compltd.shape() != i_gt.shape()) {
    throw ArgumentError("feature losses need equally shaped images");
  }
  Stacks s;
  s.out = ex.extract(i_out);
  s.compltd = ex.extract(i_compltd);
  {
    nn::NoGradGuard guard;
    s.gt = ex.extract(constant_like(i_gt));
  }
  return s;
}

}  // namespace

Tensor perceptual_loss(const Tensor& i_out, const Tensor& i_compltd, const Tensor& i_gt,
                       const FeatureExtractor& extractor) {
  Stacks s = extract_three(i_out, i_compltd, i_gt, extractor);
  return perceptual_from_features(s.out, s.compltd, s.gt);
}

Tensor style_loss(const Tensor& i_out, const Tensor& i_compltd, const Tensor& i_gt,
                  const FeatureExtractor& extractor) {
  Stacks s = extract_three(i_out, i_compltd, i_gt, extractor);
  return style_from_features(s.out, s.compltd, s.gt);
}

Tensor tv_loss(const Tensor& img) {
  if (img.ndim() != 4) throw ArgumentError("tv_loss expects [N,C,H,W], got " + shape_string(img.shape()));
  const int n = img.dim(0);
  const int c = img.dim(1);
  const int h = img.dim(2);
  const int w = img.dim(3);
  Tensor planes = nn::reshape(img, {n * c, 1, h, w});
  Tensor total = Tensor::scalar(0.0);
  if (h >= 2) {
    Tensor k({1, 1, 2, 1}, std::vector<double>{-1.0, 1.0});
    total = nn::add(total, nn::mean(nn::abs(nn::conv2d(planes, k, {}, {}))));
  }
  if (w >= 2) {
    Tensor k({1, 1, 1, 2}, std::vector<double>{-1.0, 1.0});
    total = nn::add(total, nn::mean(nn::abs(nn::conv2d(planes, k, {}, {}))));
  }
  return total;
}

void check_finite(const Tensor& t, const std::string& term) {
  const double v = t.item();
  if (!std::isfinite(v)) throw NonFiniteError(term, v);
}

Tensor total_g_loss(const GeneratorLossParts& parts, const LossWeights& w) {
  check_finite(parts.l1, "L1");
  Tensor total = parts.l1;
  const struct {
    const Tensor* part;
    double weight;
    const char* name;
  } weighted[] = {{&parts.adv, w.adv, "adv"},
                  {&parts.perceptual, w.perceptual, "perceptual"},
                  {&parts.style, w.style, "style"},
                  {&parts.tv, w.tv, "tv"}};
  for (const auto& term : weighted) {
    if (term.weight == 0.0) continue;
    if (!term.part->defined()) {
      throw ArgumentError(std::string("loss term '") + term.name + "' has nonzero weight but no value");
    }
    check_finite(*term.part, term.name);
    total = nn::add(total, nn::scale(*term.part, term.weight));
  }
  check_finite(total, "total");
  return total;
}

}  // namespace deepgin
