#include "deepgin/generators.hpp"

#include <algorithm>
#include <string>

#include "deepgin/errors.hpp"

namespace deepgin {

using nn::BlockKind;
using nn::Conv2d;
using nn::Tensor;
using nn::shape_string;

void GeneratorConfig::validate() const {
  if (base_width < 1) throw ConfigError("model.base_width must be positive");
  if (image_size < 16 || image_size % 16 != 0) {
    throw ConfigError("model.image_size must be a positive multiple of 16, got " +
                      std::to_string(image_size));
  }
  if (coarse_blocks < 0 || refine_blocks < 0) throw ConfigError("block counts must be >= 0");
  if (block == BlockKind::spd) {
    if (bottleneck_width() % coarse_rates != 0 || refine_width() % refine_rates != 0) {
      throw ConfigError("SPD rate counts must divide the bottleneck widths");
    }
    nn::default_rates(coarse_rates);
    nn::default_rates(refine_rates);
  }
  if (use_mssa && refine_width() % 8 != 0) {
    throw ConfigError("multi-scale attention needs a refine width divisible by 8");
  }
}

Mssa::Mssa(nn::ParamRegistry& reg, const std::string& name, int channels) {
  const int r = channels / 4;
  reduce_a = Conv2d(reg, name + ".a.reduce", channels, r, 1, {});
  reduce_b = Conv2d(reg, name + ".b.reduce", channels, r, 3, nn::Conv2dOptions::same(1, 1, 2));
  reduce_c = Conv2d(reg, name + ".c.reduce", channels, r, 3, nn::Conv2dOptions::same(1, 1, 2));
  sa_a = nn::SaBlock(reg, name + ".a.sa", r);
  sa_b = nn::SaBlock(reg, name + ".b.sa", r);
  sa_c = nn::SaBlock(reg, name + ".c.sa", r);
  fuse = Conv2d(reg, name + ".fuse", 3 * r, channels, 1, {});
}

Tensor Mssa::forward(const Tensor& f) const {
  if (f.ndim() != 4 || f.dim(2) % 4 != 0 || f.dim(3) % 4 != 0) {
    throw ArgumentError("multi-scale attention needs a map divisible by 4, got " +
                        shape_string(f.shape()));
  }
  Tensor a = sa_a.forward(reduce_a.forward(f));
  Tensor b = nn::upsample_nearest(sa_b.forward(reduce_b.forward(f)), 2);
  Tensor c = nn::upsample_nearest(sa_c.forward(reduce_c.forward(nn::avg_pool(f, 2))), 4);
  return nn::add(f, fuse.forward(nn::concat_channels({a, b, c})));
}

std::size_t mssa_param_count(int channels) {
  const int r = channels / 4;
  return nn::conv_param_count(channels, r, 1) + 2 * nn::conv_param_count(channels, r, 3) +
         3 * nn::sa_param_count(r) + nn::conv_param_count(3 * r, channels, 1);
}

Tensor back_project(const Tensor& i_pre, const Tensor& i_lr, const Tensor& gamma_bp) {
  if (i_pre.ndim() != 4 || i_lr.ndim() != 4 || i_pre.dim(0) != i_lr.dim(0) ||
      i_pre.dim(1) != i_lr.dim(1) || i_pre.dim(2) != 4 * i_lr.dim(2) ||
      i_pre.dim(3) != 4 * i_lr.dim(3)) {
    throw ArgumentError("back projection needs i_lr at a quarter of i_pre's size, got " +
                        shape_string(i_pre.shape()) + " and " + shape_string(i_lr.shape()));
  }
  Tensor e = nn::sub(i_lr, nn::avg_pool(i_pre, 4));
  Tensor up = nn::resize_bilinear(e, i_pre.dim(2), i_pre.dim(3));
  return nn::clamp(nn::add(i_pre, nn::channel_scale(up, gamma_bp)), 0.0, 1.0);
}

namespace {

void check_inputs(const Tensor& image, const Tensor& m, int size, const char* who) {
  if (image.ndim() != 4 || image.dim(1) != 3 || image.dim(2) != size || image.dim(3) != size) {
    throw ArgumentError(std::string(who) + ": expected [N,3," + std::to_string(size) + "," +
                        std::to_string(size) + "] image, got " + shape_string(image.shape()));
  }
  if (m.ndim() != 4 || m.dim(0) != image.dim(0) || m.dim(1) != 1 || m.dim(2) != size ||
      m.dim(3) != size) {
    throw ArgumentError(std::string(who) + ": mask shape " + shape_string(m.shape()) +
                        " does not match image");
  }
}

Conv2d make_down(nn::ParamRegistry& reg, const std::string& name, int in, int out) {
  return Conv2d(reg, name, in, out, 3, nn::Conv2dOptions::same(1, 1, 2));
}

std::vector<nn::ResBlock> make_blocks(nn::ParamRegistry& reg, const std::string& prefix, int count,
                                      int channels, BlockKind kind, int rate_count) {
  std::vector<int> rates = kind == BlockKind::spd ? nn::default_rates(rate_count) : std::vector<int>{};
  std::vector<nn::ResBlock> blocks;
  for (int i = 0; i < count; ++i) {
    blocks.emplace_back(reg, prefix + std::to_string(i), channels, kind, rates);
  }
  return blocks;
}

}  // namespace

CoarseGenerator::CoarseGenerator(nn::ParamRegistry& reg, const GeneratorConfig& cfg) : cfg_(cfg) {
  const int b = cfg.base_width;
  stem_ = Conv2d::same(reg, "g1.stem", 4, b, 7);
  down1_ = make_down(reg, "g1.down1", b, 2 * b);
  down2_ = make_down(reg, "g1.down2", 2 * b, 4 * b);
  blocks_ = make_blocks(reg, "g1.block", cfg.coarse_blocks, 4 * b, cfg.block, cfg.coarse_rates);
  up1_ = Conv2d::same(reg, "g1.up1", 4 * b, 2 * b, 3);
  up2_ = Conv2d::same(reg, "g1.up2", 2 * b, b, 3);
  out_ = Conv2d::same(reg, "g1.out", b, 3, 7);
}

Tensor CoarseGenerator::forward(const Tensor& i_in, const Tensor& m) const {
  check_inputs(i_in, m, cfg_.image_size, "coarse generator");
  Tensor h = nn::relu(stem_.forward(nn::concat_channels({i_in, m})));
  h = nn::relu(down1_.forward(h));
  h = nn::relu(down2_.forward(h));
  for (const auto& blk : blocks_) h = blk.forward(h);
  h = nn::relu(up1_.forward(nn::upsample_nearest(h, 2)));
  h = nn::relu(up2_.forward(nn::upsample_nearest(h, 2)));
  return nn::sigmoid(out_.forward(h));
}

RefineGenerator::RefineGenerator(nn::ParamRegistry& reg, const GeneratorConfig& cfg) : cfg_(cfg) {
  const int b = cfg.base_width;
  const int wide = cfg.refine_width();
  stem_ = Conv2d::same(reg, "g2.stem", 4, b, 7);
  down1_ = make_down(reg, "g2.down1", b, 2 * b);
  down2_ = make_down(reg, "g2.down2", 2 * b, 4 * b);
  expand_ = Conv2d::same(reg, "g2.expand", 4 * b, wide, 3);
  const int first = cfg.refine_blocks / 2;
  blocks_a_ = make_blocks(reg, "g2.block", first, wide, cfg.block, cfg.refine_rates);
  if (cfg.use_sa) sa_.emplace(reg, "g2.sa", wide);
  std::vector<nn::ResBlock> rest = make_blocks(reg, "g2.block_b", cfg.refine_blocks - first, wide,
                                               cfg.block, cfg.refine_rates);
  blocks_b_ = std::move(rest);
  if (cfg.use_mssa) mssa_.emplace(reg, "g2.mssa", wide);
  reduce_ = Conv2d::same(reg, "g2.reduce", wide, 4 * b, 3);
  if (cfg.use_bp) {
    lr_head_ = Conv2d::same(reg, "g2.lr_head", 4 * b, 3, 7);
    gamma_bp_ = reg.add("g2.bp.gamma", {3}, nn::ParamKind::gain);
  }
  up1_ = Conv2d::same(reg, "g2.up1", 4 * b, 2 * b, 3);
  up2_ = Conv2d::same(reg, "g2.up2", 2 * b, b, 3);
  out_ = Conv2d::same(reg, "g2.out", b, 3, 7);
}

RefineOutput RefineGenerator::forward(const Tensor& i_coarse, const Tensor& m) const {
  check_inputs(i_coarse, m, cfg_.image_size, "refinement generator");
  Tensor h = nn::relu(stem_.forward(nn::concat_channels({i_coarse, m})));
  h = nn::relu(down1_.forward(h));
  h = nn::relu(down2_.forward(h));
  h = nn::relu(expand_.forward(h));
  for (const auto& blk : blocks_a_) h = blk.forward(h);
  if (sa_) h = sa_->forward(h);
  for (const auto& blk : blocks_b_) h = blk.forward(h);
  if (mssa_) h = mssa_->forward(h);
  h = nn::relu(reduce_.forward(h));

  RefineOutput out;
  if (cfg_.use_bp) out.i_lr = nn::sigmoid(lr_head_.forward(h));
  h = nn::relu(up1_.forward(nn::upsample_nearest(h, 2)));
  h = nn::relu(up2_.forward(nn::upsample_nearest(h, 2)));
  out.i_pre = nn::sigmoid(out_.forward(h));
  out.i_out = cfg_.use_bp ? back_project(out.i_pre, out.i_lr, gamma_bp_) : out.i_pre;
  return out;
}

DeepGin::DeepGin(const GeneratorConfig& cfg)
    : cfg_((cfg.validate(), cfg)), g1_(g1_reg_, cfg), g2_(g2_reg_, cfg) {}

InpaintResult DeepGin::forward(const Tensor& i_in, const Tensor& m, const Tensor& i_gt) const {
  InpaintResult r;
  r.i_coarse = g1_.forward(i_in, m);
  RefineOutput refined = g2_.forward(r.i_coarse, m);
  r.i_out = refined.i_out;
  r.i_lr = refined.i_lr;
  if (i_gt.defined()) {
    if (i_gt.shape() != r.i_out.shape()) {
      throw ArgumentError("ground truth shape " + shape_string(i_gt.shape()) +
                          " does not match output " + shape_string(r.i_out.shape()));
    }
    r.i_compltd = nn::select(m, r.i_out, i_gt);
  } else {
    r.i_compltd = r.i_out;
  }
  return r;
}

std::size_t g1_param_count(const GeneratorConfig& cfg) {
  const int b = cfg.base_width;
  return nn::conv_param_count(4, b, 7) + nn::conv_param_count(b, 2 * b, 3) +
         nn::conv_param_count(2 * b, 4 * b, 3) +
         cfg.coarse_blocks * nn::resblock_param_count(4 * b, cfg.block, cfg.coarse_rates) +
         nn::conv_param_count(4 * b, 2 * b, 3) + nn::conv_param_count(2 * b, b, 3) +
         nn::conv_param_count(b, 3, 7);
}

std::size_t g2_param_count(const GeneratorConfig& cfg) {
  const int b = cfg.base_width;
  const int wide = cfg.refine_width();
  std::size_t n = nn::conv_param_count(4, b, 7) + nn::conv_param_count(b, 2 * b, 3) +
                  nn::conv_param_count(2 * b, 4 * b, 3) + nn::conv_param_count(4 * b, wide, 3);
  n += cfg.refine_blocks * nn::resblock_param_count(wide, cfg.block, cfg.refine_rates);
  if (cfg.use_sa) n += nn::sa_param_count(wide);
  if (cfg.use_mssa) n += mssa_param_count(wide);
  n += nn::conv_param_count(wide, 4 * b, 3);
  if (cfg.use_bp) n += nn::conv_param_count(4 * b, 3, 7) + 3;
  n += nn::conv_param_count(4 * b, 2 * b, 3) + nn::conv_param_count(2 * b, b, 3) +
       nn::conv_param_count(b, 3, 7);
  return n;
}

Tensor to_tensor(const std::vector<ImageTensor>& images) {
  if (images.empty()) throw ArgumentError("to_tensor: no images");
  const auto& f = images.front();
  std::vector<double> values;
  values.reserve(images.size() * f.size());
  for (const auto& img : images) {
    if (!img.same_size(f) || img.channels() != f.channels()) {
      throw ArgumentError("to_tensor: images differ in size");
    }
    values.insert(values.end(), img.data().begin(), img.data().end());
  }
  return Tensor({static_cast<int>(images.size()), f.channels(), f.height(), f.width()},
                std::move(values));
}

Tensor to_tensor(const std::vector<MaskTensor>& masks) {
  if (masks.empty()) throw ArgumentError("to_tensor: no masks");
  const auto& f = masks.front();
  std::vector<double> values;
  values.reserve(masks.size() * f.size());
  for (const auto& m : masks) {
    if (m.height() != f.height() || m.width() != f.width()) {
      throw ArgumentError("to_tensor: masks differ in size");
    }
    for (auto v : m.data()) values.push_back(v ? 1.0 : 0.0);
  }
  return Tensor({static_cast<int>(masks.size()), 1, f.height(), f.width()}, std::move(values));
}

ImageTensor to_image(const Tensor& t, int index) {
  if (t.ndim() != 4 || index < 0 || index >= t.dim(0)) {
    throw ArgumentError("to_image: bad tensor or index for " + shape_string(t.shape()));
  }
  const int c = t.dim(1);
  const int h = t.dim(2);
  const int w = t.dim(3);
  const std::size_t n = static_cast<std::size_t>(c) * h * w;
  const auto v = t.values();
  std::vector<double> data(v.begin() + index * n, v.begin() + (index + 1) * n);
  return ImageTensor(h, w, c, std::move(data));
}

}  // namespace deepgin
