#include "deepgin/nnblocks.hpp"

#include <cmath>
#include <string>

#include "deepgin/errors.hpp"
#include "deepgin/rng.hpp"

namespace deepgin::nn {
namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void normalize(std::vector<double>& x) {
  double n = 0.0;
  for (double v : x) n += v * v;
  n = std::sqrt(n);
  if (n < 1e-300) return;
  for (double& v : x) v /= n;
}

}  // namespace

Tensor ParamRegistry::add(const std::string& name, Shape shape, ParamKind kind, int fan_in) {
  if (find(name)) throw ArgumentError("duplicate parameter name " + name);
  Tensor t(std::move(shape), 0.0);
  t.set_requires_grad(true);
  params_.push_back({name, t, kind, fan_in});
  return t;
}

SpectralState& ParamRegistry::add_spectral(const std::string& name, int rows, int cols,
                                           std::uint64_t seed) {
  auto st = std::make_unique<SpectralState>();
  st->name = name;
  st->u.resize(rows);
  st->v.assign(cols, 0.0);
  CounterRng rng(derive_key({seed, name_hash(name), 0x75ull}));
  for (double& x : st->u) x = rng.normal();
  normalize(st->u);
  spectral_.push_back(std::move(st));
  return *spectral_.back();
}

std::size_t ParamRegistry::count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

const Parameter* ParamRegistry::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParamRegistry::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void init_weights(ParamRegistry& reg, double scale, std::uint64_t seed) {
  init_weights(reg, scale, seed, [](const Parameter&) { return true; });
}

void init_weights(ParamRegistry& reg, double scale, std::uint64_t seed,
                  const std::function<bool(const Parameter&)>& scaled) {
  for (auto& p : reg.params()) {
    auto values = p.tensor.values();
    if (p.kind != ParamKind::conv_weight) {
      std::fill(values.begin(), values.end(), 0.0);
      continue;
    }
    const double std = (scaled(p) ? scale : 1.0) * std::sqrt(2.0 / p.fan_in);
    CounterRng rng(derive_key({seed, name_hash(p.name)}));
    for (double& v : values) v = std * rng.normal();
  }
  for (auto& st : reg.spectral()) {
    std::fill(st->v.begin(), st->v.end(), 0.0);
    st->primed = false;
  }
}

bool in_residual_block(const Parameter& p) {
  return p.name.find(".block") != std::string::npos;
}

Conv2d::Conv2d(ParamRegistry& reg, const std::string& name, int in, int out, int kernel,
               Conv2dOptions options)
    : opt(options) {
  if (in < 1 || out < 1 || kernel < 1) {
    throw ConfigError("conv " + name + ": channel counts and kernel must be positive");
  }
  const int fan_in = in * kernel * kernel;
  weight = reg.add(name + ".weight", {out, in, kernel, kernel}, ParamKind::conv_weight, fan_in);
  bias = reg.add(name + ".bias", {out}, ParamKind::bias);
}

Conv2d Conv2d::same(ParamRegistry& reg, const std::string& name, int in, int out, int kernel,
                    int dilation) {
  return Conv2d(reg, name, in, out, kernel, Conv2dOptions::same(dilation * (kernel / 2), dilation));
}

SnConv2d::SnConv2d(ParamRegistry& reg, const std::string& name, int in, int out, int kernel,
                   Conv2dOptions options, std::uint64_t seed)
    : opt(options) {
  const int fan_in = in * kernel * kernel;
  weight = reg.add(name + ".weight", {out, in, kernel, kernel}, ParamKind::conv_weight, fan_in);
  bias = reg.add(name + ".bias", {out}, ParamKind::bias);
  state = &reg.add_spectral(name, out, fan_in, seed);
}

void SnConv2d::power_iterate() {
  const auto w = weight.values();
  const std::size_t rows = state->u.size();
  const std::size_t cols = state->v.size();
  std::fill(state->v.begin(), state->v.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double ur = state->u[r];
    const double* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) state->v[c] += row[c] * ur;
  }
  normalize(state->v);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * state->v[c];
    state->u[r] = acc;
  }
  normalize(state->u);
  state->primed = true;
}

Tensor SnConv2d::normalized_weight(double* sigma) {
  if (!state->primed) {
    // Derive v from the stored u without moving u.
    const auto w = weight.values();
    const std::size_t cols = state->v.size();
    std::fill(state->v.begin(), state->v.end(), 0.0);
    for (std::size_t r = 0; r < state->u.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) state->v[c] += w[r * cols + c] * state->u[r];
    }
    normalize(state->v);
    state->primed = true;
  }
  return spectral_normalized(weight, state->u, state->v, sigma);
}

Tensor SnConv2d::forward(const Tensor& x, bool training) {
  if (training) power_iterate();
  return conv2d(x, normalized_weight(), bias, opt);
}

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::standard: return "std";
    case BlockKind::dilated: return "dilated";
    case BlockKind::spd: return "spd";
  }
  return "?";
}

BlockKind parse_block_kind(const std::string& s) {
  if (s == "std" || s == "standard") return BlockKind::standard;
  if (s == "dilated") return BlockKind::dilated;
  if (s == "spd") return BlockKind::spd;
  throw ConfigError("unknown block kind '" + s + "' (expected std, dilated or spd)");
}

ResBlock::ResBlock(ParamRegistry& reg, const std::string& name, int channels, BlockKind k,
                   const std::vector<int>& rates)
    : kind(k) {
  switch (kind) {
    case BlockKind::standard:
      branches.push_back(Conv2d::same(reg, name + ".conv1", channels, channels, 3, 1));
      break;
    case BlockKind::dilated:
      branches.push_back(Conv2d::same(reg, name + ".conv1", channels, channels, 3, 2));
      break;
    case BlockKind::spd: {
      const int k_rates = static_cast<int>(rates.size());
      if (k_rates < 1 || channels % k_rates != 0) {
        throw ConfigError("SPD block " + name + ": " + std::to_string(channels) +
                          " channels not divisible by " + std::to_string(k_rates) + " rates");
      }
      for (int i = 0; i < k_rates; ++i) {
        branches.push_back(Conv2d::same(reg, name + ".conv1." + std::to_string(i), channels,
                                        channels / k_rates, 3, rates[i]));
      }
      break;
    }
  }
  conv2 = Conv2d::same(reg, name + ".conv2", channels, channels, 3, 1);
}

Tensor ResBlock::forward(const Tensor& x) const {
  const int c = branches.front().weight.dim(1);
  if (x.ndim() != 4 || x.dim(1) != c) {
    throw ArgumentError("residual block expects " + std::to_string(c) + " channels, got " +
                        shape_string(x.shape()));
  }
  Tensor h;
  if (branches.size() == 1) {
    h = branches.front().forward(x);
  } else {
    std::vector<Tensor> parts;
    parts.reserve(branches.size());
    for (const auto& b : branches) parts.push_back(b.forward(x));
    h = concat_channels(parts);
  }
  return add(x, conv2.forward(relu(h)));
}

SaBlock::SaBlock(ParamRegistry& reg, const std::string& name, int channels) {
  if (channels < 2 || channels % 2 != 0) {
    throw ConfigError("attention block " + name + " needs an even channel count");
  }
  const int r = channels / 2;
  theta = Conv2d(reg, name + ".theta", channels, r, 1, {});
  phi = Conv2d(reg, name + ".phi", channels, r, 1, {});
  g = Conv2d(reg, name + ".g", channels, r, 1, {});
  out = Conv2d(reg, name + ".out", r, channels, 1, {});
  gamma = reg.add(name + ".gamma", {1}, ParamKind::gain);
}

Tensor SaBlock::attention(const Tensor& x) const {
  const int n = x.dim(0);
  const int r = theta.weight.dim(0);
  const int hw = x.dim(2) * x.dim(3);
  Tensor q = reshape(theta.forward(x), {n, r, hw});
  Tensor k = reshape(phi.forward(x), {n, r, hw});
  return softmax_last(bmm(transpose_last2(q), k));
}

Tensor SaBlock::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != theta.weight.dim(1)) {
    throw ArgumentError("attention block expects " + std::to_string(theta.weight.dim(1)) +
                        " channels, got " + shape_string(x.shape()));
  }
  const int n = x.dim(0);
  const int r = theta.weight.dim(0);
  const int h = x.dim(2);
  const int w = x.dim(3);
  Tensor attn = attention(x);
  Tensor values = reshape(g.forward(x), {n, r, h * w});
  // y[:, i] = Σ_j attn[i, j] · values[:, j]
  Tensor y = reshape(bmm(values, transpose_last2(attn)), {n, r, h, w});
  return add(x, channel_scale(out.forward(y), gamma));
}

std::vector<int> default_rates(int count) {
  switch (count) {
    case 1: return {1};
    case 2: return {1, 2};
    case 4: return {1, 2, 4, 8};
    case 8: return {1, 2, 3, 4, 6, 8, 12, 16};
    default: break;
  }
  throw ConfigError("no default dilation-rate set for " + std::to_string(count) + " rates");
}

std::size_t conv_param_count(int in, int out, int kernel, bool bias) {
  return static_cast<std::size_t>(out) * in * kernel * kernel + (bias ? out : 0);
}

std::size_t resblock_param_count(int channels, BlockKind kind, int rate_count) {
  std::size_t first = 0;
  if (kind == BlockKind::spd) {
    if (rate_count < 1 || channels % rate_count != 0) {
      throw ConfigError("SPD rate count must divide the channel count");
    }
    first = rate_count * conv_param_count(channels, channels / rate_count, 3);
  } else {
    first = conv_param_count(channels, channels, 3);
  }
  return first + conv_param_count(channels, channels, 3);
}

std::size_t sa_param_count(int channels) {
  const int r = channels / 2;
  return 3 * conv_param_count(channels, r, 1) + conv_param_count(r, channels, 1) + 1;
}

}  // namespace deepgin::nn
