#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepgin/discriminators.hpp"
#include "deepgin/generators.hpp"
#include "deepgin/losses.hpp"

namespace deepgin {

struct TrainConfig {
  int warmup_epochs = 10;
  int main_epochs = 100;
  int const_epochs = 10;
  int decay_epochs = 90;
  double g_lr = 1e-4;
  double d_lr = 4e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_images = 4;  // each image yields three samples
  double init_scale = 0.1;
  double d_init_scale = 1.0;
  int sn_prime_iterations = 200;  // power iterations on D's initial weights
  std::uint64_t seed = 0;
  int steps_per_epoch = 0;  // 0 → one pass over the dataset

  void validate() const;
};

struct LossConfig {
  LossWeights weights;
  std::string extractor = "stub";
  std::string extractor_weights;
  std::uint64_t extractor_seed = 0x76676731ull;
};

// All model, training and loss settings, addressable as flat dotted keys
// (model.*, train.*, loss.*).
struct Config {
  GeneratorConfig model;
  DiscConfig disc;
  TrainConfig train;
  LossConfig loss;

  static Config paper();
  static Config toy();
  static Config preset(const std::string& name);

  // ConfigError on an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Applies DEEPGIN_<SECTION>_<NAME> environment variables, e.g.
  // DEEPGIN_TRAIN_G_LR → train.g_lr.
  void apply_env();

  // Canonical sorted key=value text; round-trips through from_text.
  std::string to_text() const;
  // Lines are key=value; '#' starts a comment; "preset=<name>" must come
  // first if present and selects the starting point (default paper).
  static Config from_text(const std::string& text);
  static Config load(const std::filesystem::path& path);

  // FNV-1a over to_text() without path-valued keys.
  std::uint64_t fingerprint() const;

  void validate() const;
};

// Learning rate for main-stage epoch `epoch` ∈ [0, main_epochs): constant
// for const_epochs, then linear decay reaching 0 at epoch main_epochs.
double lr_at(int epoch, double base, const TrainConfig& cfg);

}  // namespace deepgin
