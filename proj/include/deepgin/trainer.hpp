#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "deepgin/archive.hpp"
#include "deepgin/config.hpp"
#include "deepgin/datapipe.hpp"
#include "deepgin/discriminators.hpp"
#include "deepgin/generators.hpp"
#include "deepgin/losses.hpp"

namespace deepgin {

// Adam over every parameter of a set of registries. Parameters that did not
// receive a gradient in a step keep their moments and values.
class Adam {
 public:
  Adam(std::vector<nn::ParamRegistry*> regs, double beta1, double beta2, double eps = 1e-8);

  void step(double lr);
  void reset();
  void zero_grad();
  std::int64_t steps() const noexcept { return t_; }

  void save(Archive& a, const std::string& prefix) const;
  void load(const Archive& a, const std::string& prefix);

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct LossRecord {
  std::vector<std::pair<std::string, double>> terms;

  void add(const std::string& name, double value) { terms.emplace_back(name, value); }
  bool has(const std::string& name) const;
  double at(const std::string& name) const;
};

enum class Stage { warmup, main };
const char* to_string(Stage s);

struct Batch {
  nn::Tensor i_in;  // [N,3,T,T]
  nn::Tensor m;     // [N,1,T,T]
  nn::Tensor i_gt;  // [N,3,T,T]
};

Batch to_batch(const std::vector<TrainingSample>& samples);

class Trainer {
 public:
  explicit Trainer(const Config& cfg);

  // One Adam step on G1+G2 minimizing L_L1.
  LossRecord warmup_step(const Batch& batch);
  // One D step on the detached composite, then one G step on the full
  // weighted objective at the current epoch's learning rates.
  LossRecord main_step(const Batch& batch);

  // Switch to the main stage at epoch 0 with fresh optimizer moments.
  void begin_main_stage();

  Stage stage() const noexcept { return stage_; }
  int epoch() const noexcept { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }
  std::int64_t global_step() const noexcept { return step_; }

  // Gain parameters (attention γ, γ_bp) that have seen a nonzero gradient.
  const std::map<std::string, bool>& gain_grad_seen() const noexcept { return gain_seen_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  // IncompatibleCheckpointError on a fingerprint mismatch.
  void load_checkpoint(const std::filesystem::path& path);
  Archive to_archive() const;
  void from_archive(const Archive& a);

  const Config& config() const noexcept { return cfg_; }
  DeepGin& model() noexcept { return *model_; }
  MultiScaleDiscriminator& disc() noexcept { return *disc_; }
  const FeatureExtractor& extractor() const noexcept { return *extractor_; }

 private:
  void note_gain_grads();

  Config cfg_;
  std::unique_ptr<DeepGin> model_;
  std::unique_ptr<MultiScaleDiscriminator> disc_;
  std::unique_ptr<FeatureExtractor> extractor_;
  Adam adam_g_;
  Adam adam_d_;
  Stage stage_ = Stage::warmup;
  int epoch_ = 0;
  std::int64_t step_ = 0;
  std::map<std::string, bool> gain_seen_;
};

// Rebuilds the configuration stored in a checkpoint.
Config checkpoint_config(const std::filesystem::path& path);
// Restores only generator parameters, for inference.
void load_generator(DeepGin& model, const Archive& a);

struct TrainRunOptions {
  std::filesystem::path out_dir;
  bool run_warmup = true;
  bool run_main = true;
  // Keep existing loss.csv rows (resume); otherwise the log starts fresh.
  bool append_log = false;
  // Called after each step with (global epoch, global step, record).
  std::function<void(int, std::int64_t, const LossRecord&)> on_step;
};

// Runs the remaining epochs of the selected stages over `images`, writing
// a checkpoint after every epoch (ckpt_<stage>_<epoch>.dgck and
// latest.dgck) and appending epoch,step,term,value rows to loss.csv.
void run_training(Trainer& trainer, const std::vector<ImageTensor>& images,
                  const TrainRunOptions& opt);

// Batch seed for a (stage, epoch, step-in-epoch) triple under `seed`.
std::uint64_t batch_seed(std::uint64_t seed, Stage stage, int epoch, int step);

}  // namespace deepgin
