#include "deepgin/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "deepgin/errors.hpp"
#include "deepgin/rng.hpp"

namespace deepgin {

using nn::Tensor;

Adam::Adam(std::vector<nn::ParamRegistry*> regs, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* reg : regs) {
    for (auto& p : reg->params()) params_.push_back(&p);
  }
  reset();
}

void Adam::reset() {
  m_.assign(params_.size(), {});
  v_.assign(params_.size(), {});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i]->tensor.numel(), 0.0);
    v_[i].assign(params_[i]->tensor.numel(), 0.0);
  }
  t_ = 0;
}

void Adam::zero_grad() {
  for (auto* p : params_) p->tensor.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i]->tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

void Adam::save(Archive& a, const std::string& prefix) const {
  auto& gm = a.group(prefix + ".m");
  auto& gv = a.group(prefix + ".v");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& shape = params_[i]->tensor.shape();
    gm.tensors.push_back({params_[i]->name, shape, m_[i]});
    gv.tensors.push_back({params_[i]->name, shape, v_[i]});
  }
  a.metadata[prefix + ".t"] = std::to_string(t_);
}

void Adam::load(const Archive& a, const std::string& prefix) {
  const ArchiveGroup* gm = a.find(prefix + ".m");
  const ArchiveGroup* gv = a.find(prefix + ".v");
  const auto t = a.metadata.find(prefix + ".t");
  if (!gm || !gv || t == a.metadata.end()) throw FormatError("checkpoint lacks optimizer state " + prefix);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const ArchiveTensor* m = gm->find(params_[i]->name);
    const ArchiveTensor* v = gv->find(params_[i]->name);
    if (!m || !v || m->values.size() != m_[i].size() || v->values.size() != v_[i].size()) {
      throw FormatError("checkpoint optimizer state mismatch for " + params_[i]->name);
    }
    m_[i] = m->values;
    v_[i] = v->values;
  }
  t_ = std::stoll(t->second);
}

bool LossRecord::has(const std::string& name) const {
  for (const auto& [k, v] : terms) {
    if (k == name) return true;
  }
  return false;
}

double LossRecord::at(const std::string& name) const {
  for (const auto& [k, v] : terms) {
    if (k == name) return v;
  }
  throw ArgumentError("loss record has no term " + name);
}

const char* to_string(Stage s) { return s == Stage::warmup ? "warmup" : "main"; }

Batch to_batch(const std::vector<TrainingSample>& samples) {
  std::vector<ImageTensor> ins, gts;
  std::vector<MaskTensor> ms;
  for (const auto& s : samples) {
    ins.push_back(s.i_in);
    gts.push_back(s.i_gt);
    ms.push_back(s.m);
  }
  return {to_tensor(ins), to_tensor(ms), to_tensor(gts)};
}

namespace {

std::unique_ptr<DeepGin> build_model(const Config& cfg) {
  cfg.validate();
  auto m = std::make_unique<DeepGin>(cfg.model);
  nn::init_weights(m->g1_params(), cfg.train.init_scale, derive_key({cfg.train.seed, 1}),
                   nn::in_residual_block);
  nn::init_weights(m->g2_params(), cfg.train.init_scale, derive_key({cfg.train.seed, 2}),
                   nn::in_residual_block);
  return m;
}

std::unique_ptr<MultiScaleDiscriminator> build_disc(const Config& cfg) {
  auto d = std::make_unique<MultiScaleDiscriminator>(cfg.disc, derive_key({cfg.train.seed, 5}));
  nn::init_weights(d->d1_params(), cfg.train.d_init_scale, derive_key({cfg.train.seed, 3}));
  nn::init_weights(d->d2_params(), cfg.train.d_init_scale, derive_key({cfg.train.seed, 4}));
  for (PatchDiscriminator* pd : {&d->d1(), &d->d2()})
    for (auto& layer : pd->layers())
      for (int i = 0; i < cfg.train.sn_prime_iterations; ++i) layer.power_iterate();
  return d;
}

void set_trainable(nn::ParamRegistry& reg, bool flag) {
  for (auto& p : reg.params()) p.tensor.set_requires_grad(flag);
}

void save_params(Archive& a, const std::string& group, const nn::ParamRegistry& reg) {
  auto& g = a.group(group);
  for (const auto& p : reg.params()) {
    const auto v = p.tensor.values();
    g.tensors.push_back({p.name, p.tensor.shape(), std::vector<double>(v.begin(), v.end())});
  }
}

void load_params(const Archive& a, const std::string& group, nn::ParamRegistry& reg) {
  const ArchiveGroup* g = a.find(group);
  if (!g) throw FormatError("checkpoint lacks parameter group " + group);
  for (auto& p : reg.params()) {
    const ArchiveTensor* t = g->find(p.name);
    if (!t || t->shape != p.tensor.shape()) {
      throw FormatError("checkpoint parameter " + p.name + " missing or misshapen");
    }
    std::copy(t->values.begin(), t->values.end(), p.tensor.values().begin());
  }
}

void save_spectral(Archive& a, const std::string& group, const nn::ParamRegistry& reg) {
  auto& g = a.group(group);
  for (const auto& st : reg.spectral()) {
    g.tensors.push_back({st->name + ".u", {static_cast<int>(st->u.size())}, st->u});
    g.tensors.push_back({st->name + ".v", {static_cast<int>(st->v.size())}, st->v});
    g.tensors.push_back({st->name + ".primed", {1}, {st->primed ? 1.0 : 0.0}});
  }
}

void load_spectral(const Archive& a, const std::string& group, nn::ParamRegistry& reg) {
  const ArchiveGroup* g = a.find(group);
  if (!g) throw FormatError("checkpoint lacks spectral group " + group);
  for (auto& st : reg.spectral()) {
    const ArchiveTensor* u = g->find(st->name + ".u");
    const ArchiveTensor* v = g->find(st->name + ".v");
    const ArchiveTensor* primed = g->find(st->name + ".primed");
    if (!u || !v || !primed || u->values.size() != st->u.size() || v->values.size() != st->v.size()) {
      throw FormatError("checkpoint spectral state for " + st->name + " missing or misshapen");
    }
    st->u = u->values;
    st->v = v->values;
    st->primed = primed->values.at(0) != 0.0;
  }
}

bool any_nonzero(std::span<const double> g) {
  for (double v : g) {
    if (v != 0.0) return true;
  }
  return false;
}

}  // namespace

Trainer::Trainer(const Config& cfg)
    : cfg_(cfg),
      model_(build_model(cfg)),
      disc_(build_disc(cfg)),
      extractor_(make_extractor(cfg.loss.extractor, cfg.loss.extractor_weights,
                                cfg.loss.extractor_seed)),
      adam_g_({&model_->g1_params(), &model_->g2_params()}, cfg.train.beta1, cfg.train.beta2),
      adam_d_({&disc_->d1_params(), &disc_->d2_params()}, cfg.train.beta1, cfg.train.beta2) {
  for (auto* reg : {&model_->g1_params(), &model_->g2_params()}) {
    for (const auto& p : reg->params()) {
      if (p.kind == nn::ParamKind::gain) gain_seen_[p.name] = false;
    }
  }
}

void Trainer::note_gain_grads() {
  for (auto* reg : {&model_->g1_params(), &model_->g2_params()}) {
    for (const auto& p : reg->params()) {
      if (p.kind == nn::ParamKind::gain && p.tensor.has_grad() && any_nonzero(p.tensor.grad())) {
        gain_seen_[p.name] = true;
      }
    }
  }
}

LossRecord Trainer::warmup_step(const Batch& batch) {
  InpaintResult r = model_->forward(batch.i_in, batch.m, batch.i_gt);
  L1Terms l1 = l1_loss(r.i_coarse, r.i_out, r.i_lr, batch.i_gt, batch.m, cfg_.loss.weights.hole);
  check_finite(l1.total, "L1");
  adam_g_.zero_grad();
  l1.total.backward();
  note_gain_grads();
  adam_g_.step(cfg_.train.g_lr);
  ++step_;
  LossRecord rec;
  rec.add("L_hole", l1.hole.item());
  rec.add("L_valid", l1.valid.item());
  rec.add("L_L1", l1.total.item());
  return rec;
}

LossRecord Trainer::main_step(const Batch& batch) {
  const double lr_g = lr_at(epoch_, cfg_.train.g_lr, cfg_.train);
  const double lr_d = lr_at(epoch_, cfg_.train.d_lr, cfg_.train);
  const LossWeights& w = cfg_.loss.weights;
  LossRecord rec;

  InpaintResult r = model_->forward(batch.i_in, batch.m, batch.i_gt);

  {
    const Tensor fake = r.i_compltd.detach();
    PatchMaps real_maps = disc_->forward(batch.i_in, batch.i_gt, true);
    PatchMaps fake_maps = disc_->forward(batch.i_in, fake, true);
    Tensor loss_d = adv_d_loss(real_maps, fake_maps);
    check_finite(loss_d, "D");
    adam_d_.zero_grad();
    loss_d.backward();
    adam_d_.step(lr_d);
    rec.add("L_D", loss_d.item());
  }

  L1Terms l1 = l1_loss(r.i_coarse, r.i_out, r.i_lr, batch.i_gt, batch.m, w.hole);
  GeneratorLossParts parts;
  parts.l1 = l1.total;
  if (w.adv != 0.0) {
    set_trainable(disc_->d1_params(), false);
    set_trainable(disc_->d2_params(), false);
    parts.adv = adv_g_loss(disc_->forward(batch.i_in, r.i_compltd, false));
    set_trainable(disc_->d1_params(), true);
    set_trainable(disc_->d2_params(), true);
  }
  if (w.perceptual != 0.0 || w.style != 0.0) {
    std::vector<Tensor> f_out = extractor_->extract(r.i_out);
    std::vector<Tensor> f_comp = extractor_->extract(r.i_compltd);
    std::vector<Tensor> f_gt;
    {
      nn::NoGradGuard guard;
      f_gt = extractor_->extract(batch.i_gt);
    }
    if (w.perceptual != 0.0) parts.perceptual = perceptual_from_features(f_out, f_comp, f_gt);
    if (w.style != 0.0) parts.style = style_from_features(f_out, f_comp, f_gt);
  }
  if (w.tv != 0.0) parts.tv = tv_loss(r.i_compltd);
  Tensor total = total_g_loss(parts, w);

  adam_g_.zero_grad();
  total.backward();
  note_gain_grads();
  adam_g_.step(lr_g);
  ++step_;

  rec.add("L_hole", l1.hole.item());
  rec.add("L_valid", l1.valid.item());
  rec.add("L_L1", l1.total.item());
  if (parts.adv.defined()) rec.add("L_adv", parts.adv.item());
  if (parts.perceptual.defined()) rec.add("L_perceptual", parts.perceptual.item());
  if (parts.style.defined()) rec.add("L_style", parts.style.item());
  if (parts.tv.defined()) rec.add("L_tv", parts.tv.item());
  rec.add("L_total", total.item());
  return rec;
}

void Trainer::begin_main_stage() {
  stage_ = Stage::main;
  epoch_ = 0;
  adam_g_.reset();
  adam_d_.reset();
}

Archive Trainer::to_archive() const {
  Archive a;
  a.fingerprint = cfg_.fingerprint();
  for (const auto& key : Config::keys()) a.metadata["config." + key] = cfg_.get(key);
  a.metadata["stage"] = to_string(stage_);
  a.metadata["epoch"] = std::to_string(epoch_);
  a.metadata["step"] = std::to_string(step_);
  std::string seen;
  for (const auto& [name, flag] : gain_seen_) {
    if (flag) seen += (seen.empty() ? "" : ",") + name;
  }
  a.metadata["gain_seen"] = seen;
  save_params(a, "g1", model_->g1_params());
  save_params(a, "g2", model_->g2_params());
  save_params(a, "d1", disc_->d1_params());
  save_params(a, "d2", disc_->d2_params());
  save_spectral(a, "spectral.d1", disc_->d1_params());
  save_spectral(a, "spectral.d2", disc_->d2_params());
  adam_g_.save(a, "adam_g");
  adam_d_.save(a, "adam_d");
  return a;
}

void Trainer::from_archive(const Archive& a) {
  if (a.fingerprint != cfg_.fingerprint()) {
    throw IncompatibleCheckpointError("checkpoint fingerprint does not match the configuration");
  }
  load_params(a, "g1", model_->g1_params());
  load_params(a, "g2", model_->g2_params());
  load_params(a, "d1", disc_->d1_params());
  load_params(a, "d2", disc_->d2_params());
  load_spectral(a, "spectral.d1", disc_->d1_params());
  load_spectral(a, "spectral.d2", disc_->d2_params());
  adam_g_.load(a, "adam_g");
  adam_d_.load(a, "adam_d");
  try {
    stage_ = a.metadata.at("stage") == "main" ? Stage::main : Stage::warmup;
    epoch_ = std::stoi(a.metadata.at("epoch"));
    step_ = std::stoll(a.metadata.at("step"));
  } catch (const std::exception&) {
    throw FormatError("checkpoint lacks stage/epoch/step metadata");
  }
  for (auto& [name, flag] : gain_seen_) flag = false;
  const auto it = a.metadata.find("gain_seen");
  if (it != a.metadata.end()) {
    std::size_t start = 0;
    const std::string& s = it->second;
    while (start < s.size()) {
      const auto comma = s.find(',', start);
      const std::string name = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (gain_seen_.count(name)) gain_seen_[name] = true;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { save_archive(to_archive(), path); }

void Trainer::load_checkpoint(const std::filesystem::path& path) { from_archive(load_archive(path)); }

Config checkpoint_config(const std::filesystem::path& path) {
  const Archive a = load_archive(path);
  Config cfg;
  for (const auto& [key, value] : a.metadata) {
    if (key.rfind("config.", 0) == 0) cfg.set(key.substr(7), value);
  }
  if (cfg.fingerprint() != a.fingerprint) {
    throw IncompatibleCheckpointError(path.string() + ": stored configuration does not match its fingerprint");
  }
  return cfg;
}

void load_generator(DeepGin& model, const Archive& a) {
  load_params(a, "g1", model.g1_params());
  load_params(a, "g2", model.g2_params());
}

std::uint64_t batch_seed(std::uint64_t seed, Stage stage, int epoch, int step) {
  return derive_key({seed, stage == Stage::warmup ? 0x77ull : 0x6dull,
                     static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step)});
}

void run_training(Trainer& trainer, const std::vector<ImageTensor>& images, const TrainRunOptions& opt) {
  if (images.empty()) throw ArgumentError("training needs at least one image");
  const Config& cfg = trainer.config();
  std::filesystem::create_directories(opt.out_dir);
  std::ofstream csv(opt.out_dir / "loss.csv", opt.append_log ? std::ios::app : std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (opt.out_dir / "loss.csv").string());
  if (csv.tellp() == 0) csv << "epoch,step,term,value\n";

  const int b = cfg.train.batch_images;
  const int steps = cfg.train.steps_per_epoch > 0
                        ? cfg.train.steps_per_epoch
                        : static_cast<int>((images.size() + b - 1) / b);

  auto run_epoch = [&](Stage stage, int epoch, int global_epoch) {
    const auto order = epoch_order(images.size(), cfg.train.seed, static_cast<std::uint64_t>(global_epoch));
    for (int s = 0; s < steps; ++s) {
      std::vector<ImageTensor> chosen;
      for (int k = 0; k < b; ++k) chosen.push_back(images[order[(static_cast<std::size_t>(s) * b + k) % order.size()]]);
      Batch batch = to_batch(make_batch(chosen, batch_seed(cfg.train.seed, stage, epoch, s), cfg.model.image_size));
      LossRecord rec = stage == Stage::warmup ? trainer.warmup_step(batch) : trainer.main_step(batch);
      for (const auto& [term, value] : rec.terms) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        csv << global_epoch << ',' << trainer.global_step() << ',' << term << ',' << buf << '\n';
      }
      csv.flush();
      if (opt.on_step) opt.on_step(global_epoch, trainer.global_step(), rec);
    }
  };

  if (opt.run_warmup && trainer.stage() == Stage::warmup) {
    for (int e = trainer.epoch(); e < cfg.train.warmup_epochs; ++e) {
      run_epoch(Stage::warmup, e, e);
      trainer.set_epoch(e + 1);
      trainer.save_checkpoint(opt.out_dir / ("ckpt_warmup_" + std::to_string(e) + ".dgck"));
      trainer.save_checkpoint(opt.out_dir / "latest.dgck");
    }
  }
  if (!opt.run_main) return;
  if (trainer.stage() == Stage::warmup) trainer.begin_main_stage();
  for (int e = trainer.epoch(); e < cfg.train.main_epochs; ++e) {
    trainer.set_epoch(e);
    run_epoch(Stage::main, e, cfg.train.warmup_epochs + e);
    trainer.set_epoch(e + 1);
    trainer.save_checkpoint(opt.out_dir / ("ckpt_main_" + std::to_string(e) + ".dgck"));
    trainer.save_checkpoint(opt.out_dir / "latest.dgck");
  }
}

}  // namespace deepgin
