#include "deepgin/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "deepgin/archive.hpp"
#include "deepgin/config.hpp"
#include "deepgin/datapipe.hpp"
#include "deepgin/errors.hpp"
#include "deepgin/inference.hpp"
#include "deepgin/maskgen.hpp"
#include "deepgin/metrics.hpp"
#include "deepgin/png_io.hpp"
#include "deepgin/rng.hpp"
#include "deepgin/trainer.hpp"
#include "json.hpp"

namespace deepgin {
namespace {

namespace fs = std::filesystem;

struct MaskgenArgs {
  std::string kind = "rect";
  int count = 1;
  int size = 256;
  int height = 0;
  int width = 0;
  std::uint64_t seed = 0;
  std::vector<double> bounds;
  std::string out = "masks";
};

struct TrainArgs {
  std::string data;
  std::string config;
  std::string preset;
  std::vector<std::string> overrides;
  std::string out = "run";
  std::string stage = "all";
  std::string resume;
  bool quiet = false;
};

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string masks;
  std::string mask_kind = "rect";
  std::uint64_t seed = 0;
  std::string out;
  bool raw = false;
  bool coarse = false;
};

struct EvalArgs {
  std::string completed;
  std::string gt;
  std::string report = "eval_report.csv";
};

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int run_maskgen(const MaskgenArgs& a, std::ostream& out) {
  const MaskKind kind = parse_mask_kind(a.kind);
  const int h = a.height > 0 ? a.height : a.size;
  const int w = a.width > 0 ? a.width : a.size;
  if (a.count < 1) throw ArgumentError("--count must be >= 1");
  if (!a.bounds.empty()) {
    if (a.bounds.size() != 2) throw ArgumentError("--bounds takes two values: lo hi");
    if (kind == MaskKind::rect) throw ArgumentError("--bounds applies to freeform and cellular masks");
  }

  fs::create_directories(a.out);
  nlohmann::ordered_json manifest;
  manifest["kind"] = to_string(kind);
  manifest["count"] = a.count;
  manifest["height"] = h;
  manifest["width"] = w;
  manifest["seed"] = a.seed;
  manifest["cellular_rule"] = kCellularRuleTag;
  manifest["masks"] = nlohmann::ordered_json::array();
  for (int i = 0; i < a.count; ++i) {
    MaskSpec spec = MaskSpec::of_kind(kind, h, w, derive_key({a.seed, static_cast<std::uint64_t>(i)}));
    if (!a.bounds.empty()) {
      const FractionBounds b{a.bounds[0], a.bounds[1]};
      if (auto* p = std::get_if<FreeformParams>(&spec.params)) p->bounds = b;
      if (auto* p = std::get_if<CellularParams>(&spec.params)) p->bounds = b;
    }
    const MaskTensor m = generate_mask(spec);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%05d.png", to_string(kind).c_str(), i);
    save_mask_png(m, fs::path(a.out) / name);
    manifest["masks"].push_back({{"file", name},
                                 {"seed", spec.seed},
                                 {"hole_fraction", hole_fraction(m)},
                                 {"spec", spec.describe()}});
  }
  std::ofstream f(fs::path(a.out) / "manifest.json");
  if (!f) throw IoError("cannot write manifest in " + a.out);
  f << manifest.dump(2) << '\n';
  out << "wrote " << a.count << " " << to_string(kind) << " masks to " << a.out << '\n';
  return kExitOk;
}

Config resolve_config(const TrainArgs& a) {
  Config cfg;
  if (!a.config.empty()) {
    if (!a.preset.empty()) throw ArgumentError("--config and --preset are mutually exclusive");
    cfg = Config::load(a.config);
  } else if (!a.preset.empty()) {
    cfg = Config::preset(a.preset);
  } else if (!a.resume.empty()) {
    cfg = checkpoint_config(a.resume);
  } else {
    cfg = Config::paper();
  }
  cfg.apply_env();
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  if (!fs::is_directory(a.data)) throw IoError("data directory not found: " + a.data);
  const auto files = list_png_files(a.data);
  if (files.empty()) throw IoError("no PNG images in " + a.data);
  const Config cfg = resolve_config(a);

  Trainer trainer(cfg);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);
  TrainRunOptions opt;
  opt.out_dir = a.out;
  opt.run_warmup = a.stage != "main";
  opt.run_main = a.stage != "warmup";
  opt.append_log = !a.resume.empty();
  if (a.stage == "main" && trainer.stage() == Stage::warmup &&
      trainer.epoch() < cfg.train.warmup_epochs) {
    throw ArgumentError("--stage main needs --resume with a completed warm-up checkpoint");
  }
  if (!a.quiet) {
    opt.on_step = [&out](int epoch, std::int64_t step, const LossRecord& rec) {
      out << "epoch " << epoch << " step " << step;
      for (const auto& [term, value] : rec.terms) out << ' ' << term << '=' << format_value(value);
      out << '\n';
    };
  }

  std::vector<ImageTensor> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(load_png(f));
  fs::create_directories(a.out);
  {
    std::ofstream f(fs::path(a.out) / "config.txt");
    f << cfg.to_text();
  }
  run_training(trainer, images, opt);
  out << "finished at " << to_string(trainer.stage()) << " epoch " << trainer.epoch() << ", step "
      << trainer.global_step() << '\n';
  return kExitOk;
}

std::vector<fs::path> input_files(const std::string& input) {
  if (fs::is_directory(input)) return list_png_files(input);
  if (fs::is_regular_file(input)) return {fs::path(input)};
  throw IoError("input not found: " + input);
}

int run_infer(const InferArgs& a, std::ostream& out) {
  if (!fs::is_regular_file(a.checkpoint)) throw IoError("checkpoint not found: " + a.checkpoint);
  if (a.raw && a.coarse) throw ArgumentError("--raw and --coarse are mutually exclusive");
  const Config cfg = checkpoint_config(a.checkpoint);
  DeepGin model(cfg.model);
  load_generator(model, load_archive(a.checkpoint));

  const auto inputs = input_files(a.input);
  if (inputs.empty()) throw IoError("no PNG images in " + a.input);
  const MaskKind kind = parse_mask_kind(a.mask_kind);
  const InferOutput which = a.raw ? InferOutput::raw : a.coarse ? InferOutput::coarse : InferOutput::composite;
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ImageTensor img = load_png(inputs[i]);
    MaskTensor mask;
    if (a.masks.empty()) {
      mask = generate_mask(MaskSpec::of_kind(kind, img.height(), img.width(),
                                             derive_key({a.seed, static_cast<std::uint64_t>(i)})));
    } else if (fs::is_directory(a.masks)) {
      const fs::path p = fs::path(a.masks) / inputs[i].filename();
      if (!fs::is_regular_file(p)) throw IoError("no mask for " + inputs[i].filename().string() + " in " + a.masks);
      mask = load_mask_png(p);
    } else {
      mask = load_mask_png(a.masks);
    }
    if (!mask.matches(img)) throw ArgumentError("mask size differs from " + inputs[i].string());
    save_png(inpaint(model, img, mask, which), fs::path(a.out) / inputs[i].filename());
  }
  out << "wrote " << inputs.size() << " images to " << a.out << '\n';
  return kExitOk;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const EvalReport report = evaluate_dataset(a.completed, a.gt);
  std::ofstream f(a.report);
  if (!f) throw IoError("cannot write " + a.report);
  f << report.to_csv();
  out << report.to_text();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DeepGIN two-stage image inpainting", "deepgin"};
  app.require_subcommand(1);

  MaskgenArgs mg;
  auto* maskgen = app.add_subcommand("maskgen", "Generate hole masks");
  maskgen->add_option("--kind", mg.kind, "rect, freeform or cellular")->capture_default_str();
  maskgen->add_option("--count", mg.count)->capture_default_str();
  maskgen->add_option("--size", mg.size, "Square side")->capture_default_str();
  maskgen->add_option("--height", mg.height, "Overrides --size");
  maskgen->add_option("--width", mg.width, "Overrides --size");
  maskgen->add_option("--seed", mg.seed)->capture_default_str();
  maskgen->add_option("--bounds", mg.bounds, "Accepted hole fraction: lo hi")->expected(2);
  maskgen->add_option("--out", mg.out)->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Two-stage training");
  train->add_option("--data", tr.data, "Directory of training PNGs")->required();
  train->add_option("--config", tr.config, "key=value config file");
  train->add_option("--preset", tr.preset, "paper or toy");
  train->add_option("--set", tr.overrides, "key=value override (repeatable)");
  train->add_option("--out", tr.out)->capture_default_str();
  train->add_option("--stage", tr.stage)->check(CLI::IsMember({"all", "warmup", "main"}))->capture_default_str();
  train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  train->add_flag("--quiet", tr.quiet, "No per-step output");

  InferArgs in;
  auto* infer = app.add_subcommand("infer", "Tiled inpainting of images");
  infer->add_option("--checkpoint", in.checkpoint)->required();
  infer->add_option("--input", in.input, "PNG file or directory")->required();
  infer->add_option("--masks", in.masks, "Mask PNG or directory of same-named masks");
  infer->add_option("--mask-kind", in.mask_kind, "Generated mask kind when --masks is absent")->capture_default_str();
  infer->add_option("--seed", in.seed, "Generated mask seed")->capture_default_str();
  infer->add_option("--out", in.out)->required();
  infer->add_flag("--raw", in.raw, "Write I_out instead of the composite");
  infer->add_flag("--coarse", in.coarse, "Write the coarse output");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "PSNR, SSIM and mean L1 of completed images");
  eval->add_option("--completed", ev.completed)->required();
  eval->add_option("--gt", ev.gt)->required();
  eval->add_option("--report", ev.report, "CSV output")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "deepgin: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (maskgen->parsed()) return run_maskgen(mg, out);
    if (train->parsed()) return run_train(tr, out);
    if (infer->parsed()) return run_infer(in, out);
    return run_eval(ev, out);
  } catch (const GenerationError& e) {
    err << "deepgin: generation failed: " << e.what() << '\n';
    return kExitGeneration;
  } catch (const NonFiniteError& e) {
    err << "deepgin: numerical failure in " << e.term() << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "deepgin: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "deepgin: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace deepgin
