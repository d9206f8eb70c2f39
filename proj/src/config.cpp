#include "deepgin/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "deepgin/archive.hpp"
#include "deepgin/errors.hpp"

namespace deepgin {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(d)) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
  return d;
}

long long parse_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0') throw ConfigError("bad integer for " + key + ": '" + v + "'");
  return i;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long i = std::strtoull(v.c_str(), &end, 0);
  if (v.empty() || *end != '\0' || v[0] == '-') {
    throw ConfigError("bad unsigned integer for " + key + ": '" + v + "'");
  }
  return i;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(parse_int(key, trim(item))));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

struct Field {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&, const std::string&)> set;
};

#define DG_INT(sec, mem)                                                                \
  Field {                                                                               \
    [](const Config& c) { return std::to_string(c.sec.mem); },                          \
        [](Config& c, const std::string& k, const std::string& v) {                     \
          c.sec.mem = static_cast<decltype(c.sec.mem)>(parse_int(k, v));                \
        }                                                                               \
  }
#define DG_DOUBLE(sec, mem)                                                               \
  Field {                                                                                 \
    [](const Config& c) { return fmt_double(c.sec.mem); },                                \
        [](Config& c, const std::string& k, const std::string& v) { c.sec.mem = parse_double(k, v); } \
  }
#define DG_BOOL(sec, mem)                                                                 \
  Field {                                                                                 \
    [](const Config& c) { return std::string(c.sec.mem ? "true" : "false"); },            \
        [](Config& c, const std::string& k, const std::string& v) { c.sec.mem = parse_bool(k, v); } \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"model.base_width", DG_INT(model, base_width)},
      {"model.image_size", DG_INT(model, image_size)},
      {"model.block",
       {[](const Config& c) { return std::string(nn::to_string(c.model.block)); },
        [](Config& c, const std::string&, const std::string& v) {
          c.model.block = nn::parse_block_kind(v);
        }}},
      {"model.coarse_blocks", DG_INT(model, coarse_blocks)},
      {"model.refine_blocks", DG_INT(model, refine_blocks)},
      {"model.coarse_rates", DG_INT(model, coarse_rates)},
      {"model.refine_rates", DG_INT(model, refine_rates)},
      {"model.use_sa", DG_BOOL(model, use_sa)},
      {"model.use_mssa", DG_BOOL(model, use_mssa)},
      {"model.use_bp", DG_BOOL(model, use_bp)},
      {"model.disc_widths",
       {[](const Config& c) {
          std::string s;
          for (std::size_t i = 0; i < c.disc.widths.size(); ++i) {
            s += (i ? "," : "") + std::to_string(c.disc.widths[i]);
          }
          return s;
        },
        [](Config& c, const std::string& k, const std::string& v) {
          c.disc.widths = parse_int_list(k, v);
        }}},
      {"model.disc_out_channels", DG_INT(disc, out_channels)},
      {"model.disc_slope", DG_DOUBLE(disc, slope)},
      {"train.warmup_epochs", DG_INT(train, warmup_epochs)},
      {"train.main_epochs", DG_INT(train, main_epochs)},
      {"train.const_epochs", DG_INT(train, const_epochs)},
      {"train.decay_epochs", DG_INT(train, decay_epochs)},
      {"train.g_lr", DG_DOUBLE(train, g_lr)},
      {"train.d_lr", DG_DOUBLE(train, d_lr)},
      {"train.beta1", DG_DOUBLE(train, beta1)},
      {"train.beta2", DG_DOUBLE(train, beta2)},
      {"train.batch_images", DG_INT(train, batch_images)},
      {"train.init_scale", DG_DOUBLE(train, init_scale)},
      {"train.d_init_scale", DG_DOUBLE(train, d_init_scale)},
      {"train.sn_prime_iterations", DG_INT(train, sn_prime_iterations)},
      {"train.seed",
       {[](const Config& c) { return std::to_string(c.train.seed); },
        [](Config& c, const std::string& k, const std::string& v) { c.train.seed = parse_u64(k, v); }}},
      {"train.steps_per_epoch", DG_INT(train, steps_per_epoch)},
      {"loss.hole", DG_DOUBLE(loss.weights, hole)},
      {"loss.adv", DG_DOUBLE(loss.weights, adv)},
      {"loss.perceptual", DG_DOUBLE(loss.weights, perceptual)},
      {"loss.style", DG_DOUBLE(loss.weights, style)},
      {"loss.tv", DG_DOUBLE(loss.weights, tv)},
      {"loss.extractor",
       {[](const Config& c) { return c.loss.extractor; },
        [](Config& c, const std::string& k, const std::string& v) {
          if (v != "stub" && v != "vgg19" && v != "identity") {
            throw ConfigError("bad value for " + k + ": '" + v + "' (stub, vgg19 or identity)");
          }
          c.loss.extractor = v;
        }}},
      {"loss.extractor_weights",
       {[](const Config& c) { return c.loss.extractor_weights; },
        [](Config& c, const std::string&, const std::string& v) { c.loss.extractor_weights = v; }}},
      {"loss.extractor_seed",
       {[](const Config& c) { return std::to_string(c.loss.extractor_seed); },
        [](Config& c, const std::string& k, const std::string& v) {
          c.loss.extractor_seed = parse_u64(k, v);
        }}},
  };
  return table;
}

#undef DG_INT
#undef DG_DOUBLE
#undef DG_BOOL

}  // namespace

void TrainConfig::validate() const {
  if (warmup_epochs < 0 || main_epochs < 0 || const_epochs < 0 || decay_epochs < 0) {
    throw ConfigError("epoch counts must be >= 0");
  }
  if (const_epochs + decay_epochs != main_epochs) {
    throw ConfigError("train.const_epochs + train.decay_epochs must equal train.main_epochs");
  }
  if (g_lr < 0 || d_lr < 0) throw ConfigError("learning rates must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (batch_images < 1) throw ConfigError("train.batch_images must be >= 1");
  if (init_scale < 0 || d_init_scale < 0) throw ConfigError("init scales must be >= 0");
  if (steps_per_epoch < 0) throw ConfigError("train.steps_per_epoch must be >= 0");
  if (sn_prime_iterations < 0) throw ConfigError("train.sn_prime_iterations must be >= 0");
}

Config Config::paper() { return Config{}; }

Config Config::toy() {
  Config c;
  c.model.base_width = 16;
  c.model.image_size = 32;
  c.disc.widths = {32, 64, 128};
  c.train.warmup_epochs = 2;
  c.train.main_epochs = 2;
  c.train.const_epochs = 1;
  c.train.decay_epochs = 1;
  c.train.batch_images = 2;
  c.train.g_lr = 1e-4;
  c.train.d_lr = 4e-4;
  return c;
}

Config Config::preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "toy") return toy();
  throw ConfigError("unknown preset '" + name + "' (expected paper or toy)");
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, trim(value));
}

std::string Config::get(const std::string& key) const {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
  }();
  return ks;
}

void Config::apply_env() {
  for (const auto& key : keys()) {
    std::string env = "DEEPGIN_" + key;
    for (char& ch : env) ch = ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* v = std::getenv(env.c_str())) set(key, v);
  }
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& key : keys()) out += key + "=" + get(key) + "\n";
  return out;
}

Config Config::from_text(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (!first) throw ConfigError("preset= must precede all other keys");
      c = preset(value);
    } else {
      c.set(key, value);
    }
    first = false;
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::uint64_t Config::fingerprint() const {
  std::string text;
  for (const auto& key : keys()) {
    if (key == "loss.extractor_weights") continue;
    text += key + "=" + get(key) + "\n";
  }
  return fnv1a(text);
}

void Config::validate() const {
  model.validate();
  train.validate();
  loss.weights.validate();
  if (disc.widths.size() != 3) throw ConfigError("model.disc_widths needs exactly three widths");
}

double lr_at(int epoch, double base, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.main_epochs) {
    throw ArgumentError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                        std::to_string(cfg.main_epochs) + ")");
  }
  if (epoch < cfg.const_epochs) return base;
  return base * (1.0 - static_cast<double>(epoch - cfg.const_epochs) / cfg.decay_epochs);
}

}  // namespace deepgin
