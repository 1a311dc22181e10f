#include "s2x/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "s2x/errors.hpp"

namespace s2x {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// shortest round-trip form
std::string num(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string num(int64_t v) { return std::to_string(v); }
std::string num(uint64_t v) { return std::to_string(v); }

int64_t to_i64(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + v + "' is not an integer");
  }
}

uint64_t to_u64(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + v + "' is not a non-negative integer");
  }
}

double to_f64(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + v + "' is not a number");
  }
}

bool to_bool(const std::string& v, const std::string& where) {
  std::string s = lower(v);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(where + ": '" + v + "' is not a boolean (true/false)");
}

std::vector<uint64_t> to_seeds(const std::string& v, const std::string& where) {
  std::vector<uint64_t> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(to_u64(trim(cell), where));
  if (out.empty()) throw ConfigError(where + ": seeds list is empty");
  return out;
}

std::string seeds_str(const std::vector<uint64_t>& seeds) {
  std::string s;
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(seeds[i]);
  }
  return s;
}

struct KeyDef {
  const char* key;
  bool chosen;  // value is ours, not the literature's
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

const std::vector<KeyDef>& key_table() {
  using C = ExperimentConfig;
  static const std::vector<KeyDef> table = {
      {"data.source", false, [](const C& c) { return c.source; },
       [](C& c, const std::string& v, const std::string&) { c.source = v; }},
      {"data.target", false, [](const C& c) { return c.target; },
       [](C& c, const std::string& v, const std::string&) { c.target = v; }},
      {"out", false, [](const C& c) { return c.out; },
       [](C& c, const std::string& v, const std::string&) { c.out = v; }},
      {"seeds", false, [](const C& c) { return seeds_str(c.seeds); },
       [](C& c, const std::string& v, const std::string& w) { c.seeds = to_seeds(v, w); }},

      {"ablate.no_s2former", false, [](const C& c) { return std::string(c.no_s2former ? "true" : "false"); },
       [](C& c, const std::string& v, const std::string& w) { c.no_s2former = to_bool(v, w); }},
      {"ablate.no_fdc", false, [](const C& c) { return std::string(c.no_fdc ? "true" : "false"); },
       [](C& c, const std::string& v, const std::string& w) { c.no_fdc = to_bool(v, w); }},
      {"ablate.no_daft", false, [](const C& c) { return std::string(c.no_daft ? "true" : "false"); },
       [](C& c, const std::string& v, const std::string& w) { c.no_daft = to_bool(v, w); }},

      {"synth.classes", false, [](const C& c) { return num(c.synth.classes); },
       [](C& c, const std::string& v, const std::string& w) { c.synth.classes = to_i64(v, w); }},
      {"synth.height", false, [](const C& c) { return num(c.synth.height); },
       [](C& c, const std::string& v, const std::string& w) { c.synth.height = to_i64(v, w); }},
      {"synth.width", false, [](const C& c) { return num(c.synth.width); },
       [](C& c, const std::string& v, const std::string& w) { c.synth.width = to_i64(v, w); }},
      {"synth.bands", false, [](const C& c) { return num(c.synth.bands); },
       [](C& c, const std::string& v, const std::string& w) { c.synth.bands = to_i64(v, w); }},
      {"synth.shift", false, [](const C& c) { return num(c.synth.shift); },
       [](C& c, const std::string& v, const std::string& w) { c.synth.shift = to_f64(v, w); }},
      {"synth.noise", false, [](const C& c) { return num(c.synth.noise); },
       [](C& c, const std::string& v, const std::string& w) { c.synth.noise = to_f64(v, w); }},
      {"synth.seed", false, [](const C& c) { return num(c.synth.seed); },
       [](C& c, const std::string& v, const std::string& w) { c.synth.seed = to_u64(v, w); }},

      {"encoder.width", true, [](const C& c) { return num(c.encoder.width); },
       [](C& c, const std::string& v, const std::string& w) { c.encoder.width = to_i64(v, w); }},
      {"encoder.heads", true, [](const C& c) { return num(c.encoder.heads); },
       [](C& c, const std::string& v, const std::string& w) { c.encoder.heads = to_i64(v, w); }},
      {"encoder.cross_layers", false, [](const C& c) { return num(c.encoder.cross_layers); },
       [](C& c, const std::string& v, const std::string& w) { c.encoder.cross_layers = to_i64(v, w); }},
      {"encoder.conv_kernel", true, [](const C& c) { return num(c.encoder.conv_kernel); },
       [](C& c, const std::string& v, const std::string& w) { c.encoder.conv_kernel = to_i64(v, w); }},
      {"encoder.ffn_mult", true, [](const C& c) { return num(c.encoder.ffn_mult); },
       [](C& c, const std::string& v, const std::string& w) { c.encoder.ffn_mult = to_i64(v, w); }},
      {"encoder.masking_ratio", false, [](const C& c) { return num(c.encoder.masking_ratio); },
       [](C& c, const std::string& v, const std::string& w) { c.encoder.masking_ratio = to_f64(v, w); }},

      {"pretrain.epochs", true, [](const C& c) { return num(c.pretrain.epochs); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.epochs = to_i64(v, w); }},
      {"pretrain.batch", false, [](const C& c) { return num(c.pretrain.batch); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.batch = to_i64(v, w); }},
      {"pretrain.lr", false, [](const C& c) { return num(c.pretrain.lr); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.lr = to_f64(v, w); }},
      {"pretrain.lr_decay", false, [](const C& c) { return num(c.pretrain.lr_decay); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.lr_decay = to_f64(v, w); }},
      {"pretrain.alpha", false, [](const C& c) { return num(c.pretrain.alpha); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.alpha = to_f64(v, w); }},
      {"pretrain.band_tau", false, [](const C& c) { return num(c.pretrain.band_tau); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.band_tau = to_f64(v, w); }},
      {"pretrain.timesteps", true, [](const C& c) { return num(c.pretrain.timesteps); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.timesteps = to_i64(v, w); }},
      {"pretrain.beta_min", false, [](const C& c) { return num(c.pretrain.beta_min); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.beta_min = to_f64(v, w); }},
      {"pretrain.beta_max", false, [](const C& c) { return num(c.pretrain.beta_max); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.beta_max = to_f64(v, w); }},
      {"pretrain.window", true, [](const C& c) { return num(c.pretrain.window); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.window = to_i64(v, w); }},
      {"pretrain.patch", true, [](const C& c) { return num(c.pretrain.patch); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.patch = to_i64(v, w); }},
      {"pretrain.pca_bands", true, [](const C& c) { return num(c.pretrain.pca_bands); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.pca_bands = to_i64(v, w); }},
      {"pretrain.seed", false, [](const C& c) { return num(c.pretrain.seed); },
       [](C& c, const std::string& v, const std::string& w) { c.pretrain.seed = to_u64(v, w); }},

      {"finetune.epochs", true, [](const C& c) { return num(c.finetune.epochs); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.epochs = to_i64(v, w); }},
      {"finetune.batch", false, [](const C& c) { return num(c.finetune.batch); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.batch = to_i64(v, w); }},
      {"finetune.lr", false, [](const C& c) { return num(c.finetune.lr); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.lr = to_f64(v, w); }},
      {"finetune.lr_decay", false, [](const C& c) { return num(c.finetune.lr_decay); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.lr_decay = to_f64(v, w); }},
      {"finetune.lambda", true, [](const C& c) { return num(c.finetune.lambda); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.lambda = to_f64(v, w); }},
      {"finetune.traj_draws", true, [](const C& c) { return num(c.finetune.traj_draws); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.traj_draws = to_i64(v, w); }},
      {"finetune.shots", false, [](const C& c) { return num(c.finetune.shots); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.shots = to_i64(v, w); }},
      {"finetune.window", true, [](const C& c) { return num(c.finetune.window); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.window = to_i64(v, w); }},
      {"finetune.patch", true, [](const C& c) { return num(c.finetune.patch); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.patch = to_i64(v, w); }},
      {"finetune.seed", false, [](const C& c) { return num(c.finetune.seed); },
       [](C& c, const std::string& v, const std::string& w) { c.finetune.seed = to_u64(v, w); }},
  };
  return table;
}

const KeyDef* find_key(const std::string& key) {
  for (const auto& def : key_table())
    if (key == def.key) return &def;
  return nullptr;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_text(const std::string& text,
                                              const std::string& source_name) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string where = source_name + ":" + std::to_string(line_no);
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const KeyDef* def = find_key(key);
    if (!def) throw ConfigError(where + ": unknown key '" + key + "'");
    def->set(cfg, value, where);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

std::string ExperimentConfig::dump() const {
  std::string out;
  for (const auto& def : key_table()) {
    out += def.key;
    out += " = ";
    out += def.get(*this);
    if (def.chosen) out += "  # chosen";
    out += "\n";
  }
  return out;
}

int64_t dataset_default_batch(const std::string& scene_name) {
  std::string n = lower(scene_name);
  if (n == "pu" || n == "pc") return 45;
  if (n == "sa") return 80;
  if (n == "hu") return 75;
  return 0;
}

PretrainConfig resolved_pretrain(const ExperimentConfig& cfg) {
  PretrainConfig pc = cfg.pretrain;
  pc.encoder = cfg.encoder;
  pc.encoder.use_cross_attention = !cfg.no_s2former;
  pc.encoder.with_class_token = false;
  if (cfg.no_fdc) pc.alpha = 0.0;
  return pc;
}

FinetuneConfig resolved_finetune(const ExperimentConfig& cfg, const std::string& scene_name) {
  FinetuneConfig fc = cfg.finetune;
  if (cfg.no_daft) fc.lambda = 0.0;
  if (fc.batch == 0) fc.batch = dataset_default_batch(scene_name);
  return fc;
}

}  // namespace s2x
