#include "mpt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mpt/io.hpp"

namespace mpt {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) { throw ParseError({line, 1, msg}); }

int parse_int_value(const std::string& v, int line) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) fail(line, "expected integer, got '" + v + "'");
  return out;
}

uint64_t parse_u64_value(const std::string& v, int line) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) fail(line, "expected unsigned integer, got '" + v + "'");
  return out;
}

double parse_double_value(const std::string& v, int line) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) fail(line, "expected number, got '" + v + "'");
  return out;
}

bool parse_bool_value(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(line, "expected boolean (true/false), got '" + v + "'");
}

std::string num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (mask.ratio < 0.0 || mask.ratio >= 1.0) throw std::invalid_argument("config: mask_ratio must be in [0,1)");
  if (mask.n_queries < 1) throw std::invalid_argument("config: n_queries must be >= 1");
  if (mask.gamma_fps_count < 0) throw std::invalid_argument("config: gamma_fps_count must be >= 0");
  if (loss.alpha < 0.0 || loss.alpha > 1.0) throw std::invalid_argument("config: focal_alpha must be in [0,1]");
  if (loss.gamma < 0.0) throw std::invalid_argument("config: focal_gamma must be >= 0");
  if (data.n_train < 1 || data.n_test < 1) throw std::invalid_argument("config: dataset splits must be non-empty");
  if (data.n_points < 8 || data.n_points % 2 != 0)
    throw std::invalid_argument("config: n_points must be even and >= 8");
  if (data.jitter < 0.0) throw std::invalid_argument("config: jitter must be >= 0");
  if (data.stretch_min <= 0.0 || data.stretch_max < data.stretch_min)
    throw std::invalid_argument("config: bad stretch range");
  if (data.max_tilt < 0.0) throw std::invalid_argument("config: max_tilt must be >= 0");
  if (max_steps < 0 || epochs < 0) throw std::invalid_argument("config: negative step/epoch counts");
  if (max_steps == 0 && epochs == 0) throw std::invalid_argument("config: one of max_steps or epochs must be > 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (base_lr <= 0.0) throw std::invalid_argument("config: base_lr must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
  if (warmup_epochs < 0) throw std::invalid_argument("config: warmup_epochs must be >= 0");
  if (augment && (aug_scale_min <= 0.0 || aug_scale_max < aug_scale_min || aug_translate < 0.0))
    throw std::invalid_argument("config: bad augmentation range");
  if (probe.epochs < 1 || probe.batch_size < 1 || probe.lr <= 0.0 || probe.weight_decay < 0.0 ||
      probe.dropout < 0.0 || probe.dropout >= 1.0)
    throw std::invalid_argument("config: bad probe settings");
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::map<std::string, std::function<void(const std::string&, int)>> setters;
  auto I = [&](const std::string& k, int& slot) {
    setters[k] = [&slot](const std::string& v, int ln) { slot = parse_int_value(v, ln); };
  };
  auto D = [&](const std::string& k, double& slot) {
    setters[k] = [&slot](const std::string& v, int ln) { slot = parse_double_value(v, ln); };
  };

  I("dim", cfg.model.dim);
  I("n_heads", cfg.model.n_heads);
  I("enc_layers", cfg.model.n_enc_layers);
  I("dec_layers", cfg.model.n_dec_layers);
  I("ffn_ratio", cfg.model.ffn_ratio);
  D("dropout", cfg.model.dropout_p);
  D("droppath", cfg.model.droppath_p);
  I("patch_count", cfg.model.patch_count);
  I("patch_size", cfg.model.patch_size);
  I("pos_hidden", cfg.model.pos_hidden);
  I("head_hidden", cfg.model.head_hidden);
  D("ln_eps", cfg.model.ln_eps);

  D("mask_ratio", cfg.mask.ratio);
  setters["mask_mode"] = [&cfg](const std::string& v, int ln) {
    try {
      cfg.mask.mode = mask_mode_from_name(v);
    } catch (const std::invalid_argument& e) {
      fail(ln, e.what());
    }
  };
  I("n_queries", cfg.mask.n_queries);
  I("gamma_fps_count", cfg.mask.gamma_fps_count);

  D("focal_alpha", cfg.loss.alpha);
  D("focal_gamma", cfg.loss.gamma);

  I("n_train", cfg.data.n_train);
  I("n_test", cfg.data.n_test);
  I("n_points", cfg.data.n_points);
  D("jitter", cfg.data.jitter);
  D("max_tilt", cfg.data.max_tilt);
  D("stretch_min", cfg.data.stretch_min);
  D("stretch_max", cfg.data.stretch_max);
  setters["data_dir"] = [&cfg](const std::string& v, int) { cfg.data_dir = v; };

  I("probe_epochs", cfg.probe.epochs);
  I("probe_batch_size", cfg.probe.batch_size);
  D("probe_lr", cfg.probe.lr);
  D("probe_weight_decay", cfg.probe.weight_decay);
  D("probe_dropout", cfg.probe.dropout);

  I("epochs", cfg.epochs);
  I("max_steps", cfg.max_steps);
  I("batch_size", cfg.batch_size);
  D("base_lr", cfg.base_lr);
  D("weight_decay", cfg.weight_decay);
  I("warmup_epochs", cfg.warmup_epochs);
  setters["seed"] = [&cfg](const std::string& v, int ln) { cfg.seed = parse_u64_value(v, ln); };
  setters["augment"] = [&cfg](const std::string& v, int ln) { cfg.augment = parse_bool_value(v, ln); };
  D("aug_scale_min", cfg.aug_scale_min);
  D("aug_scale_max", cfg.aug_scale_max);
  D("aug_translate", cfg.aug_translate);

  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    auto it = setters.find(key);
    if (it == setters.end()) fail(line_no, "unknown key '" + key + "'");
    auto [prev, fresh] = seen.emplace(key, line_no);
    if (!fresh) fail(line_no, "duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")");
    it->second(value, line_no);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_train_config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_train_config(ss.str());
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string serialize_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "# model\n";
  out << "dim = " << cfg.model.dim << "\n";
  out << "n_heads = " << cfg.model.n_heads << "\n";
  out << "enc_layers = " << cfg.model.n_enc_layers << "\n";
  out << "dec_layers = " << cfg.model.n_dec_layers << "\n";
  out << "ffn_ratio = " << cfg.model.ffn_ratio << "\n";
  out << "dropout = " << num(cfg.model.dropout_p) << "\n";
  out << "droppath = " << num(cfg.model.droppath_p) << "\n";
  out << "patch_count = " << cfg.model.patch_count << "\n";
  out << "patch_size = " << cfg.model.patch_size << "\n";
  out << "pos_hidden = " << cfg.model.pos_hidden << "\n";
  out << "head_hidden = " << cfg.model.head_hidden << "\n";
  out << "ln_eps = " << num(cfg.model.ln_eps) << "\n";
  out << "\n# masking and queries\n";
  out << "mask_ratio = " << num(cfg.mask.ratio) << "\n";
  out << "mask_mode = " << mask_mode_name(cfg.mask.mode) << "\n";
  out << "n_queries = " << cfg.mask.n_queries << "\n";
  out << "gamma_fps_count = " << cfg.mask.gamma_fps_count << "\n";
  out << "\n# loss\n";
  out << "focal_alpha = " << num(cfg.loss.alpha) << "\n";
  out << "focal_gamma = " << num(cfg.loss.gamma) << "\n";
  out << "\n# data\n";
  out << "n_train = " << cfg.data.n_train << "\n";
  out << "n_test = " << cfg.data.n_test << "\n";
  out << "n_points = " << cfg.data.n_points << "\n";
  out << "jitter = " << num(cfg.data.jitter) << "\n";
  out << "max_tilt = " << num(cfg.data.max_tilt) << "\n";
  out << "stretch_min = " << num(cfg.data.stretch_min) << "\n";
  out << "stretch_max = " << num(cfg.data.stretch_max) << "\n";
  if (!cfg.data_dir.empty()) out << "data_dir = " << cfg.data_dir << "\n";
  out << "\n# optimization\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "max_steps = " << cfg.max_steps << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "base_lr = " << num(cfg.base_lr) << "\n";
  out << "weight_decay = " << num(cfg.weight_decay) << "\n";
  out << "warmup_epochs = " << cfg.warmup_epochs << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "augment = " << (cfg.augment ? "true" : "false") << "\n";
  out << "aug_scale_min = " << num(cfg.aug_scale_min) << "\n";
  out << "aug_scale_max = " << num(cfg.aug_scale_max) << "\n";
  out << "aug_translate = " << num(cfg.aug_translate) << "\n";
  out << "\n# probe\n";
  out << "probe_epochs = " << cfg.probe.epochs << "\n";
  out << "probe_batch_size = " << cfg.probe.batch_size << "\n";
  out << "probe_lr = " << num(cfg.probe.lr) << "\n";
  out << "probe_weight_decay = " << num(cfg.probe.weight_decay) << "\n";
  out << "probe_dropout = " << num(cfg.probe.dropout) << "\n";
  return out.str();
}

}  // namespace mpt
