#include <fstream>
#include <sstream>

#include "oepg/error.hpp"
#include "oepg/trainer.hpp"

namespace oepg {

void validate(const TrainConfig& c) {
  if (c.epochs == 0) throw ConfigError("epochs must be positive");
  // epochs == warmup_epochs is allowed: the run ends right after cluster init.
  if (c.warmup_epochs > c.epochs) throw ConfigError("warmup_epochs must not exceed epochs");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  validate_scales(c.scales);
  if (c.budget == 0) throw ConfigError("budget must be positive");
  if (!(c.momentum >= 0.0 && c.momentum <= 1.0)) throw ConfigError("momentum must lie in [0, 1]");
  if (c.kmeans_refit_interval == 0) throw ConfigError("kmeans_refit_interval must be positive");
  validate(c.augmentation);
  validate(c.mask);
  if (c.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (c.layers == 0 || c.hidden_dim == 0) throw ConfigError("encoder sizes must be positive");
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
  std::string scales;
  for (std::size_t i = 0; i < c.scales.size(); ++i) {
    if (i) scales += ",";
    scales += std::to_string(c.scales[i]);
  }
  return {
      {"mode", to_string(c.mode)},
      {"epochs", std::to_string(c.epochs)},
      {"warmup_epochs", std::to_string(c.warmup_epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"learning_rate", fmt_double(c.learning_rate)},
      {"scales", scales},
      {"budget", std::to_string(c.budget)},
      {"momentum", fmt_double(c.momentum)},
      {"kmeans_refit_interval", std::to_string(c.kmeans_refit_interval)},
      {"local_drop", fmt_double(c.augmentation.local_drop)},
      {"global_drop", fmt_double(c.augmentation.global_drop)},
      {"local_mask_fraction", fmt_double(c.mask.local_mask_fraction)},
      {"descriptor_mask_fraction", fmt_double(c.mask.descriptor_mask_fraction)},
      {"lambda", fmt_double(c.lambda)},
      {"seed", std::to_string(c.seed)},
      {"layers", std::to_string(c.layers)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"hops", std::to_string(c.hops)},
      {"use_descriptors", fmt_bool(c.use_descriptors)},
      {"weighting", c.weighting == WeightingMode::kTrainable ? "trainable" : "uniform"},
      {"specialized_pretext", fmt_bool(c.specialized_pretext)},
      {"momentum_update", fmt_bool(c.momentum_update)},
      {"predictive_negatives", fmt_bool(c.predictive_negatives)},
      {"check_invariants", fmt_bool(c.check_invariants)},
  };
}

TrainConfig config_from_key_values(const std::map<std::string, std::string>& kv, TrainConfig c) {
  bool warmup_given = false;
  bool epochs_given = false;
  for (const auto& [key, v] : kv) {
    if (key == "mode") c.mode = parse_mode(v);
    else if (key == "epochs") { c.epochs = parse_uint(key, v); epochs_given = true; }
    else if (key == "warmup_epochs") { c.warmup_epochs = parse_uint(key, v); warmup_given = true; }
    else if (key == "batch_size") c.batch_size = parse_uint(key, v);
    else if (key == "learning_rate" || key == "lr") c.learning_rate = parse_double(key, v);
    else if (key == "scales") {
      c.scales.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) c.scales.push_back(parse_uint(key, trim(item)));
    }
    else if (key == "budget") c.budget = parse_uint(key, v);
    else if (key == "momentum") c.momentum = parse_double(key, v);
    else if (key == "kmeans_refit_interval") c.kmeans_refit_interval = parse_uint(key, v);
    else if (key == "local_drop") c.augmentation.local_drop = parse_double(key, v);
    else if (key == "global_drop") c.augmentation.global_drop = parse_double(key, v);
    else if (key == "local_mask_fraction") c.mask.local_mask_fraction = parse_double(key, v);
    else if (key == "descriptor_mask_fraction") c.mask.descriptor_mask_fraction = parse_double(key, v);
    else if (key == "lambda") c.lambda = parse_double(key, v);
    else if (key == "seed") c.seed = parse_uint(key, v);
    else if (key == "layers") c.layers = parse_uint(key, v);
    else if (key == "hidden_dim") c.hidden_dim = parse_uint(key, v);
    else if (key == "hops") c.hops = parse_uint(key, v);
    else if (key == "use_descriptors") c.use_descriptors = parse_bool(key, v);
    else if (key == "weighting") {
      if (v == "trainable") c.weighting = WeightingMode::kTrainable;
      else if (v == "uniform") c.weighting = WeightingMode::kUniform;
      else throw ConfigError("weighting must be 'trainable' or 'uniform'");
    }
    else if (key == "specialized_pretext") c.specialized_pretext = parse_bool(key, v);
    else if (key == "momentum_update") c.momentum_update = parse_bool(key, v);
    else if (key == "predictive_negatives") c.predictive_negatives = parse_bool(key, v);
    else if (key == "check_invariants") c.check_invariants = parse_bool(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (epochs_given && !warmup_given) c.warmup_epochs = c.epochs / 5;
  validate(c);
  return c;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return config_from_key_values(kv, std::move(base));
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [k, v] : to_key_values(config)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace oepg
