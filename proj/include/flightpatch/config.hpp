#pragma once

// Flat key=value run configuration covering model, training and data knobs.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flightpatch/dataset.hpp"
#include "flightpatch/errors.hpp"
#include "flightpatch/model.hpp"
#include "flightpatch/train.hpp"

namespace flightpatch {

namespace config_parse {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument("bad");
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "' expects a comma-separated list");
  return out;
}

}  // namespace config_parse

/// Union of ModelConfig, TrainConfig and data settings. Defaults reproduce the
/// reference setup (L=60, d=128, 8 heads, 3 layers, lr=1e-4, 30 epochs).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool diff = true;
  SplitMode split = SplitMode::chronological;
  std::uint64_t seed = 1;
  std::string input;
  std::string data;
  std::string checkpoint;
  std::string out = "out";
  std::size_t n = 1000;
  std::string profile = "curved";
  bool coded_space = false;
  std::string baseline;
  std::string windows = "0";  // export-plot window indices

  /// Sets one key. Unknown keys are a ConfigError.
  void set(const std::string& raw_key, const std::string& raw_value) {
    using namespace config_parse;
    const std::string key = trim(raw_key);
    const std::string v = trim(raw_value);
    if (key == "lookback") model.lookback = to_size(key, v);
    else if (key == "horizon") model.horizon = to_size(key, v);
    else if (key == "d_model") model.d_model = to_size(key, v);
    else if (key == "heads") model.heads = to_size(key, v);
    else if (key == "temporal_layers") model.temporal_layers = to_size(key, v);
    else if (key == "scale_layers") model.scale_layers = to_size(key, v);
    else if (key == "channel_layers") model.channel_layers = to_size(key, v);
    else if (key == "layers") model.temporal_layers = model.scale_layers = model.channel_layers = to_size(key, v);
    else if (key == "patch_sizes" || key == "patches") model.patch_sizes = to_sizes(key, v);
    else if (key == "dropout") model.dropout = to_double(key, v);
    else if (key == "mlp_hidden_factor") model.mlp_hidden_factor = to_size(key, v);
    else if (key == "predictor_hidden") model.predictor_hidden = to_size(key, v);
    else if (key == "layer_norm_eps") model.layer_norm_eps = to_double(key, v);
    else if (key == "seed") seed = to_u64(key, v);
    else if (key == "max_epochs") train.max_epochs = to_size(key, v);
    else if (key == "patience") train.patience = to_size(key, v);
    else if (key == "batch_size") train.batch_size = to_size(key, v);
    else if (key == "lr") train.lr = to_double(key, v);
    else if (key == "shuffle") train.shuffle = to_bool(key, v);
    else if (key == "max_steps") train.max_steps = to_size(key, v);
    else if (key == "diff") diff = to_bool(key, v);
    else if (key == "split") split = parse_split_mode(v);
    else if (key == "input") input = v;
    else if (key == "data") data = v;
    else if (key == "checkpoint") checkpoint = v;
    else if (key == "out") out = v;
    else if (key == "n") n = to_size(key, v);
    else if (key == "profile") profile = v;
    else if (key == "coded_space") coded_space = to_bool(key, v);
    else if (key == "baseline") baseline = v;
    else if (key == "windows") windows = v;
    else throw ConfigError("unknown config key '" + key + "'");
  }

  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
  }

  /// Reads `key=value` lines; blank lines and `#` comments are skipped.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = config_parse::trim(line);
      if (t.empty() || t[0] == '#') continue;
      try {
        set_assignment(t);
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  /// Model config with the run seed applied.
  ModelConfig model_config() const {
    ModelConfig m = model;
    m.seed = seed;
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  DataConfig data_config(const std::string& source) const {
    DataConfig d;
    d.lookback = model.lookback;
    d.horizon = model.horizon;
    d.diff = diff;
    d.split = split;
    d.seed = seed;
    d.source = source;
    return d;
  }

  /// Fully resolved configuration, one key per line, in a fixed order.
  std::string render() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "lookback=" << model.lookback << "\n"
       << "horizon=" << model.horizon << "\n"
       << "d_model=" << model.d_model << "\n"
       << "heads=" << model.heads << "\n"
       << "temporal_layers=" << model.temporal_layers << "\n"
       << "scale_layers=" << model.scale_layers << "\n"
       << "channel_layers=" << model.channel_layers << "\n"
       << "patch_sizes=" << ModelConfig::join(model.patch_sizes) << "\n"
       << "dropout=" << model.dropout << "\n"
       << "mlp_hidden_factor=" << model.mlp_hidden_factor << "\n"
       << "predictor_hidden=" << model.predictor_hidden << "\n"
       << "layer_norm_eps=" << model.layer_norm_eps << "\n"
       << "seed=" << seed << "\n"
       << "max_epochs=" << train.max_epochs << "\n"
       << "patience=" << train.patience << "\n"
       << "batch_size=" << train.batch_size << "\n"
       << "lr=" << train.lr << "\n"
       << "shuffle=" << (train.shuffle ? "true" : "false") << "\n"
       << "max_steps=" << train.max_steps << "\n"
       << "diff=" << (diff ? "true" : "false") << "\n"
       << "split=" << to_string(split) << "\n"
       << "input=" << input << "\n"
       << "data=" << data << "\n"
       << "checkpoint=" << checkpoint << "\n"
       << "out=" << out << "\n"
       << "n=" << n << "\n"
       << "profile=" << profile << "\n"
       << "coded_space=" << (coded_space ? "true" : "false") << "\n"
       << "baseline=" << baseline << "\n"
       << "windows=" << windows << "\n";
    return os.str();
  }
};

}  // namespace flightpatch
