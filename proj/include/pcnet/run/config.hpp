#pragma once

// Flat "key = value" run configuration. Blank lines and lines starting with
// '#' are ignored; unknown keys and malformed values are rejected by name.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pcnet/model/network.hpp"

namespace pcnet::run {

enum class Postfilter { kAuto, kOn, kOff };  // auto: 3D only

struct RunConfig {
  // model
  model::Variant variant = model::Variant::kPCNet;
  std::size_t spatial_rank = 2;
  std::size_t base_channels = 8;
  std::size_t levels = 3;
  // objective and optimizer
  double lambda2 = 0.67;
  double lambda3 = 0.33;
  double learning_rate = 0.001;
  std::size_t batch_size = 0;  // 0 selects 64 in 2D, 12 in 3D
  std::size_t epochs = 5;
  // sampling
  std::size_t patch = 48;
  std::size_t patch_count = 5000;  // 2D
  std::size_t vessel_per_scan = 105;
  std::size_t background_per_scan = 17;
  double holdout_fraction = 0.2;
  bool augment = true;
  std::string preprocess = "none";  // none | fundus (green channel, CLAHE, gamma)
  double gamma = 1.2;
  // synthetic data
  std::size_t synth_count = 20;
  std::size_t synth_extent = 128;  // 2D side; 3D uses 64 x 128 x 128
  std::size_t synth_trees = 3;
  std::size_t synth_branches = 12;
  double synth_noise = 0.1;
  // inference and evaluation
  double threshold = 0.5;
  std::size_t min_component_size = 40;
  std::size_t stride = 24;
  Postfilter postfilter = Postfilter::kAuto;
  // paths and seed
  std::uint64_t seed = 0;
  std::string data_manifest = "data/manifest.tsv";
  std::string checkpoint = "run/checkpoint.pcnet";
  std::string predictions = "run/predictions.tsv";
  std::string input;  // single image for predict; empty predicts the manifest's held-out split
  std::string out_dir = "run";

  std::size_t effective_batch_size() const { return batch_size ? batch_size : (spatial_rank == 3 ? 12 : 64); }
  bool postfilter_enabled() const {
    return postfilter == Postfilter::kOn || (postfilter == Postfilter::kAuto && spatial_rank == 3);
  }
  model::ModelSpec model_spec() const { return {variant, spatial_rank, base_channels, levels, seed}; }

  void validate() const;
};

namespace config_detail {

struct Field {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] inline void bad(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config field '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad(key, v, "a number");
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad(key, v, "true or false");
}

template <typename Int>
Field int_field(const char* name, Int RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, name](RunConfig& c, const std::string& v) { c.*m = parse_int<Int>(name, v); }};
}

inline Field double_field(const char* name, double RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return format_double(c.*m); },
          [m, name](RunConfig& c, const std::string& v) { c.*m = parse_double(name, v); }};
}

inline Field string_field(const char* name, std::string RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return c.*m; }, [m](RunConfig& c, const std::string& v) { c.*m = v; }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"variant", [](const RunConfig& c) { return std::string(model::variant_name(c.variant)); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.variant = model::parse_variant(v);
         } catch (const ConfigError&) {
           bad("variant", v, "one of UNetNoDS, UNet, UNetSE, UNetPSE, UNetCF, PCNet");
         }
       }},
      int_field("spatial_rank", &RunConfig::spatial_rank),
      int_field("base_channels", &RunConfig::base_channels),
      int_field("levels", &RunConfig::levels),
      double_field("lambda2", &RunConfig::lambda2),
      double_field("lambda3", &RunConfig::lambda3),
      double_field("learning_rate", &RunConfig::learning_rate),
      int_field("batch_size", &RunConfig::batch_size),
      int_field("epochs", &RunConfig::epochs),
      int_field("patch", &RunConfig::patch),
      int_field("patch_count", &RunConfig::patch_count),
      int_field("vessel_per_scan", &RunConfig::vessel_per_scan),
      int_field("background_per_scan", &RunConfig::background_per_scan),
      double_field("holdout_fraction", &RunConfig::holdout_fraction),
      {"augment", [](const RunConfig& c) { return std::string(c.augment ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.augment = parse_bool("augment", v); }},
      string_field("preprocess", &RunConfig::preprocess),
      double_field("gamma", &RunConfig::gamma),
      int_field("synth_count", &RunConfig::synth_count),
      int_field("synth_extent", &RunConfig::synth_extent),
      int_field("synth_trees", &RunConfig::synth_trees),
      int_field("synth_branches", &RunConfig::synth_branches),
      double_field("synth_noise", &RunConfig::synth_noise),
      double_field("threshold", &RunConfig::threshold),
      int_field("min_component_size", &RunConfig::min_component_size),
      int_field("stride", &RunConfig::stride),
      {"postfilter",
       [](const RunConfig& c) {
         return std::string(c.postfilter == Postfilter::kOn ? "on" : c.postfilter == Postfilter::kOff ? "off" : "auto");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") c.postfilter = Postfilter::kAuto;
         else if (v == "on") c.postfilter = Postfilter::kOn;
         else if (v == "off") c.postfilter = Postfilter::kOff;
         else bad("postfilter", v, "auto, on or off");
       }},
      int_field("seed", &RunConfig::seed),
      string_field("data_manifest", &RunConfig::data_manifest),
      string_field("checkpoint", &RunConfig::checkpoint),
      string_field("predictions", &RunConfig::predictions),
      string_field("input", &RunConfig::input),
      string_field("out_dir", &RunConfig::out_dir),
  };
  return table;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace config_detail

inline void RunConfig::validate() const {
  auto fail = [](const char* key, const std::string& why) {
    throw ConfigError("config field '" + std::string(key) + "': " + why);
  };
  if (spatial_rank != 2 && spatial_rank != 3) fail("spatial_rank", "must be 2 or 3");
  if (base_channels < 4 || base_channels % 4 != 0) fail("base_channels", "must be >= 4 and divisible by 4");
  if (levels < 2) fail("levels", "must be >= 2");
  if (!(lambda2 >= 0 && lambda2 <= 1)) fail("lambda2", "must lie in [0, 1]");
  if (!(lambda3 >= 0 && lambda3 <= 1)) fail("lambda3", "must lie in [0, 1]");
  if (!(learning_rate > 0)) fail("learning_rate", "must be positive");
  if (patch == 0 || patch % (std::size_t{1} << levels) != 0)
    fail("patch", "must be a positive multiple of 2^levels");
  if (!(holdout_fraction >= 0 && holdout_fraction < 1)) fail("holdout_fraction", "must lie in [0, 1)");
  if (preprocess != "none" && preprocess != "fundus") fail("preprocess", "must be none or fundus");
  if (!(gamma > 0)) fail("gamma", "must be positive");
  if (synth_extent < 64) fail("synth_extent", "must be at least 64");
  if (synth_trees == 0) fail("synth_trees", "must be positive");
  if (!(synth_noise >= 0)) fail("synth_noise", "must be non-negative");
  if (!(threshold > 0 && threshold < 1)) fail("threshold", "must lie in (0, 1)");
  if (stride == 0 || stride > patch) fail("stride", "must lie in [1, patch]");
}

inline RunConfig parse_config(std::istream& is, const std::string& origin = "config") {
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = config_detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = config_detail::trim(t.substr(0, eq)), value = config_detail::trim(t.substr(eq + 1));
    const auto& fs = config_detail::fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const auto& f) { return key == f.name; });
    if (it == fs.end()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown config field '" + key + "'");
    it->set(c, value);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path.string());
  return parse_config(is, path.string());
}

inline void write_config(std::ostream& os, const RunConfig& c) {
  for (const auto& f : config_detail::fields()) os << f.name << " = " << f.get(c) << '\n';
}

inline std::string to_string(const RunConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

}  // namespace pcnet::run
