#pragma once

#include <array>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trajclust/cluster.hpp"
#include "trajclust/common.hpp"
#include "trajclust/ekfsim.hpp"
#include "trajclust/init.hpp"

namespace trajclust {

/// Everything a run depends on. Stored as `key = value` lines.
struct RunConfig {
  EkfConfig ekf;
  ClusterConfig cluster;
  std::optional<double> t_kl;  // required for clustering, no default
  InitMethod init = InitMethod::kAgglomerative;
  std::size_t n_k_min = 2;
  std::size_t n_k_max = 2;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::size_t resample = kDefaultResample;
  std::size_t n_assertiveness = 4;
  std::size_t n_interaction = 8;
  double heatmap_bin = 0.5;
  bool export_traces = false;
  std::string data;
  std::string labels;
  std::string out;

  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.ekf == b.ekf && a.cluster.kl_weighting == b.cluster.kl_weighting &&
           a.cluster.max_em_iters == b.cluster.max_em_iters &&
           a.cluster.max_outer_iters == b.cluster.max_outer_iters &&
           a.cluster.candidate_fraction == b.cluster.candidate_fraction &&
           a.cluster.candidate_threshold == b.cluster.candidate_threshold &&
           a.cluster.min_split_size == b.cluster.min_split_size && a.t_kl == b.t_kl && a.init == b.init &&
           a.n_k_min == b.n_k_min && a.n_k_max == b.n_k_max && a.seed == b.seed && a.threads == b.threads &&
           a.resample == b.resample && a.n_assertiveness == b.n_assertiveness &&
           a.n_interaction == b.n_interaction && a.heatmap_bin == b.heatmap_bin &&
           a.export_traces == b.export_traces && a.data == b.data && a.labels == b.labels && a.out == b.out;
  }

  /// Cluster settings with t_kl filled in; throws if t_kl was never given.
  ClusterConfig cluster_config() const {
    if (!t_kl) throw ConfigError("t_kl is required");
    ClusterConfig c = cluster;
    c.t_kl = *t_kl;
    return c;
  }

  void validate() const {
    ekf.validate();
    if (t_kl && !(*t_kl >= 0.0)) throw ConfigError("t_kl must be non-negative");
    if (n_k_min < 1 || n_k_min > n_k_max) throw ConfigError("empty cluster-count range");
    if (resample < 2) throw ConfigError("resample must be at least 2");
    if (!(heatmap_bin > 0.0)) throw ConfigError("heatmap_bin must be positive");
    if (!(cluster.candidate_fraction > 0.0 && cluster.candidate_fraction <= 1.0))
      throw ConfigError("candidate_fraction must lie in (0, 1]");
    if (threads < 1) throw ConfigError("threads must be at least 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

inline double parse_num(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::array<double, 4> parse_diag(const std::string& key, const std::string& v) {
  std::array<double, 4> out{};
  std::stringstream ss(v);
  std::string cell;
  std::size_t i = 0;
  while (std::getline(ss, cell, ',')) {
    if (i == 4) throw ConfigError(key + ": expected 4 values");
    out[i++] = parse_num(key, trim(cell));
  }
  if (i != 4) throw ConfigError(key + ": expected 4 values");
  return out;
}

inline std::string print_diag(const std::array<double, 4>& d) {
  return format_double(d[0]) + "," + format_double(d[1]) + "," + format_double(d[2]) + "," + format_double(d[3]);
}

struct ConfigField {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define TRAJCLUST_NUM(name, expr)                                              \
  ConfigField {                                                                \
    name, [](const RunConfig& c) { return format_double(c.expr); },           \
        [](RunConfig& c, const std::string& v) { c.expr = parse_num(name, v); } \
  }
#define TRAJCLUST_UINT(name, expr, type)                                                      \
  ConfigField {                                                                               \
    name, [](const RunConfig& c) { return std::to_string(c.expr); },                         \
        [](RunConfig& c, const std::string& v) { c.expr = static_cast<type>(parse_uint(name, v)); } \
  }
#define TRAJCLUST_STR(name, expr)                                   \
  ConfigField {                                                     \
    name, [](const RunConfig& c) { return c.expr; },               \
        [](RunConfig& c, const std::string& v) { c.expr = v; }      \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields{
      {"r_diag", [](const RunConfig& c) { return print_diag(c.ekf.r_diag); },
       [](RunConfig& c, const std::string& v) { c.ekf.r_diag = parse_diag("r_diag", v); }},
      {"q_diag", [](const RunConfig& c) { return print_diag(c.ekf.q_diag); },
       [](RunConfig& c, const std::string& v) { c.ekf.q_diag = parse_diag("q_diag", v); }},
      TRAJCLUST_NUM("dt_predict", ekf.dt_predict),
      TRAJCLUST_NUM("update_period", ekf.update_period),
      TRAJCLUST_NUM("k_gain", ekf.k_gain),
      TRAJCLUST_NUM("p_floor", ekf.p_floor),
      TRAJCLUST_NUM("phi_max", ekf.phi_max),
      TRAJCLUST_NUM("v_floor", ekf.v_floor),
      {"process_noise",
       [](const RunConfig& c) {
         return std::string(c.ekf.process_noise == ProcessNoise::kPerSecond ? "per_second" : "per_step");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "per_second") {
           c.ekf.process_noise = ProcessNoise::kPerSecond;
         } else if (v == "per_step") {
           c.ekf.process_noise = ProcessNoise::kPerStep;
         } else {
           throw ConfigError("process_noise: expected per_second or per_step, got '" + v + "'");
         }
       }},
      {"t_kl", [](const RunConfig& c) { return c.t_kl ? format_double(*c.t_kl) : std::string(); },
       [](RunConfig& c, const std::string& v) {
         if (v.empty()) {
           c.t_kl.reset();
         } else {
           c.t_kl = parse_num("t_kl", v);
         }
       }},
      {"kl_weighting",
       [](const RunConfig& c) {
         switch (c.cluster.kl_weighting) {
           case KlWeighting::kFine: return std::string("fine");
           case KlWeighting::kOld: return std::string("old");
           case KlWeighting::kNew: return std::string("new");
         }
         return std::string("fine");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "fine") {
           c.cluster.kl_weighting = KlWeighting::kFine;
         } else if (v == "old") {
           c.cluster.kl_weighting = KlWeighting::kOld;
         } else if (v == "new") {
           c.cluster.kl_weighting = KlWeighting::kNew;
         } else {
           throw ConfigError("kl_weighting: expected fine, old or new, got '" + v + "'");
         }
       }},
      TRAJCLUST_UINT("max_em_iters", cluster.max_em_iters, std::size_t),
      TRAJCLUST_UINT("max_outer_iters", cluster.max_outer_iters, std::size_t),
      TRAJCLUST_NUM("candidate_fraction", cluster.candidate_fraction),
      TRAJCLUST_UINT("candidate_threshold", cluster.candidate_threshold, std::size_t),
      TRAJCLUST_UINT("min_split_size", cluster.min_split_size, std::size_t),
      {"init", [](const RunConfig& c) { return std::string(to_string(c.init)); },
       [](RunConfig& c, const std::string& v) { c.init = parse_init_method(v); }},
      TRAJCLUST_UINT("n_k_min", n_k_min, std::size_t),
      TRAJCLUST_UINT("n_k_max", n_k_max, std::size_t),
      TRAJCLUST_UINT("seed", seed, std::uint64_t),
      TRAJCLUST_UINT("threads", threads, unsigned),
      TRAJCLUST_UINT("resample", resample, std::size_t),
      TRAJCLUST_UINT("n_assertiveness", n_assertiveness, std::size_t),
      TRAJCLUST_UINT("n_interaction", n_interaction, std::size_t),
      TRAJCLUST_NUM("heatmap_bin", heatmap_bin),
      {"export_traces", [](const RunConfig& c) { return std::string(c.export_traces ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.export_traces = parse_bool("export_traces", v); }},
      TRAJCLUST_STR("data", data),
      TRAJCLUST_STR("labels", labels),
      TRAJCLUST_STR("out", out),
  };
  return fields;
}

#undef TRAJCLUST_NUM
#undef TRAJCLUST_UINT
#undef TRAJCLUST_STR

}  // namespace detail

/// Sets one `key` from its text form.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Applies a `key=value` override.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  apply_setting(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Parses `key = value` lines on top of the defaults. Blank lines and `#`
/// comments are skipped; values may be wrapped in double quotes.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    try {
      apply_setting(cfg, detail::trim(line.substr(0, eq)), value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline std::string print_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : detail::config_fields()) {
    const auto v = f.get(cfg);
    const bool quote = v.empty() || v.find('#') != std::string::npos || v.front() == ' ' || v.back() == ' ';
    out += std::string(f.key) + " = " + (quote ? "\"" + v + "\"" : v) + "\n";
  }
  return out;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace trajclust
