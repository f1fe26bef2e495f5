/*
 * Copyright 2026 The fedtangle Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Experiment configuration: one JSON document with sections crypto, quant,
// dag, fed, data and sim. Every key has a default except sim.seed, which
// must be explicit; unknown keys and wrong types are rejected with the
// offending key named in the message.

#ifndef FEDTANGLE_CONFIG_HPP_
#define FEDTANGLE_CONFIG_HPP_

#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtangle/error.hpp"

namespace fedtangle {

struct ExperimentConfig {
  // crypto
  std::uint32_t degree = 256;
  std::uint64_t q = 65537;
  double sigma = 3.2;
  std::uint32_t gadget_base = 2;
  std::uint64_t p_floor = (1ULL << 20) + 1;
  std::uint64_t p0_floor = (1ULL << 30) + 1;
  // quant
  std::uint64_t scale = 256;
  double clip = 8.0;
  std::uint32_t max_parties = 15;
  // dag
  double rho = 0.5;
  double theta = 2.0;
  std::uint32_t walk_start_depth = 10;
  std::uint64_t walk_max_steps = 0;
  bool clamp_cw = true;
  double validation_tolerance = 0.05;
  // fed
  double eta = 0.05;
  std::uint32_t batch_size = 32;
  double credibility = 1.0;
  // data
  std::uint32_t classes = 3;
  std::uint32_t features = 20;
  std::uint32_t samples_per_hospital = 200;
  double separation = 2.5;
  double stddev = 1.0;
  // sim
  std::uint32_t hospitals = 3;
  std::uint32_t grads_per_hospital = 50;
  std::uint32_t episodes = 1;
  std::uint32_t slots_per_episode = 1;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> dropout;  // (round, hospital)
  std::vector<double> time_limits_ms;  // empty: no budget
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& key,
                                     const std::string& what) {
  fail(errc::spec_error, key + ": " + what);
}

inline const json& get_section(const json& root, const std::string& name) {
  static const json empty = json::object();
  if (!root.contains(name)) return empty;
  const json& s = root.at(name);
  if (!s.is_object()) config_fail(name, "must be an object");
  return s;
}

class SectionReader {
 public:
  SectionReader(const json& section, std::string name)
      : section_(section), name_(std::move(name)) {}

  ~SectionReader() = default;

  void finish() const {
    for (auto it = section_.begin(); it != section_.end(); ++it) {
      if (!seen_.count(it.key())) {
        config_fail(name_ + "." + it.key(), "unknown key");
      }
    }
  }

  bool has(const std::string& key) const { return section_.contains(key); }

  template <typename T>
  void read_uint(const std::string& key, T& out) {
    mark(key);
    if (!has(key)) return;
    const json& v = section_.at(key);
    if (!v.is_number_unsigned()) {
      config_fail(path(key), "must be a nonnegative integer");
    }
    const std::uint64_t raw = v.get<std::uint64_t>();
    if (raw > std::numeric_limits<T>::max()) {
      config_fail(path(key), "out of range");
    }
    out = static_cast<T>(raw);
  }

  void read_double(const std::string& key, double& out) {
    mark(key);
    if (!has(key)) return;
    const json& v = section_.at(key);
    if (!v.is_number()) config_fail(path(key), "must be a number");
    out = v.get<double>();
  }

  void read_bool(const std::string& key, bool& out) {
    mark(key);
    if (!has(key)) return;
    const json& v = section_.at(key);
    if (!v.is_boolean()) config_fail(path(key), "must be a boolean");
    out = v.get<bool>();
  }

  void read_dropout(
      const std::string& key,
      std::vector<std::pair<std::uint64_t, std::uint32_t>>& out) {
    mark(key);
    if (!has(key)) return;
    const json& v = section_.at(key);
    if (!v.is_array()) config_fail(path(key), "must be an array of pairs");
    out.clear();
    for (const json& entry : v) {
      if (!entry.is_array() || entry.size() != 2 ||
          !entry[0].is_number_unsigned() || !entry[1].is_number_unsigned()) {
        config_fail(path(key), "entries must be [round, hospital] pairs");
      }
      out.emplace_back(entry[0].get<std::uint64_t>(),
                       entry[1].get<std::uint32_t>());
    }
  }

  void read_double_array(const std::string& key, std::vector<double>& out) {
    mark(key);
    if (!has(key)) return;
    const json& v = section_.at(key);
    if (!v.is_array()) config_fail(path(key), "must be an array of numbers");
    out.clear();
    for (const json& entry : v) {
      if (!entry.is_number()) {
        config_fail(path(key), "must be an array of numbers");
      }
      out.push_back(entry.get<double>());
    }
  }

  std::string path(const std::string& key) const { return name_ + "." + key; }

 private:
  void mark(const std::string& key) { seen_.insert(key); }

  const json& section_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  using detail::config_fail;
  if (!root.is_object()) config_fail("config", "top level must be an object");
  static const std::set<std::string> kSections = {"crypto", "quant", "dag",
                                                  "fed",    "data",  "sim"};
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (!kSections.count(it.key())) config_fail(it.key(), "unknown section");
  }

  ExperimentConfig cfg;

  detail::SectionReader crypto(detail::get_section(root, "crypto"), "crypto");
  crypto.read_uint("d", cfg.degree);
  crypto.read_uint("q", cfg.q);
  crypto.read_double("sigma", cfg.sigma);
  crypto.read_uint("base", cfg.gadget_base);
  crypto.read_uint("p_floor", cfg.p_floor);
  crypto.read_uint("p0_floor", cfg.p0_floor);
  crypto.finish();

  detail::SectionReader quant(detail::get_section(root, "quant"), "quant");
  quant.read_uint("scale", cfg.scale);
  quant.read_double("clip", cfg.clip);
  quant.read_uint("max_parties", cfg.max_parties);
  quant.finish();

  detail::SectionReader dag(detail::get_section(root, "dag"), "dag");
  dag.read_double("rho", cfg.rho);
  dag.read_double("theta", cfg.theta);
  dag.read_uint("walk_start_depth", cfg.walk_start_depth);
  dag.read_uint("walk_max_steps", cfg.walk_max_steps);
  dag.read_bool("clamp_cw", cfg.clamp_cw);
  dag.read_double("validation_tolerance", cfg.validation_tolerance);
  dag.finish();

  detail::SectionReader fed(detail::get_section(root, "fed"), "fed");
  fed.read_double("eta", cfg.eta);
  fed.read_uint("batch_size", cfg.batch_size);
  fed.read_double("credibility", cfg.credibility);
  fed.finish();

  detail::SectionReader data(detail::get_section(root, "data"), "data");
  data.read_uint("classes", cfg.classes);
  data.read_uint("features", cfg.features);
  data.read_uint("samples_per_hospital", cfg.samples_per_hospital);
  data.read_double("separation", cfg.separation);
  data.read_double("stddev", cfg.stddev);
  data.finish();

  detail::SectionReader sim(detail::get_section(root, "sim"), "sim");
  sim.read_uint("hospitals", cfg.hospitals);
  sim.read_uint("grads_per_hospital", cfg.grads_per_hospital);
  sim.read_uint("episodes", cfg.episodes);
  sim.read_uint("slots_per_episode", cfg.slots_per_episode);
  if (!sim.has("seed")) config_fail("sim.seed", "missing required key");
  sim.read_uint("seed", cfg.seed);
  sim.read_dropout("dropout", cfg.dropout);
  sim.read_double_array("time_limits_ms", cfg.time_limits_ms);
  sim.finish();

  // Cross-field checks.
  if (cfg.hospitals < 1) config_fail("sim.hospitals", "must be at least 1");
  if (cfg.hospitals > cfg.max_parties) {
    config_fail("sim.hospitals", "exceeds quant.max_parties");
  }
  if (cfg.grads_per_hospital < 1) {
    config_fail("sim.grads_per_hospital", "must be at least 1");
  }
  if (cfg.episodes < 1) config_fail("sim.episodes", "must be at least 1");
  if (cfg.slots_per_episode < 1) {
    config_fail("sim.slots_per_episode", "must be at least 1");
  }
  if (cfg.eta <= 0.0) config_fail("fed.eta", "must be positive");
  if (cfg.batch_size < 1) config_fail("fed.batch_size", "must be at least 1");
  if (cfg.classes < 2) config_fail("data.classes", "must be at least 2");
  if (cfg.features < cfg.classes) {
    config_fail("data.features", "must be at least data.classes");
  }
  if (cfg.samples_per_hospital < cfg.classes) {
    config_fail("data.samples_per_hospital", "too small for the class count");
  }
  for (const auto& [round, hospital] : cfg.dropout) {
    if (hospital >= cfg.hospitals) {
      config_fail("sim.dropout", "hospital index out of range");
    }
    (void)round;
  }
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::spec_error, std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

// Canonical echo of a parsed config, written next to run outputs so every
// result directory records the exact parameters that produced it.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json root;
  root["crypto"] = {{"d", cfg.degree},
                    {"q", cfg.q},
                    {"sigma", cfg.sigma},
                    {"base", cfg.gadget_base},
                    {"p_floor", cfg.p_floor},
                    {"p0_floor", cfg.p0_floor}};
  root["quant"] = {{"scale", cfg.scale},
                   {"clip", cfg.clip},
                   {"max_parties", cfg.max_parties}};
  root["dag"] = {{"rho", cfg.rho},
                 {"theta", cfg.theta},
                 {"walk_start_depth", cfg.walk_start_depth},
                 {"walk_max_steps", cfg.walk_max_steps},
                 {"clamp_cw", cfg.clamp_cw},
                 {"validation_tolerance", cfg.validation_tolerance}};
  root["fed"] = {{"eta", cfg.eta},
                 {"batch_size", cfg.batch_size},
                 {"credibility", cfg.credibility}};
  root["data"] = {{"classes", cfg.classes},
                  {"features", cfg.features},
                  {"samples_per_hospital", cfg.samples_per_hospital},
                  {"separation", cfg.separation},
                  {"stddev", cfg.stddev}};
  nlohmann::json dropout = nlohmann::json::array();
  for (const auto& [round, hospital] : cfg.dropout) {
    dropout.push_back({round, hospital});
  }
  root["sim"] = {{"hospitals", cfg.hospitals},
                 {"grads_per_hospital", cfg.grads_per_hospital},
                 {"episodes", cfg.episodes},
                 {"slots_per_episode", cfg.slots_per_episode},
                 {"seed", cfg.seed},
                 {"dropout", dropout},
                 {"time_limits_ms", cfg.time_limits_ms}};
  return root;
}

}  // namespace fedtangle

#endif  // FEDTANGLE_CONFIG_HPP_
