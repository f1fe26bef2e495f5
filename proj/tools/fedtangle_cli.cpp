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

// fedtangle command line: key generation, experiment runs, preset sweeps and
// DAG export. Exit codes: 0 on success, 2 for configuration violations (the
// message names the offending key), 1 for anything else.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedtangle/config.hpp"
#include "fedtangle/secure_agg.hpp"
#include "fedtangle/serial.hpp"
#include "fedtangle/simnet.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text_file(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = fedtangle::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

fedtangle::ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) {
    fedtangle::fail(fedtangle::errc::spec_error,
                    "config: file not found: " + path.string());
  }
  return fedtangle::parse_config_text(read_text_file(path));
}

void write_json(const fs::path& path, const json& doc) {
  fedtangle::write_file_atomic(path, doc.dump(2) + "\n");
}

// Runs one experiment and writes the full artifact set into `out`.
void execute_run(const fedtangle::ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  write_json(out / "config.json", fedtangle::config_to_json(cfg));

  fedtangle::MetricsWriter metrics(out / "metrics.csv", cfg.seed);
  const fedtangle::ExperimentResult res = fedtangle::run_experiment(
      cfg, [&](const fedtangle::RoundMetricsRow& row) { metrics.add_row(row); });
  metrics.finish();

  fedtangle::emit_events(res.events, out / "events.jsonl");
  write_json(out / "dag_snapshot.json", fedtangle::dag_to_json(res.dag));
  fedtangle::write_file_atomic(out / "dag.dot", res.dag.to_dot());
}

int cmd_keygen(const fs::path& config_path, const fs::path& out) {
  const fedtangle::ExperimentConfig cfg = load_config(config_path);
  const fedtangle::CryptoParams cp = fedtangle::make_crypto_params_with_floors(
      cfg.degree, cfg.q, cfg.sigma, cfg.gadget_base, cfg.p_floor,
      cfg.p0_floor);
  fedtangle::RngStream master(cfg.seed);
  fedtangle::RngStream keys_rng = master.derive("keys", 0);
  const fedtangle::KeyMaterial km =
      fedtangle::setup(cfg.hospitals, cp, keys_rng);
  fedtangle::save_key_material(km, out);
  std::printf("wrote %u party keys + pk to %s\n", km.n_parties,
              out.string().c_str());
  return 0;
}

int cmd_run(const fs::path& config_path, const fs::path& out,
            std::optional<std::uint64_t> seed_override) {
  fedtangle::ExperimentConfig cfg = load_config(config_path);
  if (seed_override.has_value()) cfg.seed = *seed_override;
  execute_run(cfg, out);
  std::printf("run complete: %s\n", (out / "metrics.csv").string().c_str());
  return 0;
}

// Presets live in the repo as templates: a base config document plus one
// swept key. The sweep runs every value sequentially and collects the final
// metrics row of each run into a summary.
fs::path find_preset(const std::string& name) {
  const std::string file = name + ".json";
  const std::vector<fs::path> candidates = {
      fs::path("presets") / file,
      fs::path("..") / "presets" / file,
      fs::path("../..") / "presets" / file,
  };
  for (const fs::path& c : candidates) {
    if (fs::exists(c)) return c;
  }
  fedtangle::fail(fedtangle::errc::io_error,
                  "preset not found: presets/" + file);
}

int cmd_sweep(const std::string& preset, const fs::path& out) {
  const fs::path preset_path = find_preset(preset);
  json doc;
  try {
    doc = json::parse(read_text_file(preset_path));
  } catch (const json::exception& e) {
    fedtangle::fail(fedtangle::errc::spec_error,
                    std::string("preset: invalid JSON: ") + e.what());
  }
  if (!doc.contains("base") || !doc.contains("axis") ||
      !doc.at("axis").contains("section") || !doc.at("axis").contains("key") ||
      !doc.at("axis").contains("values")) {
    fedtangle::fail(fedtangle::errc::spec_error,
                    "preset: must contain base and axis{section,key,values}");
  }
  const std::string section = doc.at("axis").at("section").get<std::string>();
  const std::string key = doc.at("axis").at("key").get<std::string>();

  fs::create_directories(out);
  std::vector<fedtangle::RoundMetricsRow> summary;
  for (const json& value : doc.at("axis").at("values")) {
    json patched = doc.at("base");
    patched[section][key] = value;
    const fedtangle::ExperimentConfig cfg = fedtangle::parse_config(patched);
    const fs::path run_dir =
        out / (key + "_" + std::to_string(value.get<std::uint64_t>()));
    fs::create_directories(run_dir);
    write_json(run_dir / "config.json", fedtangle::config_to_json(cfg));

    fedtangle::MetricsWriter metrics(run_dir / "metrics.csv", cfg.seed);
    std::optional<fedtangle::RoundMetricsRow> last;
    const fedtangle::ExperimentResult res = fedtangle::run_experiment(
        cfg, [&](const fedtangle::RoundMetricsRow& row) {
          metrics.add_row(row);
          last = row;
        });
    metrics.finish();
    fedtangle::emit_events(res.events, run_dir / "events.jsonl");
    write_json(run_dir / "dag_snapshot.json", fedtangle::dag_to_json(res.dag));
    fedtangle::write_file_atomic(run_dir / "dag.dot", res.dag.to_dot());
    if (last.has_value()) summary.push_back(*last);
    std::printf("sweep %s=%s done\n", key.c_str(), value.dump().c_str());
  }
  fedtangle::emit_metrics(summary, out / "summary.csv");
  std::printf("sweep complete: %s\n", (out / "summary.csv").string().c_str());
  return 0;
}

int cmd_dag_export(const fs::path& run_dir, const std::string& format) {
  if (format != "dot") {
    fedtangle::fail(fedtangle::errc::invalid_argument,
                    "unsupported format: " + format);
  }
  const fs::path snapshot_path = run_dir / "dag_snapshot.json";
  if (!fs::exists(snapshot_path)) {
    fedtangle::fail(fedtangle::errc::io_error,
                    "no dag_snapshot.json in " + run_dir.string());
  }
  json snapshot;
  try {
    snapshot = json::parse(read_text_file(snapshot_path));
  } catch (const json::exception& e) {
    fedtangle::fail(fedtangle::errc::io_error,
                    std::string("snapshot: invalid JSON: ") + e.what());
  }
  std::fputs(fedtangle::dot_from_snapshot(snapshot).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated learning over a DAG ledger with secure aggregation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string run_dir;
  std::string format = "dot";
  std::string preset;
  std::optional<std::uint64_t> seed_override;

  CLI::App* keygen = app.add_subcommand("keygen", "generate committee keys");
  keygen->add_option("--config", config_path, "config JSON path")->required();
  keygen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "config JSON path")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seed", seed_override, "override sim.seed");

  CLI::App* sweep = app.add_subcommand("sweep", "run a preset sweep");
  sweep->add_option("--preset", preset, "preset name")
      ->required()
      ->check(CLI::IsMember({"fig3", "fig4"}));
  sweep->add_option("--out", out_dir, "output directory")->required();

  CLI::App* dag_export =
      app.add_subcommand("dag-export", "render a run's DAG");
  dag_export->add_option("--run", run_dir, "run output directory")->required();
  dag_export->add_option("--format", format, "export format");

  CLI11_PARSE(app, argc, argv);

  try {
    if (keygen->parsed()) return cmd_keygen(config_path, out_dir);
    if (run->parsed()) return cmd_run(config_path, out_dir, seed_override);
    if (sweep->parsed()) return cmd_sweep(preset, out_dir);
    if (dag_export->parsed()) return cmd_dag_export(run_dir, format);
  } catch (const fedtangle::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == fedtangle::errc::spec_error ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
