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

// Orchestration of the full protocol over simulated hospitals: the
// episode/time-slot loop with leader selection, local training, encryption,
// DAG attachment, aggregation, broadcast, dropout with committee re-keying,
// and metrics capture. Everything is deterministic under the config seed;
// reported wall time comes from a fixed per-operation cost model so repeated
// runs are byte-identical.

#ifndef FEDTANGLE_SIMNET_HPP_
#define FEDTANGLE_SIMNET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtangle/config.hpp"
#include "fedtangle/dag.hpp"
#include "fedtangle/error.hpp"
#include "fedtangle/fedlearn.hpp"
#include "fedtangle/local_model.hpp"
#include "fedtangle/rng.hpp"
#include "fedtangle/secure_agg.hpp"
#include "fedtangle/serial.hpp"

namespace fedtangle {

struct RoundMetricsRow {
  std::uint64_t episode = 0;
  std::uint64_t round = 0;
  std::uint32_t hospitals = 0;
  std::uint64_t grads_per_hospital = 0;
  double global_accuracy = 0.0;
  double global_loss = 0.0;
  double wall_time_ms = 0.0;
  std::uint64_t confirmed_tx = 0;
};

struct EventRecord {
  std::uint64_t ts = 0;
  std::uint64_t round = 0;
  std::string actor;
  std::string event;
  std::string detail;
};

struct MessageRecord {
  std::uint64_t round = 0;
  std::string from;
  std::string to;
  std::string kind;
  std::vector<std::uint8_t> payload;
};

// One hospital's true update in one round, kept for the privacy audit: the
// real-valued vector it aggregates and its quantized integer image.
struct GradientTrace {
  std::uint64_t round = 0;
  std::uint32_t hospital = 0;
  std::vector<double> real;
  std::vector<std::int64_t> quantized;
};

struct ExperimentResult {
  std::vector<RoundMetricsRow> metrics;
  ModelWeights final_weights;
  DagState dag;
  std::vector<EventRecord> events;
  std::vector<MessageRecord> messages;
  std::vector<ModelWeights> round_models;  // model after each emitted row
  std::vector<GradientTrace> gradient_traces;
};

struct ControlResult {
  std::vector<RoundMetricsRow> metrics;
  ModelWeights final_weights;
  std::vector<ModelWeights> round_models;
};

// ---------------------------------------------------------------------------
// Deterministic wall-time model
// ---------------------------------------------------------------------------

// Fixed per-operation costs in milliseconds. Reported wall time must be
// byte-stable across runs, so it is accounted, not clocked: training scales
// with gradient count, batch size and model dimension; the crypto terms with
// the ring sizes. Strictly increasing in gradients-per-hospital.
inline double slot_cost_ms(std::uint32_t n_active,
                           std::uint64_t grads_per_hospital,
                           std::uint32_t batch_size, std::size_t model_dim,
                           const CryptoParams& cp, std::size_t n_chunks) {
  const double n = static_cast<double>(n_active);
  const double d = static_cast<double>(cp.internal_ring.degree);
  const double d_ext = static_cast<double>(cp.external_ring.degree);
  const double chunks = static_cast<double>(n_chunks);
  const double train = n * static_cast<double>(grads_per_hospital) *
                       static_cast<double>(batch_size) *
                       static_cast<double>(model_dim) * 1e-4;
  const double encrypt = n * chunks * 3.0 * d * std::log2(d) * 2e-5;
  const double wrap = n * chunks * d_ext * 1e-5;
  const double attach = n * 0.25;
  const double aggregate = chunks * (n * d_ext * 1e-5 + d * 5e-4);
  return train + encrypt + wrap + attach + aggregate;
}

namespace detail {

struct TrainOutcome {
  ModelWeights weights;
  std::vector<double> update;  // alpha * credibility * (theta - weights)
};

// One hospital's slot: mini-batch training from the current global model,
// then the credibility-weighted update it contributes to the aggregate.
// Streams derive from the round stream only, so the encrypted run and the
// plaintext control train identically.
inline TrainOutcome hospital_round(const ModelWeights& theta,
                                   const SyntheticDataset& ds, double alpha,
                                   double credibility,
                                   const ExperimentConfig& cfg,
                                   const RngStream& round_rng,
                                   std::uint32_t hospital) {
  RngStream train_rng = round_rng.derive("train", hospital);
  const TrainResult tr =
      train_local(theta, ds, cfg.eta, cfg.grads_per_hospital, train_rng,
                  cfg.classes, cfg.batch_size);
  TrainOutcome out;
  out.update.resize(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    out.update[j] = alpha * credibility * (theta[j] - tr.weights[j]);
  }
  out.weights = tr.weights;
  return out;
}

inline std::vector<SyntheticDataset> make_hospital_data(
    const ExperimentConfig& cfg, const RngStream& master) {
  SyntheticSpec spec;
  spec.classes = cfg.classes;
  spec.features = cfg.features;
  spec.samples = cfg.samples_per_hospital;
  spec.separation = cfg.separation;
  spec.stddev = cfg.stddev;
  std::vector<SyntheticDataset> out;
  out.reserve(cfg.hospitals);
  for (std::uint32_t i = 0; i < cfg.hospitals; ++i) {
    out.push_back(gen_synthetic(spec, master.derive("data", i).state()));
  }
  return out;
}

inline SyntheticDataset make_eval_data(const ExperimentConfig& cfg,
                                       const RngStream& master) {
  SyntheticSpec spec;
  spec.classes = cfg.classes;
  spec.features = cfg.features;
  spec.samples = cfg.samples_per_hospital;
  spec.separation = cfg.separation;
  spec.stddev = cfg.stddev;
  return gen_synthetic(spec, master.derive("eval").state());
}

// Hospitals scheduled to leave at `round` are removed; reports whether the
// committee changed.
inline bool apply_dropout(const ExperimentConfig& cfg, std::uint64_t round,
                          std::vector<std::uint32_t>& active,
                          std::vector<std::uint32_t>& dropped_out) {
  dropped_out.clear();
  for (const auto& [at_round, hospital] : cfg.dropout) {
    if (at_round != round) continue;
    auto it = std::find(active.begin(), active.end(), hospital);
    if (it != active.end()) {
      active.erase(it);
      dropped_out.push_back(hospital);
    }
  }
  return !dropped_out.empty();
}

inline double mean_local_loss(const ModelWeights& theta,
                              const std::vector<SyntheticDataset>& data,
                              const std::vector<std::uint32_t>& active,
                              std::uint32_t classes) {
  std::vector<double> losses;
  std::vector<double> sizes;
  for (std::uint32_t i : active) {
    losses.push_back(loss_and_grad(theta, data[i], classes).loss);
    sizes.push_back(static_cast<double>(data[i].size()));
  }
  return global_loss(losses, sizes);
}

inline std::vector<std::uint8_t> doubles_to_bytes(
    const std::vector<double>& v) {
  ByteWriter w;
  for (double x : v) w.f64(x);
  return w.bytes();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Encrypted experiment
// ---------------------------------------------------------------------------

inline ExperimentResult run_experiment(
    const ExperimentConfig& cfg,
    const std::function<void(const RoundMetricsRow&)>& on_row = {}) {
  const CryptoParams cp =
      make_crypto_params_with_floors(cfg.degree, cfg.q, cfg.sigma,
                                     cfg.gadget_base, cfg.p_floor,
                                     cfg.p0_floor);
  QuantParams qp;
  qp.scale = cfg.scale;
  qp.clip = cfg.clip;
  qp.max_parties = cfg.max_parties;
  validate_quant_params(qp, cp.q);
  require(cfg.hospitals >= 1 && cfg.hospitals <= qp.max_parties,
          errc::param_error, "hospital count violates the party bound");

  const RngStream master(cfg.seed);
  const std::vector<SyntheticDataset> data =
      detail::make_hospital_data(cfg, master);
  const SyntheticDataset eval = detail::make_eval_data(cfg, master);

  const std::size_t dim = model_dimension(cfg.classes, cfg.features);
  const std::uint32_t d = cp.internal_ring.degree;
  const std::size_t n_chunks = (dim + d - 1) / d;

  ModelWeights theta(dim, 0.0);
  const std::uint64_t genesis_digest =
      fnv1a64(theta.data(), theta.size() * sizeof(double));

  ExperimentResult res{
      {}, {},
      DagState(genesis_digest, cfg.rho, cfg.theta, cfg.clamp_cw,
               cfg.validation_tolerance),
      {}, {}, {}, {}};
  DagState& dag = res.dag;

  // The validator re-measures a claimed accuracy against the shared public
  // benchmark split, looking the issuer's model up in the registry that
  // attachment fills in. The genesis anchor is trusted setup.
  std::map<std::uint64_t, ModelWeights> registry;
  const DagState::Validator validator = [&](const Transaction& tx) -> double {
    if (tx.id == dag.genesis_id()) return tx.acc;
    auto it = registry.find(tx.id);
    require(it != registry.end(), errc::validation_failed,
            "no model recorded for transaction");
    return evaluate_accuracy(it->second, eval, cfg.classes);
  };

  std::uint64_t ts = 0;
  const auto log_event = [&](std::uint64_t round, std::string actor,
                             std::string event, std::string detail) {
    res.events.push_back(EventRecord{ts++, round, std::move(actor),
                                     std::move(event), std::move(detail)});
  };

  std::vector<std::uint32_t> active(cfg.hospitals);
  for (std::uint32_t i = 0; i < cfg.hospitals; ++i) active[i] = i;

  std::optional<KeyMaterial> km;
  std::optional<CryptoContext> ctx;
  std::uint64_t rekey_counter = 0;
  const auto rekey = [&](std::uint64_t round) {
    RngStream keys_rng = master.derive("keys", rekey_counter++);
    km = setup(static_cast<std::uint32_t>(active.size()), cp, keys_rng);
    ctx.emplace(*km);
    log_event(round, "sim", "rekey",
              "parties=" + std::to_string(active.size()));
  };
  rekey(0);

  const std::uint64_t total_data =
      static_cast<std::uint64_t>(cfg.hospitals) * cfg.samples_per_hospital;

  std::vector<double> slot_costs;
  std::size_t confirmed_seen = 0;
  std::uint64_t global_round = 0;
  bool halted = false;

  for (std::uint32_t episode = 0; episode < cfg.episodes && !halted;
       ++episode) {
    std::vector<std::pair<double, ModelWeights>> slot_models;

    for (std::uint32_t slot = 0; slot < cfg.slots_per_episode; ++slot) {
      std::vector<std::uint32_t> dropped;
      if (detail::apply_dropout(cfg, global_round, active, dropped)) {
        for (std::uint32_t h : dropped) {
          log_event(global_round, "sim", "dropout",
                    "hospital_" + std::to_string(h));
        }
        if (active.empty()) {
          log_event(global_round, "sim", "halt", "no hospitals left");
          halted = true;
          break;
        }
        rekey(global_round);
      }

      if (!time_budget_ok(RoundBudget{cfg.time_limits_ms, slot_costs})) {
        log_event(global_round, "sim", "skip_budget", "time budget exhausted");
        RoundMetricsRow row;
        row.episode = episode;
        row.round = global_round;
        row.hospitals = static_cast<std::uint32_t>(active.size());
        row.grads_per_hospital = cfg.grads_per_hospital;
        row.global_accuracy = evaluate_accuracy(theta, eval, cfg.classes);
        row.global_loss =
            detail::mean_local_loss(theta, data, active, cfg.classes);
        row.wall_time_ms = 0.0;
        row.confirmed_tx = confirmed_seen;
        slot_costs.push_back(0.0);
        res.metrics.push_back(row);
        res.round_models.push_back(theta);
        if (on_row) on_row(row);
        ++global_round;
        continue;
      }

      const std::uint32_t leader = active[episode % active.size()];
      const RngStream round_rng = master.derive("round", global_round);
      const double alpha = 1.0 / static_cast<double>(active.size());

      std::vector<std::vector<ExternalShare>> chunk_shares(n_chunks);
      for (std::uint32_t idx = 0; idx < active.size(); ++idx) {
        const std::uint32_t i = active[idx];
        const detail::TrainOutcome to = detail::hospital_round(
            theta, data[i], alpha, cfg.credibility, cfg, round_rng, i);
        log_event(global_round, "hospital_" + std::to_string(i), "train",
                  "grads=" + std::to_string(cfg.grads_per_hospital));

        const std::vector<std::int64_t> qv = quantize(to.update, qp);
        res.gradient_traces.push_back(
            GradientTrace{global_round, i, to.update, qv});

        RngStream enc_rng = round_rng.derive("encrypt", i);
        std::uint64_t payload_digest = 0xcbf29ce484222325ULL;
        for (std::size_t c = 0; c < n_chunks; ++c) {
          std::vector<std::int64_t> chunk(d, 0);
          const std::size_t begin = c * d;
          const std::size_t end = std::min(dim, begin + d);
          std::copy(qv.begin() + begin, qv.begin() + end, chunk.begin());
          const InternalCiphertext ct = ctx->encrypt_internal(chunk, enc_rng);
          const ExternalShare share = ctx->gadget_wrap(ct, idx, enc_rng);
          const std::vector<std::uint8_t> bytes = serialize_share(cp, share);
          payload_digest = fnv1a64(bytes.data(), bytes.size(), payload_digest);
          res.messages.push_back(MessageRecord{
              global_round, "hospital_" + std::to_string(i), "ledger",
              "share", bytes});
          chunk_shares[c].push_back(share);
        }

        Transaction tx;
        RngStream tip_rng = round_rng.derive("tips", i);
        const auto [t1, t2] = dag.tip_select(
            WalkParams{2, cfg.walk_start_depth, cfg.walk_max_steps}, tip_rng);
        tx.parents[0] = t1;
        tx.parents[1] = t2;
        tx.issuer = i;
        tx.payload_digest = payload_digest;
        tx.dataset_size = data[i].size();
        tx.slots = 1;
        tx.acc = evaluate_accuracy(to.weights, eval, cfg.classes);
        double approved_data = static_cast<double>(dag.get(t1).dataset_size);
        if (t2 != t1) approved_data += static_cast<double>(dag.get(t2).dataset_size);
        tx.own_w = own_weight(static_cast<double>(data[i].size()), cfg.rho,
                              approved_data, static_cast<double>(total_data),
                              1.0, tx.acc);
        tx.timestamp = global_round;
        tx.id = transaction_id(tx);
        dag.attach_transaction(tx, validator);
        registry[tx.id] = to.weights;
        {
          ByteWriter w;
          w.u64(tx.id);
          w.u64(tx.parents[0]);
          w.u64(tx.parents[1]);
          w.u32(tx.issuer);
          w.u64(tx.payload_digest);
          w.u64(tx.dataset_size);
          w.u64(tx.slots);
          w.f64(tx.acc);
          w.f64(tx.own_w);
          w.u64(tx.timestamp);
          res.messages.push_back(MessageRecord{global_round,
                                               "hospital_" + std::to_string(i),
                                               "ledger", "transaction",
                                               w.bytes()});
        }
        log_event(global_round, "hospital_" + std::to_string(i), "attach",
                  "tx=" + id_hex(tx.id) + " parents=" + id_hex(t1) + "," +
                      id_hex(t2));
      }

      // Leader-side aggregation: fold the shares, switch down, decrypt the
      // sum, and take one global step.
      std::vector<std::int64_t> summed(dim, 0);
      for (std::size_t c = 0; c < n_chunks; ++c) {
        const InternalCiphertext agg =
            ctx->aggregate_and_unwrap(chunk_shares[c]);
        const InternalCiphertext switched = ctx->modulus_switch(agg);
        const std::vector<std::int64_t> ints = ctx->decrypt_sum(switched);
        const std::size_t begin = c * d;
        const std::size_t end = std::min(dim, begin + d);
        std::copy(ints.begin(), ints.begin() + (end - begin),
                  summed.begin() + begin);
      }
      const std::vector<double> aggregated_sum = dequantize(summed, qp);
      const double weight_total = cfg.credibility;  // sum of alpha_k * l_k
      std::vector<double> folded(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        folded[j] = aggregated_sum[j] / (cfg.eta * weight_total);
      }
      const AggregationResult ar = aggregate_global(
          {AggregationEntry{folded, 1.0, 1.0}}, theta, cfg.eta);
      log_event(global_round, "leader_" + std::to_string(leader), "aggregate",
                "chunks=" + std::to_string(n_chunks));

      theta = ar.new_weights;
      slot_models.emplace_back(1.0, theta);
      res.messages.push_back(MessageRecord{
          global_round, "leader_" + std::to_string(leader), "all",
          "model_broadcast", detail::doubles_to_bytes(theta)});
      log_event(global_round, "leader_" + std::to_string(leader), "broadcast",
                "round=" + std::to_string(global_round));

      const std::vector<std::uint64_t> confirmed = dag.confirm_transactions();
      if (confirmed.size() > confirmed_seen) {
        log_event(global_round, "ledger", "confirm",
                  "total=" + std::to_string(confirmed.size()));
        confirmed_seen = confirmed.size();
      }

      const double cost =
          slot_cost_ms(static_cast<std::uint32_t>(active.size()),
                       cfg.grads_per_hospital, cfg.batch_size, dim, cp,
                       n_chunks);
      slot_costs.push_back(cost);

      RoundMetricsRow row;
      row.episode = episode;
      row.round = global_round;
      row.hospitals = static_cast<std::uint32_t>(active.size());
      row.grads_per_hospital = cfg.grads_per_hospital;
      row.global_accuracy = evaluate_accuracy(theta, eval, cfg.classes);
      row.global_loss =
          detail::mean_local_loss(theta, data, active, cfg.classes);
      row.wall_time_ms = cost;
      row.confirmed_tx = confirmed_seen;
      res.metrics.push_back(row);
      res.round_models.push_back(theta);
      if (on_row) on_row(row);
      ++global_round;
    }

    if (!slot_models.empty()) {
      theta = weighted_average(slot_models);
    }
  }

  res.final_weights = theta;
  return res;
}

// ---------------------------------------------------------------------------
// Plaintext control (FedAvg without crypto or ledger)
// ---------------------------------------------------------------------------

// Mirrors run_experiment exactly: same data, same training streams, same
// dropout, budget gating and episode averaging. The only difference is that
// updates are summed as real numbers instead of going through quantization,
// encryption and the DAG, which makes it the oracle for the equivalence
// property.
inline ControlResult run_plaintext_control(const ExperimentConfig& cfg) {
  const CryptoParams cp =
      make_crypto_params_with_floors(cfg.degree, cfg.q, cfg.sigma,
                                     cfg.gadget_base, cfg.p_floor,
                                     cfg.p0_floor);
  const RngStream master(cfg.seed);
  const std::vector<SyntheticDataset> data =
      detail::make_hospital_data(cfg, master);
  const SyntheticDataset eval = detail::make_eval_data(cfg, master);

  const std::size_t dim = model_dimension(cfg.classes, cfg.features);
  const std::size_t n_chunks = (dim + cp.internal_ring.degree - 1) /
                               cp.internal_ring.degree;

  ModelWeights theta(dim, 0.0);
  ControlResult res;

  std::vector<std::uint32_t> active(cfg.hospitals);
  for (std::uint32_t i = 0; i < cfg.hospitals; ++i) active[i] = i;

  std::vector<double> slot_costs;
  std::uint64_t global_round = 0;
  bool halted = false;

  for (std::uint32_t episode = 0; episode < cfg.episodes && !halted;
       ++episode) {
    std::vector<std::pair<double, ModelWeights>> slot_models;

    for (std::uint32_t slot = 0; slot < cfg.slots_per_episode; ++slot) {
      std::vector<std::uint32_t> dropped;
      if (detail::apply_dropout(cfg, global_round, active, dropped) &&
          active.empty()) {
        halted = true;
        break;
      }

      if (!time_budget_ok(RoundBudget{cfg.time_limits_ms, slot_costs})) {
        slot_costs.push_back(0.0);
        RoundMetricsRow row;
        row.episode = episode;
        row.round = global_round;
        row.hospitals = static_cast<std::uint32_t>(active.size());
        row.grads_per_hospital = cfg.grads_per_hospital;
        row.global_accuracy = evaluate_accuracy(theta, eval, cfg.classes);
        row.global_loss =
            detail::mean_local_loss(theta, data, active, cfg.classes);
        row.wall_time_ms = 0.0;
        row.confirmed_tx = 0;
        res.metrics.push_back(row);
        res.round_models.push_back(theta);
        ++global_round;
        continue;
      }

      const RngStream round_rng = master.derive("round", global_round);
      const double alpha = 1.0 / static_cast<double>(active.size());

      std::vector<double> summed(dim, 0.0);
      for (std::uint32_t i : active) {
        const detail::TrainOutcome to = detail::hospital_round(
            theta, data[i], alpha, cfg.credibility, cfg, round_rng, i);
        for (std::size_t j = 0; j < dim; ++j) summed[j] += to.update[j];
      }

      const double weight_total = cfg.credibility;
      std::vector<double> folded(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        folded[j] = summed[j] / (cfg.eta * weight_total);
      }
      const AggregationResult ar = aggregate_global(
          {AggregationEntry{folded, 1.0, 1.0}}, theta, cfg.eta);
      theta = ar.new_weights;
      slot_models.emplace_back(1.0, theta);

      const double cost =
          slot_cost_ms(static_cast<std::uint32_t>(active.size()),
                       cfg.grads_per_hospital, cfg.batch_size, dim, cp,
                       n_chunks);
      slot_costs.push_back(cost);

      RoundMetricsRow row;
      row.episode = episode;
      row.round = global_round;
      row.hospitals = static_cast<std::uint32_t>(active.size());
      row.grads_per_hospital = cfg.grads_per_hospital;
      row.global_accuracy = evaluate_accuracy(theta, eval, cfg.classes);
      row.global_loss =
          detail::mean_local_loss(theta, data, active, cfg.classes);
      row.wall_time_ms = cost;
      row.confirmed_tx = 0;
      res.metrics.push_back(row);
      res.round_models.push_back(theta);
      ++global_round;
    }

    if (!slot_models.empty()) {
      theta = weighted_average(slot_models);
    }
  }

  res.final_weights = theta;
  return res;
}

// ---------------------------------------------------------------------------
// Metrics and event-log emission
// ---------------------------------------------------------------------------

inline const char* metrics_header() {
  return "episode,round,hospitals,grads_per_hospital,global_accuracy,"
         "global_loss,wall_time_ms,confirmed_tx";
}

inline std::string format_metrics_row(const RoundMetricsRow& r) {
  char buf[224];
  std::snprintf(buf, sizeof(buf), "%llu,%llu,%u,%llu,%.6f,%.6f,%.3f,%llu",
                static_cast<unsigned long long>(r.episode),
                static_cast<unsigned long long>(r.round), r.hospitals,
                static_cast<unsigned long long>(r.grads_per_hospital),
                r.global_accuracy, r.global_loss, r.wall_time_ms,
                static_cast<unsigned long long>(r.confirmed_tx));
  return std::string(buf);
}

inline std::string format_event(const EventRecord& ev) {
  std::string out = "{\"ts\":" + std::to_string(ev.ts) +
                    ",\"round\":" + std::to_string(ev.round) + ",\"actor\":\"" +
                    ev.actor + "\",\"event\":\"" + ev.event +
                    "\",\"detail\":\"" + ev.detail + "\"}";
  return out;
}

// Streams rows to "<path>.partial" with a flush per row, renaming into place
// only on finish(), so an aborted run keeps its prefix under the partial
// name and never a truncated file under the final one.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path,
                std::optional<std::uint64_t> seed_comment)
      : final_path_(path), tmp_path_(path.string() + ".partial") {
    file_ = std::fopen(tmp_path_.string().c_str(), "wb");
    require(file_ != nullptr, errc::io_error,
            "cannot open for writing: " + tmp_path_.string());
    if (seed_comment.has_value()) {
      std::fprintf(file_, "# seed=%llu\n",
                   static_cast<unsigned long long>(*seed_comment));
    }
    std::fprintf(file_, "%s\n", metrics_header());
    std::fflush(file_);
  }

  ~MetricsWriter() {
    if (file_ != nullptr) std::fclose(file_);
  }

  MetricsWriter(const MetricsWriter&) = delete;
  MetricsWriter& operator=(const MetricsWriter&) = delete;

  void add_row(const RoundMetricsRow& row) {
    require(file_ != nullptr, errc::io_error, "writer already finished");
    std::fprintf(file_, "%s\n", format_metrics_row(row).c_str());
    std::fflush(file_);
  }

  void finish() {
    require(file_ != nullptr, errc::io_error, "writer already finished");
    const int closed = std::fclose(file_);
    file_ = nullptr;
    require(closed == 0, errc::io_error, "close failed: " + tmp_path_.string());
    std::error_code ec;
    std::filesystem::rename(tmp_path_, final_path_, ec);
    require(!ec, errc::io_error,
            "cannot rename into place: " + final_path_.string());
  }

 private:
  std::filesystem::path final_path_;
  std::filesystem::path tmp_path_;
  std::FILE* file_ = nullptr;
};

inline void emit_metrics(const std::vector<RoundMetricsRow>& rows,
                         const std::filesystem::path& path,
                         std::optional<std::uint64_t> seed_comment = {}) {
  MetricsWriter w(path, seed_comment);
  for (const RoundMetricsRow& r : rows) w.add_row(r);
  w.finish();
}

inline void emit_events(const std::vector<EventRecord>& events,
                        const std::filesystem::path& path) {
  std::string out;
  for (const EventRecord& ev : events) {
    out += format_event(ev);
    out += '\n';
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// DAG snapshot
// ---------------------------------------------------------------------------

inline nlohmann::json dag_to_json(const DagState& dag) {
  nlohmann::json txs = nlohmann::json::array();
  for (std::uint64_t id : dag.order()) {
    const Transaction& tx = dag.get(id);
    nlohmann::json parents = nlohmann::json::array();
    for (std::uint64_t p : tx.parents) {
      if (p != 0) parents.push_back(id_hex(p));
    }
    txs.push_back({{"id", id_hex(id)},
                   {"parents", parents},
                   {"issuer", tx.issuer},
                   {"dataset_size", tx.dataset_size},
                   {"slots", tx.slots},
                   {"acc", tx.acc},
                   {"own_weight", tx.own_w},
                   {"cumulative_weight", dag.cumulative_weight_of(id)},
                   {"confirmed", dag.confirmed().count(id) != 0},
                   {"timestamp", tx.timestamp}});
  }
  nlohmann::json tips = nlohmann::json::array();
  for (std::uint64_t t : dag.tips()) tips.push_back(id_hex(t));
  return nlohmann::json{{"transactions", txs}, {"tips", tips}};
}

// Rebuilds a DOT rendering from a snapshot without recomputing weights.
inline std::string dot_from_snapshot(const nlohmann::json& snapshot) {
  require(snapshot.contains("transactions") &&
              snapshot.at("transactions").is_array(),
          errc::io_error, "snapshot has no transaction list");
  std::string out = "digraph tangle {\n  rankdir=RL;\n";
  char buf[160];
  for (const nlohmann::json& tx : snapshot.at("transactions")) {
    const std::string id = tx.at("id").get<std::string>();
    std::snprintf(buf, sizeof(buf),
                  "  \"%s\" [label=\"%s\\nW=%.4f\\nCW=%.4f\"];\n", id.c_str(),
                  id.c_str(), tx.at("own_weight").get<double>(),
                  tx.at("cumulative_weight").get<double>());
    out += buf;
  }
  for (const nlohmann::json& tx : snapshot.at("transactions")) {
    const std::string id = tx.at("id").get<std::string>();
    for (const nlohmann::json& p : tx.at("parents")) {
      std::snprintf(buf, sizeof(buf), "  \"%s\" -> \"%s\";\n", id.c_str(),
                    p.get<std::string>().c_str());
      out += buf;
    }
  }
  out += "}\n";
  return out;
}

// ---------------------------------------------------------------------------
// Privacy audit
// ---------------------------------------------------------------------------

namespace audit {

// u64 little-endian stream starting at byte offset `align`.
inline std::vector<std::uint64_t> extract_u64s(
    const std::vector<std::uint8_t>& payload, std::size_t align) {
  std::vector<std::uint64_t> out;
  for (std::size_t pos = align; pos + 8 <= payload.size(); pos += 8) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) {
      v |= std::uint64_t(payload[pos + b]) << (8 * b);
    }
    out.push_back(v);
  }
  return out;
}

inline double centered(std::uint64_t v, std::uint64_t modulus) {
  const std::uint64_t r = v % modulus;
  return r > modulus / 2
             ? -static_cast<double>(modulus - r)
             : static_cast<double>(r);
}

// True if some contiguous window of the stream, read under the given
// interpretation, equals c * needle for a single scalar c (c = 1 for the
// exact scan). Interpretations: raw two's complement and centered residues
// mod each given modulus.
inline bool stream_matches(const std::vector<std::uint64_t>& stream,
                           const std::vector<double>& needle,
                           const std::vector<std::uint64_t>& moduli,
                           bool exact_only) {
  const std::size_t n = needle.size();
  if (n == 0 || stream.size() < n) return false;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(needle[i]) > std::fabs(needle[peak])) peak = i;
  }
  if (std::fabs(needle[peak]) < 1e-12) return false;  // nothing to leak

  std::vector<std::vector<double>> views;
  {
    std::vector<double> raw(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
      raw[i] = static_cast<double>(static_cast<std::int64_t>(stream[i]));
    }
    views.push_back(std::move(raw));
  }
  for (std::uint64_t m : moduli) {
    std::vector<double> v(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
      v[i] = centered(stream[i], m);
    }
    views.push_back(std::move(v));
  }

  for (const std::vector<double>& view : views) {
    for (std::size_t start = 0; start + n <= view.size(); ++start) {
      const double c = exact_only ? 1.0 : view[start + peak] / needle[peak];
      if (!std::isfinite(c) || std::fabs(c) < 1e-12) continue;
      bool all = true;
      for (std::size_t i = 0; i < n; ++i) {
        const double want = c * needle[i];
        const double tol = 1e-6 * std::max(1.0, std::fabs(want));
        if (std::fabs(view[start + i] - want) > tol) {
          all = false;
          break;
        }
      }
      if (all) return true;
    }
  }
  return false;
}

// Doubles reinterpreted from the byte stream at offset `align`.
inline std::vector<double> extract_doubles(
    const std::vector<std::uint8_t>& payload, std::size_t align) {
  const std::vector<std::uint64_t> raw = extract_u64s(payload, align);
  std::vector<double> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size() * sizeof(double));
  return out;
}

inline bool doubles_match(const std::vector<double>& stream,
                          const std::vector<double>& needle,
                          bool exact_only) {
  const std::size_t n = needle.size();
  if (n == 0 || stream.size() < n) return false;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(needle[i]) > std::fabs(needle[peak])) peak = i;
  }
  if (std::fabs(needle[peak]) < 1e-12) return false;

  for (std::size_t start = 0; start + n <= stream.size(); ++start) {
    const double anchor = stream[start + peak];
    if (!std::isfinite(anchor)) continue;
    const double c = exact_only ? 1.0 : anchor / needle[peak];
    if (!std::isfinite(c) || std::fabs(c) < 1e-12) continue;
    bool all = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = stream[start + i];
      if (!std::isfinite(v)) {
        all = false;
        break;
      }
      const double want = c * needle[i];
      const double tol = 1e-6 * std::max(1.0, std::fabs(want));
      if (std::fabs(v - want) > tol) {
        all = false;
        break;
      }
    }
    if (all) return true;
  }
  return false;
}

// Scans one payload for a gradient under every alignment and reading:
// quantized integers (raw and centered mod each modulus) and IEEE doubles.
inline bool payload_leaks_gradient(const std::vector<std::uint8_t>& payload,
                                   const GradientTrace& trace,
                                   const std::vector<std::uint64_t>& moduli,
                                   bool exact_only) {
  std::vector<double> quantized(trace.quantized.size());
  for (std::size_t i = 0; i < quantized.size(); ++i) {
    quantized[i] = static_cast<double>(trace.quantized[i]);
  }
  for (std::size_t align = 0; align < 8; ++align) {
    const std::vector<std::uint64_t> stream = extract_u64s(payload, align);
    if (stream_matches(stream, quantized, moduli, exact_only)) return true;
    const std::vector<double> dstream = extract_doubles(payload, align);
    if (doubles_match(dstream, trace.real, exact_only)) return true;
    if (doubles_match(dstream, quantized, exact_only)) return true;
  }
  return false;
}

struct AuditReport {
  std::size_t messages_scanned = 0;
  std::size_t gradients_checked = 0;
  std::size_t exact_hits = 0;
  std::size_t scaled_hits = 0;

  bool clean() const { return exact_hits == 0 && scaled_hits == 0; }
};

// Full audit: every logged message against every hospital's true gradient
// from every round. A hospital's own aggregate row never leaves its process
// in the clear, so any hit is a protocol violation.
inline AuditReport audit_message_log(const ExperimentResult& res,
                                     const std::vector<std::uint64_t>& moduli) {
  AuditReport report;
  report.messages_scanned = res.messages.size();
  report.gradients_checked = res.gradient_traces.size();
  for (const GradientTrace& trace : res.gradient_traces) {
    for (const MessageRecord& msg : res.messages) {
      if (payload_leaks_gradient(msg.payload, trace, moduli, true)) {
        ++report.exact_hits;
      }
      if (payload_leaks_gradient(msg.payload, trace, moduli, false)) {
        ++report.scaled_hits;
      }
    }
  }
  return report;
}

}  // namespace audit

}  // namespace fedtangle

#endif  // FEDTANGLE_SIMNET_HPP_
