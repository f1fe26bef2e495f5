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

#ifndef FEDTANGLE_DAG_HPP_
#define FEDTANGLE_DAG_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedtangle/error.hpp"
#include "fedtangle/rng.hpp"

namespace fedtangle {

// ---------------------------------------------------------------------------
// Weight formulas
// ---------------------------------------------------------------------------

// Own weight of a transaction: data share (with the approved transactions'
// data credited at rate rho) times training slots times measured accuracy,
// clamped into [0, 1].
inline double own_weight(double d_i, double rho, double sum_d_mj,
                         double sum_d_all, double s_i, double acc) {
  require(d_i >= 0.0 && sum_d_mj >= 0.0 && sum_d_all >= 0.0 && s_i >= 0.0,
          errc::invalid_argument, "counts must be nonnegative");
  require(rho >= 0.0 && rho <= 1.0, errc::invalid_argument,
          "rho must lie in [0, 1]");
  require(acc >= 0.0 && acc <= 1.0, errc::invalid_argument,
          "accuracy must lie in [0, 1]");
  const double denom = sum_d_all + sum_d_mj;
  require(denom > 0.0, errc::degenerate_weight,
          "weight denominator is zero");
  const double w = (d_i + rho * sum_d_mj) / denom * s_i * acc;
  return std::min(1.0, std::max(0.0, w));
}

// Cumulative weight: own weight plus the mean approver contribution
// (Acc_j - W) * W(j). The literal formula can dip below the own weight when
// an approver's accuracy is poor; the clamp (on by default) keeps CW >= W so
// confirmation cannot regress.
inline double cumulative_weight(
    double own_w, const std::vector<std::pair<double, double>>& approvers,
    bool clamp_below = true) {
  if (approvers.empty()) return own_w;
  double acc = 0.0;
  for (const auto& [acc_j, w_j] : approvers) {
    acc += (acc_j - own_w) * w_j;
  }
  const double cw = own_w + acc / static_cast<double>(approvers.size());
  return clamp_below ? std::max(cw, own_w) : cw;
}

// Softmax over cumulative-weight differences. The common CW(x) shift cancels,
// so only the candidates' weights matter; subtracting the maximum keeps the
// exponentials tame.
inline std::vector<double> transition_probabilities(
    double cw_x, const std::vector<double>& candidate_cw) {
  (void)cw_x;
  require(!candidate_cw.empty(), errc::no_successors,
          "no candidate transactions to step to");
  double mx = candidate_cw[0];
  for (double v : candidate_cw) mx = std::max(mx, v);
  std::vector<double> out(candidate_cw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(candidate_cw[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// Transactions, DAG state
// ---------------------------------------------------------------------------

struct Transaction {
  std::uint64_t id = 0;
  std::uint64_t parents[2] = {0, 0};  // 0 = none (genesis only)
  std::uint32_t issuer = 0;
  std::uint64_t payload_digest = 0;
  std::uint64_t dataset_size = 0;
  std::uint64_t slots = 0;
  double acc = 0.0;       // measured accuracy claimed by the issuer
  double own_w = 0.0;
  std::uint64_t timestamp = 0;  // logical round
};

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Content hash over every identity-bearing field.
inline std::uint64_t transaction_id(const Transaction& tx) {
  std::uint64_t h = fnv1a64(&tx.parents, sizeof(tx.parents));
  h = fnv1a64(&tx.issuer, sizeof(tx.issuer), h);
  h = fnv1a64(&tx.payload_digest, sizeof(tx.payload_digest), h);
  h = fnv1a64(&tx.dataset_size, sizeof(tx.dataset_size), h);
  h = fnv1a64(&tx.slots, sizeof(tx.slots), h);
  h = fnv1a64(&tx.acc, sizeof(tx.acc), h);
  h = fnv1a64(&tx.timestamp, sizeof(tx.timestamp), h);
  return h == 0 ? 1 : h;  // 0 is the "no parent" sentinel
}

inline std::string id_hex(std::uint64_t id) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(id));
  return std::string(buf);
}

struct WalkParams {
  std::uint32_t walkers = 2;
  std::uint32_t start_depth = 10;
  std::uint64_t max_steps = 0;  // 0: auto, 10 * |DAG|
};

struct DagEvent {
  std::uint64_t sequence = 0;
  std::uint64_t round = 0;
  std::string kind;    // "attach" or "confirm"
  std::uint64_t tx_id = 0;
  std::uint32_t issuer = 0;
};

// Append-only DAG with exactly-two-parent attachment. Transactions are kept
// in insertion order (which is a topological order, since parents must exist
// at attach time); tips and confirmations are tracked in ordered sets so
// every traversal and export is deterministic.
class DagState {
 public:
  using Validator = std::function<double(const Transaction&)>;

  DagState(std::uint64_t genesis_payload_digest, double rho, double theta,
           bool clamp_cw = true, double validation_tolerance = 0.05)
      : rho_(rho), theta_(theta), clamp_cw_(clamp_cw),
        tolerance_(validation_tolerance) {
    Transaction genesis;
    genesis.issuer = 0;
    genesis.payload_digest = genesis_payload_digest;
    genesis.acc = 1.0;
    genesis.own_w = 1.0;
    genesis.timestamp = 0;
    genesis.id = transaction_id(genesis);
    genesis_id_ = genesis.id;
    insert(genesis);
  }

  std::uint64_t genesis_id() const { return genesis_id_; }
  double rho() const { return rho_; }
  double theta() const { return theta_; }
  std::size_t size() const { return order_.size(); }
  const std::vector<std::uint64_t>& order() const { return order_; }
  const std::set<std::uint64_t>& tips() const { return tips_; }
  const std::vector<DagEvent>& events() const { return events_; }

  bool contains(std::uint64_t id) const { return txs_.count(id) != 0; }

  const Transaction& get(std::uint64_t id) const {
    auto it = txs_.find(id);
    require(it != txs_.end(), errc::orphan_parent, "unknown transaction id");
    return it->second;
  }

  const std::vector<std::uint64_t>& approvers(std::uint64_t id) const {
    static const std::vector<std::uint64_t> empty;
    auto it = children_.find(id);
    return it == children_.end() ? empty : it->second;
  }

  // Cumulative weight of one transaction from its direct approvers'
  // recorded accuracies and own weights.
  double cumulative_weight_of(std::uint64_t id) const {
    const Transaction& tx = get(id);
    std::vector<std::pair<double, double>> contribs;
    for (std::uint64_t child : approvers(id)) {
      const Transaction& c = get(child);
      contribs.emplace_back(c.acc, c.own_w);
    }
    return cumulative_weight(tx.own_w, contribs, clamp_cw_);
  }

  // Validates both parents by re-measuring the claimed accuracy, then
  // appends the candidate and updates the tip set.
  void attach_transaction(const Transaction& candidate,
                          const Validator& revalidate) {
    require(!contains(candidate.id), errc::duplicate_transaction,
            "transaction id already attached");
    require(candidate.id != 0, errc::invalid_argument,
            "transaction id must be nonzero");
    for (std::uint64_t parent : candidate.parents) {
      require(parent != 0 && contains(parent), errc::orphan_parent,
              "parent transaction is not in the DAG");
    }
    if (revalidate) {
      for (std::uint64_t parent : unique_parents(candidate)) {
        const Transaction& p = txs_.at(parent);
        const double measured = revalidate(p);
        require(std::fabs(measured - p.acc) <= tolerance_,
                errc::validation_failed,
                "parent accuracy claim is not reproducible");
      }
    }
    insert(candidate);
  }

  // Transactions whose cumulative weight has ever reached theta. Confirmed
  // status latches: approver churn can lower a CW below a previously crossed
  // threshold, but a confirmation, once announced, is never revoked.
  std::vector<std::uint64_t> confirm_transactions() {
    for (std::uint64_t id : order_) {
      if (confirmed_.count(id)) continue;
      if (cumulative_weight_of(id) >= theta_) {
        confirmed_.insert(id);
        const Transaction& tx = txs_.at(id);
        events_.push_back(DagEvent{next_sequence_++, tx.timestamp, "confirm",
                                   id, tx.issuer});
      }
    }
    return std::vector<std::uint64_t>(confirmed_.begin(), confirmed_.end());
  }

  const std::set<std::uint64_t>& confirmed() const { return confirmed_; }

  // One weighted walk from `start` along approval edges (old to new) until a
  // tip is reached. Steps are drawn from the softmax over the candidates'
  // cumulative weights.
  std::uint64_t walk_to_tip(std::uint64_t start, const WalkParams& wp,
                            RngStream& rng) const {
    require(contains(start), errc::orphan_parent, "walk start is unknown");
    const std::uint64_t cap =
        wp.max_steps > 0 ? wp.max_steps : 10ULL * order_.size();
    std::uint64_t current = start;
    for (std::uint64_t step = 0; step <= cap; ++step) {
      const std::vector<std::uint64_t>& next = approvers(current);
      if (next.empty()) return current;
      std::vector<double> cw(next.size());
      for (std::size_t i = 0; i < next.size(); ++i) {
        cw[i] = cumulative_weight_of(next[i]);
      }
      const std::vector<double> probs =
          transition_probabilities(cumulative_weight_of(current), cw);
      double draw = rng.next_double();
      std::size_t pick = probs.size() - 1;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        draw -= probs[i];
        if (draw < 0.0) {
          pick = i;
          break;
        }
      }
      current = next[pick];
    }
    fail(errc::walk_timeout, "walk exceeded the step budget");
  }

  // Two tips for a new transaction: wp.walkers independent weighted walks
  // from a point start_depth behind a random tip. If every walk lands on the
  // same tip while others exist, the second walk is retried, then the
  // smallest other tip is taken so the pair is distinct whenever possible.
  std::pair<std::uint64_t, std::uint64_t> tip_select(const WalkParams& wp,
                                                     RngStream& rng) const {
    require(wp.walkers >= 1, errc::invalid_argument,
            "need at least one walker");
    require(!order_.empty(), errc::invalid_argument, "DAG is empty");
    const std::uint64_t start = walk_back(wp.start_depth, rng);

    std::vector<std::uint64_t> landed;
    for (std::uint32_t i = 0; i < std::max(wp.walkers, 2u); ++i) {
      landed.push_back(walk_to_tip(start, wp, rng));
    }
    std::uint64_t first = landed[0];
    for (std::uint64_t t : landed) {
      if (t != first) return {first, t};
    }
    if (tips_.size() <= 1) return {first, first};
    for (int retry = 0; retry < 16; ++retry) {
      const std::uint64_t other = walk_to_tip(start, wp, rng);
      if (other != first) return {first, other};
    }
    for (std::uint64_t t : tips_) {
      if (t != first) return {first, t};
    }
    return {first, first};
  }

  // DOT rendering: one node per transaction labeled with id, own weight and
  // cumulative weight; one edge per approval, child -> parent.
  std::string to_dot() const {
    std::string out = "digraph tangle {\n  rankdir=RL;\n";
    char buf[160];
    for (std::uint64_t id : order_) {
      const Transaction& tx = txs_.at(id);
      std::snprintf(buf, sizeof(buf),
                    "  \"%s\" [label=\"%s\\nW=%.4f\\nCW=%.4f\"];\n",
                    id_hex(id).c_str(), id_hex(id).c_str(), tx.own_w,
                    cumulative_weight_of(id));
      out += buf;
    }
    for (std::uint64_t id : order_) {
      const Transaction& tx = txs_.at(id);
      for (std::uint64_t parent : tx.parents) {
        if (parent == 0) continue;
        std::snprintf(buf, sizeof(buf), "  \"%s\" -> \"%s\";\n",
                      id_hex(id).c_str(), id_hex(parent).c_str());
        out += buf;
      }
    }
    out += "}\n";
    return out;
  }

  // Attach/confirm stream as line-delimited JSON.
  std::string events_to_jsonl() const {
    std::string out;
    char buf[224];
    for (const DagEvent& ev : events_) {
      std::snprintf(buf, sizeof(buf),
                    "{\"ts\":%llu,\"round\":%llu,\"actor\":%u,\"event\":"
                    "\"%s\",\"detail\":\"%s\"}\n",
                    static_cast<unsigned long long>(ev.sequence),
                    static_cast<unsigned long long>(ev.round), ev.issuer,
                    ev.kind.c_str(), id_hex(ev.tx_id).c_str());
      out += buf;
    }
    return out;
  }

 private:
  std::vector<std::uint64_t> unique_parents(const Transaction& tx) const {
    std::vector<std::uint64_t> out{tx.parents[0]};
    if (tx.parents[1] != tx.parents[0]) out.push_back(tx.parents[1]);
    return out;
  }

  std::uint64_t walk_back(std::uint32_t depth, RngStream& rng) const {
    std::vector<std::uint64_t> tip_list(tips_.begin(), tips_.end());
    std::uint64_t current =
        tip_list[rng.next_below(tip_list.size())];
    for (std::uint32_t i = 0; i < depth; ++i) {
      const Transaction& tx = txs_.at(current);
      if (tx.parents[0] == 0) break;
      const std::vector<std::uint64_t> parents = unique_parents(tx);
      current = parents[rng.next_below(parents.size())];
    }
    return current;
  }

  void insert(const Transaction& tx) {
    txs_[tx.id] = tx;
    order_.push_back(tx.id);
    tips_.insert(tx.id);
    for (std::uint64_t parent : unique_parents(tx)) {
      if (parent == 0) continue;
      children_[parent].push_back(tx.id);
      tips_.erase(parent);
    }
    events_.push_back(
        DagEvent{next_sequence_++, tx.timestamp, "attach", tx.id, tx.issuer});
  }

  double rho_;
  double theta_;
  bool clamp_cw_;
  double tolerance_;
  std::uint64_t genesis_id_ = 0;
  std::map<std::uint64_t, Transaction> txs_;
  std::map<std::uint64_t, std::vector<std::uint64_t>> children_;
  std::vector<std::uint64_t> order_;
  std::set<std::uint64_t> tips_;
  std::set<std::uint64_t> confirmed_;
  std::vector<DagEvent> events_;
  std::uint64_t next_sequence_ = 0;
};

}  // namespace fedtangle

#endif  // FEDTANGLE_DAG_HPP_
