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

#ifndef FEDTANGLE_FEDLEARN_HPP_
#define FEDTANGLE_FEDLEARN_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "fedtangle/error.hpp"

namespace fedtangle {

using ModelWeights = std::vector<double>;

struct AggregationEntry {
  std::optional<std::vector<double>> gradient;  // absent = dropped party
  double share = 1.0;                           // alpha_k
  double credibility = 1.0;                     // l_k, in [0, 1]
};

struct RoundBudget {
  std::vector<double> limits;   // per-node time budget T_i
  std::vector<double> elapsed;  // per-iteration durations recorded so far
};

struct AggregationResult {
  std::vector<double> global_gradient;
  ModelWeights new_weights;
};

inline ModelWeights sgd_step(const ModelWeights& w,
                             const std::vector<double>& grad, double eta) {
  require(w.size() == grad.size(), errc::dimension_error,
          "gradient dimension does not match the model");
  require(eta > 0.0, errc::invalid_argument,
          "learning rate must be positive");
  ModelWeights out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - eta * grad[i];
  return out;
}

// Mean per-sample loss over one participant's dataset.
template <typename SampleLossFn>
double local_loss(const ModelWeights& w, std::size_t n_samples,
                  SampleLossFn&& sample_loss) {
  require(n_samples >= 1, errc::empty_dataset, "dataset has no samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) acc += sample_loss(w, i);
  return acc / static_cast<double>(n_samples);
}

// Multiplicity-weighted mean of already-computed local losses.
inline double global_loss(const std::vector<double>& local_losses,
                          const std::vector<double>& multiplicities = {}) {
  require(!local_losses.empty(), errc::empty_dataset,
          "no local losses to combine");
  require(multiplicities.empty() ||
              multiplicities.size() == local_losses.size(),
          errc::dimension_error, "one multiplicity per participant");
  double acc = 0.0;
  for (std::size_t i = 0; i < local_losses.size(); ++i) {
    const double u = multiplicities.empty() ? 1.0 : multiplicities[i];
    acc += u * local_losses[i];
  }
  return acc / static_cast<double>(local_losses.size());
}

// Credibility-weighted gradient fold. Entries whose gradient is absent are
// skipped; the remaining gradients are combined as
// G = sum(alpha_k * l_k * G_k) / sum(alpha_k * l_k) and applied as one SGD
// step from theta_prev.
inline AggregationResult aggregate_global(
    const std::vector<AggregationEntry>& entries, const ModelWeights& theta_prev,
    double eta) {
  std::size_t present = 0;
  double weight_sum = 0.0;
  std::vector<double> combined(theta_prev.size(), 0.0);
  for (const AggregationEntry& e : entries) {
    if (!e.gradient.has_value()) continue;
    require(e.gradient->size() == theta_prev.size(), errc::dimension_error,
            "gradient dimension does not match the model");
    require(e.share >= 0.0 && e.credibility >= 0.0, errc::invalid_argument,
            "shares and credibilities must be nonnegative");
    const double wk = e.share * e.credibility;
    for (std::size_t i = 0; i < combined.size(); ++i) {
      combined[i] += wk * (*e.gradient)[i];
    }
    weight_sum += wk;
    ++present;
  }
  require(present >= 1, errc::no_updates, "every entry was absent");
  require(weight_sum > 0.0, errc::degenerate_weights,
          "present entries carry zero total weight");

  AggregationResult out;
  out.global_gradient.resize(combined.size());
  for (std::size_t i = 0; i < combined.size(); ++i) {
    out.global_gradient[i] = combined[i] / weight_sum;
  }
  out.new_weights = sgd_step(theta_prev, out.global_gradient, eta);
  return out;
}

// Size-weighted mean of parameter vectors: sum(C_i * w_i) / sum(C_i).
inline ModelWeights weighted_average(
    const std::vector<std::pair<double, ModelWeights>>& participants) {
  require(!participants.empty(), errc::no_updates,
          "nothing to average");
  const std::size_t dim = participants.front().second.size();
  double total = 0.0;
  ModelWeights out(dim, 0.0);
  for (const auto& [c, w] : participants) {
    require(c >= 0.0, errc::invalid_argument, "weights must be nonnegative");
    require(w.size() == dim, errc::dimension_error,
            "participants disagree on model dimension");
    for (std::size_t i = 0; i < dim; ++i) out[i] += c * w[i];
    total += c;
  }
  require(total > 0.0, errc::degenerate_weights,
          "participant weights sum to zero");
  for (double& x : out) x /= total;
  return out;
}

// True iff the accumulated iteration time fits the tightest node budget.
inline bool time_budget_ok(const RoundBudget& budget) {
  double spent = 0.0;
  for (double dt : budget.elapsed) {
    require(dt >= 0.0, errc::invalid_argument, "durations must be nonnegative");
    spent += dt;
  }
  double tightest = std::numeric_limits<double>::infinity();
  for (double t : budget.limits) {
    require(t >= 0.0, errc::invalid_argument, "durations must be nonnegative");
    tightest = std::min(tightest, t);
  }
  return spent <= tightest;
}

}  // namespace fedtangle

#endif  // FEDTANGLE_FEDLEARN_HPP_
