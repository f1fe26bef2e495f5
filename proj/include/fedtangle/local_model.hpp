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

#ifndef FEDTANGLE_LOCAL_MODEL_HPP_
#define FEDTANGLE_LOCAL_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "fedtangle/error.hpp"
#include "fedtangle/fedlearn.hpp"
#include "fedtangle/rng.hpp"

namespace fedtangle {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Gaussian class blobs: class k is centered at `separation` along feature
// axis k, isotropic with the given stddev. Separation >= 6*stddev makes the
// classes linearly separable for the reference classifier.
struct SyntheticSpec {
  std::uint32_t classes = 3;
  std::uint32_t features = 20;
  std::uint32_t samples = 600;
  double separation = 2.5;
  double stddev = 1.0;
};

struct SyntheticDataset {
  std::uint32_t n_features = 0;
  std::vector<double> features;        // row-major, samples x n_features
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const {
    return features.data() + i * n_features;
  }
};

inline SyntheticDataset gen_synthetic(const SyntheticSpec& spec,
                                      std::uint64_t seed) {
  require(spec.classes >= 2, errc::spec_error, "need at least two classes");
  require(spec.features >= spec.classes, errc::spec_error,
          "need at least one feature axis per class");
  require(spec.samples >= 1, errc::spec_error, "need at least one sample");
  require(std::isfinite(spec.stddev) && spec.stddev > 0.0, errc::spec_error,
          "covariance must be positive and finite");
  require(std::isfinite(spec.separation) && spec.separation >= 0.0,
          errc::spec_error, "separation must be nonnegative and finite");

  RngStream rng(seed);
  SyntheticDataset ds;
  ds.n_features = spec.features;
  ds.features.resize(static_cast<std::size_t>(spec.samples) * spec.features);
  ds.labels.resize(spec.samples);
  for (std::uint32_t i = 0; i < spec.samples; ++i) {
    const std::uint32_t label = i % spec.classes;
    ds.labels[i] = label;
    for (std::uint32_t j = 0; j < spec.features; ++j) {
      // Box-Muller on the shared stream keeps generation platform-stable.
      double u1 = rng.next_double();
      while (u1 <= 0.0) u1 = rng.next_double();
      const double u2 = rng.next_double();
      const double z = std::sqrt(-2.0 * std::log(u1)) *
                       std::cos(2.0 * 3.14159265358979323846 * u2);
      const double mean = (j == label) ? spec.separation : 0.0;
      ds.features[static_cast<std::size_t>(i) * spec.features + j] =
          mean + spec.stddev * z;
    }
  }
  return ds;
}

// Snapshot with a header row and the label as the last column.
inline std::string dataset_to_csv(const SyntheticDataset& ds) {
  std::string out;
  for (std::uint32_t j = 0; j < ds.n_features; ++j) {
    out += "f" + std::to_string(j) + ",";
  }
  out += "label\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double* x = ds.row(i);
    for (std::uint32_t j = 0; j < ds.n_features; ++j) {
      std::snprintf(buf, sizeof(buf), "%.6f,", x[j]);
      out += buf;
    }
    out += std::to_string(ds.labels[i]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear-softmax reference classifier
// ---------------------------------------------------------------------------

// Weights are laid out class-major with an appended bias slot per class:
// logit_c(x) = sum_j w[c*(F+1)+j] * x_j + w[c*(F+1)+F].
inline std::size_t model_dimension(std::uint32_t classes,
                                   std::uint32_t features) {
  return static_cast<std::size_t>(classes) * (features + 1);
}

namespace detail {

inline void softmax_inplace(std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

inline void class_logits(const ModelWeights& w, const double* x,
                         std::uint32_t classes, std::uint32_t features,
                         std::vector<double>& out) {
  out.assign(classes, 0.0);
  for (std::uint32_t c = 0; c < classes; ++c) {
    const double* wc = w.data() + static_cast<std::size_t>(c) * (features + 1);
    double acc = wc[features];
    for (std::uint32_t j = 0; j < features; ++j) acc += wc[j] * x[j];
    out[c] = acc;
  }
}

}  // namespace detail

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean cross-entropy over the index set plus its exact gradient:
// d/dw_c = (softmax_c - [c == y]) * (x, 1) averaged over the batch.
inline LossGrad loss_and_grad(const ModelWeights& w,
                              const SyntheticDataset& ds,
                              const std::vector<std::size_t>& batch,
                              std::uint32_t classes) {
  require(!batch.empty(), errc::empty_dataset, "batch is empty");
  const std::uint32_t f = ds.n_features;
  require(w.size() == model_dimension(classes, f), errc::dimension_error,
          "model dimension does not match classes * (features + 1)");

  LossGrad out;
  out.grad.assign(w.size(), 0.0);
  std::vector<double> probs;
  for (std::size_t idx : batch) {
    require(idx < ds.size(), errc::dimension_error, "batch index out of range");
    const double* x = ds.row(idx);
    detail::class_logits(w, x, classes, f, probs);
    detail::softmax_inplace(probs);
    const std::uint32_t y = ds.labels[idx];
    out.loss += -std::log(std::max(probs[y], 1e-300));
    for (std::uint32_t c = 0; c < classes; ++c) {
      const double delta = probs[c] - (c == y ? 1.0 : 0.0);
      double* gc = out.grad.data() + static_cast<std::size_t>(c) * (f + 1);
      for (std::uint32_t j = 0; j < f; ++j) gc[j] += delta * x[j];
      gc[f] += delta;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

inline LossGrad loss_and_grad(const ModelWeights& w, const SyntheticDataset& ds,
                              std::uint32_t classes) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return loss_and_grad(w, ds, all, classes);
}

struct TrainResult {
  ModelWeights weights;
  std::uint64_t gradient_count = 0;
};

// Mini-batch SGD. Each iteration draws batch_size indices from the stream,
// computes one gradient, and applies one step; gradient_count therefore
// equals `iterations`.
inline TrainResult train_local(const ModelWeights& w0,
                               const SyntheticDataset& ds, double eta,
                               std::uint64_t iterations, RngStream& rng,
                               std::uint32_t classes,
                               std::uint32_t batch_size = 32) {
  require(iterations >= 1, errc::invalid_argument,
          "need at least one iteration");
  require(batch_size >= 1, errc::invalid_argument,
          "batch size must be positive");
  require(eta >= 0.0, errc::invalid_argument,
          "learning rate must be nonnegative");
  require(ds.size() >= 1, errc::empty_dataset, "dataset has no samples");

  TrainResult out;
  out.weights = w0;
  std::vector<std::size_t> batch(batch_size);
  for (std::uint64_t it = 0; it < iterations; ++it) {
    for (auto& b : batch) {
      b = static_cast<std::size_t>(rng.next_below(ds.size()));
    }
    const LossGrad lg = loss_and_grad(out.weights, ds, batch, classes);
    require(std::isfinite(lg.loss), errc::divergence_error,
            "training loss diverged");
    // eta = 0 still counts gradients but takes no effective step.
    if (eta > 0.0) out.weights = sgd_step(out.weights, lg.grad, eta);
    ++out.gradient_count;
  }
  for (double v : out.weights) {
    require(std::isfinite(v), errc::divergence_error,
            "model weights diverged");
  }
  return out;
}

inline double evaluate_accuracy(const ModelWeights& w,
                                const SyntheticDataset& ds,
                                std::uint32_t classes) {
  require(ds.size() >= 1, errc::empty_dataset, "dataset has no samples");
  std::vector<double> logits;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    detail::class_logits(w, ds.row(i), classes, ds.n_features, logits);
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < classes; ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    if (best == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Capsule building blocks
// ---------------------------------------------------------------------------

// Norm-preserving direction with squashed magnitude ||p||^2 / (1 + ||p||^2).
inline std::vector<double> squash(const std::vector<double>& p) {
  double norm_sq = 0.0;
  for (double v : p) {
    require(std::isfinite(v), errc::invalid_argument,
            "pose entries must be finite");
    norm_sq += v * v;
  }
  if (norm_sq == 0.0) return std::vector<double>(p.size(), 0.0);
  const double norm = std::sqrt(norm_sq);
  const double factor = norm_sq / (1.0 + norm_sq) / norm;
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = factor * p[i];
  return out;
}

inline std::vector<double> routing_softmax(const std::vector<double>& logits) {
  require(!logits.empty(), errc::invalid_argument, "no routing logits");
  std::vector<double> out = logits;
  for (double v : out) {
    require(std::isfinite(v), errc::invalid_argument,
            "routing logits must be finite");
  }
  detail::softmax_inplace(out);
  return out;
}

struct CapsuleLayerSpec {
  std::uint32_t input_capsules = 0;
  std::uint32_t input_dim = 0;
  std::uint32_t output_capsules = 0;
  std::uint32_t output_dim = 0;
  std::uint32_t routing_iterations = 3;
  // transforms[i][j] is an output_dim x input_dim matrix, row-major.
  std::vector<std::vector<std::vector<double>>> transforms;
};

// Routing by agreement: prediction vectors u_hat = W_ij * u_i are combined
// with coupling coefficients from a per-input softmax over logits b, which
// accumulate the agreement dot products across iterations.
inline std::vector<std::vector<double>> capsule_forward(
    const CapsuleLayerSpec& spec,
    const std::vector<std::vector<double>>& inputs) {
  require(spec.routing_iterations >= 1, errc::invalid_argument,
          "need at least one routing iteration");
  require(inputs.size() == spec.input_capsules, errc::dimension_error,
          "input capsule count mismatch");
  require(spec.transforms.size() == spec.input_capsules, errc::dimension_error,
          "one transform row per input capsule");

  const std::uint32_t in_n = spec.input_capsules;
  const std::uint32_t out_n = spec.output_capsules;

  // u_hat[i][j]: prediction of output j from input i.
  std::vector<std::vector<std::vector<double>>> u_hat(
      in_n, std::vector<std::vector<double>>(
                out_n, std::vector<double>(spec.output_dim, 0.0)));
  for (std::uint32_t i = 0; i < in_n; ++i) {
    require(inputs[i].size() == spec.input_dim, errc::dimension_error,
            "input pose dimension mismatch");
    require(spec.transforms[i].size() == out_n, errc::dimension_error,
            "one transform per output capsule");
    for (std::uint32_t j = 0; j < out_n; ++j) {
      const auto& m = spec.transforms[i][j];
      require(m.size() ==
                  static_cast<std::size_t>(spec.output_dim) * spec.input_dim,
              errc::dimension_error, "transform matrix shape mismatch");
      for (std::uint32_t r = 0; r < spec.output_dim; ++r) {
        double acc = 0.0;
        for (std::uint32_t c = 0; c < spec.input_dim; ++c) {
          acc += m[static_cast<std::size_t>(r) * spec.input_dim + c] *
                 inputs[i][c];
        }
        u_hat[i][j][r] = acc;
      }
    }
  }

  std::vector<std::vector<double>> b(in_n, std::vector<double>(out_n, 0.0));
  std::vector<std::vector<double>> v(out_n);
  for (std::uint32_t round = 0; round < spec.routing_iterations; ++round) {
    std::vector<std::vector<double>> s(
        out_n, std::vector<double>(spec.output_dim, 0.0));
    for (std::uint32_t i = 0; i < in_n; ++i) {
      const std::vector<double> c = routing_softmax(b[i]);
      for (std::uint32_t j = 0; j < out_n; ++j) {
        for (std::uint32_t r = 0; r < spec.output_dim; ++r) {
          s[j][r] += c[j] * u_hat[i][j][r];
        }
      }
    }
    for (std::uint32_t j = 0; j < out_n; ++j) v[j] = squash(s[j]);
    if (round + 1 < spec.routing_iterations) {
      for (std::uint32_t i = 0; i < in_n; ++i) {
        for (std::uint32_t j = 0; j < out_n; ++j) {
          double dot = 0.0;
          for (std::uint32_t r = 0; r < spec.output_dim; ++r) {
            dot += u_hat[i][j][r] * v[j][r];
          }
          b[i][j] += dot;
        }
      }
    }
  }
  return v;
}

}  // namespace fedtangle

#endif  // FEDTANGLE_LOCAL_MODEL_HPP_
