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

#ifndef FEDTANGLE_ERROR_HPP_
#define FEDTANGLE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace fedtangle {

// Every failure mode the library reports. One code per contract violation so
// callers (and tests) can match on the condition instead of parsing text.
enum class errc {
  ring_mismatch,
  invalid_sampler_spec,
  dimension_error,
  param_error,
  invalid_gradient,
  party_set_mismatch,
  noise_overflow,
  singular_mask,
  degenerate_weight,
  no_successors,
  walk_timeout,
  orphan_parent,
  validation_failed,
  duplicate_transaction,
  no_updates,
  degenerate_weights,
  empty_dataset,
  divergence_error,
  spec_error,
  io_error,
  invalid_argument,
};

inline const char* to_string(errc c) {
  switch (c) {
    case errc::ring_mismatch: return "RingMismatch";
    case errc::invalid_sampler_spec: return "InvalidSamplerSpec";
    case errc::dimension_error: return "DimensionError";
    case errc::param_error: return "ParamError";
    case errc::invalid_gradient: return "InvalidGradient";
    case errc::party_set_mismatch: return "PartySetMismatch";
    case errc::noise_overflow: return "NoiseOverflow";
    case errc::singular_mask: return "SingularMask";
    case errc::degenerate_weight: return "DegenerateWeight";
    case errc::no_successors: return "NoSuccessors";
    case errc::walk_timeout: return "WalkTimeout";
    case errc::orphan_parent: return "OrphanParent";
    case errc::validation_failed: return "ValidationFailed";
    case errc::duplicate_transaction: return "DuplicateTransaction";
    case errc::no_updates: return "NoUpdates";
    case errc::degenerate_weights: return "DegenerateWeights";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::divergence_error: return "DivergenceError";
    case errc::spec_error: return "SpecError";
    case errc::io_error: return "IoError";
    case errc::invalid_argument: return "InvalidArgument";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace fedtangle

#endif  // FEDTANGLE_ERROR_HPP_
