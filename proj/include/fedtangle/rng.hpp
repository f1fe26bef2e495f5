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

#ifndef FEDTANGLE_RNG_HPP_
#define FEDTANGLE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "fedtangle/error.hpp"

namespace fedtangle {

// Seeded randomness handle. splitmix64 keeps the generator fully specified by
// this header alone, so a seed produces the same draw sequence on every
// platform and toolchain. Every logical consumer owns its own stream; there
// is no ambient randomness anywhere in the library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Unbiased draw in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    require(bound >= 1, errc::invalid_argument, "bound must be positive");
    if (bound == 1) return 0;
    const std::uint64_t threshold = (0ULL - bound) % bound;  // 2^64 mod bound
    for (;;) {
      std::uint64_t draw = next_u64();
      if (draw >= threshold) return draw % bound;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Child stream independent of this one, addressed by a label and an index.
  // Deriving never consumes state from the parent, so the set of children is
  // stable regardless of interleaving.
  RngStream derive(std::string_view label, std::uint64_t index = 0) const {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ state_;
    for (char ch : label) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
    h ^= index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    RngStream child(h);
    child.next_u64();  // decorrelate the first output from the raw hash
    return child;
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// The three draw families used by the aggregation scheme.
enum class SamplerKind { ternary, gaussian, uniform };

struct SamplerSpec {
  SamplerKind kind = SamplerKind::ternary;
  std::size_t n = 0;
  double sigma = 0.0;          // gaussian only
  std::uint64_t modulus = 0;   // uniform only

  static SamplerSpec ternary(std::size_t n) {
    return SamplerSpec{SamplerKind::ternary, n, 0.0, 0};
  }
  static SamplerSpec gaussian(std::size_t n, double sigma) {
    return SamplerSpec{SamplerKind::gaussian, n, sigma, 0};
  }
  static SamplerSpec uniform(std::size_t n, std::uint64_t modulus) {
    return SamplerSpec{SamplerKind::uniform, n, 0.0, modulus};
  }
};

namespace detail {

// Ternary draw over {-1, 0, 1} with Pr[-1]=1/4, Pr[0]=1/2, Pr[1]=1/4,
// consuming two bits per draw.
inline std::int64_t draw_ternary(RngStream& rng) {
  std::uint64_t bits = rng.next_u64() & 0x3;
  if (bits < 2) return 0;
  return bits == 2 ? -1 : 1;
}

// Rounded continuous Gaussian (mean 0, parameter sigma) via Box-Muller,
// with tails beyond 6*sigma rejected so worst-case noise stays bounded.
inline std::int64_t draw_gaussian(RngStream& rng, double sigma) {
  const double cut = 6.0 * sigma;
  for (;;) {
    double u1 = rng.next_double();
    if (u1 <= 0.0) continue;
    double u2 = rng.next_double();
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    double scaled = z * sigma;
    if (scaled > cut || scaled < -cut) continue;
    return static_cast<std::int64_t>(std::llround(scaled));
  }
}

}  // namespace detail

// Draws spec.n values from the requested distribution. Ternary draws land in
// {-1, 0, 1}; gaussian draws are integers; uniform draws land in
// [0, modulus). Deterministic given the stream state.
inline std::vector<std::int64_t> sample(const SamplerSpec& spec,
                                        RngStream& rng) {
  switch (spec.kind) {
    case SamplerKind::gaussian:
      require(spec.sigma > 0.0, errc::invalid_sampler_spec,
              "gaussian sigma must be positive");
      break;
    case SamplerKind::uniform:
      require(spec.modulus >= 2, errc::invalid_sampler_spec,
              "uniform modulus must be at least 2");
      break;
    case SamplerKind::ternary:
      break;
  }

  std::vector<std::int64_t> out;
  out.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    switch (spec.kind) {
      case SamplerKind::ternary:
        out.push_back(detail::draw_ternary(rng));
        break;
      case SamplerKind::gaussian:
        out.push_back(detail::draw_gaussian(rng, spec.sigma));
        break;
      case SamplerKind::uniform:
        out.push_back(static_cast<std::int64_t>(rng.next_below(spec.modulus)));
        break;
    }
  }
  return out;
}

}  // namespace fedtangle

#endif  // FEDTANGLE_RNG_HPP_
