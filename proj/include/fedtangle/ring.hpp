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

#ifndef FEDTANGLE_RING_HPP_
#define FEDTANGLE_RING_HPP_

#include <cstdint>
#include <vector>

#include "fedtangle/error.hpp"
#include "fedtangle/rng.hpp"

namespace fedtangle {

// Parameters of the quotient ring Z_m[X] / (X^d + 1). The degree must be a
// power of two so the quotient polynomial is the 2d-th cyclotomic and the
// negacyclic wrap rule applies; the modulus stays under 2^62 so products of
// canonical residues fit an unsigned 128-bit accumulator with room to spare.
struct RingParams {
  std::uint32_t degree = 0;
  std::uint64_t modulus = 0;

  bool operator==(const RingParams& o) const {
    return degree == o.degree && modulus == o.modulus;
  }
  bool operator!=(const RingParams& o) const { return !(*this == o); }
};

inline void validate_ring_params(const RingParams& rp) {
  require(rp.degree >= 1 && (rp.degree & (rp.degree - 1)) == 0,
          errc::param_error, "ring degree must be a power of two");
  require(rp.modulus >= 3 && (rp.modulus & 1) == 1, errc::param_error,
          "ring modulus must be odd and at least 3");
  require(rp.modulus < (1ULL << 62), errc::param_error,
          "ring modulus must be below 2^62");
}

// Polynomial residue with coefficients stored as canonical values in
// [0, modulus). Index i holds the coefficient of X^i.
struct RingElement {
  RingParams params;
  std::vector<std::uint64_t> coeffs;
};

inline RingElement ring_zero(const RingParams& rp) {
  validate_ring_params(rp);
  return RingElement{rp, std::vector<std::uint64_t>(rp.degree, 0)};
}

inline void check_same_ring(const RingElement& a, const RingElement& b) {
  require(a.params == b.params, errc::ring_mismatch,
          "operands live in different rings");
}

// Signed integers into canonical residues.
inline RingElement to_ring(const RingParams& rp,
                           const std::vector<std::int64_t>& v) {
  validate_ring_params(rp);
  require(v.size() == rp.degree, errc::dimension_error,
          "coefficient count does not match ring degree");
  RingElement out = ring_zero(rp);
  const std::int64_t m = static_cast<std::int64_t>(rp.modulus);
  for (std::uint32_t i = 0; i < rp.degree; ++i) {
    std::int64_t r = v[i] % m;
    if (r < 0) r += m;
    out.coeffs[i] = static_cast<std::uint64_t>(r);
  }
  return out;
}

// Centered (balanced) lift: residues map into (-m/2, m/2].
inline std::vector<std::int64_t> to_vec(const RingElement& a) {
  std::vector<std::int64_t> out(a.coeffs.size());
  const std::uint64_t m = a.params.modulus;
  const std::uint64_t half = m / 2;  // m odd, so residues > half lift negative
  for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
    std::uint64_t c = a.coeffs[i];
    out[i] = c > half ? static_cast<std::int64_t>(c) -
                            static_cast<std::int64_t>(m)
                      : static_cast<std::int64_t>(c);
  }
  return out;
}

inline std::int64_t centered_lift(std::uint64_t c, std::uint64_t m) {
  return c > m / 2 ? static_cast<std::int64_t>(c) - static_cast<std::int64_t>(m)
                   : static_cast<std::int64_t>(c);
}

inline RingElement ring_add(const RingElement& a, const RingElement& b) {
  check_same_ring(a, b);
  RingElement out = a;
  const std::uint64_t m = a.params.modulus;
  for (std::size_t i = 0; i < out.coeffs.size(); ++i) {
    std::uint64_t s = out.coeffs[i] + b.coeffs[i];
    if (s >= m) s -= m;
    out.coeffs[i] = s;
  }
  return out;
}

inline RingElement ring_sub(const RingElement& a, const RingElement& b) {
  check_same_ring(a, b);
  RingElement out = a;
  const std::uint64_t m = a.params.modulus;
  for (std::size_t i = 0; i < out.coeffs.size(); ++i) {
    std::uint64_t bi = b.coeffs[i];
    out.coeffs[i] = out.coeffs[i] >= bi ? out.coeffs[i] - bi
                                        : out.coeffs[i] + m - bi;
  }
  return out;
}

inline RingElement ring_neg(const RingElement& a) {
  RingElement out = a;
  const std::uint64_t m = a.params.modulus;
  for (auto& c : out.coeffs) c = c == 0 ? 0 : m - c;
  return out;
}

inline RingElement ring_scalar_mul(const RingElement& a, std::uint64_t k) {
  RingElement out = a;
  const std::uint64_t m = a.params.modulus;
  k %= m;
  for (auto& c : out.coeffs) {
    c = static_cast<std::uint64_t>(
        static_cast<unsigned __int128>(c) * k % m);
  }
  return out;
}

// Negacyclic schoolbook product: X^d = -1, so the wrapped partial products
// subtract instead of add. Quadratic in the degree; the transform engine in
// ntt.hpp computes the identical result in d log d for NTT-friendly moduli.
inline RingElement ring_mul(const RingElement& a, const RingElement& b) {
  check_same_ring(a, b);
  const std::uint32_t d = a.params.degree;
  const std::uint64_t m = a.params.modulus;
  RingElement out = ring_zero(a.params);
  for (std::uint32_t i = 0; i < d; ++i) {
    const std::uint64_t ai = a.coeffs[i];
    if (ai == 0) continue;
    for (std::uint32_t j = 0; j < d; ++j) {
      const std::uint64_t prod = static_cast<std::uint64_t>(
          static_cast<unsigned __int128>(ai) * b.coeffs[j] % m);
      if (prod == 0) continue;
      const std::uint32_t k = i + j;
      if (k < d) {
        std::uint64_t s = out.coeffs[k] + prod;
        if (s >= m) s -= m;
        out.coeffs[k] = s;
      } else {
        const std::uint32_t w = k - d;
        std::uint64_t c = out.coeffs[w];
        out.coeffs[w] = c >= prod ? c - prod : c + m - prod;
      }
    }
  }
  return out;
}

// Uniform ring element, coefficients drawn independently mod m.
inline RingElement ring_uniform(const RingParams& rp, RngStream& rng) {
  validate_ring_params(rp);
  RingElement out = ring_zero(rp);
  for (auto& c : out.coeffs) c = rng.next_below(rp.modulus);
  return out;
}

// Small element from one of the structured samplers.
inline RingElement ring_sample(const RingParams& rp, const SamplerSpec& spec,
                               RngStream& rng) {
  require(spec.n == rp.degree, errc::dimension_error,
          "sampler length must equal ring degree");
  return to_ring(rp, sample(spec, rng));
}

}  // namespace fedtangle

#endif  // FEDTANGLE_RING_HPP_
