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

#ifndef FEDTANGLE_PRIMES_HPP_
#define FEDTANGLE_PRIMES_HPP_

#include <cstdint>
#include <vector>

#include "fedtangle/error.hpp"

namespace fedtangle {

inline std::uint64_t mul_mod(std::uint64_t a, std::uint64_t b,
                             std::uint64_t m) {
  return static_cast<std::uint64_t>(
      static_cast<unsigned __int128>(a) * b % m);
}

inline std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp,
                             std::uint64_t m) {
  std::uint64_t acc = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) acc = mul_mod(acc, base, m);
    base = mul_mod(base, base, m);
    exp >>= 1;
  }
  return acc;
}

// Deterministic Miller-Rabin. The first twelve primes as witnesses decide
// primality exactly for all 64-bit inputs.
inline bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL,
                          23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL,
                          23ULL, 29ULL, 31ULL, 37ULL}) {
    std::uint64_t x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 0; i + 1 < r; ++i) {
      x = mul_mod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

// Smallest prime p >= floor with p = 1 (mod step). Used to pick NTT-friendly
// coefficient moduli: step = 2 * ring degree guarantees a primitive 2d-th
// root of unity exists mod p.
inline std::uint64_t next_prime_congruent(std::uint64_t floor,
                                          std::uint64_t step) {
  require(step >= 1, errc::invalid_argument, "step must be positive");
  std::uint64_t candidate = (floor / step) * step + 1;
  while (candidate < floor) candidate += step;
  while (!is_prime(candidate)) {
    require(candidate <= UINT64_MAX - step, errc::param_error,
            "prime search overflow");
    candidate += step;
  }
  return candidate;
}

inline std::vector<std::uint64_t> factorize(std::uint64_t n) {
  std::vector<std::uint64_t> factors;
  for (std::uint64_t p = 2; p * p <= n; p += (p == 2 ? 1 : 2)) {
    if (n % p == 0) {
      factors.push_back(p);
      while (n % p == 0) n /= p;
    }
  }
  if (n > 1) factors.push_back(n);
  return factors;
}

// Least generator of the multiplicative group mod prime p.
inline std::uint64_t primitive_root(std::uint64_t p) {
  require(is_prime(p), errc::invalid_argument,
          "primitive_root needs a prime modulus");
  if (p == 2) return 1;
  const std::uint64_t phi = p - 1;
  const std::vector<std::uint64_t> factors = factorize(phi);
  for (std::uint64_t g = 2; g < p; ++g) {
    bool ok = true;
    for (std::uint64_t q : factors) {
      if (pow_mod(g, phi / q, p) == 1) {
        ok = false;
        break;
      }
    }
    if (ok) return g;
  }
  fail(errc::param_error, "no primitive root found");
}

// Element of exact multiplicative order `order` mod prime p.
// Requires order | p - 1.
inline std::uint64_t root_of_unity(std::uint64_t order, std::uint64_t p) {
  require(order >= 1 && (p - 1) % order == 0, errc::param_error,
          "order must divide p - 1");
  std::uint64_t g = primitive_root(p);
  return pow_mod(g, (p - 1) / order, p);
}

}  // namespace fedtangle

#endif  // FEDTANGLE_PRIMES_HPP_
