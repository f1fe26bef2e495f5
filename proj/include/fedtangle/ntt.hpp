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

#ifndef FEDTANGLE_NTT_HPP_
#define FEDTANGLE_NTT_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "fedtangle/error.hpp"
#include "fedtangle/primes.hpp"
#include "fedtangle/ring.hpp"

namespace fedtangle {

namespace detail {

// Shoup's precomputed-quotient modular multiplication: for a fixed factor w
// with companion w_shoup = floor(w * 2^64 / q), computes x*w mod q in two
// high multiplies and no division. Needs q < 2^63.
inline std::uint64_t mul_mod_shoup(std::uint64_t x, std::uint64_t w,
                                   std::uint64_t w_shoup, std::uint64_t q) {
  const std::uint64_t hi = static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(x) * w_shoup) >> 64);
  std::uint64_t r = x * w - hi * q;
  if (r >= q) r -= q;
  return r;
}

inline std::uint64_t shoup_companion(std::uint64_t w, std::uint64_t q) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(w) << 64) / q);
}

inline std::uint32_t bit_reverse(std::uint32_t v, std::uint32_t bits) {
  std::uint32_t out = 0;
  for (std::uint32_t i = 0; i < bits; ++i) {
    out = (out << 1) | ((v >> i) & 1);
  }
  return out;
}

// Negacyclic number-theoretic transform over one prime field. Twiddle tables
// hold powers of psi (a primitive 2n-th root of unity) in bit-reversed order,
// the layout the iterative Cooley-Tukey / Gentleman-Sande passes consume.
class PrimeNtt {
 public:
  PrimeNtt(std::uint32_t n, std::uint64_t q) : n_(n), q_(q) {
    require((q - 1) % (2ULL * n) == 0, errc::param_error,
            "prime is not NTT-friendly for this degree");
    log_n_ = 0;
    while ((1U << log_n_) < n) ++log_n_;

    const std::uint64_t psi = root_of_unity(2ULL * n, q);
    const std::uint64_t psi_inv = pow_mod(psi, q - 2, q);
    psi_rev_.resize(n);
    psi_rev_shoup_.resize(n);
    psi_inv_rev_.resize(n);
    psi_inv_rev_shoup_.resize(n);
    std::uint64_t fwd = 1;
    std::uint64_t inv = 1;
    std::vector<std::uint64_t> fwd_pow(n), inv_pow(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      fwd_pow[i] = fwd;
      inv_pow[i] = inv;
      fwd = mul_mod(fwd, psi, q);
      inv = mul_mod(inv, psi_inv, q);
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t r = bit_reverse(i, log_n_);
      psi_rev_[i] = fwd_pow[r];
      psi_rev_shoup_[i] = shoup_companion(psi_rev_[i], q);
      psi_inv_rev_[i] = inv_pow[r];
      psi_inv_rev_shoup_[i] = shoup_companion(psi_inv_rev_[i], q);
    }
    n_inv_ = pow_mod(n, q - 2, q);
    n_inv_shoup_ = shoup_companion(n_inv_, q);
  }

  std::uint64_t modulus() const { return q_; }

  void forward(std::vector<std::uint64_t>& a) const {
    std::uint32_t t = n_;
    for (std::uint32_t m = 1; m < n_; m <<= 1) {
      t >>= 1;
      for (std::uint32_t i = 0; i < m; ++i) {
        const std::uint32_t j1 = 2 * i * t;
        const std::uint64_t s = psi_rev_[m + i];
        const std::uint64_t s_shoup = psi_rev_shoup_[m + i];
        for (std::uint32_t j = j1; j < j1 + t; ++j) {
          const std::uint64_t u = a[j];
          const std::uint64_t v = mul_mod_shoup(a[j + t], s, s_shoup, q_);
          std::uint64_t sum = u + v;
          if (sum >= q_) sum -= q_;
          a[j] = sum;
          a[j + t] = u >= v ? u - v : u + q_ - v;
        }
      }
    }
  }

  void inverse(std::vector<std::uint64_t>& a) const {
    std::uint32_t t = 1;
    for (std::uint32_t m = n_; m > 1; m >>= 1) {
      const std::uint32_t h = m >> 1;
      std::uint32_t j1 = 0;
      for (std::uint32_t i = 0; i < h; ++i) {
        const std::uint64_t s = psi_inv_rev_[h + i];
        const std::uint64_t s_shoup = psi_inv_rev_shoup_[h + i];
        for (std::uint32_t j = j1; j < j1 + t; ++j) {
          const std::uint64_t u = a[j];
          const std::uint64_t v = a[j + t];
          std::uint64_t sum = u + v;
          if (sum >= q_) sum -= q_;
          a[j] = sum;
          const std::uint64_t diff = u >= v ? u - v : u + q_ - v;
          a[j + t] = mul_mod_shoup(diff, s, s_shoup, q_);
        }
        j1 += 2 * t;
      }
      t <<= 1;
    }
    for (auto& x : a) x = mul_mod_shoup(x, n_inv_, n_inv_shoup_, q_);
  }

 private:
  std::uint32_t n_;
  std::uint64_t q_;
  std::uint32_t log_n_ = 0;
  std::uint64_t n_inv_ = 0;
  std::uint64_t n_inv_shoup_ = 0;
  std::vector<std::uint64_t> psi_rev_, psi_rev_shoup_;
  std::vector<std::uint64_t> psi_inv_rev_, psi_inv_rev_shoup_;
};

}  // namespace detail

// Ring element frozen in the transform domain, with Shoup companions so
// repeated products against it cost two multiplies per coefficient. In
// schoolbook fallback mode it just pins a copy of the element.
struct PreparedOperand {
  RingParams params;
  std::vector<std::vector<std::uint64_t>> ntt_residues;
  std::vector<std::vector<std::uint64_t>> ntt_residues_shoup;
  RingElement plain;  // fallback path only
};

// Multiplication engine for one ring. When the modulus factors into distinct
// primes that each support a 2d-th root of unity, products run as per-prime
// negacyclic NTTs stitched back together by the Chinese remainder theorem;
// the result is coefficient-for-coefficient identical to ring_mul. Any other
// modulus silently falls back to the schoolbook path.
class MulEngine {
 public:
  explicit MulEngine(const RingParams& rp,
                     std::vector<std::uint64_t> factors = {})
      : params_(rp) {
    validate_ring_params(rp);
    if (factors.empty()) factors.push_back(rp.modulus);

    unsigned __int128 product = 1;
    bool ntt_ok = true;
    for (std::uint64_t f : factors) {
      product *= f;
      if (!is_prime(f) || (f - 1) % (2ULL * rp.degree) != 0) ntt_ok = false;
    }
    for (std::size_t i = 0; i + 1 < factors.size(); ++i) {
      for (std::size_t j = i + 1; j < factors.size(); ++j) {
        if (factors[i] == factors[j]) ntt_ok = false;
      }
    }
    require(product == rp.modulus, errc::param_error,
            "factor product must equal the ring modulus");

    if (ntt_ok) {
      factors_ = std::move(factors);
      for (std::uint64_t f : factors_) {
        ntts_.push_back(std::make_unique<detail::PrimeNtt>(rp.degree, f));
      }
      // CRT recombination constants: for two primes {f0, f1},
      // x = x0 + f0 * ((x1 - x0) * f0^{-1} mod f1).
      if (factors_.size() == 2) {
        crt_inv_ = pow_mod(factors_[0] % factors_[1], factors_[1] - 2,
                           factors_[1]);
      }
      require(factors_.size() <= 2, errc::param_error,
              "at most two prime factors supported");
    }
  }

  const RingParams& params() const { return params_; }
  bool uses_transform() const { return !ntts_.empty(); }

  PreparedOperand prepare(const RingElement& a) const {
    require(a.params == params_, errc::ring_mismatch,
            "operand belongs to a different ring");
    PreparedOperand out;
    out.params = params_;
    if (!uses_transform()) {
      out.plain = a;
      return out;
    }
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      std::vector<std::uint64_t> res(params_.degree);
      for (std::uint32_t i = 0; i < params_.degree; ++i) {
        res[i] = a.coeffs[i] % factors_[k];
      }
      ntts_[k]->forward(res);
      std::vector<std::uint64_t> shoup(params_.degree);
      for (std::uint32_t i = 0; i < params_.degree; ++i) {
        shoup[i] = detail::shoup_companion(res[i], factors_[k]);
      }
      out.ntt_residues.push_back(std::move(res));
      out.ntt_residues_shoup.push_back(std::move(shoup));
    }
    return out;
  }

  RingElement mul(const RingElement& a, const RingElement& b) const {
    if (!uses_transform()) return ring_mul(a, b);
    return mul_prepared(a, prepare(b));
  }

  RingElement mul_prepared(const RingElement& a,
                           const PreparedOperand& b) const {
    require(a.params == params_ && b.params == params_, errc::ring_mismatch,
            "operand belongs to a different ring");
    if (!uses_transform()) return ring_mul(a, b.plain);

    const std::uint32_t d = params_.degree;
    std::vector<std::vector<std::uint64_t>> residues;
    residues.reserve(factors_.size());
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      const std::uint64_t f = factors_[k];
      std::vector<std::uint64_t> res(d);
      for (std::uint32_t i = 0; i < d; ++i) res[i] = a.coeffs[i] % f;
      ntts_[k]->forward(res);
      for (std::uint32_t i = 0; i < d; ++i) {
        res[i] = detail::mul_mod_shoup(res[i], b.ntt_residues[k][i],
                                       b.ntt_residues_shoup[k][i], f);
      }
      ntts_[k]->inverse(res);
      residues.push_back(std::move(res));
    }

    RingElement out = ring_zero(params_);
    if (factors_.size() == 1) {
      out.coeffs = std::move(residues[0]);
      return out;
    }
    const std::uint64_t f0 = factors_[0];
    const std::uint64_t f1 = factors_[1];
    for (std::uint32_t i = 0; i < d; ++i) {
      const std::uint64_t x0 = residues[0][i];
      const std::uint64_t x1 = residues[1][i];
      const std::uint64_t diff = x1 >= x0 % f1 ? x1 - x0 % f1
                                               : x1 + f1 - x0 % f1;
      const std::uint64_t t = mul_mod(diff, crt_inv_, f1);
      out.coeffs[i] = x0 + f0 * t;
    }
    return out;
  }

 private:
  RingParams params_;
  std::vector<std::uint64_t> factors_;
  std::vector<std::unique_ptr<detail::PrimeNtt>> ntts_;
  std::uint64_t crt_inv_ = 0;
};

}  // namespace fedtangle

#endif  // FEDTANGLE_NTT_HPP_
