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

#ifndef FEDTANGLE_SECURE_AGG_HPP_
#define FEDTANGLE_SECURE_AGG_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fedtangle/error.hpp"
#include "fedtangle/ntt.hpp"
#include "fedtangle/primes.hpp"
#include "fedtangle/ring.hpp"
#include "fedtangle/rng.hpp"

namespace fedtangle {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Two rings share the composite modulus p1 = p * p0: the internal ring
// (degree d) carries BGV-style two-component ciphertexts of quantized
// gradients; the external ring (degree d_ext >= 2*d*l) carries the masked
// gadget decompositions that the ledger aggregates. Modulus switching drops
// the aggregate from p1 to p0 before decryption.
struct CryptoParams {
  RingParams internal_ring;  // degree d, modulus p1
  RingParams external_ring;  // degree d_ext, modulus p1
  std::uint64_t q = 0;       // plaintext modulus
  std::uint64_t p = 0;       // switch factor, p1 / p0
  std::uint64_t p0 = 0;      // post-switch ciphertext modulus
  double sigma = 3.2;
  std::uint32_t base = 2;    // gadget digit base
  std::uint32_t l = 0;       // digits per coefficient, smallest with base^l >= p1
};

inline void validate_crypto_params(const CryptoParams& cp) {
  validate_ring_params(cp.internal_ring);
  validate_ring_params(cp.external_ring);
  require(cp.internal_ring.modulus == cp.external_ring.modulus,
          errc::param_error, "internal and external rings must share p1");
  const std::uint64_t p1 = cp.internal_ring.modulus;
  require(cp.p >= 2 && cp.p0 >= 2, errc::param_error,
          "sub-moduli must be at least 2");
  require(static_cast<unsigned __int128>(cp.p) * cp.p0 == p1,
          errc::param_error, "p1 must equal p * p0 exactly");
  require(cp.q >= 2 && cp.q < cp.p0, errc::param_error,
          "plaintext modulus must satisfy q < p0");
  require(cp.p % cp.q != 0 && cp.p0 % cp.q != 0 && cp.q % cp.p != 0,
          errc::param_error, "q must be coprime to p1");
  require(is_prime(cp.p) && is_prime(cp.p0) && cp.p != cp.p0,
          errc::param_error, "p and p0 must be distinct primes");
  require(cp.sigma > 0.0, errc::param_error, "sigma must be positive");
  require(cp.base >= 2, errc::param_error, "gadget base must be at least 2");
  unsigned __int128 cap = 1;
  std::uint32_t need = 0;
  while (cap < p1) {
    cap *= cp.base;
    ++need;
  }
  require(cp.l == need, errc::param_error,
          "gadget length must be the smallest l with base^l >= p1");
}

inline std::uint32_t next_pow2(std::uint32_t v) {
  std::uint32_t n = 1;
  while (n < v) n <<= 1;
  return n;
}

// Builds a parameter set for internal degree d. Both sub-moduli are chosen
// congruent to 1 mod 2*d_cong, where d_cong bounds the external degree from
// above, so every ring in play (internal, external, post-switch) admits the
// transform fast path. The loop re-derives the gadget length from the primes
// it just found and widens the congruence target if the first guess was low.
inline CryptoParams make_crypto_params_with_floors(std::uint32_t d,
                                                   std::uint64_t q,
                                                   double sigma,
                                                   std::uint32_t base,
                                                   std::uint64_t p_floor,
                                                   std::uint64_t p0_floor) {
  require(d >= 2 && (d & (d - 1)) == 0, errc::param_error,
          "internal degree must be a power of two >= 2");
  require(base >= 2, errc::param_error, "gadget base must be at least 2");
  require(sigma > 0.0, errc::param_error, "sigma must be positive");
  require(q >= 2, errc::param_error, "plaintext modulus must be at least 2");
  require(p_floor >= 3 && p0_floor > q, errc::param_error,
          "sub-modulus floors too small");

  auto digits_for = [&](unsigned __int128 value) {
    std::uint32_t l = 0;
    unsigned __int128 cap = 1;
    while (cap < value) {
      cap *= base;
      ++l;
    }
    return l;
  };

  std::uint32_t l_guess =
      digits_for(static_cast<unsigned __int128>(p_floor) * p0_floor * 4);
  for (int iter = 0; iter < 6; ++iter) {
    const std::uint32_t d_cong = next_pow2(2 * d * l_guess);
    const std::uint64_t step = 2ULL * d_cong;
    const std::uint64_t p = next_prime_congruent(p_floor, step);
    const std::uint64_t p0 = next_prime_congruent(p0_floor, step);
    require(p % q != 0 && p0 % q != 0, errc::param_error,
            "sub-modulus collides with plaintext modulus");
    const unsigned __int128 p1_wide =
        static_cast<unsigned __int128>(p) * p0;
    require(p1_wide < (static_cast<unsigned __int128>(1) << 62),
            errc::param_error, "p1 exceeds the 62-bit modulus budget");
    const std::uint64_t p1 = static_cast<std::uint64_t>(p1_wide);
    const std::uint32_t l = digits_for(p1);
    const std::uint32_t d_ext = next_pow2(2 * d * l);
    if (d_ext > d_cong) {
      l_guess = l;
      continue;
    }
    CryptoParams cp;
    cp.internal_ring = RingParams{d, p1};
    cp.external_ring = RingParams{d_ext, p1};
    cp.q = q;
    cp.p = p;
    cp.p0 = p0;
    cp.sigma = sigma;
    cp.base = base;
    cp.l = l;
    validate_crypto_params(cp);
    return cp;
  }
  fail(errc::param_error, "parameter search did not converge");
}

inline CryptoParams make_crypto_params(std::uint32_t d = 256,
                                       std::uint64_t q = 65537,
                                       double sigma = 3.2,
                                       std::uint32_t base = 2) {
  return make_crypto_params_with_floors(d, q, sigma, base, (1ULL << 20) + 1,
                                        (1ULL << 30) + 1);
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

struct QuantParams {
  std::uint64_t scale = 256;  // power of two
  double clip = 8.0;
  std::uint32_t max_parties = 15;
};

inline void validate_quant_params(const QuantParams& qp, std::uint64_t q) {
  require(qp.scale >= 1 && (qp.scale & (qp.scale - 1)) == 0, errc::param_error,
          "scale must be a power of two");
  require(qp.clip > 0.0, errc::param_error, "clip bound must be positive");
  require(qp.max_parties >= 1, errc::param_error,
          "max_parties must be at least 1");
  const double headroom = static_cast<double>(qp.max_parties) *
                          static_cast<double>(qp.scale) * qp.clip;
  require(headroom < static_cast<double>(q) / 2.0, errc::param_error,
          "aggregated plaintexts could wrap: need N_max * scale * clip < q/2");
}

// Fixed-point encoding: clamp to [-clip, clip], scale, round to nearest.
// Outputs are centered residues; with validated QuantParams they stay far
// inside (-q/2, q/2] even after summation across parties.
inline std::vector<std::int64_t> quantize(const std::vector<double>& g,
                                          const QuantParams& qp) {
  std::vector<std::int64_t> out;
  out.reserve(g.size());
  for (double x : g) {
    require(std::isfinite(x), errc::invalid_gradient,
            "gradient entries must be finite");
    const double clipped = std::min(std::max(x, -qp.clip), qp.clip);
    out.push_back(std::llround(clipped * static_cast<double>(qp.scale)));
  }
  return out;
}

inline std::vector<double> dequantize(const std::vector<std::int64_t>& v,
                                      const QuantParams& qp) {
  std::vector<double> out;
  out.reserve(v.size());
  for (std::int64_t x : v) {
    out.push_back(static_cast<double>(x) / static_cast<double>(qp.scale));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Keys and ciphertexts
// ---------------------------------------------------------------------------

struct KeyMaterial {
  CryptoParams params;
  RingElement pk_a;              // internal ring, uniform
  RingElement pk_b;              // pk_a * evaluator_secret + q * gamma
  RingElement external_a;        // external ring, uniform
  std::vector<RingElement> party_secrets;  // s_i, external ring
  RingElement ledger_secret;     // SK_C1 = -sum(s_i), external ring
  RingElement evaluator_secret;  // SK_C2 = s~, internal ring
  std::uint32_t n_parties = 0;
};

struct InternalCiphertext {
  RingElement c0;
  RingElement c1;
  double noise_bound = 0.0;       // worst-case |c0 - s~*c1| after centering
  std::uint64_t plain_factor = 1; // decrypt multiplies by this mod q
};

struct ExternalShare {
  RingElement c;
  std::uint32_t issuer = 0;
  double noise_bound = 0.0;  // bound of the wrapped internal ciphertext
};

// Issuer-side pairing of an internal ciphertext with its external share.
// Only the share ever leaves the issuing party.
struct CiphertextBundle {
  InternalCiphertext internal_ct;
  ExternalShare share;
};

// Worst-case decryption-noise magnitude of a fresh encryption. Every noise
// term carries a factor q; the 6-sigma sampler cut makes the per-element
// bounds unconditional: |gamma*v| <= 6*sigma*d, |e0| <= 6*sigma,
// |s~*e1| <= 36*sigma^2*d.
inline double fresh_noise_bound(const CryptoParams& cp) {
  const double d = static_cast<double>(cp.internal_ring.degree);
  const double s = cp.sigma;
  const double quotient = 6.0 * s * d + 6.0 * s + 36.0 * s * s * d;
  return static_cast<double>(cp.q) * (0.5 + quotient);
}

// Extracts gamma from a public key via exact modular division: the centered
// lift of pk_b - pk_a * s~ must be q * gamma with every |gamma_j| <= 6*sigma.
inline std::vector<std::int64_t> recover_gamma(const RingElement& pk_a,
                                               const RingElement& pk_b,
                                               const RingElement& evaluator_secret,
                                               std::uint64_t q,
                                               const MulEngine& engine) {
  const RingElement diff =
      ring_sub(pk_b, engine.mul(pk_a, evaluator_secret));
  const std::vector<std::int64_t> lifted = to_vec(diff);
  std::vector<std::int64_t> gamma;
  gamma.reserve(lifted.size());
  for (std::int64_t t : lifted) {
    require(t % static_cast<std::int64_t>(q) == 0, errc::param_error,
            "public-key residual is not divisible by q");
    gamma.push_back(t / static_cast<std::int64_t>(q));
  }
  return gamma;
}

inline KeyMaterial setup(std::uint32_t n_parties, const CryptoParams& cp,
                         const RngStream& rng) {
  require(n_parties >= 1, errc::param_error, "need at least one party");
  validate_crypto_params(cp);

  KeyMaterial km;
  km.params = cp;
  km.n_parties = n_parties;

  RngStream a_rng = rng.derive("internal_a");
  RngStream s_rng = rng.derive("evaluator_secret");
  RngStream g_rng = rng.derive("gamma");
  RngStream ext_rng = rng.derive("external_a");

  const RingParams& ir = cp.internal_ring;
  km.pk_a = ring_uniform(ir, a_rng);
  km.evaluator_secret =
      ring_sample(ir, SamplerSpec::gaussian(ir.degree, cp.sigma), s_rng);
  const RingElement gamma =
      ring_sample(ir, SamplerSpec::gaussian(ir.degree, cp.sigma), g_rng);

  const MulEngine internal_engine(ir, {cp.p, cp.p0});
  km.pk_b = ring_add(internal_engine.mul(km.pk_a, km.evaluator_secret),
                     ring_scalar_mul(gamma, cp.q));

  const RingParams& er = cp.external_ring;
  km.external_a = ring_uniform(er, ext_rng);
  RingElement acc = ring_zero(er);
  km.party_secrets.reserve(n_parties);
  for (std::uint32_t i = 0; i < n_parties; ++i) {
    RngStream p_rng = rng.derive("party_secret", i);
    km.party_secrets.push_back(
        ring_sample(er, SamplerSpec::gaussian(er.degree, cp.sigma), p_rng));
    acc = ring_add(acc, km.party_secrets.back());
  }
  km.ledger_secret = ring_neg(acc);

  // Self-check: the published pair must satisfy b - a*s~ = q*gamma with a
  // small quotient, or downstream decryption guarantees are void.
  const std::vector<std::int64_t> recovered = recover_gamma(
      km.pk_a, km.pk_b, km.evaluator_secret, cp.q, internal_engine);
  const double cut = 6.0 * cp.sigma;
  for (std::int64_t gj : recovered) {
    require(std::llabs(gj) <= static_cast<std::int64_t>(cut) + 1,
            errc::param_error, "public-key residual quotient out of range");
  }
  return km;
}

// ---------------------------------------------------------------------------
// Pipeline context
// ---------------------------------------------------------------------------

// Owns the transform engines and the products that never change for a fixed
// key set: a * s_i per party and a * SK_C1. With those cached, wrapping is a
// single ring addition and aggregation is a fold of additions.
class CryptoContext {
 public:
  explicit CryptoContext(KeyMaterial km) : km_(std::move(km)) {
    validate_crypto_params(km_.params);
    const CryptoParams& cp = km_.params;
    internal_engine_ = std::make_unique<MulEngine>(
        cp.internal_ring, std::vector<std::uint64_t>{cp.p, cp.p0});
    switched_engine_ = std::make_unique<MulEngine>(
        RingParams{cp.internal_ring.degree, cp.p0},
        std::vector<std::uint64_t>{cp.p0});
    external_engine_ = std::make_unique<MulEngine>(
        cp.external_ring, std::vector<std::uint64_t>{cp.p, cp.p0});

    pk_a_prep_ = internal_engine_->prepare(km_.pk_a);
    pk_b_prep_ = internal_engine_->prepare(km_.pk_b);

    party_masks_.reserve(km_.party_secrets.size());
    const PreparedOperand ext_a = external_engine_->prepare(km_.external_a);
    for (const RingElement& s : km_.party_secrets) {
      party_masks_.push_back(external_engine_->mul_prepared(s, ext_a));
    }
    ledger_mask_ = external_engine_->mul_prepared(km_.ledger_secret, ext_a);

    // The evaluator secret reduced into the post-switch ring.
    RingElement es = km_.evaluator_secret;
    es.params.modulus = cp.p0;
    for (auto& c : es.coeffs) c %= cp.p0;
    evaluator_secret_p0_ = std::move(es);
  }

  const KeyMaterial& keys() const { return km_; }
  const CryptoParams& params() const { return km_.params; }

  // c0 = b*v + q*e0 + gd, c1 = a*v + q*e1 with v ternary and e0, e1 gaussian,
  // all freshly drawn per call.
  InternalCiphertext encrypt_internal(const std::vector<std::int64_t>& gd,
                                      RngStream& rng) const {
    const CryptoParams& cp = km_.params;
    const RingParams& ir = cp.internal_ring;
    require(gd.size() == ir.degree, errc::dimension_error,
            "plaintext length must equal the internal ring degree");

    std::vector<std::int64_t> reduced(gd.size());
    const std::int64_t q = static_cast<std::int64_t>(cp.q);
    for (std::size_t i = 0; i < gd.size(); ++i) {
      std::int64_t r = gd[i] % q;
      if (r > q / 2) r -= q;
      if (r < -(q / 2)) r += q;
      reduced[i] = r;
    }

    const RingElement v = ring_sample(ir, SamplerSpec::ternary(ir.degree), rng);
    const RingElement e0 =
        ring_sample(ir, SamplerSpec::gaussian(ir.degree, cp.sigma), rng);
    const RingElement e1 =
        ring_sample(ir, SamplerSpec::gaussian(ir.degree, cp.sigma), rng);

    InternalCiphertext ct;
    ct.c0 = ring_add(internal_engine_->mul_prepared(v, pk_b_prep_),
                     ring_add(ring_scalar_mul(e0, cp.q), to_ring(ir, reduced)));
    ct.c1 = ring_add(internal_engine_->mul_prepared(v, pk_a_prep_),
                     ring_scalar_mul(e1, cp.q));
    ct.noise_bound = fresh_noise_bound(cp);
    ct.plain_factor = 1;
    return ct;
  }

  // Homomorphic addition: componentwise, noise bounds add.
  InternalCiphertext ct_add(const InternalCiphertext& x,
                            const InternalCiphertext& y) const {
    require(x.plain_factor == y.plain_factor, errc::param_error,
            "ciphertexts are at different switch levels");
    InternalCiphertext out;
    out.c0 = ring_add(x.c0, y.c0);
    out.c1 = ring_add(x.c1, y.c1);
    out.noise_bound = x.noise_bound + y.noise_bound;
    out.plain_factor = x.plain_factor;
    return out;
  }

  // Wraps an internal ciphertext into party i's external share: the 2d
  // coefficients of (c0 || c1) are decomposed into base-b digits (with a
  // coin-flipped extra p1 folded in when it fits, so shares vary run to
  // run), laid out digit-major in the external ring, and masked by a*s_i.
  ExternalShare gadget_wrap(const InternalCiphertext& ct,
                            std::uint32_t party_index, RngStream& rng) const {
    const CryptoParams& cp = km_.params;
    require(party_index < km_.n_parties, errc::param_error,
            "party index out of range");
    require(ct.c0.params == cp.internal_ring, errc::ring_mismatch,
            "only fresh p1 ciphertexts can be wrapped");
    require(ct.plain_factor == 1, errc::param_error,
            "cannot wrap a modulus-switched ciphertext");
    const std::uint32_t d = cp.internal_ring.degree;
    const std::uint32_t l = cp.l;
    require(2ULL * d * l <= cp.external_ring.degree, errc::param_error,
            "external ring too small to hold 2*d*l digits");

    const unsigned __int128 p1 = cp.internal_ring.modulus;
    unsigned __int128 capacity = 1;
    for (std::uint32_t k = 0; k < l; ++k) capacity *= cp.base;

    RingElement e = ring_zero(cp.external_ring);
    for (std::uint32_t j = 0; j < 2 * d; ++j) {
      unsigned __int128 val =
          j < d ? ct.c0.coeffs[j] : ct.c1.coeffs[j - d];
      if (val + p1 < capacity && (rng.next_u64() & 1)) val += p1;
      for (std::uint32_t k = 0; k < l; ++k) {
        e.coeffs[static_cast<std::size_t>(j) * l + k] =
            static_cast<std::uint64_t>(val % cp.base);
        val /= cp.base;
      }
    }

    ExternalShare share;
    share.c = ring_add(party_masks_[party_index], e);
    share.issuer = party_index;
    share.noise_bound = ct.noise_bound;
    return share;
  }

  // Ledger-side fold: sum all shares, add a*SK_C1 to cancel every mask, and
  // recompose the digit sums into the aggregated internal ciphertext. Only
  // the full share set cancels; anything else is rejected.
  InternalCiphertext aggregate_and_unwrap(
      const std::vector<ExternalShare>& shares) const {
    const CryptoParams& cp = km_.params;
    std::vector<bool> seen(km_.n_parties, false);
    require(shares.size() == km_.n_parties, errc::party_set_mismatch,
            "aggregation requires exactly one share per enrolled party");
    for (const ExternalShare& s : shares) {
      require(s.issuer < km_.n_parties && !seen[s.issuer],
              errc::party_set_mismatch,
              "aggregation requires exactly one share per enrolled party");
      require(s.c.params == cp.external_ring, errc::ring_mismatch,
              "share lives in the wrong ring");
      seen[s.issuer] = true;
    }

    RingElement acc = ledger_mask_;
    double noise = 0.0;
    for (const ExternalShare& s : shares) {
      acc = ring_add(acc, s.c);
      noise += s.noise_bound;
    }

    const std::uint32_t d = cp.internal_ring.degree;
    const std::uint64_t p1 = cp.internal_ring.modulus;
    InternalCiphertext out;
    out.c0 = ring_zero(cp.internal_ring);
    out.c1 = ring_zero(cp.internal_ring);
    for (std::uint32_t j = 0; j < 2 * d; ++j) {
      unsigned __int128 value = 0;
      unsigned __int128 power = 1;
      for (std::uint32_t k = 0; k < cp.l; ++k) {
        value += power * acc.coeffs[static_cast<std::size_t>(j) * cp.l + k] %
                 p1;
        value %= p1;
        power = power * cp.base % p1;
      }
      const std::uint64_t coeff = static_cast<std::uint64_t>(value);
      if (j < d) {
        out.c0.coeffs[j] = coeff;
      } else {
        out.c1.coeffs[j - d] = coeff;
      }
    }
    out.noise_bound = noise;
    out.plain_factor = 1;
    return out;
  }

  // Rescales a p1 ciphertext to p0 by dividing by p: each coefficient is
  // rounded to the nearest multiple and nudged so that p * c' = c (mod q).
  // The nudge preserves the plaintext up to the known invertible factor
  // p^{-1} mod q, which is recorded in plain_factor and undone at
  // decryption; noise shrinks by a factor of p plus a rounding term.
  InternalCiphertext modulus_switch(const InternalCiphertext& ct) const {
    const CryptoParams& cp = km_.params;
    require(ct.c0.params == cp.internal_ring, errc::ring_mismatch,
            "only p1 ciphertexts can be switched");
    const std::uint64_t p = cp.p;
    const std::uint64_t p0 = cp.p0;
    const std::uint64_t q = cp.q;
    const std::uint64_t p_inv_q = pow_mod(p % q, q - 2, q);

    const double d = static_cast<double>(cp.internal_ring.degree);
    const double rounding =
        (static_cast<double>(q) + 1.0) / 2.0 * (1.0 + 6.0 * cp.sigma * d) +
        1.0;
    const double new_bound =
        ct.noise_bound / static_cast<double>(p) + rounding;
    require(new_bound < static_cast<double>(p0) / 2.0, errc::noise_overflow,
            "noise after switching would exceed p0/2");

    const RingParams target{cp.internal_ring.degree, p0};
    auto switch_component = [&](const RingElement& comp) {
      RingElement out = ring_zero(target);
      for (std::uint32_t i = 0; i < comp.coeffs.size(); ++i) {
        const std::uint64_t c = comp.coeffs[i];
        const std::uint64_t r = (c + p / 2) / p;
        const std::uint64_t target_res = mul_mod(c % q, p_inv_q, q);
        std::int64_t delta =
            static_cast<std::int64_t>(target_res) -
            static_cast<std::int64_t>((r % q));
        delta %= static_cast<std::int64_t>(q);
        if (delta > static_cast<std::int64_t>(q / 2)) {
          delta -= static_cast<std::int64_t>(q);
        }
        if (delta < -static_cast<std::int64_t>(q / 2)) {
          delta += static_cast<std::int64_t>(q);
        }
        std::int64_t adjusted = static_cast<std::int64_t>(r) + delta;
        std::int64_t reduced = adjusted % static_cast<std::int64_t>(p0);
        if (reduced < 0) reduced += static_cast<std::int64_t>(p0);
        out.coeffs[i] = static_cast<std::uint64_t>(reduced);
      }
      return out;
    };

    InternalCiphertext out;
    out.c0 = switch_component(ct.c0);
    out.c1 = switch_component(ct.c1);
    out.noise_bound = new_bound;
    out.plain_factor = mul_mod(ct.plain_factor, p % q, q);
    return out;
  }

  // Decrypts under the evaluator secret: centered(c0 - s~*c1) mod q, times
  // the accumulated switch factor. Rejects ciphertexts whose tracked bound
  // no longer fits the ring, and cross-checks the measured noise magnitude
  // against the tracked bound so a mangled or partially aggregated input
  // fails loudly instead of decoding to garbage.
  std::vector<std::int64_t> decrypt_sum(const InternalCiphertext& ct) const {
    const CryptoParams& cp = km_.params;
    const std::uint64_t m = ct.c0.params.modulus;
    require(ct.c0.params == ct.c1.params, errc::ring_mismatch,
            "ciphertext components disagree");
    require(m == cp.internal_ring.modulus || m == cp.p0, errc::ring_mismatch,
            "ciphertext modulus is neither p1 nor p0");
    require(ct.noise_bound < static_cast<double>(m) / 2.0,
            errc::noise_overflow, "tracked noise bound exceeds modulus/2");

    const bool switched = (m == cp.p0);
    const MulEngine& engine =
        switched ? *switched_engine_ : *internal_engine_;
    const RingElement& secret =
        switched ? evaluator_secret_p0_ : km_.evaluator_secret;
    const RingElement masked = ring_sub(ct.c0, engine.mul(secret, ct.c1));

    const std::int64_t q = static_cast<std::int64_t>(cp.q);
    const std::int64_t half_q = q / 2;
    const std::uint64_t factor = ct.plain_factor % cp.q;
    std::vector<std::int64_t> out;
    out.reserve(masked.coeffs.size());
    for (std::int64_t lifted : to_vec(masked)) {
      std::int64_t r = lifted % q;
      if (r > half_q) r -= q;
      if (r < -half_q) r += q;
      require(std::fabs(static_cast<double>(lifted - r)) <= ct.noise_bound,
              errc::noise_overflow,
              "measured noise exceeds the tracked bound");
      std::int64_t plain = r;
      if (factor != 1) {
        std::int64_t canonical = r % q;
        if (canonical < 0) canonical += q;
        std::int64_t scaled = static_cast<std::int64_t>(
            mul_mod(static_cast<std::uint64_t>(canonical), factor, cp.q));
        if (scaled > half_q) scaled -= q;
        plain = scaled;
      }
      out.push_back(plain);
    }
    return out;
  }

 private:
  KeyMaterial km_;
  std::unique_ptr<MulEngine> internal_engine_;
  std::unique_ptr<MulEngine> switched_engine_;
  std::unique_ptr<MulEngine> external_engine_;
  PreparedOperand pk_a_prep_;
  PreparedOperand pk_b_prep_;
  std::vector<RingElement> party_masks_;
  RingElement ledger_mask_;
  RingElement evaluator_secret_p0_;
};

// ---------------------------------------------------------------------------
// Secret-matrix linear masking
// ---------------------------------------------------------------------------

using Matrix = std::vector<std::vector<double>>;

namespace detail {

struct MaskInverse {
  Matrix inverse;
  double condition;
};

inline double inf_norm(const Matrix& m) {
  double best = 0.0;
  for (const auto& row : m) {
    double s = 0.0;
    for (double x : row) s += std::fabs(x);
    best = std::max(best, s);
  }
  return best;
}

inline MaskInverse invert_mask(const Matrix& phi) {
  const std::size_t s = phi.size();
  Matrix a = phi;
  Matrix inv(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < s; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < s; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    if (std::fabs(a[pivot][col]) < 1e-300) {
      fail(errc::singular_mask, "mask matrix is singular");
    }
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (std::size_t j = 0; j < s; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < s; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < s; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  MaskInverse out;
  out.condition = inf_norm(phi) * inf_norm(inv);
  out.inverse = std::move(inv);
  return out;
}

inline void validate_mask(const Matrix& phi) {
  require(!phi.empty(), errc::dimension_error, "mask matrix is empty");
  const std::size_t s = phi.size();
  for (const auto& row : phi) {
    require(row.size() == s, errc::dimension_error,
            "mask matrix must be square");
    double sum = 0.0;
    for (double x : row) {
      require(x >= 0.0 && x <= 1.0, errc::param_error,
              "mask entries must lie in [0, 1]");
      sum += x;
    }
    require(std::fabs(sum - 1.0) <= 1e-9, errc::param_error,
            "mask rows must sum to 1");
  }
  const MaskInverse mi = invert_mask(phi);
  require(mi.condition <= 1e12, errc::singular_mask,
          "mask matrix condition number exceeds 1e12");
}

}  // namespace detail

// Random row-stochastic mask with entries in [0, 1).
inline Matrix make_mask(std::size_t s, RngStream& rng) {
  require(s >= 1, errc::invalid_argument, "mask size must be positive");
  Matrix phi(s, std::vector<double>(s, 0.0));
  for (auto& row : phi) {
    double sum = 0.0;
    for (auto& x : row) {
      x = rng.next_double() + 1e-3;
      sum += x;
    }
    for (auto& x : row) x /= sum;
  }
  return phi;
}

// masked = phi * Z: each masked row is a convex mixture of data rows, so no
// single row of Z is exposed while column sums survive exactly.
inline Matrix linear_mask(const Matrix& z, const Matrix& phi) {
  detail::validate_mask(phi);
  require(z.size() == phi.size(), errc::dimension_error,
          "mask size must match the data row count");
  const std::size_t s = phi.size();
  const std::size_t t = z.empty() ? 0 : z[0].size();
  for (const auto& row : z) {
    require(row.size() == t, errc::dimension_error, "ragged data matrix");
  }
  Matrix out(s, std::vector<double>(t, 0.0));
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      const double f = phi[i][k];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < t; ++j) out[i][j] += f * z[k][j];
    }
  }
  return out;
}

inline Matrix unmask(const Matrix& masked, const Matrix& phi) {
  detail::validate_mask(phi);
  require(masked.size() == phi.size(), errc::dimension_error,
          "mask size must match the masked row count");
  const detail::MaskInverse mi = detail::invert_mask(phi);
  const std::size_t s = phi.size();
  const std::size_t t = masked.empty() ? 0 : masked[0].size();
  Matrix out(s, std::vector<double>(t, 0.0));
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      const double f = mi.inverse[i][k];
      for (std::size_t j = 0; j < t; ++j) out[i][j] += f * masked[k][j];
    }
  }
  return out;
}

}  // namespace fedtangle

#endif  // FEDTANGLE_SECURE_AGG_HPP_
