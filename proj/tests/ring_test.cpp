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

#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "fedtangle/error.hpp"
#include "fedtangle/ntt.hpp"
#include "fedtangle/primes.hpp"
#include "fedtangle/ring.hpp"
#include "fedtangle/rng.hpp"

namespace fedtangle {
namespace {

// Independent schoolbook negacyclic convolution, the oracle every other
// multiplication path is checked against.
RingElement oracle_mul(const RingElement& a, const RingElement& b) {
  const std::uint32_t d = a.params.degree;
  const unsigned __int128 m = a.params.modulus;
  std::vector<std::uint64_t> out(d, 0);
  for (std::uint32_t i = 0; i < d; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      const unsigned __int128 prod =
          static_cast<unsigned __int128>(a.coeffs[i]) * b.coeffs[j] % m;
      const std::uint32_t k = (i + j) % d;
      unsigned __int128 cur = out[k];
      if (i + j < d) {
        cur = (cur + prod) % m;
      } else {
        cur = (cur + m - prod) % m;
      }
      out[k] = static_cast<std::uint64_t>(cur);
    }
  }
  RingElement r;
  r.params = a.params;
  r.coeffs = std::move(out);
  return r;
}

RingElement random_element(const RingParams& rp, RngStream& rng) {
  RingElement r;
  r.params = rp;
  r.coeffs.resize(rp.degree);
  for (auto& c : r.coeffs) c = rng.next_below(rp.modulus);
  return r;
}

TEST(RngStream, DeterministicAcrossInstances) {
  RngStream a(12345);
  RngStream b(12345);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
}

TEST(RngStream, DeriveDoesNotConsumeParentState) {
  RngStream a(7);
  RngStream b(7);
  (void)a.derive("child");
  (void)a.derive("child", 3);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
}

TEST(RngStream, DerivedStreamsDiffer) {
  RngStream root(99);
  RngStream c0 = root.derive("x", 0);
  RngStream c1 = root.derive("x", 1);
  RngStream c2 = root.derive("y", 0);
  EXPECT_NE(c0.next_u64(), c1.next_u64());
  EXPECT_NE(c0.next_u64(), c2.next_u64());
}

TEST(RngStream, NextBelowInRange) {
  RngStream rng(5);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LT(rng.next_below(7), 7u);
  }
}

TEST(Primes, MillerRabinKnownValues) {
  EXPECT_TRUE(is_prime(2));
  EXPECT_TRUE(is_prime(65537));
  EXPECT_TRUE(is_prime(12289));
  EXPECT_FALSE(is_prime(1));
  EXPECT_FALSE(is_prime(65536));
  EXPECT_FALSE(is_prime(1ULL << 40));
  EXPECT_TRUE(is_prime((1ULL << 61) - 1));  // Mersenne prime
}

TEST(Primes, NextPrimeCongruent) {
  // Smallest prime >= 2^10 congruent to 1 mod 1024 is 12289.
  EXPECT_EQ(next_prime_congruent(1ULL << 10, 1024), 12289u);
  const std::uint64_t p = next_prime_congruent((1ULL << 20) + 1, 512);
  EXPECT_TRUE(is_prime(p));
  EXPECT_EQ(p % 512, 1u);
  EXPECT_GE(p, (1ULL << 20) + 1);
}

TEST(Primes, RootOfUnityHasExactOrder) {
  const std::uint64_t p = 12289;
  const std::uint64_t w = root_of_unity(1024, p);
  EXPECT_EQ(pow_mod(w, 1024, p), 1u);
  EXPECT_NE(pow_mod(w, 512, p), 1u);
}

TEST(RingArith, MulByOneIsIdentity) {
  const RingParams rp{8, 17};
  RngStream rng(1);
  RingElement one = ring_zero(rp);
  one.coeffs[0] = 1;
  for (int t = 0; t < 20; ++t) {
    const RingElement p = random_element(rp, rng);
    EXPECT_EQ(ring_mul(p, one).coeffs, p.coeffs);
  }
}

TEST(RingArith, NegacyclicWraparound) {
  // X^{d-1} * X = X^d = -1 mod (X^d + 1).
  const RingParams rp{8, 17};
  RingElement xdm1 = ring_zero(rp);
  xdm1.coeffs[7] = 1;
  RingElement x = ring_zero(rp);
  x.coeffs[1] = 1;
  const RingElement prod = ring_mul(xdm1, x);
  EXPECT_EQ(prod.coeffs[0], 16u);  // m - 1
  for (std::uint32_t i = 1; i < 8; ++i) {
    EXPECT_EQ(prod.coeffs[i], 0u);
  }
}

TEST(RingArith, MatchesSchoolbookOracle) {
  const RingParams rp{8, 17};
  RngStream rng(42);
  for (int t = 0; t < 200; ++t) {
    const RingElement a = random_element(rp, rng);
    const RingElement b = random_element(rp, rng);
    EXPECT_EQ(ring_mul(a, b).coeffs, oracle_mul(a, b).coeffs);
  }
}

TEST(RingArith, RingAxiomsOnRandomTriples) {
  const RingParams rp{16, 257};
  RngStream rng(3);
  for (int t = 0; t < 50; ++t) {
    const RingElement a = random_element(rp, rng);
    const RingElement b = random_element(rp, rng);
    const RingElement c = random_element(rp, rng);
    // associativity
    EXPECT_EQ(ring_mul(ring_mul(a, b), c).coeffs,
              ring_mul(a, ring_mul(b, c)).coeffs);
    // distributivity
    EXPECT_EQ(ring_mul(a, ring_add(b, c)).coeffs,
              ring_add(ring_mul(a, b), ring_mul(a, c)).coeffs);
  }
}

TEST(RingArith, MismatchedParamsRejected) {
  const RingParams rp1{8, 17};
  const RingParams rp2{8, 19};
  RngStream rng(1);
  const RingElement a = random_element(rp1, rng);
  const RingElement b = random_element(rp2, rng);
  try {
    ring_mul(a, b);
    FAIL() << "expected RingMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::ring_mismatch);
  }
}

TEST(RingParamsValidation, RejectsBadShapes) {
  EXPECT_THROW(validate_ring_params(RingParams{6, 17}), Error);   // not pow2
  EXPECT_THROW(validate_ring_params(RingParams{8, 16}), Error);   // even m
  EXPECT_THROW(validate_ring_params(RingParams{8, 1ULL << 62}), Error);
}

TEST(VecRingMaps, ZeroFixedPoint) {
  const RingParams rp{4, 17};
  const std::vector<std::int64_t> zeros(4, 0);
  EXPECT_EQ(to_vec(to_ring(rp, zeros)), zeros);
}

TEST(VecRingMaps, IdentityRoundTrip) {
  const RingParams rp{4, 17};
  const std::vector<std::int64_t> v{1, 2, 3, 4};
  EXPECT_EQ(to_vec(to_ring(rp, v)), v);
}

TEST(VecRingMaps, NegativesReduceCanonically) {
  const RingParams rp{4, 17};
  const RingElement r = to_ring(rp, std::vector<std::int64_t>{-1, -2, 5, 0});
  EXPECT_EQ(r.coeffs[0], 16u);
  EXPECT_EQ(r.coeffs[1], 15u);
  // Centered lift brings them back.
  const std::vector<std::int64_t> back = to_vec(r);
  EXPECT_EQ(back[0], -1);
  EXPECT_EQ(back[1], -2);
  EXPECT_EQ(back[2], 5);
}

TEST(VecRingMaps, WrongLengthRejected) {
  const RingParams rp{4, 17};
  try {
    to_ring(rp, std::vector<std::int64_t>{1, 2, 3});
    FAIL() << "expected DimensionError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::dimension_error);
  }
}

TEST(Samplers, TernaryLaw) {
  RngStream rng(2026);
  const SamplerSpec spec = SamplerSpec::ternary(1000000);
  const std::vector<std::int64_t> draws = sample(spec, rng);
  std::size_t neg = 0, zero = 0, pos = 0;
  for (std::int64_t v : draws) {
    ASSERT_TRUE(v == -1 || v == 0 || v == 1);
    if (v < 0) ++neg;
    if (v == 0) ++zero;
    if (v > 0) ++pos;
  }
  const double n = static_cast<double>(draws.size());
  EXPECT_NEAR(neg / n, 0.25, 0.003);
  EXPECT_NEAR(zero / n, 0.50, 0.003);
  EXPECT_NEAR(pos / n, 0.25, 0.003);
}

TEST(Samplers, GaussianMeanAndTailCut) {
  RngStream rng(7);
  const double sigma = 3.2;
  const SamplerSpec spec = SamplerSpec::gaussian(1000000, sigma);
  const std::vector<std::int64_t> draws = sample(spec, rng);
  double sum = 0.0;
  for (std::int64_t v : draws) {
    EXPECT_LE(std::llabs(v), static_cast<long long>(std::ceil(6 * sigma)));
    sum += static_cast<double>(v);
  }
  EXPECT_NEAR(sum / static_cast<double>(draws.size()), 0.0, 0.02);
}

TEST(Samplers, UniformChiSquare) {
  RngStream rng(11);
  const SamplerSpec spec = SamplerSpec::uniform(1000000, 5);
  const std::vector<std::int64_t> draws = sample(spec, rng);
  std::vector<std::size_t> counts(5, 0);
  for (std::int64_t v : draws) {
    ASSERT_GE(v, 0);
    ASSERT_LT(v, 5);
    ++counts[static_cast<std::size_t>(v)];
  }
  const double expected = 1000000.0 / 5.0;
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    const double diff = static_cast<double>(c) - expected;
    chi2 += diff * diff / expected;
    EXPECT_NEAR(static_cast<double>(c) / 1000000.0, 0.2, 0.003);
  }
  // Critical value for df = 4 at p = 0.001; exceeding it would mean the
  // uniform hypothesis is rejected.
  EXPECT_LT(chi2, 18.4668);
}

TEST(Samplers, DeterministicUnderSeed) {
  RngStream a(31337);
  RngStream b(31337);
  const SamplerSpec spec = SamplerSpec::gaussian(1000, 3.2);
  EXPECT_EQ(sample(spec, a), sample(spec, b));
}

TEST(Samplers, InvalidSpecsRejected) {
  RngStream rng(1);
  try {
    sample(SamplerSpec::gaussian(10, 0.0), rng);
    FAIL() << "expected InvalidSamplerSpec";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::invalid_sampler_spec);
  }
  try {
    sample(SamplerSpec::uniform(10, 1), rng);
    FAIL() << "expected InvalidSamplerSpec";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::invalid_sampler_spec);
  }
}

// The transform-based fast path must agree with the schoolbook baseline on
// every input, including the CRT composite-modulus route.
TEST(MulEngine, NttMatchesSchoolbookSinglePrime) {
  const RingParams rp{64, 12289};  // 12289 = 1 mod 128
  MulEngine engine(rp, {12289});
  RngStream rng(17);
  for (int t = 0; t < 100; ++t) {
    const RingElement a = random_element(rp, rng);
    const RingElement b = random_element(rp, rng);
    EXPECT_EQ(engine.mul(a, b).coeffs, ring_mul(a, b).coeffs);
  }
}

TEST(MulEngine, NttMatchesSchoolbookCrtComposite) {
  const std::uint64_t p = 12289;     // 1 mod 1024
  const std::uint64_t p0 = 133121;   // 1 mod 1024
  const RingParams rp{64, p * p0};
  MulEngine engine(rp, {p, p0});
  RngStream rng(23);
  for (int t = 0; t < 50; ++t) {
    const RingElement a = random_element(rp, rng);
    const RingElement b = random_element(rp, rng);
    EXPECT_EQ(engine.mul(a, b).coeffs, ring_mul(a, b).coeffs);
  }
}

TEST(MulEngine, FallbackForNonNttModulus) {
  const RingParams rp{8, 23};  // 23 != 1 mod 16, no NTT possible
  MulEngine engine(rp, {23});
  RngStream rng(29);
  const RingElement a = random_element(rp, rng);
  const RingElement b = random_element(rp, rng);
  EXPECT_EQ(engine.mul(a, b).coeffs, ring_mul(a, b).coeffs);
}

TEST(MulEngine, PreparedOperandMatchesPlainMul) {
  const RingParams rp{64, 12289};
  MulEngine engine(rp, {12289});
  RngStream rng(31);
  const RingElement a = random_element(rp, rng);
  const PreparedOperand prep = engine.prepare(a);
  for (int t = 0; t < 20; ++t) {
    const RingElement b = random_element(rp, rng);
    EXPECT_EQ(engine.mul_prepared(b, prep).coeffs, engine.mul(a, b).coeffs);
  }
}

TEST(MulEngine, WrongFactorizationRejected) {
  const RingParams rp{8, 15};
  try {
    MulEngine engine(rp, {3, 7});  // 21 != 15
    FAIL() << "expected ParamError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::param_error);
  }
}

}  // namespace
}  // namespace fedtangle
