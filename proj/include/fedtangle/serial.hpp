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

// Binary formats for keys, ciphertexts and shares. Every blob starts with an
// 8-byte magic, a version byte and a type tag, followed by a digest of the
// parameter set it was produced under; coefficient arrays are fixed-width
// little-endian. Readers reject wrong magic, version, type or digest.

#ifndef FEDTANGLE_SERIAL_HPP_
#define FEDTANGLE_SERIAL_HPP_

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fedtangle/dag.hpp"
#include "fedtangle/error.hpp"
#include "fedtangle/secure_agg.hpp"

namespace fedtangle {

inline constexpr unsigned char kMagic[8] = {'F', 'E', 'D', 'T',
                                            'N', 'G', 'L', 'E'};
inline constexpr std::uint8_t kFormatVersion = 1;

enum class BlobType : std::uint8_t {
  public_key = 1,
  party_secret = 2,
  ledger_secret = 3,
  evaluator_secret = 4,
  ciphertext = 5,
  share = 6,
};

class ByteWriter {
 public:
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

  void u8(std::uint8_t v) { buf_.push_back(v); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
  }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u64(bits);
  }

  void raw(const void* data, std::size_t len) {
    const std::uint8_t* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + len);
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf_[pos_++]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf_[pos_++]) << (8 * i);
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    require(pos_ + n <= buf_.size(), errc::io_error, "blob is truncated");
  }

  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

// Digest binding a blob to the parameter set that produced it.
inline std::uint64_t params_digest(const CryptoParams& cp) {
  ByteWriter w;
  w.u32(cp.internal_ring.degree);
  w.u64(cp.internal_ring.modulus);
  w.u32(cp.external_ring.degree);
  w.u64(cp.external_ring.modulus);
  w.u64(cp.q);
  w.u64(cp.p);
  w.u64(cp.p0);
  w.f64(cp.sigma);
  w.u32(cp.base);
  w.u32(cp.l);
  return fnv1a64(w.bytes().data(), w.bytes().size());
}

inline void write_ring_element(ByteWriter& w, const RingElement& x) {
  w.u32(x.params.degree);
  w.u64(x.params.modulus);
  for (std::uint64_t c : x.coeffs) w.u64(c);
}

inline RingElement read_ring_element(ByteReader& r) {
  RingElement x;
  x.params.degree = r.u32();
  x.params.modulus = r.u64();
  validate_ring_params(x.params);
  x.coeffs.resize(x.params.degree);
  for (std::uint64_t& c : x.coeffs) {
    c = r.u64();
    require(c < x.params.modulus, errc::io_error,
            "coefficient exceeds the stored modulus");
  }
  return x;
}

inline void write_header(ByteWriter& w, BlobType type,
                         std::uint64_t digest) {
  w.raw(kMagic, sizeof(kMagic));
  w.u8(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(type));
  w.u64(digest);
}

inline void read_header(ByteReader& r, BlobType expected,
                        std::uint64_t expected_digest) {
  unsigned char magic[8];
  for (unsigned char& b : magic) b = r.u8();
  require(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, errc::io_error,
          "bad magic");
  require(r.u8() == kFormatVersion, errc::io_error,
          "unsupported format version");
  require(r.u8() == static_cast<std::uint8_t>(expected), errc::io_error,
          "blob type does not match");
  require(r.u64() == expected_digest, errc::io_error,
          "blob was produced under different parameters");
}

// --- public key (parameters + public ring elements + party count) ---------

inline std::vector<std::uint8_t> serialize_public(const KeyMaterial& km) {
  ByteWriter w;
  write_header(w, BlobType::public_key, params_digest(km.params));
  w.u32(km.params.internal_ring.degree);
  w.u64(km.params.internal_ring.modulus);
  w.u32(km.params.external_ring.degree);
  w.u64(km.params.external_ring.modulus);
  w.u64(km.params.q);
  w.u64(km.params.p);
  w.u64(km.params.p0);
  w.f64(km.params.sigma);
  w.u32(km.params.base);
  w.u32(km.params.l);
  w.u32(km.n_parties);
  write_ring_element(w, km.pk_a);
  write_ring_element(w, km.pk_b);
  write_ring_element(w, km.external_a);
  return w.bytes();
}

// Parameters are read first, so the header digest can be verified against
// the blob's own contents.
inline KeyMaterial deserialize_public(const std::vector<std::uint8_t>& buf) {
  ByteReader r(buf);
  unsigned char magic[8];
  for (unsigned char& b : magic) b = r.u8();
  require(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, errc::io_error,
          "bad magic");
  require(r.u8() == kFormatVersion, errc::io_error,
          "unsupported format version");
  require(r.u8() == static_cast<std::uint8_t>(BlobType::public_key),
          errc::io_error, "blob type does not match");
  const std::uint64_t digest = r.u64();

  KeyMaterial km;
  km.params.internal_ring.degree = r.u32();
  km.params.internal_ring.modulus = r.u64();
  km.params.external_ring.degree = r.u32();
  km.params.external_ring.modulus = r.u64();
  km.params.q = r.u64();
  km.params.p = r.u64();
  km.params.p0 = r.u64();
  km.params.sigma = r.f64();
  km.params.base = r.u32();
  km.params.l = r.u32();
  require(params_digest(km.params) == digest, errc::io_error,
          "parameter digest mismatch");
  validate_crypto_params(km.params);
  km.n_parties = r.u32();
  km.pk_a = read_ring_element(r);
  km.pk_b = read_ring_element(r);
  km.external_a = read_ring_element(r);
  check_same_ring(km.pk_a, km.pk_b);
  require(km.pk_a.params == km.params.internal_ring, errc::io_error,
          "public key ring does not match parameters");
  require(km.external_a.params == km.params.external_ring, errc::io_error,
          "external element ring does not match parameters");
  require(r.exhausted(), errc::io_error, "trailing bytes in blob");
  return km;
}

// --- secrets ----------------------------------------------------------------

inline std::vector<std::uint8_t> serialize_secret(const CryptoParams& cp,
                                                  BlobType type,
                                                  const RingElement& s,
                                                  std::uint32_t index = 0) {
  ByteWriter w;
  write_header(w, type, params_digest(cp));
  w.u32(index);
  write_ring_element(w, s);
  return w.bytes();
}

inline RingElement deserialize_secret(const CryptoParams& cp, BlobType type,
                                      const std::vector<std::uint8_t>& buf,
                                      std::uint32_t expected_index = 0) {
  ByteReader r(buf);
  read_header(r, type, params_digest(cp));
  require(r.u32() == expected_index, errc::io_error,
          "secret index does not match");
  RingElement s = read_ring_element(r);
  require(r.exhausted(), errc::io_error, "trailing bytes in blob");
  return s;
}

// --- ciphertexts and shares -------------------------------------------------

inline std::vector<std::uint8_t> serialize_ciphertext(
    const CryptoParams& cp, const InternalCiphertext& ct) {
  ByteWriter w;
  write_header(w, BlobType::ciphertext, params_digest(cp));
  w.f64(ct.noise_bound);
  w.u64(ct.plain_factor);
  write_ring_element(w, ct.c0);
  write_ring_element(w, ct.c1);
  return w.bytes();
}

inline InternalCiphertext deserialize_ciphertext(
    const CryptoParams& cp, const std::vector<std::uint8_t>& buf) {
  ByteReader r(buf);
  read_header(r, BlobType::ciphertext, params_digest(cp));
  InternalCiphertext ct;
  ct.noise_bound = r.f64();
  ct.plain_factor = r.u64();
  ct.c0 = read_ring_element(r);
  ct.c1 = read_ring_element(r);
  check_same_ring(ct.c0, ct.c1);
  require(r.exhausted(), errc::io_error, "trailing bytes in blob");
  return ct;
}

inline std::vector<std::uint8_t> serialize_share(const CryptoParams& cp,
                                                 const ExternalShare& sh) {
  ByteWriter w;
  write_header(w, BlobType::share, params_digest(cp));
  w.u32(sh.issuer);
  w.f64(sh.noise_bound);
  write_ring_element(w, sh.c);
  return w.bytes();
}

inline ExternalShare deserialize_share(const CryptoParams& cp,
                                       const std::vector<std::uint8_t>& buf) {
  ByteReader r(buf);
  read_header(r, BlobType::share, params_digest(cp));
  ExternalShare sh;
  sh.issuer = r.u32();
  sh.noise_bound = r.f64();
  sh.c = read_ring_element(r);
  require(sh.c.params == cp.external_ring, errc::io_error,
          "share ring does not match parameters");
  require(r.exhausted(), errc::io_error, "trailing bytes in blob");
  return sh;
}

// --- file helpers -----------------------------------------------------------

// Writes to "<path>.partial" and renames, so a crash never leaves a
// half-written file under the final name.
inline void write_file_atomic(const std::filesystem::path& path,
                              const void* data, std::size_t len) {
  const std::filesystem::path tmp = path.string() + ".partial";
  std::FILE* f = std::fopen(tmp.string().c_str(), "wb");
  require(f != nullptr, errc::io_error,
          "cannot open for writing: " + tmp.string());
  const std::size_t written = len == 0 ? 0 : std::fwrite(data, 1, len, f);
  const int closed = std::fclose(f);
  require(written == len && closed == 0, errc::io_error,
          "short write: " + tmp.string());
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, errc::io_error, "cannot rename into place: " + path.string());
}

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::vector<std::uint8_t>& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

inline std::vector<std::uint8_t> read_file(
    const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  require(f != nullptr, errc::io_error, "cannot open: " + path.string());
  std::vector<std::uint8_t> out;
  unsigned char chunk[4096];
  std::size_t got;
  while ((got = std::fread(chunk, 1, sizeof(chunk), f)) > 0) {
    out.insert(out.end(), chunk, chunk + got);
  }
  const bool bad = std::ferror(f) != 0;
  std::fclose(f);
  require(!bad, errc::io_error, "read failed: " + path.string());
  return out;
}

// --- key directory layout ---------------------------------------------------

inline void save_key_material(const KeyMaterial& km,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "pk.key", serialize_public(km));
  for (std::uint32_t i = 0; i < km.n_parties; ++i) {
    write_file_atomic(
        dir / ("sk_party_" + std::to_string(i) + ".key"),
        serialize_secret(km.params, BlobType::party_secret,
                         km.party_secrets[i], i));
  }
  write_file_atomic(dir / "sk_c1.key",
                    serialize_secret(km.params, BlobType::ledger_secret,
                                     km.ledger_secret));
  write_file_atomic(dir / "sk_c2.key",
                    serialize_secret(km.params, BlobType::evaluator_secret,
                                     km.evaluator_secret));
}

inline KeyMaterial load_key_material(const std::filesystem::path& dir) {
  KeyMaterial km = deserialize_public(read_file(dir / "pk.key"));
  km.party_secrets.resize(km.n_parties);
  for (std::uint32_t i = 0; i < km.n_parties; ++i) {
    km.party_secrets[i] = deserialize_secret(
        km.params, BlobType::party_secret,
        read_file(dir / ("sk_party_" + std::to_string(i) + ".key")), i);
  }
  km.ledger_secret = deserialize_secret(km.params, BlobType::ledger_secret,
                                        read_file(dir / "sk_c1.key"));
  km.evaluator_secret = deserialize_secret(
      km.params, BlobType::evaluator_secret, read_file(dir / "sk_c2.key"));
  return km;
}

}  // namespace fedtangle

#endif  // FEDTANGLE_SERIAL_HPP_
