#pragma once

#include <cstdint>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace safekv {

/// Deterministic 64-bit RNG (splitmix64). Used everywhere a seeded stream is
/// needed so that runs are bit-reproducible across platforms; std::mt19937_64
/// would also be portable but the std distributions are not.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return (next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). bound must be > 0.
  uint64_t next_below(uint64_t bound) { return next() % bound; }

  /// Standard normal via Box-Muller (explicit formula, no std distribution).
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

/// Derive an independent stream seed from a root seed and a stream tag.
inline uint64_t derive_seed(uint64_t root, uint64_t tag) {
  SplitMix64 rng(root ^ (0x51a1c9e3b7d24f85ULL * (tag + 1)));
  return rng.next();
}

/// FNV-1a 64-bit, the digest primitive for golden tests and determinism checks.
class Fnv1a64 {
 public:
  void update(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update_u8(uint8_t v) { update(&v, 1); }
  void update_u32(uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    update(b, 4);
  }
  void update_u64(uint64_t v) {
    update_u32(static_cast<uint32_t>(v));
    update_u32(static_cast<uint32_t>(v >> 32));
  }
  uint64_t digest() const { return hash_; }

 private:
  uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline uint64_t fnv1a64(std::string_view s) {
  Fnv1a64 h;
  h.update(s.data(), s.size());
  return h.digest();
}

/// Little-endian length-prefixed byte stream writer, shared by the tree
/// serializer and the workload determinism checks.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    u32(static_cast<uint32_t>(v));
    u32(static_cast<uint32_t>(v >> 32));
  }
  void bytes(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

}  // namespace safekv
