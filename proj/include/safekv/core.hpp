#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "safekv/util.hpp"

namespace safekv {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapacityExhausted : public Error {
 public:
  using Error::Error;
};
class NotCompressible : public Error {
 public:
  using Error::Error;
};
class IllegalTransition : public Error {
 public:
  using Error::Error;
};
class UnderflowError : public Error {
 public:
  using Error::Error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};
class CompileError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class DetectorUnavailable : public Error {
 public:
  using Error::Error;
};
class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

using TokenId = uint32_t;
using TokenSeq = std::vector<TokenId>;

inline uint64_t token_seq_digest(const TokenSeq& seq) {
  Fnv1a64 h;
  h.update_u32(static_cast<uint32_t>(seq.size()));
  for (TokenId t : seq) h.update_u32(t);
  return h.digest();
}

inline size_t common_prefix_len(const TokenSeq& a, const TokenSeq& b) {
  size_t n = std::min(a.size(), b.size());
  size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

/// Pluggable text -> token mapping. The default is a byte-level identity
/// vocabulary so string prefixes and token prefixes coincide exactly, which
/// keeps attacker and cache views of "prefix" aligned.
class Vocabulary {
 public:
  virtual ~Vocabulary() = default;
  virtual uint32_t vocab_size() const = 0;
  virtual TokenSeq tokenize(std::string_view text) const = 0;
};

class ByteVocabulary final : public Vocabulary {
 public:
  uint32_t vocab_size() const override { return 256; }
  TokenSeq tokenize(std::string_view text) const override {
    TokenSeq out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<TokenId>(c));
    return out;
  }
};

inline TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  return vocab.tokenize(text);
}

inline TokenSeq tokenize(std::string_view text) {
  static const ByteVocabulary kByteVocab;
  return kByteVocab.tokenize(text);
}

/// Inverse of the byte-level vocabulary; used by tooling to render cached
/// spans back into text.
inline std::string detokenize_bytes(const TokenSeq& seq) {
  std::string out;
  out.reserve(seq.size());
  for (TokenId t : seq) out.push_back(static_cast<char>(t & 0xff));
  return out;
}

// ---------------------------------------------------------------------------
// Identities
// ---------------------------------------------------------------------------

/// Opaque user identity as seen by the cache and detection layers. Whether a
/// user is benign or adversarial is simulator-side metadata (UserKind, kept in
/// the workload tables) and is deliberately not part of this type, so cache
/// and detection code cannot branch on it.
struct UserId {
  uint64_t value = 0;

  friend bool operator==(UserId a, UserId b) { return a.value == b.value; }
  friend bool operator!=(UserId a, UserId b) { return a.value != b.value; }
  friend bool operator<(UserId a, UserId b) { return a.value < b.value; }
};

enum class UserKind : uint8_t { Benign, Attacker };

enum class OwnerClass : uint8_t { Customer, Business };

// ---------------------------------------------------------------------------
// Cache block metadata
// ---------------------------------------------------------------------------

enum class MemTier : uint8_t { HBM = 0, DRAM = 1, SSD = 2 };

inline const char* to_string(MemTier t) {
  switch (t) {
    case MemTier::HBM: return "HBM";
    case MemTier::DRAM: return "DRAM";
    default: return "SSD";
  }
}

/// Handle to the simulated KV state of a token span. No real tensors: the
/// handle carries just enough (tier, token count) for capacity accounting and
/// the reload-cost model.
struct KvHandle {
  uint64_t id = 0;
  MemTier tier = MemTier::HBM;
  uint32_t token_count = 0;
};

/// New blocks start PendingPrivate (access-controlled exactly like Private)
/// until the asynchronous pipeline resolves them. Restricted is Private plus
/// an audit trail.
enum class SensitivityLabel : uint8_t { Private = 0, Public = 1, PendingPrivate = 2, Restricted = 3 };

inline const char* to_string(SensitivityLabel l) {
  switch (l) {
    case SensitivityLabel::Private: return "Private";
    case SensitivityLabel::Public: return "Public";
    case SensitivityLabel::PendingPrivate: return "PendingPrivate";
    default: return "Restricted";
  }
}

inline bool is_private_class(SensitivityLabel l) { return l != SensitivityLabel::Public; }

}  // namespace safekv

template <>
struct std::hash<safekv::UserId> {
  size_t operator()(safekv::UserId u) const noexcept { return std::hash<uint64_t>{}(u.value); }
};
