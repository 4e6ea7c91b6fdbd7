#include <catch_amalgamated.hpp>

#include "safekv/core.hpp"
#include "safekv/util.hpp"

using namespace safekv;

TEST_CASE("byte tokenizer maps bytes identically") {
  CHECK(tokenize("").empty());
  TokenSeq ab = tokenize("ab");
  REQUIRE(ab.size() == 2);
  CHECK(ab[0] == 97);
  CHECK(ab[1] == 98);
}

TEST_CASE("tokenize concatenation property over random strings") {
  SplitMix64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    std::string a, b;
    size_t la = rng.next_below(40), lb = rng.next_below(40);
    for (size_t k = 0; k < la; ++k) a.push_back(static_cast<char>(rng.next_below(256)));
    for (size_t k = 0; k < lb; ++k) b.push_back(static_cast<char>(rng.next_below(256)));
    TokenSeq joint = tokenize(a + b);
    TokenSeq parts = tokenize(a);
    TokenSeq tb = tokenize(b);
    parts.insert(parts.end(), tb.begin(), tb.end());
    REQUIRE(joint == parts);
  }
}

TEST_CASE("token sequence digests are structural") {
  SplitMix64 rng(7);
  for (int i = 0; i < 200; ++i) {
    TokenSeq s;
    size_t n = rng.next_below(32);
    for (size_t k = 0; k < n; ++k) s.push_back(static_cast<TokenId>(rng.next_below(256)));
    TokenSeq copy = s;
    CHECK(token_seq_digest(s) == token_seq_digest(copy));
    if (!s.empty()) {
      TokenSeq mutated = s;
      mutated[rng.next_below(mutated.size())] ^= 1;
      CHECK(token_seq_digest(s) != token_seq_digest(mutated));
    }
  }
}

TEST_CASE("byte vocabulary inverse round-trips") {
  std::string s = "prefix caching with arbitrary bytes \x01\x7f";
  CHECK(detokenize_bytes(tokenize(s)) == s);
}

TEST_CASE("splitmix streams are deterministic and seed-sensitive") {
  SplitMix64 a(123), b(123), c(124);
  for (int i = 0; i < 64; ++i) {
    uint64_t va = a.next();
    CHECK(va == b.next());
    CHECK(va != c.next());
  }
}

TEST_CASE("labels other than Public are private class") {
  CHECK(is_private_class(SensitivityLabel::Private));
  CHECK(is_private_class(SensitivityLabel::PendingPrivate));
  CHECK(is_private_class(SensitivityLabel::Restricted));
  CHECK_FALSE(is_private_class(SensitivityLabel::Public));
}
