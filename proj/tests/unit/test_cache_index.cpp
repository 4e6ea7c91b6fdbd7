#include <catch_amalgamated.hpp>

#include <set>

#include "safekv/cache_index.hpp"
#include "../oracles.hpp"

using namespace safekv;
using safekv::testing::FlatOracle;

namespace {

const UserId kAlice{1}, kBob{2}, kCarol{3};

RadixCacheIndex::Config small_budget(uint64_t hbm, uint64_t dram = 0, uint64_t ssd = 0,
                                     bool tiered = false) {
  RadixCacheIndex::Config cfg;
  cfg.budget = TierBudget::from_tokens(hbm, dram, ssd);
  cfg.tiered_demotion = tiered;
  return cfg;
}

uint64_t handle_tokens(const std::vector<KvHandle>& hs) {
  uint64_t n = 0;
  for (const auto& h : hs) n += h.token_count;
  return n;
}

}  // namespace

TEST_CASE("insert into empty tree creates one chain with all tokens allocated") {
  RadixCacheIndex idx;
  NodeRef n = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  REQUIRE(n != nullptr);
  CHECK(n->edge == TokenSeq{1, 2, 3});
  CHECK(n->label == SensitivityLabel::PendingPrivate);
  CHECK(n->private_tag);
  CHECK(n->creator == kAlice);
  CHECK(idx.node_count() == 1);
  CHECK(idx.budget().used(MemTier::HBM) == 3);
}

TEST_CASE("divergent insert splits the edge and shares the prefix node") {
  RadixCacheIndex idx;
  idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.insert({1, 2, 9}, kBob, OwnerClass::Customer, 0);
  CHECK(idx.node_count() == 3);
  NodeRef prefix = idx.find_node({1, 2});
  REQUIRE(prefix != nullptr);
  CHECK(prefix->edge == TokenSeq{1, 2});
  CHECK(prefix->children.size() == 2);
  CHECK(prefix->creator == kAlice);  // split copies the first creator
  safekv::testing::check_radix_well_formed(idx.root());
  CHECK(idx.budget().used(MemTier::HBM) == 4);
}

TEST_CASE("10k random inserts match the brute-force merged-set oracle") {
  RadixCacheIndex idx;
  SplitMix64 rng(11);
  std::set<TokenSeq> inserted;
  for (int i = 0; i < 10000; ++i) {
    TokenSeq s;
    size_t len = 1 + rng.next_below(8);
    for (size_t k = 0; k < len; ++k) s.push_back(static_cast<TokenId>(rng.next_below(4)));
    idx.insert(s, kAlice, OwnerClass::Customer, 0);
    inserted.insert(s);
  }
  // brute force: a sequence is a leaf iff no other inserted sequence strictly extends it
  std::set<TokenSeq> expected_leaves;
  for (const auto& s : inserted) {
    bool extended = false;
    for (const auto& t : inserted) {
      if (t.size() > s.size() && std::equal(s.begin(), s.end(), t.begin())) {
        extended = true;
        break;
      }
    }
    if (!extended) expected_leaves.insert(s);
  }
  std::set<TokenSeq> actual_leaves;
  std::vector<std::pair<const CacheNode*, TokenSeq>> stack{{idx.root(), {}}};
  while (!stack.empty()) {
    auto [node, prefix] = stack.back();
    stack.pop_back();
    if (node->is_leaf() && !node->is_root()) actual_leaves.insert(prefix);
    for (const auto& [tok, child] : node->children) {
      TokenSeq p = prefix;
      p.insert(p.end(), child->edge.begin(), child->edge.end());
      stack.push_back({child.get(), p});
    }
  }
  CHECK(actual_leaves == expected_leaves);
  safekv::testing::check_radix_well_formed(idx.root());
}

TEST_CASE("match over empty tree returns an empty result") {
  RadixCacheIndex idx;
  MatchResult m = idx.match_prefix({1, 2, 3}, kAlice);
  CHECK(m.matched_tokens == 0);
  CHECK(m.handles.empty());
}

TEST_CASE("private nodes are invisible to non-creators") {
  RadixCacheIndex idx;
  NodeRef n = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.set_label(n, SensitivityLabel::Private, false);
  CHECK(idx.match_prefix({1, 2, 3}, kBob).matched_tokens == 0);
  CHECK(idx.match_prefix({1, 2, 3}, kAlice).matched_tokens == 3);
}

TEST_CASE("partial edge coverage matches at token granularity with sliced handles") {
  RadixCacheIndex idx;
  NodeRef n = idx.insert({1, 2, 3, 4, 5}, kAlice, OwnerClass::Customer, 0);
  idx.set_label(n, SensitivityLabel::Public, false);
  MatchResult m = idx.match_prefix({1, 2, 3, 9}, kBob);
  CHECK(m.matched_tokens == 3);
  CHECK(handle_tokens(m.handles) == 3);
}

TEST_CASE("randomized flat-scan oracle agreement with labels and compression") {
  SplitMix64 rng(99);
  for (int round = 0; round < 300; ++round) {
    RadixCacheIndex idx;
    FlatOracle oracle;
    std::vector<TokenSeq> inserted;
    std::vector<std::pair<NodeRef, uint32_t>> blocks;  // terminal, new tokens
    std::vector<UserId> users{kAlice, kBob, kCarol};
    int ops = 4 + static_cast<int>(rng.next_below(20));
    for (int i = 0; i < ops; ++i) {
      uint64_t what = rng.next_below(10);
      if (what < 5 || inserted.empty()) {
        TokenSeq s;
        size_t len = 1 + rng.next_below(6);
        for (size_t k = 0; k < len; ++k) s.push_back(static_cast<TokenId>(rng.next_below(3)));
        UserId u = users[rng.next_below(users.size())];
        uint32_t fresh = 0;
        NodeRef term = idx.insert(s, u, OwnerClass::Customer, 0, &fresh);
        oracle.insert(s, u);
        inserted.push_back(s);
        if (fresh > 0) blocks.push_back({term, fresh});
      } else if (what < 8 && !blocks.empty()) {
        size_t b = rng.next_below(blocks.size());
        auto [term, span] = blocks[b];
        SensitivityLabel lbl = rng.next_below(2) ? SensitivityLabel::Public : SensitivityLabel::Private;
        bool prop = lbl == SensitivityLabel::Private;
        // locate the block's sequence and end for the oracle
        TokenSeq full;
        {
          std::vector<const CacheNode*> chain;
          for (const CacheNode* n = term; !n->is_root(); n = n->parent) chain.push_back(n);
          for (auto it = chain.rbegin(); it != chain.rend(); ++it)
            full.insert(full.end(), (*it)->edge.begin(), (*it)->edge.end());
        }
        idx.resolve_block(term, span, lbl, prop, lbl == SensitivityLabel::Public ? 1 : 0);
        oracle.resolve(full, full.size() - span, full.size(), lbl, prop);
      } else {
        idx.compress_all();  // transparent for matching
      }
    }
    for (int q = 0; q < 30; ++q) {
      TokenSeq query;
      if (!inserted.empty() && rng.next_below(2)) {
        query = inserted[rng.next_below(inserted.size())];
        while (query.size() > 1 && rng.next_below(3) == 0) query.pop_back();
        if (rng.next_below(3) == 0) query.push_back(static_cast<TokenId>(rng.next_below(3)));
      } else {
        size_t len = 1 + rng.next_below(7);
        for (size_t k = 0; k < len; ++k) query.push_back(static_cast<TokenId>(rng.next_below(3)));
      }
      UserId u = users[rng.next_below(users.size())];
      MatchResult m = idx.match_prefix(query, u);
      REQUIRE(m.matched_tokens == oracle.match(query, u));
      REQUIRE(handle_tokens(m.handles) == m.matched_tokens);
    }
    safekv::testing::check_radix_well_formed(idx.root());
  }
}

TEST_CASE("compressing a 3-node private chain aggregates handles onto the pri_root") {
  RadixCacheIndex idx;
  NodeRef a = idx.insert({1}, kAlice, OwnerClass::Customer, 0);
  NodeRef b = idx.insert({1, 2}, kAlice, OwnerClass::Customer, 0);
  NodeRef c = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  for (NodeRef n : {a, b, c}) idx.set_label(n, SensitivityLabel::Private, false);
  NodeRef pri = idx.compress_private_path(a);
  REQUIRE(pri == a);
  CHECK(pri->is_compressed);
  CHECK(pri->kv_handles.size() == 3);
  CHECK(pri->cumulative_kv_tokens == 3);
  CHECK(b->after_compress);
  CHECK(c->after_compress);
  CHECK(b->compress_ref == pri);
  CHECK(c->compress_ref == pri);
  CHECK(b->kv_handles.empty());
  CHECK(c->kv_handles.empty());
  // full-span match returns the aggregated list
  MatchResult m = idx.match_prefix({1, 2, 3}, kAlice);
  CHECK(m.matched_tokens == 3);
  CHECK(m.handles.size() == 3);
}

TEST_CASE("single private node is not compressible") {
  RadixCacheIndex idx;
  NodeRef a = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.set_label(a, SensitivityLabel::Private, false);
  CHECK_THROWS_AS(idx.compress_private_path(a), NotCompressible);
}

TEST_CASE("compression preconditions reject mixed creators, public labels, and non-heads") {
  RadixCacheIndex idx;
  NodeRef a = idx.insert({1}, kAlice, OwnerClass::Customer, 0);
  NodeRef b = idx.insert({1, 2}, kAlice, OwnerClass::Customer, 0);
  NodeRef c = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.set_label(a, SensitivityLabel::Private, false);
  idx.set_label(b, SensitivityLabel::Private, false);
  idx.set_label(c, SensitivityLabel::Private, false);
  SECTION("non-head is rejected") { CHECK_THROWS_AS(idx.compress_private_path(b), NotCompressible); }
  SECTION("pending labels break the chain") {
    idx.set_label(b, SensitivityLabel::PendingPrivate, false);
    CHECK_THROWS_AS(idx.compress_private_path(a), NotCompressible);
  }
  SECTION("pinned member breaks the chain") {
    idx.pin(b);
    CHECK_THROWS_AS(idx.compress_private_path(a), NotCompressible);
    idx.unpin(b);
    CHECK(idx.compress_private_path(a) == a);
  }
}

TEST_CASE("compression transparency on random trees") {
  SplitMix64 rng(123);
  for (int round = 0; round < 100; ++round) {
    RadixCacheIndex idx;
    FlatOracle oracle;
    std::vector<UserId> users{kAlice, kBob};
    std::vector<TokenSeq> seqs;
    for (int i = 0; i < 12; ++i) {
      TokenSeq s;
      size_t len = 1 + rng.next_below(6);
      for (size_t k = 0; k < len; ++k) s.push_back(static_cast<TokenId>(rng.next_below(3)));
      UserId u = users[rng.next_below(2)];
      uint32_t fresh = 0;
      NodeRef t = idx.insert(s, u, OwnerClass::Customer, 0, &fresh);
      oracle.insert(s, u);
      seqs.push_back(s);
      if (fresh) {
        SensitivityLabel lbl = rng.next_below(2) ? SensitivityLabel::Public : SensitivityLabel::Private;
        idx.resolve_block(t, fresh, lbl, lbl != SensitivityLabel::Public, 1);
        oracle.resolve(s, s.size() - fresh, s.size(), lbl, lbl != SensitivityLabel::Public);
      }
    }
    struct Obs {
      uint64_t matched;
      uint64_t tokens;
    };
    auto observe = [&](const TokenSeq& q, UserId u) {
      MatchResult m = idx.match_prefix(q, u);
      return Obs{m.matched_tokens, handle_tokens(m.handles)};
    };
    std::vector<TokenSeq> queries = seqs;
    for (int i = 0; i < 10; ++i) {
      TokenSeq q;
      size_t len = 1 + rng.next_below(7);
      for (size_t k = 0; k < len; ++k) q.push_back(static_cast<TokenId>(rng.next_below(3)));
      queries.push_back(q);
    }
    std::vector<Obs> before;
    for (const auto& q : queries)
      for (UserId u : users) before.push_back(observe(q, u));
    idx.compress_all();
    size_t i = 0;
    for (const auto& q : queries)
      for (UserId u : users) {
        Obs after = observe(q, u);
        REQUIRE(after.matched == before[i].matched);
        REQUIRE(after.tokens == before[i].tokens);
        ++i;
      }
  }
}

TEST_CASE("eviction prefers public leaves on equal age") {
  RadixCacheIndex idx;
  NodeRef pub = idx.insert({1, 1, 1}, kAlice, OwnerClass::Customer, 0);
  NodeRef priv = idx.insert({2, 2, 2}, kAlice, OwnerClass::Customer, 0);
  idx.set_label(pub, SensitivityLabel::Public, false, 1);
  idx.set_label(priv, SensitivityLabel::Private, false);
  auto freed = idx.evict(1, 5);
  CHECK(handle_tokens(freed) == 3);
  CHECK(idx.find_node({1, 1, 1}) == nullptr);
  CHECK(idx.find_node({2, 2, 2}) != nullptr);
}

TEST_CASE("eviction picks the largest epoch delta first") {
  RadixCacheIndex idx;
  idx.insert({1, 1}, kAlice, OwnerClass::Customer, 3);  // newer
  idx.insert({2, 2}, kAlice, OwnerClass::Customer, 1);  // older
  idx.evict(1, 5);
  CHECK(idx.find_node({2, 2}) == nullptr);
  CHECK(idx.find_node({1, 1}) != nullptr);
}

TEST_CASE("progressive eviction removes inactive descendants before the pri_root") {
  RadixCacheIndex idx;
  NodeRef a = idx.insert({1}, kAlice, OwnerClass::Customer, 0);
  NodeRef b = idx.insert({1, 2}, kAlice, OwnerClass::Customer, 0);
  NodeRef c = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  for (NodeRef n : {a, b, c}) idx.set_label(n, SensitivityLabel::Private, false);
  NodeRef pri = idx.compress_private_path(a);
  REQUIRE(pri->kv_handles.size() == 3);

  auto freed1 = idx.evict(1, 10);
  CHECK(handle_tokens(freed1) == 1);
  CHECK(pri->is_compressed);
  CHECK(pri->kv_handles.size() == 2);  // deepest inactive entry removed
  CHECK(idx.find_node({1, 2, 3}) == nullptr);
  CHECK(idx.find_node({1, 2}) != nullptr);

  auto freed2 = idx.evict(1, 10);
  CHECK(handle_tokens(freed2) == 1);
  CHECK_FALSE(pri->is_compressed);  // chain empty: head reverts to a plain node
  CHECK(pri->kv_handles.size() == 1);

  auto freed3 = idx.evict(1, 10);
  CHECK(handle_tokens(freed3) == 1);
  CHECK(idx.find_node({1}) == nullptr);
}

TEST_CASE("eviction on an empty tree reports exhaustion") {
  RadixCacheIndex idx;
  CHECK_THROWS_AS(idx.evict(1, 0), CapacityExhausted);
}

TEST_CASE("epoch counter is monotone and countable") {
  RadixCacheIndex idx;
  CHECK(idx.advance_epoch() == 1);
  CHECK(idx.advance_epoch() == 2);
  SplitMix64 rng(5);
  uint64_t k = 2;
  for (int i = 0; i < 50; ++i) {
    if (rng.next_below(2)) {
      idx.insert({static_cast<TokenId>(rng.next_below(100)), 1}, kAlice, OwnerClass::Customer, k);
    } else {
      ++k;
      CHECK(idx.advance_epoch() == k);
    }
  }
  CHECK(idx.current_epoch() == k);
}

TEST_CASE("set_label examples and illegal transition") {
  RadixCacheIndex idx;
  NodeRef leaf = idx.insert({7, 7}, kAlice, OwnerClass::Customer, 0);
  CHECK(idx.set_label(leaf, SensitivityLabel::Public, false, 1) == 1);
  CHECK_FALSE(leaf->private_tag);
  CHECK_THROWS_AS(idx.set_label(leaf, SensitivityLabel::PendingPrivate, false), IllegalTransition);

  // internal node with a subtree of 4 descendants: downgrade updates 5
  NodeRef n1 = idx.insert({1}, kAlice, OwnerClass::Customer, 0);
  idx.insert({1, 2}, kAlice, OwnerClass::Customer, 0);
  idx.insert({1, 3}, kAlice, OwnerClass::Customer, 0);
  idx.insert({1, 2, 4}, kAlice, OwnerClass::Customer, 0);
  for (const TokenSeq& s : {TokenSeq{1}, {1, 2}, {1, 3}, {1, 2, 4}})
    idx.set_label(idx.find_node(s), SensitivityLabel::Public, false, 1);
  // subtree of n1 now: {1,2}, {1,3}, {1,2,4} plus n1 itself = 4 nodes; add one more
  idx.insert({1, 3, 5}, kAlice, OwnerClass::Customer, 0);
  CHECK(idx.set_label(n1, SensitivityLabel::Private, true) == 5);
}

TEST_CASE("public-to-private downgrade hides the subtree from non-creators") {
  RadixCacheIndex idx;
  NodeRef a = idx.insert({1, 2}, kAlice, OwnerClass::Customer, 0);
  NodeRef b = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.set_label(a, SensitivityLabel::Public, false, 1);
  idx.set_label(b, SensitivityLabel::Public, false, 1);
  CHECK(idx.match_prefix({1, 2, 3}, kBob).matched_tokens == 3);
  idx.set_label(a, SensitivityLabel::Private, true);
  CHECK(idx.match_prefix({1, 2, 3}, kBob).matched_tokens == 0);
  CHECK(idx.match_prefix({1, 2, 3}, kAlice).matched_tokens == 3);
}

TEST_CASE("promotion to Public does not propagate") {
  RadixCacheIndex idx;
  NodeRef a = idx.insert({1, 2}, kAlice, OwnerClass::Customer, 0);
  idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  CHECK(idx.set_label(a, SensitivityLabel::Public, true, 1) == 1);
  CHECK(idx.match_prefix({1, 2, 3}, kBob).matched_tokens == 2);
}

TEST_CASE("pinned nodes survive eviction storms") {
  RadixCacheIndex idx;
  NodeRef keep = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.insert({4, 5}, kAlice, OwnerClass::Customer, 0);
  idx.pin(keep);
  CHECK_THROWS_AS(idx.evict(100, 10), CapacityExhausted);  // runs out after the unpinned leaf
  CHECK(idx.find_node({1, 2, 3}) != nullptr);
  CHECK(idx.find_node({4, 5}) == nullptr);
  idx.unpin(keep);
  idx.evict(3, 10);
  CHECK(idx.find_node({1, 2, 3}) == nullptr);
}

TEST_CASE("pin/unpin refcounts match a counter oracle") {
  RadixCacheIndex idx;
  std::vector<NodeRef> nodes;
  for (TokenId t = 0; t < 10; ++t)
    nodes.push_back(idx.insert({t, t, t}, kAlice, OwnerClass::Customer, 0));
  std::vector<uint32_t> counts(nodes.size(), 0);
  SplitMix64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    size_t k = rng.next_below(nodes.size());
    if (rng.next_below(2)) {
      idx.pin(nodes[k]);
      ++counts[k];
    } else if (counts[k] > 0) {
      idx.unpin(nodes[k]);
      --counts[k];
    } else {
      CHECK_THROWS_AS(idx.unpin(nodes[k]), UnderflowError);
    }
  }
  for (size_t k = 0; k < nodes.size(); ++k) CHECK(nodes[k]->ref_count == counts[k]);
}

TEST_CASE("demote moves one handle down a tier and shifts budgets") {
  RadixCacheIndex idx(small_budget(100, 50, 50));
  NodeRef n = idx.insert({1, 2, 3, 4}, kAlice, OwnerClass::Customer, 0);
  KvHandle h = n->kv_handles[0];
  KvHandle d = idx.demote(h);
  CHECK(d.tier == MemTier::DRAM);
  CHECK(idx.budget().used(MemTier::HBM) == 0);
  CHECK(idx.budget().used(MemTier::DRAM) == 4);
  KvHandle s = idx.demote(d);
  CHECK(s.tier == MemTier::SSD);
  CHECK_THROWS_AS(idx.demote(s), Error);
}

TEST_CASE("demote fails when the lower tier is full") {
  RadixCacheIndex idx(small_budget(100, 2, 0));
  NodeRef n = idx.insert({1, 2, 3, 4}, kAlice, OwnerClass::Customer, 0);
  CHECK_THROWS_AS(idx.demote(n->kv_handles[0]), CapacityExhausted);
}

TEST_CASE("tiered eviction conserves tokens across tiers until SSD overflows") {
  RadixCacheIndex idx(small_budget(20, 20, 20, /*tiered=*/true));
  uint64_t inserted = 0;
  for (TokenId t = 0; t < 14; ++t) {
    idx.insert({static_cast<TokenId>(100 + t), 1, 2, 3, 4}, kAlice, OwnerClass::Customer, t);
    inserted += 5;
    uint64_t live = idx.budget().used(MemTier::HBM) + idx.budget().used(MemTier::DRAM) +
                    idx.budget().used(MemTier::SSD);
    uint64_t evicted = idx.counters().evicted_tokens;
    CHECK(live + evicted == inserted);
    CHECK(idx.budget().used(MemTier::HBM) <= 20);
    CHECK(idx.budget().used(MemTier::DRAM) <= 20);
    CHECK(idx.budget().used(MemTier::SSD) <= 20);
  }
  // 70 tokens through a 60-token hierarchy: something must have been dropped
  CHECK(idx.counters().evicted_tokens > 0);
  CHECK(idx.counters().demoted_tokens > 0);
}

TEST_CASE("matching through demoted handles reports the slowest tier") {
  RadixCacheIndex idx(small_budget(100, 50, 50));
  NodeRef n = idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.set_label(n, SensitivityLabel::Public, false, 1);
  idx.demote(n->kv_handles[0]);
  MatchResult m = idx.match_prefix({1, 2, 3}, kBob);
  CHECK(m.matched_tokens == 3);
  CHECK(m.lowest_tier == MemTier::DRAM);
}

TEST_CASE("hbm capacity from memory sizes is exact") {
  auto b = TierBudget::from_memory_sizes(1'000'000, 1536);
  CHECK(b.capacity(MemTier::HBM) == 1'000'000 / 1536);
  CHECK_THROWS_AS(TierBudget::from_memory_sizes(1000, 0), ConfigError);
}

TEST_CASE("insert evicts to make room and reports exhaustion when pinned") {
  RadixCacheIndex idx(small_budget(6));
  NodeRef a = idx.insert({1, 1, 1}, kAlice, OwnerClass::Customer, 0);
  idx.insert({2, 2, 2}, kAlice, OwnerClass::Customer, 1);
  // room requires evicting the older leaf
  idx.insert({3, 3, 3}, kAlice, OwnerClass::Customer, 2);
  CHECK(idx.find_node({1, 1, 1}) == nullptr);
  CHECK(idx.budget().used(MemTier::HBM) == 6);
  (void)a;
  NodeRef b = idx.find_node({2, 2, 2});
  NodeRef c = idx.find_node({3, 3, 3});
  REQUIRE(b);
  REQUIRE(c);
  idx.pin(b);
  idx.pin(c);
  CHECK_THROWS_AS(idx.insert({4, 4, 4}, kAlice, OwnerClass::Customer, 3), CapacityExhausted);
  CHECK(idx.budget().used(MemTier::HBM) == 6);
}

TEST_CASE("identical operation sequences produce identical digests") {
  auto run = [] {
    RadixCacheIndex idx;
    SplitMix64 rng(2024);
    for (int i = 0; i < 200; ++i) {
      TokenSeq s;
      size_t len = 1 + rng.next_below(5);
      for (size_t k = 0; k < len; ++k) s.push_back(static_cast<TokenId>(rng.next_below(4)));
      NodeRef t = idx.insert(s, UserId{1 + rng.next_below(3)}, OwnerClass::Customer, i / 10);
      if (rng.next_below(4) == 0) idx.set_label(t, SensitivityLabel::Public, false, 1);
      if (rng.next_below(8) == 0) idx.compress_all();
      if (rng.next_below(16) == 0) idx.advance_epoch();
    }
    return idx.digest();
  };
  CHECK(run() == run());
}

TEST_CASE("serialization parses back to the same position records") {
  RadixCacheIndex idx;
  idx.insert({1, 2, 3}, kAlice, OwnerClass::Customer, 0);
  idx.insert({1, 5}, kBob, OwnerClass::Customer, 0);
  FlatOracle oracle;
  oracle.resync_from(idx.serialize());
  CHECK(oracle.pos.size() == 4);  // positions [1], [1,2], [1,2,3], [1,5]
}
