#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "safekv/access_stats.hpp"
#include "safekv/core.hpp"
#include "safekv/util.hpp"

namespace safekv {

// ---------------------------------------------------------------------------
// Capacity accounting
// ---------------------------------------------------------------------------

/// Per-tier token budgets. The HBM capacity can be derived from memory sizes:
/// capacity = floor(kv_bytes / bytes_per_token).
struct TierBudget {
  std::array<uint64_t, 3> capacity_tokens{0, 0, 0};
  std::array<uint64_t, 3> used_tokens{0, 0, 0};

  static TierBudget from_tokens(uint64_t hbm, uint64_t dram, uint64_t ssd) {
    TierBudget b;
    b.capacity_tokens = {hbm, dram, ssd};
    return b;
  }

  static TierBudget from_memory_sizes(uint64_t kv_bytes, uint64_t bytes_per_token,
                                      uint64_t dram_tokens = 0, uint64_t ssd_tokens = 0) {
    if (bytes_per_token == 0) throw ConfigError("bytes_per_token must be positive");
    return from_tokens(kv_bytes / bytes_per_token, dram_tokens, ssd_tokens);
  }

  uint64_t capacity(MemTier t) const { return capacity_tokens[static_cast<size_t>(t)]; }
  uint64_t used(MemTier t) const { return used_tokens[static_cast<size_t>(t)]; }
  uint64_t free_tokens(MemTier t) const { return capacity(t) - used(t); }
  bool can_fit(MemTier t, uint64_t tokens) const { return free_tokens(t) >= tokens; }

  void reserve(MemTier t, uint64_t tokens) {
    assert(can_fit(t, tokens));
    used_tokens[static_cast<size_t>(t)] += tokens;
  }
  void release(MemTier t, uint64_t tokens) {
    assert(used(t) >= tokens);
    used_tokens[static_cast<size_t>(t)] -= tokens;
  }
};

// ---------------------------------------------------------------------------
// Tree node
// ---------------------------------------------------------------------------

/// A radix-tree node. The edge spans one or more tokens; sibling edges differ
/// in their first token. Compression moves a private chain's handles into the
/// chain head (the pri_root); the descendants stay in the tree as metadata
/// nodes (after_compress) whose handles live in the head's aggregated list.
struct CacheNode {
  uint64_t node_id = 0;
  TokenSeq edge;
  std::map<TokenId, std::unique_ptr<CacheNode>> children;
  CacheNode* parent = nullptr;

  SensitivityLabel label = SensitivityLabel::PendingPrivate;
  bool private_tag = true;  // always equals (label != Public)
  UserId creator{};
  OwnerClass owner_class = OwnerClass::Customer;

  std::vector<KvHandle> kv_handles;  // empty on after_compress nodes
  uint64_t access_epoch = 0;
  uint32_t ref_count = 0;

  bool is_compressed = false;
  bool after_compress = false;
  CacheNode* compress_ref = nullptr;
  uint64_t cumulative_kv_tokens = 0;  // pri_root: total tokens of the chain
  // pri_root: chain members in order with their handle counts inside kv_handles
  std::vector<std::pair<CacheNode*, uint32_t>> chain_layout;

  AccessStats stats;

  // How this node earned a Public label: detection-tier bitmask, or 0x80 for
  // a policy grant (GlobalShare / system-prompt prefix).
  uint8_t public_audit = 0;

  uint32_t span() const { return static_cast<uint32_t>(edge.size()); }
  bool is_leaf() const { return children.empty(); }
  bool is_root() const { return parent == nullptr; }
};

using NodeRef = CacheNode*;

struct MatchResult {
  uint64_t matched_tokens = 0;
  std::vector<KvHandle> handles;  // covering the matched prefix, in order
  NodeRef terminal_node = nullptr;
  MemTier lowest_tier = MemTier::HBM;  // slowest tier among the handles
  std::vector<NodeRef> path;           // nodes contributing to the match, root-side first
};

struct IndexCounters {
  uint64_t inserts = 0;
  uint64_t splits = 0;
  uint64_t compressions = 0;
  uint64_t decompressions = 0;
  uint64_t evicted_nodes = 0;
  uint64_t evicted_tokens = 0;
  uint64_t demoted_tokens = 0;
};

// ---------------------------------------------------------------------------
// Index
// ---------------------------------------------------------------------------

/// Unified privacy-preserving KV-cache index. Public and private entries
/// share one radix tree; visibility of a node is (label == Public or
/// creator == querying user). All public operations are serialized behind one
/// mutex, which conservatively satisfies the single-writer/multi-reader
/// contract.
class RadixCacheIndex {
 public:
  struct Config {
    TierBudget budget;
    bool tiered_demotion;
    Config() : budget(TierBudget::from_tokens(1ull << 40, 0, 0)), tiered_demotion(false) {}
  };

  explicit RadixCacheIndex(Config cfg = Config()) : budget_(cfg.budget), tiered_(cfg.tiered_demotion) {
    root_ = std::make_unique<CacheNode>();
    root_->node_id = 0;
    root_->label = SensitivityLabel::Public;
    root_->private_tag = false;
  }

  RadixCacheIndex(const RadixCacheIndex&) = delete;
  RadixCacheIndex& operator=(const RadixCacheIndex&) = delete;

  // -- insert ---------------------------------------------------------------

  /// Inserts seq, reusing existing prefixes structurally (first creator wins)
  /// and splitting edges at divergence points. Newly materialized spans get
  /// PendingPrivate labels and fresh HBM handles. Returns the terminal node
  /// spelling seq; new_suffix_tokens (if non-null) receives the number of
  /// newly allocated tokens, which is the classification block size.
  NodeRef insert(const TokenSeq& seq, UserId user, OwnerClass owner, uint64_t epoch,
                 uint32_t* new_suffix_tokens = nullptr) {
    std::lock_guard lk(mu_);
    if (seq.empty()) throw Error("insert: empty sequence");
    ++counters_.inserts;
    CacheNode* node = root_.get();
    size_t pos = 0;
    while (pos < seq.size()) {
      auto it = node->children.find(seq[pos]);
      if (it == node->children.end()) break;
      CacheNode* child = it->second.get();
      size_t k = edge_lcp(child->edge, seq, pos);
      if (k == child->edge.size()) {
        child->access_epoch = epoch;
        node = child;
        pos += k;
        continue;
      }
      // divergence mid-edge: split, keeping the original object as the lower
      // (suffix) half so outstanding references stay valid
      CacheNode* upper = split_node(child, static_cast<uint32_t>(k));
      upper->access_epoch = epoch;
      node = upper;
      pos += k;
      break;
    }
    if (pos == seq.size()) {
      if (new_suffix_tokens) *new_suffix_tokens = 0;
      return node;
    }
    uint64_t needed = seq.size() - pos;
    node->ref_count++;  // keep the attachment point alive across eviction
    try {
      make_room(MemTier::HBM, needed, epoch);
    } catch (...) {
      node->ref_count--;
      throw;
    }
    node->ref_count--;
    auto fresh = std::make_unique<CacheNode>();
    CacheNode* raw = fresh.get();
    raw->node_id = next_node_id_++;
    raw->edge.assign(seq.begin() + pos, seq.end());
    raw->parent = node;
    raw->label = SensitivityLabel::PendingPrivate;
    raw->private_tag = true;
    raw->creator = user;
    raw->owner_class = owner;
    raw->access_epoch = epoch;
    raw->kv_handles.push_back(alloc_handle(raw, MemTier::HBM, static_cast<uint32_t>(needed)));
    node->children.emplace(seq[pos], std::move(fresh));
    if (new_suffix_tokens) *new_suffix_tokens = static_cast<uint32_t>(needed);
    return raw;
  }

  // -- match ----------------------------------------------------------------

  /// Longest prefix of seq along a root path where every node is visible to
  /// user. Matching is token-granular: a partially covered edge contributes a
  /// sliced view of its boundary handle. Updates access epochs of touched
  /// nodes.
  MatchResult match_prefix(const TokenSeq& seq, UserId user) {
    std::lock_guard lk(mu_);
    MatchResult res;
    res.terminal_node = root_.get();
    CacheNode* node = root_.get();
    size_t pos = 0;
    while (pos < seq.size()) {
      auto it = node->children.find(seq[pos]);
      if (it == node->children.end()) break;
      CacheNode* child = it->second.get();
      if (!visible(child, user)) break;
      size_t k = edge_lcp(child->edge, seq, pos);
      child->access_epoch = epoch_counter_;
      res.terminal_node = child;
      res.path.push_back(child);
      append_span_prefix(child, static_cast<uint32_t>(k), res.handles);
      res.matched_tokens += k;
      pos += k;
      if (k < child->edge.size()) break;
      node = child;
    }
    for (const KvHandle& h : res.handles)
      if (static_cast<uint8_t>(h.tier) > static_cast<uint8_t>(res.lowest_tier)) res.lowest_tier = h.tier;
    return res;
  }

  // -- compression ----------------------------------------------------------

  /// Compresses the maximal non-branching private chain starting at
  /// chain_head: the head becomes the pri_root holding the concatenated
  /// handle list; descendants keep only metadata. Throws NotCompressible if
  /// the preconditions fail (chain shorter than 2, mixed creators, public or
  /// pending labels, pinned nodes, or chain_head not being the actual head).
  NodeRef compress_private_path(NodeRef chain_head) {
    std::lock_guard lk(mu_);
    return compress_locked(chain_head);
  }

  /// Compresses every eligible chain in the tree; returns how many chains
  /// were formed. Match results are unaffected (compression transparency).
  size_t compress_all() {
    std::lock_guard lk(mu_);
    size_t count = 0;
    std::vector<CacheNode*> heads;
    collect_chain_heads(root_.get(), heads);
    for (CacheNode* h : heads) {
      try {
        compress_locked(h);
        ++count;
      } catch (const NotCompressible&) {
      }
    }
    return count;
  }

  /// Restores a compressed chain to plain nodes. Inverse of compression.
  void decompress(NodeRef pri_root) {
    std::lock_guard lk(mu_);
    decompress_locked(pri_root);
  }

  // -- eviction -------------------------------------------------------------

  /// Frees (or, in tiered mode, demotes) leaves until at least needed_tokens
  /// of HBM are released. Victim order: oldest epoch first, then public
  /// before private, then smallest node id. Throws CapacityExhausted when no
  /// candidate remains before the goal is met. Returns the handles removed
  /// from HBM.
  std::vector<KvHandle> evict(uint64_t needed_tokens, uint64_t epoch) {
    std::lock_guard lk(mu_);
    if (needed_tokens == 0) throw Error("evict: needed_tokens must be positive");
    std::vector<KvHandle> out;
    uint64_t freed = 0;
    while (freed < needed_tokens) {
      CacheNode* v = select_victim(MemTier::HBM, epoch);
      if (!v) throw CapacityExhausted("evict: no unpinned candidate leaf");
      freed += evict_or_demote(v, MemTier::HBM, epoch, &out);
    }
    return out;
  }

  // -- epochs ---------------------------------------------------------------

  uint64_t advance_epoch() {
    std::lock_guard lk(mu_);
    return ++epoch_counter_;
  }

  uint64_t current_epoch() const {
    std::lock_guard lk(mu_);
    return epoch_counter_;
  }

  // -- labels ---------------------------------------------------------------

  /// Updates a node's label. Downgrades to Private/Restricted propagate to
  /// all descendants when propagate is set; promotion to Public never
  /// propagates (each block earns Public individually). Returns the number of
  /// nodes whose label changed.
  size_t set_label(NodeRef node, SensitivityLabel label, bool propagate, uint8_t audit = 0) {
    std::lock_guard lk(mu_);
    return set_label_locked(node, label, propagate, audit);
  }

  /// Applies a label to the whole block that ends at terminal and covers
  /// span_tokens (the suffix created by one insert, possibly split into a
  /// chain of nodes since). Used by the detection pipeline and by policy
  /// labeling.
  size_t resolve_block(NodeRef terminal, uint32_t span_tokens, SensitivityLabel label, bool propagate,
                       uint8_t audit = 0) {
    std::lock_guard lk(mu_);
    if (span_tokens == 0) return 0;
    std::vector<CacheNode*> chain;  // terminal-side first
    CacheNode* n = terminal;
    uint64_t covered = 0;
    while (covered < span_tokens) {
      if (!n || n->is_root()) throw Error("resolve_block: span exceeds path");
      chain.push_back(n);
      covered += n->span();
      n = n->parent;
    }
    if (covered != span_tokens) throw Error("resolve_block: span not node-aligned");
    size_t changed = 0;
    if (propagate && is_private_class(label) && label != SensitivityLabel::PendingPrivate) {
      changed = set_label_locked(chain.back(), label, true, audit);
    } else {
      for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        changed += set_label_locked(*it, label, false, audit);
    }
    return changed;
  }

  // -- pinning --------------------------------------------------------------

  void pin(NodeRef node) {
    std::lock_guard lk(mu_);
    node->ref_count++;
  }

  void unpin(NodeRef node) {
    std::lock_guard lk(mu_);
    if (node->ref_count == 0) throw UnderflowError("unpin: ref_count already zero");
    node->ref_count--;
  }

  // -- tier moves -----------------------------------------------------------

  /// Moves one handle a single tier down (HBM -> DRAM -> SSD), updating both
  /// budgets. Throws CapacityExhausted if the lower tier lacks space.
  KvHandle demote(KvHandle handle) {
    std::lock_guard lk(mu_);
    if (handle.tier == MemTier::SSD) throw Error("demote: handle already in SSD");
    auto owner_it = handle_owner_.find(handle.id);
    if (owner_it == handle_owner_.end()) throw Error("demote: unknown handle");
    CacheNode* owner = owner_it->second;
    CacheNode* store = owner->after_compress ? owner->compress_ref : owner;
    for (KvHandle& h : store->kv_handles) {
      if (h.id != handle.id) continue;
      MemTier target = static_cast<MemTier>(static_cast<uint8_t>(h.tier) + 1);
      if (!budget_.can_fit(target, h.token_count))
        throw CapacityExhausted("demote: lower tier full");
      budget_.release(h.tier, h.token_count);
      budget_.reserve(target, h.token_count);
      h.tier = target;
      counters_.demoted_tokens += h.token_count;
      return h;
    }
    throw Error("demote: handle not found on owner node");
  }

  // -- access stats (monitor entry points) -----------------------------------

  void record_access(NodeRef node, UserId user) {
    std::lock_guard lk(mu_);
    node->stats.record(user);
  }

  void roll_window(NodeRef node) {
    std::lock_guard lk(mu_);
    node->stats.roll();
  }

  // -- inspection -----------------------------------------------------------

  /// Forces a node boundary at depth k along seq's path, splitting the edge
  /// that straddles it. Returns the node ending at depth k, or nullptr when
  /// the tree does not contain that path.
  NodeRef ensure_boundary(const TokenSeq& seq, size_t k) {
    std::lock_guard lk(mu_);
    if (k == 0 || k > seq.size()) return nullptr;
    CacheNode* node = root_.get();
    size_t pos = 0;
    while (pos < k) {
      auto it = node->children.find(seq[pos]);
      if (it == node->children.end()) return nullptr;
      CacheNode* child = it->second.get();
      size_t lcp = edge_lcp(child->edge, seq, pos);
      if (pos + lcp < k && lcp < child->edge.size()) return nullptr;  // path diverges early
      if (pos + child->edge.size() > k) {
        return split_node(child, static_cast<uint32_t>(k - pos));
      }
      node = child;
      pos += child->edge.size();
    }
    return node;
  }

  /// Exact locate of the node whose root path spells seq (node-boundary
  /// aligned). Returns nullptr when absent.
  NodeRef find_node(const TokenSeq& seq) const {
    std::lock_guard lk(mu_);
    const CacheNode* node = root_.get();
    size_t pos = 0;
    while (pos < seq.size()) {
      auto it = node->children.find(seq[pos]);
      if (it == node->children.end()) return nullptr;
      const CacheNode* child = it->second.get();
      size_t k = edge_lcp(child->edge, seq, pos);
      if (k != child->edge.size()) return nullptr;
      node = child;
      pos += k;
    }
    return pos == seq.size() && node != root_.get() ? const_cast<CacheNode*>(node) : nullptr;
  }

  /// Pre-order visit of all live non-root nodes.
  template <typename Fn>
  void for_each_node(Fn&& fn) const {
    std::lock_guard lk(mu_);
    visit(root_.get(), fn);
  }

  /// Canonical depth-first serialization (edge tokens, label, creator, epoch,
  /// flags; length-prefixed, little-endian). Deterministic for golden tests.
  std::string serialize() const {
    std::lock_guard lk(mu_);
    ByteWriter w;
    serialize_node(root_.get(), w);
    return w.str();
  }

  uint64_t digest() const {
    std::string bytes = serialize();
    Fnv1a64 h;
    h.update(bytes.data(), bytes.size());
    return h.digest();
  }

  const TierBudget& budget() const { return budget_; }
  const IndexCounters& counters() const { return counters_; }

  size_t node_count() const {
    std::lock_guard lk(mu_);
    size_t n = 0;
    visit(root_.get(), [&](const CacheNode*) { ++n; });
    return n;
  }

  uint64_t live_tokens(MemTier t) const { return budget_.used(t); }

  NodeRef root() const { return root_.get(); }

 private:
  static size_t edge_lcp(const TokenSeq& edge, const TokenSeq& seq, size_t pos) {
    size_t n = std::min(edge.size(), seq.size() - pos);
    size_t i = 0;
    while (i < n && edge[i] == seq[pos + i]) ++i;
    return i;
  }

  static bool visible(const CacheNode* n, UserId u) {
    return n->label == SensitivityLabel::Public || n->creator == u;
  }

  KvHandle alloc_handle(CacheNode* owner, MemTier tier, uint32_t tokens) {
    budget_.reserve(tier, tokens);
    KvHandle h{next_handle_id_++, tier, tokens};
    handle_owner_[h.id] = owner;
    return h;
  }

  // Handles backing a node's span, wherever they are stored.
  std::pair<std::vector<KvHandle>*, std::pair<size_t, size_t>> span_handles(CacheNode* n) {
    if (n->after_compress) {
      CacheNode* pr = n->compress_ref;
      size_t off = 0;
      for (auto& [member, count] : pr->chain_layout) {
        if (member == n) return {&pr->kv_handles, {off, count}};
        off += count;
      }
      throw Error("span_handles: metadata node missing from chain layout");
    }
    if (n->is_compressed) return {&n->kv_handles, {0, n->chain_layout.front().second}};
    return {&n->kv_handles, {0, n->kv_handles.size()}};
  }

  /// Appends handles covering the first k tokens of n's span; the boundary
  /// handle is emitted as a sliced view with a reduced token_count.
  void append_span_prefix(CacheNode* n, uint32_t k, std::vector<KvHandle>& out) {
    if (k == 0) return;
    auto [vec, range] = span_handles(n);
    uint32_t remaining = k;
    for (size_t i = range.first; i < range.first + range.second && remaining > 0; ++i) {
      const KvHandle& h = (*vec)[i];
      if (h.token_count <= remaining) {
        out.push_back(h);
        remaining -= h.token_count;
      } else {
        out.push_back(KvHandle{h.id, h.tier, remaining});
        remaining = 0;
      }
    }
    if (remaining != 0) throw Error("append_span_prefix: handles shorter than span");
  }

  /// Splits node at offset k (0 < k < span). A new upper node takes the first
  /// k tokens and copies the metadata; the original object keeps the suffix
  /// so external references remain valid. Returns the upper node.
  CacheNode* split_node(CacheNode* node, uint32_t k) {
    if (node->is_compressed || node->after_compress)
      decompress_locked(node->is_compressed ? node : node->compress_ref);
    ++counters_.splits;
    auto upper_own = std::make_unique<CacheNode>();
    CacheNode* upper = upper_own.get();
    upper->node_id = next_node_id_++;
    upper->edge.assign(node->edge.begin(), node->edge.begin() + k);
    upper->label = node->label;
    upper->private_tag = node->private_tag;
    upper->creator = node->creator;
    upper->owner_class = node->owner_class;
    upper->access_epoch = node->access_epoch;
    upper->stats = node->stats;
    upper->public_audit = node->public_audit;

    // split the handle list at the k-token boundary
    std::vector<KvHandle> upper_handles, lower_handles;
    uint32_t remaining = k;
    for (KvHandle& h : node->kv_handles) {
      if (remaining == 0) {
        lower_handles.push_back(h);
      } else if (h.token_count <= remaining) {
        upper_handles.push_back(h);
        handle_owner_[h.id] = upper;
        remaining -= h.token_count;
      } else {
        KvHandle top{h.id, h.tier, remaining};
        KvHandle bottom{next_handle_id_++, h.tier, h.token_count - remaining};
        handle_owner_[top.id] = upper;
        handle_owner_[bottom.id] = node;
        upper_handles.push_back(top);
        lower_handles.push_back(bottom);
        remaining = 0;
      }
    }
    upper->kv_handles = std::move(upper_handles);

    CacheNode* parent = node->parent;
    TokenId first = node->edge[0];
    auto self_own = std::move(parent->children.at(first));
    parent->children.erase(first);
    node->edge.erase(node->edge.begin(), node->edge.begin() + k);
    node->kv_handles = std::move(lower_handles);
    node->parent = upper;
    upper->parent = parent;
    upper->children.emplace(node->edge[0], std::move(self_own));
    parent->children.emplace(upper->edge[0], std::move(upper_own));
    return upper;
  }

  NodeRef compress_locked(CacheNode* head) {
    auto chainable = [&](const CacheNode* n) {
      return (n->label == SensitivityLabel::Private || n->label == SensitivityLabel::Restricted) &&
             n->ref_count == 0 && !n->is_compressed && !n->after_compress;
    };
    if (!head || head->is_root() || !chainable(head))
      throw NotCompressible("head is not a compressible private node");
    CacheNode* p = head->parent;
    if (!p->is_root() && p->children.size() == 1 && chainable(p) && p->creator == head->creator)
      throw NotCompressible("node is not the head of its maximal chain");
    std::vector<CacheNode*> chain{head};
    CacheNode* cur = head;
    while (cur->children.size() == 1) {
      CacheNode* c = cur->children.begin()->second.get();
      if (!chainable(c) || !(c->creator == head->creator)) break;
      chain.push_back(c);
      cur = c;
    }
    if (chain.size() < 2) throw NotCompressible("chain length < 2");

    ++counters_.compressions;
    std::vector<KvHandle> aggregate;
    head->chain_layout.clear();
    uint64_t total_tokens = 0;
    for (CacheNode* m : chain) {
      head->chain_layout.emplace_back(m, static_cast<uint32_t>(m->kv_handles.size()));
      for (const KvHandle& h : m->kv_handles) {
        handle_owner_[h.id] = m == head ? head : m;  // owner stays the member
        aggregate.push_back(h);
        total_tokens += h.token_count;
      }
      if (m != head) {
        m->after_compress = true;
        m->compress_ref = head;
        m->kv_handles.clear();
      }
    }
    head->kv_handles = std::move(aggregate);
    head->is_compressed = true;
    head->cumulative_kv_tokens = total_tokens;
    return head;
  }

  void decompress_locked(CacheNode* pri_root) {
    if (!pri_root || !pri_root->is_compressed) throw Error("decompress: not a pri_root");
    ++counters_.decompressions;
    std::vector<KvHandle> aggregate = std::move(pri_root->kv_handles);
    pri_root->kv_handles.clear();
    size_t off = 0;
    for (auto& [member, count] : pri_root->chain_layout) {
      std::vector<KvHandle> own(aggregate.begin() + off, aggregate.begin() + off + count);
      off += count;
      if (member == pri_root) {
        pri_root->kv_handles = std::move(own);
      } else {
        member->kv_handles = std::move(own);
        member->after_compress = false;
        member->compress_ref = nullptr;
      }
    }
    pri_root->chain_layout.clear();
    pri_root->is_compressed = false;
    pri_root->cumulative_kv_tokens = 0;
  }

  void collect_chain_heads(CacheNode* node, std::vector<CacheNode*>& out) {
    for (auto& [tok, child] : node->children) collect_chain_heads(child.get(), out);
    if (node->is_root() || node->is_compressed || node->after_compress) return;
    if (node->label != SensitivityLabel::Private && node->label != SensitivityLabel::Restricted) return;
    out.push_back(node);  // compress_locked rejects non-heads
  }

  size_t set_label_locked(CacheNode* node, SensitivityLabel label, bool propagate, uint8_t audit) {
    if (node->label == SensitivityLabel::Public && label == SensitivityLabel::PendingPrivate)
      throw IllegalTransition("Public -> PendingPrivate is not allowed");
    size_t changed = 0;
    if (label == SensitivityLabel::Public) {
      if (node->is_compressed) decompress_locked(node);
      if (node->after_compress) decompress_locked(node->compress_ref);
      changed += apply_label(node, label, audit);
      return changed;  // promotion never propagates
    }
    changed += apply_label(node, label, audit);
    if (propagate && (label == SensitivityLabel::Private || label == SensitivityLabel::Restricted))
      changed += apply_label_subtree(node, label, audit);
    return changed;
  }

  size_t apply_label(CacheNode* node, SensitivityLabel label, uint8_t audit) {
    if (node->label == label) return 0;
    node->label = label;
    node->private_tag = label != SensitivityLabel::Public;
    node->public_audit = label == SensitivityLabel::Public ? audit : 0;
    return 1;
  }

  size_t apply_label_subtree(CacheNode* node, SensitivityLabel label, uint8_t audit) {
    size_t changed = 0;
    for (auto& [tok, child] : node->children) {
      changed += apply_label(child.get(), label, audit);
      changed += apply_label_subtree(child.get(), label, audit);
    }
    return changed;
  }

  // -- eviction internals ----------------------------------------------------

  uint64_t tier_tokens(CacheNode* n, MemTier t) {
    auto [vec, range] = span_handles(n);
    uint64_t total = 0;
    for (size_t i = range.first; i < range.first + range.second; ++i)
      if ((*vec)[i].tier == t) total += (*vec)[i].token_count;
    return total;
  }

  CacheNode* select_victim(MemTier tier, uint64_t epoch) {
    CacheNode* best = nullptr;
    int64_t best_delta = 0;
    bool best_public = false;
    std::vector<CacheNode*> stack{root_.get()};
    while (!stack.empty()) {
      CacheNode* n = stack.back();
      stack.pop_back();
      for (auto& [tok, child] : n->children) stack.push_back(child.get());
      if (n->is_root() || !n->is_leaf() || n->ref_count > 0) continue;
      if (n->is_compressed) continue;  // childless pri_root cannot happen (reverted on empty chain)
      if (tier_tokens(n, tier) == 0) continue;
      int64_t delta = static_cast<int64_t>(epoch) - static_cast<int64_t>(n->access_epoch);
      bool is_public = n->label == SensitivityLabel::Public;
      bool better = false;
      if (!best) {
        better = true;
      } else if (delta != best_delta) {
        better = delta > best_delta;
      } else if (is_public != best_public) {
        better = is_public;
      } else {
        better = n->node_id < best->node_id;
      }
      if (better) {
        best = n;
        best_delta = delta;
        best_public = is_public;
      }
    }
    return best;
  }

  /// Frees (or demotes, in tiered mode) one victim. Returns how many tokens
  /// left `tier`. Removed handles are appended to out when freeing.
  uint64_t evict_or_demote(CacheNode* v, MemTier tier, uint64_t epoch, std::vector<KvHandle>* out) {
    uint64_t moved = tier_tokens(v, tier);
    if (tiered_ && tier != MemTier::SSD) {
      MemTier target = static_cast<MemTier>(static_cast<uint8_t>(tier) + 1);
      while (!budget_.can_fit(target, moved)) {
        CacheNode* lower_victim = select_victim(target, epoch);
        if (!lower_victim) {
          free_node(v, out);  // lower tiers full and unfreeable: drop outright
          return moved;
        }
        evict_or_demote(lower_victim, target, epoch, out);
      }
      auto [vec, range] = span_handles(v);
      for (size_t i = range.first; i < range.first + range.second; ++i) {
        KvHandle& h = (*vec)[i];
        if (h.tier != tier) continue;
        budget_.release(h.tier, h.token_count);
        budget_.reserve(target, h.token_count);
        h.tier = target;
        counters_.demoted_tokens += h.token_count;
        if (out) out->push_back(h);
      }
      return moved;
    }
    free_node(v, out);
    return moved;
  }

  void free_node(CacheNode* v, std::vector<KvHandle>* out) {
    assert(v->is_leaf() && v->ref_count == 0);
    ++counters_.evicted_nodes;
    if (v->after_compress) {
      CacheNode* pr = v->compress_ref;
      size_t off = 0;
      size_t layout_idx = 0;
      for (; layout_idx < pr->chain_layout.size(); ++layout_idx) {
        if (pr->chain_layout[layout_idx].first == v) break;
        off += pr->chain_layout[layout_idx].second;
      }
      assert(layout_idx < pr->chain_layout.size());
      uint32_t count = pr->chain_layout[layout_idx].second;
      for (size_t i = off; i < off + count; ++i) {
        const KvHandle& h = pr->kv_handles[i];
        budget_.release(h.tier, h.token_count);
        counters_.evicted_tokens += h.token_count;
        pr->cumulative_kv_tokens -= h.token_count;
        handle_owner_.erase(h.id);
        if (out) out->push_back(h);
      }
      pr->kv_handles.erase(pr->kv_handles.begin() + off, pr->kv_handles.begin() + off + count);
      pr->chain_layout.erase(pr->chain_layout.begin() + layout_idx);
      if (pr->chain_layout.size() == 1) {
        // chain fully pruned: the head reverts to an ordinary node
        pr->chain_layout.clear();
        pr->is_compressed = false;
        pr->cumulative_kv_tokens = 0;
      }
    } else {
      for (const KvHandle& h : v->kv_handles) {
        budget_.release(h.tier, h.token_count);
        counters_.evicted_tokens += h.token_count;
        handle_owner_.erase(h.id);
        if (out) out->push_back(h);
      }
    }
    CacheNode* parent = v->parent;
    parent->children.erase(v->edge[0]);
  }

  void make_room(MemTier tier, uint64_t tokens, uint64_t epoch) {
    while (!budget_.can_fit(tier, tokens)) {
      CacheNode* v = select_victim(tier, epoch);
      if (!v) throw CapacityExhausted("insert: cannot free enough capacity");
      evict_or_demote(v, tier, epoch, nullptr);
    }
  }

  template <typename Fn>
  void visit(const CacheNode* node, Fn&& fn) const {
    if (!node->is_root()) fn(node);
    for (const auto& [tok, child] : node->children) visit(child.get(), fn);
  }

  void serialize_node(const CacheNode* node, ByteWriter& w) const {
    w.u32(static_cast<uint32_t>(node->edge.size()));
    for (TokenId t : node->edge) w.u32(t);
    w.u8(static_cast<uint8_t>(node->label));
    w.u64(node->creator.value);
    w.u64(node->access_epoch);
    uint8_t flags = (node->is_compressed ? 1 : 0) | (node->after_compress ? 2 : 0);
    w.u8(flags);
    w.u32(static_cast<uint32_t>(node->children.size()));
    for (const auto& [tok, child] : node->children) serialize_node(child.get(), w);
  }

  mutable std::mutex mu_;
  std::unique_ptr<CacheNode> root_;
  TierBudget budget_;
  bool tiered_ = false;
  uint64_t epoch_counter_ = 0;
  uint64_t next_node_id_ = 1;
  uint64_t next_handle_id_ = 1;
  std::unordered_map<uint64_t, CacheNode*> handle_owner_;
  IndexCounters counters_;
};

}  // namespace safekv
