#pragma once

#include <functional>
#include <vector>

#include "safekv/access_stats.hpp"
#include "safekv/cache_index.hpp"
#include "safekv/core.hpp"

namespace safekv {

struct MonitorConfig {
  double entropy_jump = 0.3;
  uint64_t u_pre_max = 1;
};

enum class AnomalyAction : uint8_t { None = 0, DowngradeToPrivate = 1, Restrict = 2 };

inline const char* to_string(AnomalyAction a) {
  switch (a) {
    case AnomalyAction::DowngradeToPrivate: return "downgrade_to_private";
    case AnomalyAction::Restrict: return "restrict";
    default: return "none";
  }
}

struct AnomalyEvent {
  NodeRef node = nullptr;
  uint64_t node_id = 0;
  double entropy_now = 0.0;
  double entropy_prev = 0.0;
  uint64_t u_pre = 0;
  AnomalyAction action = AnomalyAction::None;
  uint64_t epoch = 0;
  OwnerClass owner_class = OwnerClass::Customer;
};

/// Entropy-based runtime fallback: watches per-block access dispersion and
/// reacts to suspicious shifts on shared (Public) blocks. Customer blocks are
/// downgraded to Private on the spot; Business blocks move to Restricted
/// (private-equivalent visibility) and raise an alert for out-of-band
/// handling.
class EntropyMonitor {
 public:
  EntropyMonitor(RadixCacheIndex& index, MonitorConfig cfg = {})
      : index_(index), cfg_(cfg) {}

  void set_alert_sink(std::function<void(const AnomalyEvent&)> sink) { sink_ = std::move(sink); }

  void record_access(NodeRef node, UserId user) { index_.record_access(node, user); }

  /// Evaluates one Public block against the suspicion predicate:
  /// entropy rose by at least entropy_jump while the previous window saw at
  /// most u_pre_max distinct users. Applies the mitigation and returns the
  /// event (action None when nothing fired or the node is not Public).
  AnomalyEvent check_anomaly(NodeRef node, uint64_t epoch) {
    AnomalyEvent ev;
    ev.node = node;
    ev.node_id = node->node_id;
    ev.epoch = epoch;
    ev.owner_class = node->owner_class;
    ev.entropy_now = entropy(node->stats);
    ev.entropy_prev = previous_entropy(node->stats);
    ev.u_pre = node->stats.u_pre;
    if (node->label != SensitivityLabel::Public) return ev;
    // a block with no previous window has no concentrated history to deviate
    // from; suspicion needs an established low-dispersion baseline
    bool suspicious = node->stats.hit_pre > 0 &&
                      (ev.entropy_now - ev.entropy_prev) >= cfg_.entropy_jump &&
                      ev.u_pre <= cfg_.u_pre_max;
    if (!suspicious) return ev;
    if (node->owner_class == OwnerClass::Customer) {
      ev.action = AnomalyAction::DowngradeToPrivate;
      index_.set_label(node, SensitivityLabel::Private, /*propagate=*/true);
    } else {
      ev.action = AnomalyAction::Restrict;
      index_.set_label(node, SensitivityLabel::Restricted, /*propagate=*/true);
    }
    emit(ev);
    return ev;
  }

  /// One monitor epoch: check every Public block with current-window
  /// activity, then roll every block's window. Returns the events that fired.
  std::vector<AnomalyEvent> epoch_pass(uint64_t epoch) {
    std::vector<AnomalyEvent> fired;
    std::vector<NodeRef> nodes;
    index_.for_each_node([&](const CacheNode* n) { nodes.push_back(const_cast<CacheNode*>(n)); });
    for (NodeRef n : nodes) {
      if (n->label == SensitivityLabel::Public && (n->stats.hit_cur > 0 || n->stats.hit_pre > 0)) {
        AnomalyEvent ev = check_anomaly(n, epoch);
        if (ev.action != AnomalyAction::None) fired.push_back(ev);
      }
    }
    for (NodeRef n : nodes) index_.roll_window(n);
    alerts_last_epoch_ = fired.size();
    total_alerts_ += fired.size();
    return fired;
  }

  uint64_t alerts_last_epoch() const { return alerts_last_epoch_; }
  uint64_t total_alerts() const { return total_alerts_; }

 private:
  void emit(const AnomalyEvent& ev) {
    if (sink_) sink_(ev);
  }

  RadixCacheIndex& index_;
  MonitorConfig cfg_;
  std::function<void(const AnomalyEvent&)> sink_;
  uint64_t alerts_last_epoch_ = 0;
  uint64_t total_alerts_ = 0;
};

}  // namespace safekv
