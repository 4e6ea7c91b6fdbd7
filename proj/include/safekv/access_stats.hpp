#pragma once

#include <algorithm>
#include <vector>

#include "safekv/core.hpp"

namespace safekv {

/// Rolling per-block access window for the entropy monitor: hits and distinct
/// users for the current window, plus the previous window's totals.
///
/// Distinct users are tracked exactly up to kMaxTrackedUsers. Past that the
/// tracker saturates: an accessor not found in the (full) set is counted as a
/// new user even though it might be a repeat, so u_cnt drifts high and the
/// entropy estimate errs toward suspicion. The invariant u_cnt <= hit_cur is
/// preserved either way.
struct AccessStats {
  static constexpr size_t kMaxTrackedUsers = 64;

  uint64_t hit_cur = 0;
  uint64_t u_cnt = 0;
  uint64_t hit_pre = 0;
  uint64_t u_pre = 0;
  std::vector<UserId> user_set;  // sorted, exact below saturation

  void record(UserId user) {
    ++hit_cur;
    auto it = std::lower_bound(user_set.begin(), user_set.end(), user);
    if (it != user_set.end() && *it == user) return;
    if (user_set.size() < kMaxTrackedUsers) {
      user_set.insert(it, user);
      ++u_cnt;
    } else {
      ++u_cnt;  // saturated: cannot dedup, count as new
    }
  }

  void roll() {
    hit_pre = hit_cur;
    u_pre = u_cnt;
    hit_cur = 0;
    u_cnt = 0;
    user_set.clear();
  }
};

/// Access-dispersion entropy of a window: distinct users over hits, in [0, 1].
/// Defined as 0 for an empty window.
inline double window_entropy(uint64_t u_cnt, uint64_t hit_cnt) {
  if (hit_cnt == 0) return 0.0;
  return static_cast<double>(u_cnt) / static_cast<double>(hit_cnt);
}

inline double entropy(const AccessStats& s) { return window_entropy(s.u_cnt, s.hit_cur); }

inline double previous_entropy(const AccessStats& s) { return window_entropy(s.u_pre, s.hit_pre); }

}  // namespace safekv
