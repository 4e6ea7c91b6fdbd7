#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <string>
#include <vector>

#include <json.hpp>

#include "safekv/cache_index.hpp"
#include "safekv/core.hpp"
#include "safekv/detection.hpp"
#include "safekv/monitor.hpp"
#include "safekv/workload.hpp"

namespace safekv {

// ---------------------------------------------------------------------------
// Cost model (TTFT)
// ---------------------------------------------------------------------------

/// TTFT = t_base + c_prefill * uncached_tokens + sum of per-token reload
/// penalties for matched handles living below HBM, plus optional Gaussian
/// jitter. The pure hit/miss dichotomy is the boundary case matched in
/// {0, |input|}.
struct CostModel {
  double t_base_ms = 10.0;
  double c_prefill_ms = 1.0;
  std::array<double, 3> tier_penalty_ms{0.0, 0.2, 0.5};  // HBM, DRAM, SSD
  double noise_sigma_ms = 0.0;
  uint64_t seed = 0;

  void validate() const {
    if (tier_penalty_ms[1] < 0 || tier_penalty_ms[2] < tier_penalty_ms[1])
      throw ConfigError("cost: tier penalties must satisfy 0 <= DRAM <= SSD");
    if (c_prefill_ms <= tier_penalty_ms[2])
      throw ConfigError("cost: c_prefill must exceed the SSD reload penalty");
    if (noise_sigma_ms < 0) throw ConfigError("cost: noise_sigma must be non-negative");
  }

  double noise(uint64_t request_id) const {
    if (noise_sigma_ms == 0.0) return 0.0;
    SplitMix64 rng(derive_seed(seed, request_id));
    return noise_sigma_ms * rng.next_normal();
  }

  double ttft(size_t input_tokens, const MatchResult& m, uint64_t request_id) const {
    double t = t_base_ms + c_prefill_ms * static_cast<double>(input_tokens - m.matched_tokens);
    for (const KvHandle& h : m.handles)
      t += tier_penalty_ms[static_cast<size_t>(h.tier)] * h.token_count;
    t += noise(request_id);
    return std::max(t, t_base_ms);
  }
};

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

enum class PolicyId : uint8_t { GlobalShare, CachePartition, PublicSystemPrompt, SafeKV };

inline const char* to_string(PolicyId p) {
  switch (p) {
    case PolicyId::GlobalShare: return "global_share";
    case PolicyId::CachePartition: return "cache_partition";
    case PolicyId::PublicSystemPrompt: return "public_system_prompt";
    default: return "safekv";
  }
}

inline PolicyId policy_from_string(const std::string& s) {
  if (s == "global_share") return PolicyId::GlobalShare;
  if (s == "cache_partition") return PolicyId::CachePartition;
  if (s == "public_system_prompt") return PolicyId::PublicSystemPrompt;
  if (s == "safekv") return PolicyId::SafeKV;
  throw ConfigError("unknown policy: " + s);
}

constexpr uint8_t kPolicyAudit = 0x80;

// ---------------------------------------------------------------------------
// Records and scheduling
// ---------------------------------------------------------------------------

struct RequestRecord {
  uint64_t request_id = 0;
  UserId user{};
  UserKind kind = UserKind::Benign;
  uint64_t input_tokens = 0;
  double arrival_ms = 0.0;
  uint64_t matched_tokens = 0;
  uint64_t prefill_tokens = 0;    // input - matched (cost side)
  uint64_t new_block_tokens = 0;  // structurally new suffix (classification side)
  double ttft_ms = 0.0;
  PolicyId policy = PolicyId::SafeKV;
  uint64_t epoch = 0;
  bool dropped = false;
};

enum class SchedKind : uint8_t { FCFS, LPM };

struct BatchItem {
  uint64_t request_id = 0;
  double arrival_ms = 0.0;
  uint64_t matched_tokens = 0;
};

/// FCFS orders by arrival (request id breaking ties); LPM orders by current
/// matched prefix length descending, then FCFS order.
inline std::vector<BatchItem> batch_step(std::vector<BatchItem> pending, SchedKind kind) {
  auto fcfs = [](const BatchItem& a, const BatchItem& b) {
    return a.arrival_ms != b.arrival_ms ? a.arrival_ms < b.arrival_ms : a.request_id < b.request_id;
  };
  if (kind == SchedKind::FCFS) {
    std::sort(pending.begin(), pending.end(), fcfs);
  } else {
    std::sort(pending.begin(), pending.end(), [&](const BatchItem& a, const BatchItem& b) {
      if (a.matched_tokens != b.matched_tokens) return a.matched_tokens > b.matched_tokens;
      return fcfs(a, b);
    });
  }
  return pending;
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

struct SimConfig {
  PolicyId policy = PolicyId::SafeKV;
  CostModel cost{};
  RadixCacheIndex::Config index{};
  PipelineConfig detection{};
  MonitorConfig monitor{};
  double epoch_interval_ms = 100.0;
  uint32_t system_prompt_tokens = 0;  // PublicSystemPrompt boundary
  bool compress_private_paths = true;
  uint64_t seed = 0;
};

struct SimMetrics {
  uint64_t requests = 0;
  uint64_t dropped = 0;
  double duration_ms = 0.0;
  uint64_t total_input_tokens = 0;
  uint64_t total_matched_tokens = 0;
  double hit_rate = 0.0;
  double intra_reuse = 0.0;
  double inter_reuse = 0.0;
  double ttft_mean = 0.0, ttft_p50 = 0.0, ttft_p95 = 0.0, ttft_p99 = 0.0;
  uint64_t leak_events = 0;
  uint64_t downgrades = 0;
  uint64_t restricts = 0;
  uint64_t epochs = 0;
  IndexCounters index_counters{};
  PipelineCounters detection_counters{};
};

/// Discrete-event serving simulator over virtual time. The event loop is
/// logically single-threaded: requests advance the clock, and detection
/// completions plus monitor/cache epochs fire at their scheduled instants
/// before the next request is admitted (completions first on ties).
class ServingSimulator {
 public:
  ServingSimulator(SimConfig cfg, RuleEngine* rules) : cfg_(cfg), index_(cfg.index), monitor_(index_, cfg.monitor) {
    cfg_.cost.validate();
    pipeline_ = std::make_unique<DetectionPipeline>(
        cfg_.detection, rules, [this](const ClassificationOutcome& out) { on_classified(out); });
    monitor_.set_alert_sink([this](const AnomalyEvent& ev) { on_anomaly(ev); });
  }

  double now() const { return now_; }
  RadixCacheIndex& index() { return index_; }
  EntropyMonitor& monitor() { return monitor_; }
  DetectionPipeline& pipeline() { return *pipeline_; }
  PolicyId policy() const { return cfg_.policy; }
  const SimConfig& config() const { return cfg_; }

  /// Admits one request: advances virtual time, matches, prices, inserts the
  /// unmatched suffix under the policy's labeling rule, and records metrics.
  RequestRecord submit(const Request& req) {
    advance_to(std::max(now_, req.arrival_ms));
    RequestRecord rec;
    rec.request_id = req.request_id;
    rec.user = req.user;
    rec.kind = req.user_kind;
    rec.input_tokens = req.tokens.size();
    rec.arrival_ms = now_;
    rec.policy = cfg_.policy;
    rec.epoch = index_.current_epoch();

    MatchResult m = index_.match_prefix(req.tokens, req.user);
    for (NodeRef n : m.path) index_.pin(n);
    rec.matched_tokens = m.matched_tokens;
    rec.prefill_tokens = req.tokens.size() - m.matched_tokens;
    rec.ttft_ms = cfg_.cost.ttft(req.tokens.size(), m, req.request_id);

    for (NodeRef n : m.path) monitor_.record_access(n, req.user);
    attribute_reuse(m, req.user);

    uint32_t new_tokens = 0;
    NodeRef terminal = nullptr;
    try {
      terminal = index_.insert(req.tokens, req.user, req.owner, index_.current_epoch(), &new_tokens);
    } catch (const CapacityExhausted&) {
      rec.dropped = true;
      ++dropped_;
      log_event({{"type", "drop"}, {"time_ms", now_}, {"request_id", req.request_id}});
    }
    rec.new_block_tokens = new_tokens;
    if (!rec.dropped && new_tokens > 0) apply_policy_label(req, terminal, new_tokens);
    for (NodeRef n : m.path) index_.unpin(n);
    records_.push_back(rec);
    return rec;
  }

  /// Processes scheduled completions and epoch boundaries up to time t, then
  /// sets the clock to t (never backwards).
  void advance_to(double t) {
    for (;;) {
      double next_epoch = (static_cast<double>(epochs_done_) + 1.0) * cfg_.epoch_interval_ms;
      bool have_completion = !completions_.empty() && completions_.top().apply_at_ms <= t;
      bool have_epoch = cfg_.epoch_interval_ms > 0 && next_epoch <= t;
      if (!have_completion && !have_epoch) break;
      if (have_completion &&
          (!have_epoch || completions_.top().apply_at_ms <= next_epoch)) {
        Scheduled s = completions_.top();
        completions_.pop();
        now_ = std::max(now_, s.apply_at_ms);
        apply_outcome(s.out);
      } else {
        now_ = std::max(now_, next_epoch);
        ++epochs_done_;
        run_epoch();
      }
    }
    now_ = std::max(now_, t);
  }

  /// Settles everything still in flight (classification queue, scheduled
  /// label applications, one final monitor epoch).
  void finish() {
    pipeline_->drain(pipeline_->queue_size());
    double horizon = now_;
    // apply_outcome can enqueue nothing further; drain the schedule fully
    while (!completions_.empty()) {
      Scheduled s = completions_.top();
      completions_.pop();
      now_ = std::max(now_, s.apply_at_ms);
      apply_outcome(s.out);
    }
    now_ = std::max(now_, horizon);
    ++epochs_done_;
    run_epoch();
  }

  const std::vector<RequestRecord>& records() const { return records_; }
  const std::vector<nlohmann::json>& events() const { return events_; }
  uint64_t leak_events() const { return leaks_; }

  SimMetrics metrics() const {
    SimMetrics s;
    s.requests = records_.size();
    s.dropped = dropped_;
    s.duration_ms = now_;
    std::vector<double> ttfts;
    for (const auto& r : records_) {
      s.total_input_tokens += r.input_tokens;
      s.total_matched_tokens += r.matched_tokens;
      if (!r.dropped) ttfts.push_back(r.ttft_ms);
    }
    if (s.total_input_tokens)
      s.hit_rate = static_cast<double>(s.total_matched_tokens) / static_cast<double>(s.total_input_tokens);
    if (s.total_input_tokens) {
      s.intra_reuse = static_cast<double>(intra_tokens_) / static_cast<double>(s.total_input_tokens);
      s.inter_reuse = static_cast<double>(inter_tokens_) / static_cast<double>(s.total_input_tokens);
    }
    if (!ttfts.empty()) {
      std::sort(ttfts.begin(), ttfts.end());
      double sum = 0;
      for (double v : ttfts) sum += v;
      s.ttft_mean = sum / static_cast<double>(ttfts.size());
      auto pct = [&](double p) {
        size_t idx = static_cast<size_t>(std::ceil(p * static_cast<double>(ttfts.size()))) - 1;
        return ttfts[std::min(idx, ttfts.size() - 1)];
      };
      s.ttft_p50 = pct(0.50);
      s.ttft_p95 = pct(0.95);
      s.ttft_p99 = pct(0.99);
    }
    s.leak_events = leaks_;
    s.downgrades = downgrades_;
    s.restricts = restricts_;
    s.epochs = epochs_done_;
    s.index_counters = index_.counters();
    s.detection_counters = pipeline_->counters();
    return s;
  }

 private:
  struct Scheduled {
    double apply_at_ms = 0.0;
    ClassificationOutcome out;
    bool operator>(const Scheduled& o) const {
      if (apply_at_ms != o.apply_at_ms) return apply_at_ms > o.apply_at_ms;
      return out.block_id > o.out.block_id;
    }
  };

  void attribute_reuse(const MatchResult& m, UserId user) {
    uint64_t counted = 0;
    for (size_t i = 0; i < m.path.size(); ++i) {
      NodeRef n = m.path[i];
      uint64_t covered = std::min<uint64_t>(n->span(), m.matched_tokens - counted);
      counted += covered;
      if (n->creator == user)
        intra_tokens_ += covered;
      else
        inter_tokens_ += covered;
    }
  }

  void apply_policy_label(const Request& req, NodeRef terminal, uint32_t new_tokens) {
    const size_t len = req.tokens.size();
    switch (cfg_.policy) {
      case PolicyId::GlobalShare:
        index_.resolve_block(terminal, new_tokens, SensitivityLabel::Public, false, kPolicyAudit);
        return;
      case PolicyId::CachePartition:
        index_.resolve_block(terminal, new_tokens, SensitivityLabel::Private, false);
        return;
      case PolicyId::PublicSystemPrompt: {
        const size_t boundary = cfg_.system_prompt_tokens;
        const size_t block_begin = len - new_tokens;
        if (block_begin >= boundary) {
          index_.resolve_block(terminal, new_tokens, SensitivityLabel::Private, false);
        } else if (len <= boundary) {
          index_.resolve_block(terminal, new_tokens, SensitivityLabel::Public, false, kPolicyAudit);
        } else {
          NodeRef at = index_.ensure_boundary(req.tokens, boundary);
          index_.resolve_block(terminal, static_cast<uint32_t>(len - boundary),
                               SensitivityLabel::Private, false);
          if (at)
            index_.resolve_block(at, static_cast<uint32_t>(boundary - block_begin),
                                 SensitivityLabel::Public, false, kPolicyAudit);
        }
        return;
      }
      case PolicyId::SafeKV: {
        PendingBlock blk;
        blk.block_id = ++block_seq_;
        blk.node = terminal;
        blk.span_tokens = new_tokens;
        blk.text = req.text.substr(len - new_tokens);
        blk.history = req.history;
        blk.truth = block_truth(req, len - new_tokens, len);
        blk.enqueue_ms = now_;
        index_.pin(terminal);
        if (!pipeline_->enqueue(std::move(blk))) {
          index_.unpin(terminal);
          return;
        }
        pipeline_->drain();
        return;
      }
    }
  }

  void on_classified(const ClassificationOutcome& out) {
    Scheduled s;
    s.apply_at_ms = now_ + out.total_latency_ms;
    s.out = out;
    completions_.push(std::move(s));
  }

  void apply_outcome(const ClassificationOutcome& out) {
    uint8_t audit = 0;
    for (int t = 1; t <= out.resolved_tier; ++t) audit |= static_cast<uint8_t>(1u << (t - 1));
    bool priv = out.final_label != SensitivityLabel::Public;
    index_.resolve_block(out.node, out.span_tokens, out.final_label, priv, priv ? 0 : audit);
    index_.unpin(out.node);
    if (!priv && out.truth_sensitive) {
      ++leaks_;
      log_event({{"type", "leak"},
                 {"time_ms", now_},
                 {"block_id", out.block_id},
                 {"node_id", out.node->node_id},
                 {"resolved_tier", out.resolved_tier}});
    }
  }

  void run_epoch() {
    uint64_t epoch = index_.advance_epoch();
    uint64_t evicted_before = index_.counters().evicted_tokens;
    // the entropy monitor is part of the SafeKV defense; the baseline
    // policies run without it
    std::vector<AnomalyEvent> fired;
    if (cfg_.policy == PolicyId::SafeKV) fired = monitor_.epoch_pass(epoch);
    if (cfg_.compress_private_paths) index_.compress_all();
    pipeline_->update_threshold(
        static_cast<double>(pipeline_->queue_size()) / static_cast<double>(cfg_.detection.batch_size),
        fired.size());
    pipeline_->drain();
    uint64_t evicted_delta = index_.counters().evicted_tokens - evicted_before;
    if (evicted_delta > 0)
      log_event({{"type", "eviction"}, {"time_ms", now_}, {"epoch", epoch}, {"tokens", evicted_delta}});
  }

  void on_anomaly(const AnomalyEvent& ev) {
    if (ev.action == AnomalyAction::DowngradeToPrivate)
      ++downgrades_;
    else if (ev.action == AnomalyAction::Restrict)
      ++restricts_;
    log_event({{"type", "anomaly"},
               {"time_ms", now_},
               {"action", to_string(ev.action)},
               {"node_id", ev.node_id},
               {"entropy_now", ev.entropy_now},
               {"entropy_prev", ev.entropy_prev},
               {"u_pre", ev.u_pre},
               {"epoch", ev.epoch}});
  }

  void log_event(nlohmann::json j) { events_.push_back(std::move(j)); }

  SimConfig cfg_;
  RadixCacheIndex index_;
  EntropyMonitor monitor_;
  std::unique_ptr<DetectionPipeline> pipeline_;
  double now_ = 0.0;
  uint64_t epochs_done_ = 0;
  uint64_t block_seq_ = 0;
  uint64_t dropped_ = 0;
  uint64_t leaks_ = 0;
  uint64_t downgrades_ = 0;
  uint64_t restricts_ = 0;
  uint64_t intra_tokens_ = 0;
  uint64_t inter_tokens_ = 0;
  std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> completions_;
  std::vector<RequestRecord> records_;
  std::vector<nlohmann::json> events_;
};

// ---------------------------------------------------------------------------
// Run artifact
// ---------------------------------------------------------------------------

constexpr int kArtifactFormatVersion = 1;

inline nlohmann::json metrics_to_json(const SimMetrics& m, PolicyId policy) {
  nlohmann::json j;
  j["format_version"] = kArtifactFormatVersion;
  j["policy"] = to_string(policy);
  j["requests"] = m.requests;
  j["dropped"] = m.dropped;
  j["sim_duration_ms"] = m.duration_ms;
  j["total_input_tokens"] = m.total_input_tokens;
  j["total_matched_tokens"] = m.total_matched_tokens;
  j["hit_rate"] = m.hit_rate;
  j["intra_reuse"] = m.intra_reuse;
  j["inter_reuse"] = m.inter_reuse;
  j["ttft"] = {{"mean", m.ttft_mean}, {"p50", m.ttft_p50}, {"p95", m.ttft_p95}, {"p99", m.ttft_p99}};
  j["leak_events"] = m.leak_events;
  j["downgrades"] = m.downgrades;
  j["restricts"] = m.restricts;
  j["epochs"] = m.epochs;
  j["evictions"] = {{"nodes", m.index_counters.evicted_nodes},
                    {"tokens", m.index_counters.evicted_tokens},
                    {"demoted_tokens", m.index_counters.demoted_tokens}};
  j["cache"] = {{"inserts", m.index_counters.inserts},
                {"splits", m.index_counters.splits},
                {"compressions", m.index_counters.compressions}};
  j["detection"] = {{"enqueued", m.detection_counters.enqueued},
                    {"saturation_drops", m.detection_counters.saturation_drops},
                    {"tier_invocations",
                     {m.detection_counters.tier_invocations[0], m.detection_counters.tier_invocations[1],
                      m.detection_counters.tier_invocations[2]}},
                    {"resolved_by_tier",
                     {m.detection_counters.resolved_by_tier[0], m.detection_counters.resolved_by_tier[1],
                      m.detection_counters.resolved_by_tier[2]}},
                    {"finalized_public", m.detection_counters.finalized_public},
                    {"finalized_private", m.detection_counters.finalized_private},
                    {"detector_unavailable", m.detection_counters.detector_unavailable}};
  return j;
}

/// Writes metrics.json, requests.csv, and events.log into dir. Output is
/// bytewise deterministic for a fixed run (no wall-clock timestamps).
inline void write_artifact(const std::filesystem::path& dir, const ServingSimulator& sim) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "metrics.json");
    f << metrics_to_json(sim.metrics(), sim.policy()).dump(2) << "\n";
  }
  {
    std::ofstream f(dir / "requests.csv");
    f << "request_id,user,kind,arrival_ms,input_tokens,matched_tokens,prefill_tokens,"
         "new_block_tokens,ttft_ms,policy,epoch,dropped\n";
    char buf[64];
    for (const auto& r : sim.records()) {
      std::snprintf(buf, sizeof(buf), "%.6f", r.arrival_ms);
      f << r.request_id << ',' << r.user.value << ','
        << (r.kind == UserKind::Attacker ? "attacker" : "benign") << ',' << buf << ','
        << r.input_tokens << ',' << r.matched_tokens << ',' << r.prefill_tokens << ','
        << r.new_block_tokens << ',';
      std::snprintf(buf, sizeof(buf), "%.6f", r.ttft_ms);
      f << buf << ',' << to_string(r.policy) << ',' << r.epoch << ',' << (r.dropped ? 1 : 0) << "\n";
    }
  }
  {
    std::ofstream f(dir / "events.log");
    for (const auto& e : sim.events()) f << e.dump() << "\n";
  }
}

/// FNV-1a digest over the artifact files, for golden tests.
inline uint64_t artifact_digest(const std::filesystem::path& dir) {
  Fnv1a64 h;
  for (const char* name : {"metrics.json", "requests.csv", "events.log", "attack.json"}) {
    auto p = dir / name;
    if (!std::filesystem::exists(p)) continue;
    std::ifstream f(p, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    h.update(name, std::strlen(name));
    h.update(content.data(), content.size());
  }
  return h.digest();
}

}  // namespace safekv
