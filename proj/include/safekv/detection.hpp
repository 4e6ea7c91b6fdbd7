#pragma once

#include <atomic>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "safekv/cache_index.hpp"
#include "safekv/core.hpp"
#include "safekv/util.hpp"

namespace safekv {

// ---------------------------------------------------------------------------
// Tier-1 rule engine
// ---------------------------------------------------------------------------

struct PatternRule {
  std::string rule_id;
  std::string category;
  enum class Kind : uint8_t { Regex, ExactBlacklist } kind = Kind::Regex;
  std::string pattern;
  bool enabled = true;
};

struct DetectionVerdict {
  bool sensitive = false;
  int tier = 1;
  double score = 0.0;
  std::vector<std::string> categories;
  bool escalate = false;
};

/// Multi-pattern trie for blacklist terms. Matching is whole-token: the text
/// is cut at whitespace, surrounding punctuation is stripped, and a token
/// matches only if it equals a stored term exactly.
class TokenTrie {
 public:
  void add(std::string_view term, int rule_index) {
    size_t cur = ensure_root();
    for (char c : term) {
      auto it = nodes_[cur].next.find(c);
      if (it == nodes_[cur].next.end()) {
        nodes_.push_back({});  // may reallocate: re-index instead of holding references
        size_t idx = nodes_.size() - 1;
        nodes_[cur].next.emplace(c, idx);
        cur = idx;
      } else {
        cur = it->second;
      }
    }
    nodes_[cur].rule_index = rule_index;
  }

  int match_token(std::string_view token) const {
    if (nodes_.empty() || token.empty()) return -1;
    size_t cur = 0;
    for (char c : token) {
      const auto& next = nodes_[cur].next;
      auto it = next.find(c);
      if (it == next.end()) return -1;
      cur = it->second;
    }
    return nodes_[cur].rule_index;
  }

  /// Scans text token by token; calls fn(rule_index) for every hit.
  template <typename Fn>
  void scan(std::string_view text, Fn&& fn) const {
    if (nodes_.empty()) return;
    size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    auto is_trim = [](char c) {
      return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '(' ||
             c == ')' || c == '"' || c == '\'';
    };
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      size_t j = i;
      while (j < text.size() && !is_space(text[j])) ++j;
      size_t a = i, b = j;
      while (a < b && is_trim(text[a])) ++a;
      while (b > a && is_trim(text[b - 1])) --b;
      if (b > a) {
        int r = match_token(text.substr(a, b - a));
        if (r >= 0) fn(r);
      }
      i = j;
    }
  }

  bool empty() const { return nodes_.empty(); }

 private:
  struct Node {
    std::map<char, size_t> next;
    int rule_index = -1;
  };
  size_t ensure_root() {
    if (nodes_.empty()) nodes_.push_back({});
    return 0;
  }
  std::vector<Node> nodes_;
};

/// Immutable compiled snapshot of a rule set. Scans never observe a mix of
/// two versions: they operate on one snapshot for their whole duration.
class CompiledRuleSet {
 public:
  static std::shared_ptr<const CompiledRuleSet> compile(std::vector<PatternRule> rules,
                                                        uint64_t version) {
    auto set = std::make_shared<CompiledRuleSet>();
    set->version_ = version;
    std::map<std::string, int> seen;
    for (auto& r : rules) {
      if (seen.count(r.rule_id))
        throw CompileError("duplicate rule_id: " + r.rule_id);
      seen[r.rule_id] = 1;
    }
    for (auto& r : rules) {
      if (r.kind == PatternRule::Kind::Regex) {
        try {
          set->regexes_.emplace_back(static_cast<int>(set->rules_.size()),
                                     std::regex(r.pattern, std::regex::ECMAScript));
        } catch (const std::regex_error& e) {
          throw CompileError("rule '" + r.rule_id + "': bad regex: " + e.what());
        }
      } else {
        set->trie_.add(r.pattern, static_cast<int>(set->rules_.size()));
      }
      set->rules_.push_back(std::move(r));
    }
    return set;
  }

  /// Tier-1 scan: sensitive iff any enabled rule matches. Regex matching is
  /// leftmost-anywhere; blacklist matching is whole-token over the trie.
  DetectionVerdict scan(std::string_view text) const {
    DetectionVerdict v;
    v.tier = 1;
    std::vector<bool> hit(rules_.size(), false);
    std::string buf(text);  // std::regex needs a contiguous range with bidirectional iterators
    for (const auto& [idx, re] : regexes_) {
      if (!rules_[idx].enabled) continue;
      if (std::regex_search(buf, re)) hit[idx] = true;
    }
    trie_.scan(text, [&](int idx) {
      if (rules_[idx].enabled) hit[idx] = true;
    });
    for (size_t i = 0; i < rules_.size(); ++i) {
      if (!hit[i]) continue;
      v.sensitive = true;
      if (std::find(v.categories.begin(), v.categories.end(), rules_[i].category) ==
          v.categories.end())
        v.categories.push_back(rules_[i].category);
    }
    v.score = v.sensitive ? 1.0 : 0.0;
    v.escalate = !v.sensitive;
    return v;
  }

  size_t size() const { return rules_.size(); }
  uint64_t version() const { return version_; }
  const std::vector<PatternRule>& rules() const { return rules_; }

 private:
  uint64_t version_ = 0;
  std::vector<PatternRule> rules_;
  std::vector<std::pair<int, std::regex>> regexes_;
  TokenTrie trie_;
};

/// Default rule library aligned with the generator's secret templates. Each
/// rule names the user-data category it protects.
inline std::vector<PatternRule> default_pattern_rules() {
  using K = PatternRule::Kind;
  return {
      {"ssn_dashed", "Identity Information", K::Regex, R"(\b\d{3}-\d{2}-\d{4}\b)", true},
      {"phone_us", "Basic Information", K::Regex,
       R"(\(\d{3}\)\s?\d{3}-\d{4}|\b\d{3}-\d{3}-\d{4}\b)", true},
      {"email", "Basic Information", K::Regex,
       R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})", true},
      {"ipv4", "System/Network Identification", K::Regex,
       R"(\b\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}\b)", true},
      {"credit_card", "Financial Info", K::Regex,
       R"(\b\d{4}[- ]\d{4}[- ]\d{4}[- ]\d{4}\b)", true},
      {"bank_account", "Financial Info", K::Regex,
       R"(\baccount\s+(?:no|number)\.?\s*\d{6,}\b)", true},
      {"mac_address", "Hardware Device Information", K::Regex,
       R"(\b[0-9A-Fa-f]{2}(?::[0-9A-Fa-f]{2}){5}\b)", true},
      {"imei", "Hardware Device Information", K::Regex, R"(\bimei\s*\d{15}\b)", true},
      {"blk_project_codes", "Service Content Info", K::ExactBlacklist, "PROJECT-TITAN", true},
  };
}

/// Hot-reloadable rule engine. The active set is swapped atomically; in-flight
/// scans keep using the snapshot they started with.
class RuleEngine {
 public:
  RuleEngine() { active_ = CompiledRuleSet::compile(default_pattern_rules(), 1); }

  std::shared_ptr<const CompiledRuleSet> active() const {
    std::lock_guard lk(mu_);
    return active_;
  }

  DetectionVerdict tier1_scan(std::string_view text) const { return active()->scan(text); }

  /// Parses rules from privacy_pattern_config.json content. Unknown fields
  /// are ignored with a warning. Throws ParseError / CompileError; on any
  /// failure the previous set stays active.
  std::shared_ptr<const CompiledRuleSet> load_rules_json(const nlohmann::json& j,
                                                         std::vector<std::string>* warnings = nullptr) {
    if (!j.is_object()) throw ParseError("pattern config: top level must be an object");
    uint64_t version = 0;
    std::vector<PatternRule> rules;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "version") {
        if (!it.value().is_number_integer()) throw ParseError("pattern config: version must be an integer");
        version = it.value().get<uint64_t>();
      } else if (it.key() == "rules") {
        if (!it.value().is_array()) throw ParseError("pattern config: rules must be an array");
        for (const auto& rj : it.value()) rules.push_back(parse_rule(rj, warnings));
      } else if (warnings) {
        warnings->push_back("ignoring unknown field: " + it.key());
      }
    }
    auto compiled = CompiledRuleSet::compile(std::move(rules), version);
    std::lock_guard lk(mu_);
    active_ = compiled;
    return compiled;
  }

  std::shared_ptr<const CompiledRuleSet> load_rules(const std::string& path,
                                                    std::vector<std::string>* warnings = nullptr);

  std::shared_ptr<const CompiledRuleSet> reload_rules(const std::string& path,
                                                      std::vector<std::string>* warnings = nullptr) {
    return load_rules(path, warnings);
  }

 private:
  static PatternRule parse_rule(const nlohmann::json& rj, std::vector<std::string>* warnings) {
    if (!rj.is_object()) throw ParseError("pattern config: each rule must be an object");
    PatternRule r;
    bool have_id = false, have_pattern = false;
    for (auto it = rj.begin(); it != rj.end(); ++it) {
      const std::string& k = it.key();
      if (k == "rule_id") {
        r.rule_id = it.value().get<std::string>();
        have_id = true;
      } else if (k == "category") {
        r.category = it.value().get<std::string>();
      } else if (k == "kind") {
        std::string kind = it.value().get<std::string>();
        if (kind == "regex") r.kind = PatternRule::Kind::Regex;
        else if (kind == "blacklist") r.kind = PatternRule::Kind::ExactBlacklist;
        else throw ParseError("pattern config: unknown kind '" + kind + "'");
      } else if (k == "pattern") {
        r.pattern = it.value().get<std::string>();
        have_pattern = true;
      } else if (k == "enabled") {
        r.enabled = it.value().get<bool>();
      } else if (warnings) {
        warnings->push_back("rule field ignored: " + k);
      }
    }
    if (!have_id || !have_pattern) throw ParseError("pattern config: rule needs rule_id and pattern");
    return r;
  }

  mutable std::mutex mu_;
  std::shared_ptr<const CompiledRuleSet> active_;
};

// ---------------------------------------------------------------------------
// Tier-2/3 detectors
// ---------------------------------------------------------------------------

/// Ground-truth view of one block, produced by the workload generator.
/// sensitive_alone covers spans that are sensitive in isolation;
/// sensitive_with_context additionally covers spans that become sensitive
/// only together with the session history.
struct BlockTruth {
  bool sensitive_alone = false;
  bool sensitive_with_context = false;
  std::vector<std::string> categories;
};

struct LatencyModel {
  enum class Kind : uint8_t { Constant, Lognormal } kind = Kind::Constant;
  double value_ms = 0.0;  // Constant
  double mu = 0.0;        // Lognormal: exp(N(mu, sigma))
  double sigma = 0.0;

  double sample(SplitMix64& rng) const {
    if (kind == Kind::Constant) return value_ms;
    return std::exp(mu + sigma * rng.next_normal());
  }
};

struct DetectorSpec {
  int tier = 2;
  enum class Mode : uint8_t { Oracle, MockWithFNR, External } mode = Mode::Oracle;
  double false_negative_rate = 0.0;
  double false_positive_rate = 0.0;
  LatencyModel latency;
  uint64_t seed = 0;
};

struct BlockInput {
  uint64_t block_id = 0;
  std::string text;
  std::vector<std::string> history;
  BlockTruth truth;
};

/// Transport-agnostic interface to an out-of-process detector. The shipped
/// implementation (SubprocessDetectorClient) speaks line-delimited JSON over
/// a subprocess pipe; see external_detector.hpp.
class ExternalDetectorClient {
 public:
  struct Reply {
    bool sensitive = false;
    double score = 0.0;
    std::vector<std::string> categories;
  };
  virtual ~ExternalDetectorClient() = default;
  /// Throws DetectorUnavailable on timeout or transport failure.
  virtual Reply request(uint64_t block_id, std::string_view text,
                        const std::vector<std::string>& history) = 0;
};

/// Runtime instance of a tier-2 or tier-3 detector. Oracle mode reads the
/// block's ground truth and never errs; MockWithFNR flips the truth with the
/// configured rates using a seeded stream (bit-reproducible for a fixed
/// (seed, input order)); External delegates over the line-JSON transport.
///
/// Mock confidence calibration: a flagged block carries score 1 - fnr; a
/// benign verdict draws its confidence from U[0.5, 1), or from U[0.1, 0.6)
/// when the block is context-dependent, so that context-only secrets look
/// uncertain and escalate to tier 3 under the default threshold.
class Detector {
 public:
  explicit Detector(DetectorSpec spec, std::shared_ptr<ExternalDetectorClient> external = nullptr)
      : spec_(spec), rng_(spec.seed), latency_rng_(derive_seed(spec.seed, 0x17)), external_(std::move(external)) {}

  const DetectorSpec& spec() const { return spec_; }

  double sample_latency() { return spec_.latency.sample(latency_rng_); }

  /// Classifies a block at this detector's tier. For tier 3 the history is
  /// part of the input and the context-aware ground truth applies; with no
  /// history supplied, a context-only secret is (correctly) not detectable.
  DetectionVerdict classify(const BlockInput& in, double current_threshold) {
    DetectionVerdict v;
    v.tier = spec_.tier;
    if (spec_.mode == DetectorSpec::Mode::External) {
      if (!external_) throw DetectorUnavailable("external detector not attached");
      auto reply = external_->request(in.block_id, in.text, in.history);
      v.sensitive = reply.sensitive;
      v.score = reply.score;
      v.categories = reply.categories;
      v.escalate = !v.sensitive && v.score < current_threshold;
      return v;
    }
    bool truth = truth_for_tier(in);
    bool flagged;
    if (spec_.mode == DetectorSpec::Mode::Oracle) {
      flagged = truth;
      v.score = 1.0;
    } else {
      double u = rng_.next_double();
      flagged = truth ? (u >= spec_.false_negative_rate) : (u < spec_.false_positive_rate);
      v.score = flagged ? 1.0 - spec_.false_negative_rate : benign_confidence(in);
    }
    v.sensitive = flagged;
    if (flagged && !in.truth.categories.empty()) v.categories = in.truth.categories;
    v.escalate = !v.sensitive && v.score < current_threshold;
    return v;
  }

 private:
  bool truth_for_tier(const BlockInput& in) const {
    if (spec_.tier >= 3 && !in.history.empty()) return in.truth.sensitive_with_context;
    return in.truth.sensitive_alone;
  }

  double benign_confidence(const BlockInput& in) {
    double u = rng_.next_double();
    bool context_only = in.truth.sensitive_with_context && !in.truth.sensitive_alone;
    if (context_only) return 0.1 + 0.5 * u;
    return 0.5 + 0.5 * u;
  }

  DetectorSpec spec_;
  SplitMix64 rng_;
  SplitMix64 latency_rng_;
  std::shared_ptr<ExternalDetectorClient> external_;
};

// ---------------------------------------------------------------------------
// Adaptive thresholding
// ---------------------------------------------------------------------------

struct ThresholdState {
  double base_threshold = 0.52;
  double current_threshold = 0.52;
  double load_factor = 0.0;
  enum class Alert : uint8_t { Normal, Elevated } alert_level = Alert::Normal;
};

/// current = clamp(base - k_load * max(0, load - 1) - k_alert * alerts,
///                 t_min, base). Monotone: more load or alerts never raises
/// the threshold; Elevated whenever alerts were seen.
inline ThresholdState adjust_threshold(ThresholdState state, double load, uint64_t recent_alerts,
                                       double k_load = 0.05, double k_alert = 0.02,
                                       double t_min = 0.1) {
  if (load < 0) throw Error("adjust_threshold: load must be non-negative");
  double t = state.base_threshold - k_load * std::max(0.0, load - 1.0) -
             k_alert * static_cast<double>(recent_alerts);
  state.current_threshold = std::min(state.base_threshold, std::max(t_min, t));
  state.load_factor = load;
  state.alert_level = recent_alerts > 0 ? ThresholdState::Alert::Elevated : ThresholdState::Alert::Normal;
  return state;
}

// ---------------------------------------------------------------------------
// Asynchronous classification pipeline
// ---------------------------------------------------------------------------

struct PendingBlock {
  uint64_t block_id = 0;
  NodeRef node = nullptr;  // may be null for standalone classification runs
  uint32_t span_tokens = 0;
  std::string text;
  std::vector<std::string> history;
  BlockTruth truth;
  double enqueue_ms = 0.0;
};

struct ClassificationOutcome {
  uint64_t block_id = 0;
  NodeRef node = nullptr;
  uint32_t span_tokens = 0;
  SensitivityLabel final_label = SensitivityLabel::Private;
  int resolved_tier = 1;
  double total_latency_ms = 0.0;
  bool truth_sensitive = false;
  bool detector_unavailable = false;
  std::vector<std::string> categories;
};

struct PipelineConfig {
  size_t queue_capacity = 4096;
  size_t batch_size = 64;
  double base_threshold = 0.52;
  double k_load = 0.05;
  double k_alert = 0.02;
  double t_min = 0.1;
  std::optional<DetectorSpec> tier1_mock;  // replaces the rule engine when set
  DetectorSpec tier2{};
  DetectorSpec tier3{};
};

struct PipelineCounters {
  uint64_t enqueued = 0;
  uint64_t saturation_drops = 0;
  uint64_t tier_invocations[3] = {0, 0, 0};
  uint64_t resolved_by_tier[3] = {0, 0, 0};
  uint64_t finalized_public = 0;
  uint64_t finalized_private = 0;
  uint64_t detector_unavailable = 0;
};

/// Runs Tier-1 -> (escalate) Tier-2 -> (escalate) Tier-3 per block. A block
/// becomes Public only when no tier flags it; the first sensitive verdict
/// finalizes Private and short-circuits the remaining tiers. Completion
/// outcomes go to the sink, which in production applies the label to the
/// cache index; blocks dropped on queue overflow simply stay PendingPrivate.
class DetectionPipeline {
 public:
  using Sink = std::function<void(const ClassificationOutcome&)>;

  DetectionPipeline(PipelineConfig cfg, RuleEngine* rules, Sink sink,
                    std::shared_ptr<ExternalDetectorClient> tier2_ext = nullptr,
                    std::shared_ptr<ExternalDetectorClient> tier3_ext = nullptr)
      : cfg_(cfg),
        rules_(rules),
        sink_(std::move(sink)),
        tier1_(cfg.tier1_mock ? std::make_unique<Detector>(*cfg.tier1_mock) : nullptr),
        tier2_(cfg.tier2, std::move(tier2_ext)),
        tier3_(cfg.tier3, std::move(tier3_ext)) {
    threshold_.base_threshold = cfg.base_threshold;
    threshold_.current_threshold = cfg.base_threshold;
  }

  /// Enqueue for later draining. Returns false (and counts a saturation
  /// drop) when the queue is full; the block then stays PendingPrivate.
  bool enqueue(PendingBlock block) {
    std::lock_guard lk(mu_);
    if (queue_.size() >= cfg_.queue_capacity) {
      ++counters_.saturation_drops;
      return false;
    }
    ++counters_.enqueued;
    queue_.push_back(std::move(block));
    return true;
  }

  /// Drains up to max_blocks (default: the configured batch size), invoking
  /// the sink with each outcome. Returns how many blocks were classified.
  size_t drain(size_t max_blocks = 0) {
    if (max_blocks == 0) max_blocks = cfg_.batch_size;
    size_t done = 0;
    while (done < max_blocks) {
      PendingBlock blk;
      {
        std::lock_guard lk(mu_);
        if (queue_.empty()) break;
        blk = std::move(queue_.front());
        queue_.pop_front();
      }
      ClassificationOutcome out = classify_one(blk);
      if (sink_) sink_(out);
      ++done;
    }
    return done;
  }

  size_t queue_size() const {
    std::lock_guard lk(mu_);
    return queue_.size();
  }

  void update_threshold(double load, uint64_t recent_alerts) {
    std::lock_guard lk(mu_);
    threshold_ = adjust_threshold(threshold_, load, recent_alerts, cfg_.k_load, cfg_.k_alert, cfg_.t_min);
  }

  ThresholdState threshold() const {
    std::lock_guard lk(mu_);
    return threshold_;
  }

  const PipelineCounters& counters() const { return counters_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  ClassificationOutcome classify_one(const PendingBlock& blk) {
    ClassificationOutcome out;
    out.block_id = blk.block_id;
    out.node = blk.node;
    out.span_tokens = blk.span_tokens;
    out.truth_sensitive = blk.truth.sensitive_with_context || blk.truth.sensitive_alone;
    double thr;
    {
      std::lock_guard lk(mu_);
      thr = threshold_.current_threshold;
    }
    BlockInput in{blk.block_id, blk.text, blk.history, blk.truth};

    // Tier 1
    ++counters_.tier_invocations[0];
    DetectionVerdict v1;
    if (tier1_) {
      v1 = tier1_->classify(in, thr);
      v1.tier = 1;
      v1.escalate = !v1.sensitive;  // mocked tier 1 always escalates on a miss
      out.total_latency_ms += tier1_->sample_latency();
    } else {
      v1 = rules_->tier1_scan(blk.text);
    }
    if (v1.sensitive) {
      finalize(out, SensitivityLabel::Private, 1, v1.categories);
      return out;
    }

    // Tier 2
    ++counters_.tier_invocations[1];
    DetectionVerdict v2;
    try {
      v2 = tier2_.classify(in, thr);
      out.total_latency_ms += tier2_.sample_latency();
    } catch (const DetectorUnavailable&) {
      out.detector_unavailable = true;
      ++counters_.detector_unavailable;
      finalize(out, SensitivityLabel::Private, 2, {});
      return out;
    }
    if (v2.sensitive) {
      finalize(out, SensitivityLabel::Private, 2, v2.categories);
      return out;
    }
    if (!v2.escalate) {
      finalize(out, SensitivityLabel::Public, 2, {});
      return out;
    }

    // Tier 3
    ++counters_.tier_invocations[2];
    DetectionVerdict v3;
    try {
      v3 = tier3_.classify(in, thr);
      out.total_latency_ms += tier3_.sample_latency();
    } catch (const DetectorUnavailable&) {
      out.detector_unavailable = true;
      ++counters_.detector_unavailable;
      finalize(out, SensitivityLabel::Private, 3, {});
      return out;
    }
    finalize(out, v3.sensitive ? SensitivityLabel::Private : SensitivityLabel::Public, 3,
             v3.categories);
    return out;
  }

  void finalize(ClassificationOutcome& out, SensitivityLabel label, int tier,
                std::vector<std::string> categories) {
    out.final_label = label;
    out.resolved_tier = tier;
    out.categories = std::move(categories);
    ++counters_.resolved_by_tier[tier - 1];
    if (label == SensitivityLabel::Public)
      ++counters_.finalized_public;
    else
      ++counters_.finalized_private;
  }

  PipelineConfig cfg_;
  RuleEngine* rules_;
  Sink sink_;
  std::unique_ptr<Detector> tier1_;
  Detector tier2_;
  Detector tier3_;
  mutable std::mutex mu_;
  std::deque<PendingBlock> queue_;
  ThresholdState threshold_;
  PipelineCounters counters_;
};

inline std::shared_ptr<const CompiledRuleSet> RuleEngine::load_rules(
    const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ParseError("pattern config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("pattern config: " + path + ": " + e.what());
  }
  return load_rules_json(j, warnings);
}

/// Production sink: applies the outcome to the cache index. Public promotions
/// never propagate; private finalizations propagate to descendants. The
/// audit byte records which tiers the block passed on promotion.
inline DetectionPipeline::Sink make_index_sink(RadixCacheIndex& index) {
  return [&index](const ClassificationOutcome& out) {
    if (!out.node) return;
    uint8_t audit = 0;
    for (int t = 1; t <= out.resolved_tier; ++t) audit |= static_cast<uint8_t>(1u << (t - 1));
    bool priv = out.final_label != SensitivityLabel::Public;
    index.resolve_block(out.node, out.span_tokens, out.final_label, /*propagate=*/priv,
                        priv ? 0 : audit);
  };
}

}  // namespace safekv
