#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "safekv/core.hpp"
#include "safekv/serving_sim.hpp"
#include "safekv/workload.hpp"

namespace safekv {

// ---------------------------------------------------------------------------
// Attacker-facing interface
// ---------------------------------------------------------------------------

/// The only surface the adversary may touch: submit a request under an
/// identity and observe its TTFT. No cache internals, labels, or ground truth
/// cross this boundary.
class AttackerView {
 public:
  virtual ~AttackerView() = default;
  virtual double probe(const TokenSeq& input, UserId identity) = 0;
};

struct AttackSettings {
  uint64_t n_identities = 4;
  enum class Schedule : uint8_t { Uniform, Jittered } schedule = Schedule::Uniform;
  enum class Pollution : uint8_t { FreshIdentity, CalibrationDiff } pollution = Pollution::FreshIdentity;
  double hit_threshold_ms = -1.0;  // < 0: adaptive (calibrated per run)
  uint64_t max_probes = std::numeric_limits<uint64_t>::max();
  double probe_interval_ms = 1.0;
  uint64_t seed = 7;
};

struct AttackResult {
  TokenSeq recovered;
  std::vector<bool> per_position_correct;  // filled by the scoring harness
  std::vector<bool> low_confidence;
  uint64_t probes_used = 0;
  bool success = false;
  bool budget_exhausted = false;
  bool downgraded_mid_attack = false;
  uint64_t stale_probes = 0;
};

struct Calibration {
  double t_hit_ms = 0.0;
  double t_miss_ms = 0.0;
  double threshold_ms = 0.0;
};

// ---------------------------------------------------------------------------
// Probing primitives
// ---------------------------------------------------------------------------

/// Measures T_miss and T_hit on attacker-owned content of the given length
/// (fresh insert, then replay under the same identity) and returns the
/// midpoint decision threshold.
inline Calibration calibrate_threshold(AttackerView& view, size_t prefix_len, UserId identity,
                                       SplitMix64& rng) {
  Calibration c;
  if (prefix_len == 0) return c;
  TokenSeq content;
  content.reserve(prefix_len);
  for (size_t i = 0; i < prefix_len; ++i)
    content.push_back(static_cast<TokenId>('a' + rng.next_below(26)));
  c.t_miss_ms = view.probe(content, identity);
  c.t_hit_ms = view.probe(content, identity);
  c.threshold_ms = 0.5 * (c.t_hit_ms + c.t_miss_ms);
  return c;
}

/// Token-by-token reconstruction: per secret position, probe every candidate
/// appended to the recovered prefix, classify hit/miss against the threshold,
/// and take the lowest-TTFT hit (argmin overall when nothing classifies as a
/// hit, marking the position low-confidence). Probes themselves populate the
/// cache, so repeats are kept clean either by rotating identities or by
/// trusting one calibration pass (config-selected).
inline AttackResult reconstruct(const SecretPlan& plan, const AttackSettings& settings,
                                AttackerView& view) {
  AttackResult res;
  SplitMix64 rng(derive_seed(settings.seed, plan.secret_id));
  std::vector<UserId> identities;
  for (uint64_t i = 0; i < std::max<uint64_t>(1, settings.n_identities); ++i)
    identities.push_back(UserId{1000000 + plan.secret_id * 64 + i});

  double threshold = settings.hit_threshold_ms;
  if (threshold < 0) {
    Calibration c = calibrate_threshold(
        view, plan.known_prefix.size() + plan.candidates.size(), identities[0], rng);
    threshold = c.threshold_ms;
  }

  uint64_t rotation = 0;
  bool had_hit = false;
  for (size_t pos = 0; pos < plan.candidates.size(); ++pos) {
    const auto& cands = plan.candidates[pos];
    size_t best_hit = cands.size(), best_any = 0;
    double best_hit_ttft = std::numeric_limits<double>::infinity();
    double best_any_ttft = std::numeric_limits<double>::infinity();
    bool any_hit = false;
    for (size_t j = 0; j < cands.size(); ++j) {
      if (res.probes_used >= settings.max_probes) {
        res.budget_exhausted = true;
        return res;
      }
      UserId id = settings.pollution == AttackSettings::Pollution::FreshIdentity
                      ? identities[rotation++ % identities.size()]
                      : identities[0];
      TokenSeq seq = plan.known_prefix;
      seq.insert(seq.end(), res.recovered.begin(), res.recovered.end());
      seq.push_back(cands[j]);
      double ttft = view.probe(seq, id);
      ++res.probes_used;
      if (ttft < best_any_ttft) {
        best_any_ttft = ttft;
        best_any = j;
      }
      if (ttft < threshold) {
        any_hit = true;
        if (ttft < best_hit_ttft) {
          best_hit_ttft = ttft;
          best_hit = j;
        }
      }
    }
    if (!any_hit && had_hit) {
      // earlier positions were observably cached but this whole position ran
      // cold: the prefix was evicted or downgraded mid-attack and these
      // probes went stale
      res.downgraded_mid_attack = true;
      res.stale_probes += cands.size();
    }
    size_t pick = any_hit ? best_hit : best_any;
    res.low_confidence.push_back(!any_hit);
    res.recovered.push_back(cands[pick]);
    had_hit = had_hit || any_hit;
  }
  return res;
}

/// Fills in correctness flags against the plan's ground truth. Scoring lives
/// outside the adversary: the attacker itself never sees the truth.
inline void score_attack(const SecretPlan& plan, AttackResult& res) {
  res.per_position_correct.clear();
  bool all = !plan.truth_tokens.empty();
  for (size_t i = 0; i < plan.truth_tokens.size(); ++i) {
    bool ok = i < res.recovered.size() && res.recovered[i] == plan.truth_tokens[i];
    res.per_position_correct.push_back(ok);
    all = all && ok;
  }
  if (plan.truth_tokens.empty()) all = true;  // zero-length secret: vacuous success
  res.success = all;
}

// ---------------------------------------------------------------------------
// Campaign
// ---------------------------------------------------------------------------

struct CampaignMetrics {
  uint64_t n_secrets = 0;
  uint64_t fully_recovered = 0;
  uint64_t positions_total = 0;
  uint64_t positions_correct = 0;
  uint64_t probes_used = 0;
  uint64_t downgraded_mid_attack = 0;
  uint64_t stale_probes = 0;
  uint64_t budget_exhausted = 0;
  std::vector<uint64_t> correct_by_position;

  double attack_success_rate() const {
    return n_secrets ? static_cast<double>(fully_recovered) / static_cast<double>(n_secrets) : 0.0;
  }
  double defense_success_rate() const { return 1.0 - attack_success_rate(); }
  double per_token_recovery_rate() const {
    return positions_total ? static_cast<double>(positions_correct) / static_cast<double>(positions_total)
                           : 0.0;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"n_secrets", n_secrets},
                          {"fully_recovered", fully_recovered},
                          {"attack_success_rate", attack_success_rate()},
                          {"defense_success_rate", defense_success_rate()},
                          {"per_token_recovery_rate", per_token_recovery_rate()},
                          {"positions_total", positions_total},
                          {"positions_correct", positions_correct},
                          {"probes_used", probes_used},
                          {"downgraded_mid_attack", downgraded_mid_attack},
                          {"stale_probes", stale_probes},
                          {"budget_exhausted", budget_exhausted},
                          {"correct_by_position", correct_by_position}};
  }
};

/// AttackerView over the serving simulator. Probe requests enter the system
/// exactly like user traffic; their ground truth marks the candidate bytes as
/// secret-formatted content (detection is content-based and cannot tell an
/// attacker's instantiation of a secret template from a victim's).
class SimAttackerView final : public AttackerView {
 public:
  SimAttackerView(ServingSimulator& sim, const SecretPlan& plan, const AttackSettings& settings)
      : sim_(sim), plan_(plan), settings_(settings), jitter_rng_(derive_seed(settings.seed, plan.secret_id ^ 0x9e)) {}

  double probe(const TokenSeq& input, UserId identity) override {
    Request req;
    req.request_id = 10000000 + (++probe_seq_) + plan_.secret_id * 100000;
    req.user = identity;
    req.user_kind = UserKind::Attacker;
    req.owner = OwnerClass::Customer;
    double interval = settings_.probe_interval_ms;
    if (settings_.schedule == AttackSettings::Schedule::Jittered)
      interval *= 0.5 + jitter_rng_.next_double();
    req.arrival_ms = sim_.now() + interval;
    req.tokens = input;
    req.text = detokenize_bytes(input);
    if (input.size() > plan_.known_prefix.size())
      req.truth.push_back({plan_.known_prefix.size(), input.size(), SpanSensitivity::Always,
                           plan_.category});
    return sim_.submit(req).ttft_ms;
  }

 private:
  ServingSimulator& sim_;
  const SecretPlan& plan_;
  AttackSettings settings_;
  SplitMix64 jitter_rng_;
  uint64_t probe_seq_ = 0;
};

/// Drives the full campaign: benign requests flow through the simulator in
/// arrival order; right after a victim request carrying a planted secret is
/// admitted, the adversary attacks that secret. Returns per-secret results
/// and the aggregate.
inline std::pair<CampaignMetrics, std::vector<AttackResult>> run_attack_campaign(
    ServingSimulator& sim, const Workload& workload, const AttackSettings& settings,
    uint64_t n_secrets = 0) {
  CampaignMetrics agg;
  std::vector<AttackResult> results;
  if (n_secrets == 0) n_secrets = workload.secrets.size();
  std::map<uint64_t, const SecretPlan*> by_request;
  uint64_t taken = 0;
  for (const SecretPlan& p : workload.secrets) {
    if (taken >= n_secrets) break;
    by_request[p.victim_request_id] = &p;
    ++taken;
  }
  for (const Request& req : workload.requests) {
    sim.submit(req);
    auto it = by_request.find(req.request_id);
    if (it == by_request.end()) continue;
    const SecretPlan& plan = *it->second;
    SimAttackerView view(sim, plan, settings);
    AttackResult res = reconstruct(plan, settings, view);
    score_attack(plan, res);
    agg.n_secrets += 1;
    agg.fully_recovered += res.success ? 1 : 0;
    agg.positions_total += plan.truth_tokens.size();
    if (agg.correct_by_position.size() < res.per_position_correct.size())
      agg.correct_by_position.resize(res.per_position_correct.size(), 0);
    for (size_t i = 0; i < res.per_position_correct.size(); ++i) {
      if (res.per_position_correct[i]) {
        ++agg.positions_correct;
        ++agg.correct_by_position[i];
      }
    }
    agg.probes_used += res.probes_used;
    agg.downgraded_mid_attack += res.downgraded_mid_attack ? 1 : 0;
    agg.stale_probes += res.stale_probes;
    agg.budget_exhausted += res.budget_exhausted ? 1 : 0;
    results.push_back(std::move(res));
  }
  sim.finish();
  return {agg, std::move(results)};
}

}  // namespace safekv
