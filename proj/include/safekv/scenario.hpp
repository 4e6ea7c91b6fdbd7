#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "safekv/adversary.hpp"
#include "safekv/serving_sim.hpp"
#include "safekv/workload.hpp"

namespace safekv {

// ---------------------------------------------------------------------------
// Declarative scenario description
// ---------------------------------------------------------------------------

struct ScenarioConfig {
  WorkloadSpec workload{};
  std::vector<PolicyId> policies{PolicyId::SafeKV};
  CostModel cost{};
  std::optional<DetectorSpec> tier1_mock;
  DetectorSpec tier2{};
  DetectorSpec tier3{};
  MonitorConfig monitor{};
  double epoch_interval_ms = 100.0;
  TierBudget budget = TierBudget::from_tokens(1ull << 32, 1ull << 32, 1ull << 32);
  bool tiered_demotion = false;
  size_t queue_capacity = 4096;
  size_t batch_size = 64;
  double base_threshold = 0.52;
  bool compress_private_paths = true;
  std::optional<AttackSettings> attack;
  uint64_t attack_n_secrets = 0;  // 0: every planted attackable secret
  std::string output_dir = "safekv_out";
  uint64_t seed = 1;

  void validate() const {
    cost.validate();
    if (policies.empty()) throw ConfigError("policies: at least one policy required");
    if (batch_size == 0) throw ConfigError("batch_size: must be positive");
    if (base_threshold <= 0 || base_threshold > 1) throw ConfigError("base_threshold: must lie in (0,1]");
  }
};

// ---------------------------------------------------------------------------
// JSON binding (defaults for every field; ConfigError names the bad field)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T field_or(const nlohmann::json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline DetectorSpec detector_from_json(const nlohmann::json& j, int tier, uint64_t scenario_seed) {
  DetectorSpec d;
  d.tier = tier;
  std::string mode = field_or<std::string>(j, "mode", "oracle");
  if (mode == "oracle") d.mode = DetectorSpec::Mode::Oracle;
  else if (mode == "mock") d.mode = DetectorSpec::Mode::MockWithFNR;
  else if (mode == "external") d.mode = DetectorSpec::Mode::External;
  else throw ConfigError("detector mode: expected oracle|mock|external, got " + mode);
  d.false_negative_rate = field_or<double>(j, "false_negative_rate", 0.0);
  d.false_positive_rate = field_or<double>(j, "false_positive_rate", 0.0);
  if (d.false_negative_rate < 0 || d.false_negative_rate > 1 || d.false_positive_rate < 0 ||
      d.false_positive_rate > 1)
    throw ConfigError("detector rates must lie in [0,1]");
  d.seed = field_or<uint64_t>(j, "seed", derive_seed(scenario_seed, 0x40 + tier));
  if (j.contains("latency")) {
    const auto& lj = j.at("latency");
    std::string kind = field_or<std::string>(lj, "kind", "constant");
    if (kind == "constant") {
      d.latency.kind = LatencyModel::Kind::Constant;
      d.latency.value_ms = field_or<double>(lj, "ms", 0.0);
    } else if (kind == "lognormal") {
      d.latency.kind = LatencyModel::Kind::Lognormal;
      d.latency.mu = field_or<double>(lj, "mu", 0.0);
      d.latency.sigma = field_or<double>(lj, "sigma", 0.0);
    } else {
      throw ConfigError("latency kind: expected constant|lognormal, got " + kind);
    }
  }
  return d;
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  using detail::field_or;
  if (!j.is_object()) throw ConfigError("scenario config: top level must be an object");
  ScenarioConfig c;
  c.seed = field_or<uint64_t>(j, "seed", 1);
  c.output_dir = field_or<std::string>(j, "output_dir", "safekv_out");

  if (j.contains("workload")) {
    const auto& w = j.at("workload");
    c.workload.n_users = field_or<uint64_t>(w, "n_users", 8);
    c.workload.n_requests = field_or<uint64_t>(w, "n_requests", 200);
    std::string sc = field_or<std::string>(w, "scenario", "multi_turn_chat");
    if (sc == "single_request_pii") c.workload.scenario = ScenarioKind::SingleRequestPII;
    else if (sc == "multi_turn_chat") c.workload.scenario = ScenarioKind::MultiTurnChat;
    else if (sc == "system_prompt") c.workload.scenario = ScenarioKind::SystemPrompt;
    else throw ConfigError("workload.scenario: unknown scenario " + sc);
    c.workload.inter_user_overlap = field_or<double>(w, "inter_user_overlap", 0.25);
    c.workload.intra_user_overlap = field_or<double>(w, "intra_user_overlap", 0.07);
    c.workload.secret_density = field_or<double>(w, "secret_density", 0.2);
    c.workload.context_dependent_fraction = field_or<double>(w, "context_dependent_fraction", 0.1);
    c.workload.system_prompt_tokens = field_or<uint32_t>(w, "system_prompt_tokens", 8192);
    c.workload.secret_positions = field_or<uint32_t>(w, "secret_positions", 5);
    c.workload.candidates_per_position = field_or<uint32_t>(w, "candidates_per_position", 10);
    c.workload.business_user_fraction = field_or<double>(w, "business_user_fraction", 0.0);
    c.workload.template_variety = field_or<bool>(w, "template_variety", true);
  }
  c.workload.seed = field_or<uint64_t>(j, "workload_seed", c.seed);

  if (j.contains("policies")) {
    c.policies.clear();
    for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_string(p.get<std::string>()));
  } else if (j.contains("policy")) {
    c.policies = {policy_from_string(j.at("policy").get<std::string>())};
  }

  if (j.contains("cost")) {
    const auto& k = j.at("cost");
    c.cost.t_base_ms = field_or<double>(k, "t_base_ms", 10.0);
    c.cost.c_prefill_ms = field_or<double>(k, "c_prefill_ms", 1.0);
    c.cost.tier_penalty_ms[1] = field_or<double>(k, "dram_penalty_ms", 0.2);
    c.cost.tier_penalty_ms[2] = field_or<double>(k, "ssd_penalty_ms", 0.5);
    c.cost.noise_sigma_ms = field_or<double>(k, "noise_sigma_ms", 0.0);
  }
  c.cost.seed = derive_seed(c.seed, 0x05);

  if (j.contains("detectors")) {
    const auto& d = j.at("detectors");
    if (d.contains("tier1_mock")) c.tier1_mock = detail::detector_from_json(d.at("tier1_mock"), 1, c.seed);
    if (d.contains("tier2")) c.tier2 = detail::detector_from_json(d.at("tier2"), 2, c.seed);
    if (d.contains("tier3")) c.tier3 = detail::detector_from_json(d.at("tier3"), 3, c.seed);
  }
  c.tier2.tier = 2;
  c.tier3.tier = 3;
  if (c.tier2.seed == 0) c.tier2.seed = derive_seed(c.seed, 0x42);
  if (c.tier3.seed == 0) c.tier3.seed = derive_seed(c.seed, 0x43);

  if (j.contains("monitor")) {
    const auto& m = j.at("monitor");
    c.monitor.entropy_jump = field_or<double>(m, "entropy_jump", 0.3);
    c.monitor.u_pre_max = field_or<uint64_t>(m, "u_pre_max", 1);
    c.epoch_interval_ms = field_or<double>(m, "epoch_interval_ms", 100.0);
  }

  if (j.contains("capacities")) {
    const auto& k = j.at("capacities");
    if (k.contains("m_kv_bytes")) {
      uint64_t m_kv = field_or<uint64_t>(k, "m_kv_bytes", 0);
      uint64_t m_t = field_or<uint64_t>(k, "m_t_bytes_per_token", 1);
      c.budget = TierBudget::from_memory_sizes(m_kv, m_t, field_or<uint64_t>(k, "dram_tokens", 0),
                                               field_or<uint64_t>(k, "ssd_tokens", 0));
    } else {
      c.budget = TierBudget::from_tokens(field_or<uint64_t>(k, "hbm_tokens", 1ull << 32),
                                         field_or<uint64_t>(k, "dram_tokens", 1ull << 32),
                                         field_or<uint64_t>(k, "ssd_tokens", 1ull << 32));
    }
    c.tiered_demotion = field_or<bool>(k, "tiered_demotion", false);
  }

  if (j.contains("detection")) {
    const auto& d = j.at("detection");
    c.queue_capacity = field_or<size_t>(d, "queue_capacity", 4096);
    c.batch_size = field_or<size_t>(d, "batch_size", 64);
    c.base_threshold = field_or<double>(d, "base_threshold", 0.52);
    c.compress_private_paths = field_or<bool>(d, "compress_private_paths", true);
  }

  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    AttackSettings s;
    s.n_identities = field_or<uint64_t>(a, "identities", 4);
    std::string sched = field_or<std::string>(a, "schedule", "uniform");
    if (sched == "uniform") s.schedule = AttackSettings::Schedule::Uniform;
    else if (sched == "jittered") s.schedule = AttackSettings::Schedule::Jittered;
    else throw ConfigError("attack.schedule: expected uniform|jittered");
    std::string pol = field_or<std::string>(a, "pollution", "fresh_identity");
    if (pol == "fresh_identity") s.pollution = AttackSettings::Pollution::FreshIdentity;
    else if (pol == "calibration_diff") s.pollution = AttackSettings::Pollution::CalibrationDiff;
    else throw ConfigError("attack.pollution: expected fresh_identity|calibration_diff");
    s.hit_threshold_ms = field_or<double>(a, "hit_threshold_ms", -1.0);
    s.max_probes = field_or<uint64_t>(a, "max_probes", std::numeric_limits<uint64_t>::max());
    s.probe_interval_ms = field_or<double>(a, "probe_interval_ms", 1.0);
    s.seed = field_or<uint64_t>(a, "seed", derive_seed(c.seed, 0x66));
    c.attack = s;
    c.attack_n_secrets = field_or<uint64_t>(a, "n_secrets", 0);
  }

  c.validate();
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error in ") + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct PolicyRunSummary {
  PolicyId policy = PolicyId::SafeKV;
  SimMetrics metrics{};
  std::optional<CampaignMetrics> attack;
  std::string artifact_dir;
  uint64_t artifact_hash = 0;
};

inline SimConfig make_sim_config(const ScenarioConfig& c, PolicyId policy) {
  SimConfig s;
  s.policy = policy;
  s.cost = c.cost;
  s.index.budget = c.budget;
  s.index.tiered_demotion = c.tiered_demotion;
  s.detection.queue_capacity = c.queue_capacity;
  s.detection.batch_size = c.batch_size;
  s.detection.base_threshold = c.base_threshold;
  s.detection.tier1_mock = c.tier1_mock;
  s.detection.tier2 = c.tier2;
  s.detection.tier3 = c.tier3;
  s.monitor = c.monitor;
  s.epoch_interval_ms = c.epoch_interval_ms;
  s.system_prompt_tokens =
      policy == PolicyId::PublicSystemPrompt ? c.workload.system_prompt_tokens : 0;
  s.compress_private_paths = c.compress_private_paths;
  s.seed = c.seed;
  return s;
}

/// Runs every listed policy over one shared workload (paired comparison) and
/// writes one artifact directory per policy under output_dir.
inline std::vector<PolicyRunSummary> run_scenario(const ScenarioConfig& cfg, RuleEngine& rules,
                                                  bool write_artifacts = true) {
  cfg.validate();
  Workload wl = generate(cfg.workload);
  std::vector<PolicyRunSummary> out;
  for (PolicyId policy : cfg.policies) {
    ServingSimulator sim(make_sim_config(cfg, policy), &rules);
    PolicyRunSummary summary;
    summary.policy = policy;
    if (cfg.attack) {
      auto [metrics, results] = run_attack_campaign(sim, wl, *cfg.attack, cfg.attack_n_secrets);
      summary.attack = metrics;
    } else {
      for (const Request& r : wl.requests) sim.submit(r);
      sim.finish();
    }
    summary.metrics = sim.metrics();
    if (write_artifacts) {
      std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / to_string(policy);
      write_artifact(dir, sim);
      if (summary.attack) {
        std::ofstream f(dir / "attack.json");
        f << summary.attack->to_json().dump(2) << "\n";
      }
      summary.artifact_dir = dir.string();
      summary.artifact_hash = artifact_digest(dir);
    }
    out.push_back(std::move(summary));
  }
  return out;
}

}  // namespace safekv
