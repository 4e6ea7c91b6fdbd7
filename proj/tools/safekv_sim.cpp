// Command-line front end: scenario execution (`run`), rule-set management
// (`rules`), and report generation over run artifacts (`report`).
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "safekv/report.hpp"
#include "safekv/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string pattern_path_or_env(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  const char* env = std::getenv("SAFEKV_SIM_PATTERNS");
  return env ? std::string(env) : std::string();
}

void load_patterns(safekv::RuleEngine& rules, const std::string& path, bool quiet) {
  if (path.empty()) return;  // builtin defaults stay active
  std::vector<std::string> warnings;
  rules.load_rules(path, &warnings);
  if (!quiet)
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_run(const std::string& config_path, uint64_t seed_override, bool has_seed,
            const std::string& output_override, const std::string& patterns, bool quiet) {
  safekv::ScenarioConfig cfg;
  try {
    cfg = safekv::load_scenario(config_path);
    if (has_seed) {
      cfg.seed = seed_override;
      cfg.workload.seed = seed_override;
    }
    if (!output_override.empty()) cfg.output_dir = output_override;
    cfg.validate();
  } catch (const safekv::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    safekv::RuleEngine rules;
    load_patterns(rules, pattern_path_or_env(patterns), quiet);
    auto summaries = safekv::run_scenario(cfg, rules);
    if (!quiet) {
      std::printf("%-22s %9s %9s %10s %10s %10s %8s %8s\n", "policy", "requests", "hit_rate",
                  "ttft_mean", "ttft_p95", "ttft_p99", "leaks", "defense");
      for (const auto& s : summaries) {
        std::printf("%-22s %9llu %9.4f %10.3f %10.3f %10.3f %8llu %8s\n", to_string(s.policy),
                    static_cast<unsigned long long>(s.metrics.requests), s.metrics.hit_rate,
                    s.metrics.ttft_mean, s.metrics.ttft_p95, s.metrics.ttft_p99,
                    static_cast<unsigned long long>(s.metrics.leak_events),
                    s.attack ? std::to_string(s.attack->defense_success_rate()).substr(0, 6).c_str()
                             : "-");
      }
      std::printf("artifacts under %s\n", cfg.output_dir.c_str());
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_rules(const std::string& action, const std::string& path, const std::string& sample,
              bool quiet) {
  safekv::RuleEngine rules;
  try {
    if (action == "validate") {
      if (path.empty()) {
        std::cerr << "config error: validate needs a pattern config path\n";
        return kExitConfig;
      }
      std::vector<std::string> warnings;
      auto set = rules.load_rules(path, &warnings);
      if (!quiet) {
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        std::printf("ok: %zu rules, version %llu\n", set->size(),
                    static_cast<unsigned long long>(set->version()));
      }
      return kExitOk;
    }
    load_patterns(rules, pattern_path_or_env(path), quiet);
    if (action == "list") {
      auto set = rules.active();
      std::printf("%-20s %-32s %-10s %s\n", "rule_id", "category", "kind", "enabled");
      for (const auto& r : set->rules())
        std::printf("%-20s %-32s %-10s %s\n", r.rule_id.c_str(), r.category.c_str(),
                    r.kind == safekv::PatternRule::Kind::Regex ? "regex" : "blacklist",
                    r.enabled ? "yes" : "no");
      return kExitOk;
    }
    if (action == "test") {
      safekv::DetectionVerdict v = rules.tier1_scan(sample);
      std::printf("sensitive: %s\n", v.sensitive ? "yes" : "no");
      for (const auto& c : v.categories) std::printf("category: %s\n", c.c_str());
      return kExitOk;
    }
    std::cerr << "config error: unknown rules action '" << action << "'\n";
    return kExitConfig;
  } catch (const safekv::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& output, bool quiet) {
  try {
    std::vector<safekv::ArtifactData> artifacts;
    for (const auto& d : dirs) artifacts.push_back(safekv::load_artifact(d));
    std::filesystem::path out = output.empty() ? "safekv_report" : output;
    safekv::write_report(out, artifacts);
    if (!quiet) std::printf("report written to %s\n", out.string().c_str());
    return kExitOk;
  } catch (const safekv::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SafeKV cache-sharing simulator and adversary harness"};
  app.require_subcommand(1);

  std::string config_path, output_dir, patterns, sample, rules_action;
  std::vector<std::string> artifact_dirs;
  uint64_t seed = 0;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto* run = app.add_subcommand("run", "execute a scenario config");
  run->add_option("--config", config_path, "scenario config JSON")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--output", output_dir, "override the artifact output directory");
  run->add_option("--patterns", patterns, "pattern config path (or SAFEKV_SIM_PATTERNS)");

  auto* rules = app.add_subcommand("rules", "validate, list, or test tier-1 pattern rules");
  rules->add_option("action", rules_action, "validate|list|test")->required();
  rules->add_option("--path", patterns, "pattern config path (or SAFEKV_SIM_PATTERNS)");
  rules->add_option("text", sample, "sample text for `test`");

  auto* report = app.add_subcommand("report", "render tables and plots from run artifacts");
  report->add_option("dirs", artifact_dirs, "artifact directories")->required();
  report->add_option("--output", output_dir, "report output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (run->parsed())
    return cmd_run(config_path, seed, seed_opt->count() > 0, output_dir, patterns, quiet);
  if (rules->parsed()) return cmd_rules(rules_action, patterns, sample, quiet);
  if (report->parsed()) return cmd_report(artifact_dirs, output_dir, quiet);
  return kExitConfig;
}
