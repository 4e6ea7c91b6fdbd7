#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "safekv/core.hpp"
#include "safekv/serving_sim.hpp"

namespace safekv {

struct ArtifactData {
  std::string dir;
  nlohmann::json metrics;
  std::optional<nlohmann::json> attack;

  std::string policy() const { return metrics.value("policy", std::string("unknown")); }
};

/// Loads one run artifact directory; throws Error on missing or corrupt
/// files or an incompatible format_version.
inline ArtifactData load_artifact(const std::filesystem::path& dir) {
  ArtifactData a;
  a.dir = dir.string();
  auto mpath = dir / "metrics.json";
  std::ifstream f(mpath);
  if (!f) throw Error("artifact missing metrics.json: " + mpath.string());
  try {
    f >> a.metrics;
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt metrics.json in " + dir.string() + ": " + e.what());
  }
  int version = a.metrics.value("format_version", -1);
  if (version != kArtifactFormatVersion)
    throw Error("incompatible artifact format_version in " + dir.string());
  auto apath = dir / "attack.json";
  if (std::filesystem::exists(apath)) {
    std::ifstream af(apath);
    nlohmann::json j;
    try {
      af >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error("corrupt attack.json in " + dir.string() + ": " + e.what());
    }
    a.attack = j;
  }
  return a;
}

namespace detail {

/// Minimal deterministic SVG bar chart; values are labeled with their numeric
/// value so the plot doubles as a table.
inline void write_bar_svg(const std::filesystem::path& path, const std::string& title,
                          const std::vector<std::pair<std::string, double>>& bars,
                          const std::string& unit) {
  double vmax = 1e-12;
  for (const auto& [label, v] : bars) vmax = std::max(vmax, v);
  const int width = 640, height = 360, margin = 60;
  const int plot_w = width - 2 * margin, plot_h = height - 2 * margin;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << width / 2 << "' y='28' font-size='16' text-anchor='middle'>" << title
      << "</text>\n";
  size_t n = bars.size();
  double slot = n ? static_cast<double>(plot_w) / static_cast<double>(n) : plot_w;
  for (size_t i = 0; i < n; ++i) {
    double v = bars[i].second;
    double h = vmax > 0 ? v / vmax * plot_h : 0;
    double x = margin + slot * static_cast<double>(i) + slot * 0.15;
    double y = height - margin - h;
    svg << std::fixed << std::setprecision(2);
    svg << "<rect x='" << x << "' y='" << y << "' width='" << slot * 0.7 << "' height='" << h
        << "' fill='#4878a8'/>\n";
    svg << "<text x='" << x + slot * 0.35 << "' y='" << y - 6
        << "' font-size='12' text-anchor='middle'>" << std::setprecision(4) << v << "</text>\n";
    svg << "<text x='" << x + slot * 0.35 << "' y='" << height - margin + 16
        << "' font-size='12' text-anchor='middle'>" << bars[i].first << "</text>\n";
  }
  svg << "<text x='" << width - margin << "' y='" << height - 8
      << "' font-size='11' text-anchor='end'>" << unit << "</text>\n";
  svg << "</svg>\n";
  std::ofstream out(path);
  out << svg.str();
}

}  // namespace detail

/// Renders aggregate tables (CSV) and static plots (SVG) from run artifacts:
/// TTFT comparison, defense rate by policy, detection tier split, and a
/// throughput proxy (tokens per simulated second).
inline void write_report(const std::filesystem::path& out_dir,
                         const std::vector<ArtifactData>& artifacts) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "summary.csv");
    f << "policy,requests,dropped,hit_rate,intra_reuse,inter_reuse,ttft_mean_ms,ttft_p50_ms,"
         "ttft_p95_ms,ttft_p99_ms,leak_events,downgrades,defense_success_rate,throughput_tokens_per_s\n";
    for (const ArtifactData& a : artifacts) {
      const auto& m = a.metrics;
      double dur = m.value("sim_duration_ms", 0.0);
      double tput = dur > 0 ? m.value("total_input_tokens", 0.0) / (dur / 1000.0) : 0.0;
      f << a.policy() << ',' << m.value("requests", 0ull) << ',' << m.value("dropped", 0ull) << ','
        << m.value("hit_rate", 0.0) << ',' << m.value("intra_reuse", 0.0) << ','
        << m.value("inter_reuse", 0.0) << ',' << m["ttft"].value("mean", 0.0) << ','
        << m["ttft"].value("p50", 0.0) << ',' << m["ttft"].value("p95", 0.0) << ','
        << m["ttft"].value("p99", 0.0) << ',' << m.value("leak_events", 0ull) << ','
        << m.value("downgrades", 0ull) << ','
        << (a.attack ? a.attack->value("defense_success_rate", 0.0) : 0.0) << ',' << tput << "\n";
    }
  }
  {
    std::ofstream f(out_dir / "tier_split.csv");
    f << "policy,tier1_resolved,tier2_resolved,tier3_resolved,tier12_share\n";
    for (const ArtifactData& a : artifacts) {
      const auto& d = a.metrics["detection"];
      auto r = d.value("resolved_by_tier", std::vector<uint64_t>{0, 0, 0});
      uint64_t total = r[0] + r[1] + r[2];
      double share = total ? static_cast<double>(r[0] + r[1]) / static_cast<double>(total) : 0.0;
      f << a.policy() << ',' << r[0] << ',' << r[1] << ',' << r[2] << ',' << share << "\n";
    }
  }
  std::vector<std::pair<std::string, double>> ttft_bars, defense_bars, tput_bars, tier_bars;
  for (const ArtifactData& a : artifacts) {
    ttft_bars.emplace_back(a.policy(), a.metrics["ttft"].value("mean", 0.0));
    if (a.attack) defense_bars.emplace_back(a.policy(), a.attack->value("defense_success_rate", 0.0));
    double dur = a.metrics.value("sim_duration_ms", 0.0);
    tput_bars.emplace_back(a.policy(), dur > 0 ? a.metrics.value("total_input_tokens", 0.0) /
                                                     (dur / 1000.0)
                                               : 0.0);
    const auto& d = a.metrics["detection"];
    auto r = d.value("resolved_by_tier", std::vector<uint64_t>{0, 0, 0});
    uint64_t total = r[0] + r[1] + r[2];
    if (total)
      tier_bars.emplace_back(a.policy(),
                             static_cast<double>(r[0] + r[1]) / static_cast<double>(total));
  }
  detail::write_bar_svg(out_dir / "ttft_mean.svg", "Mean TTFT by policy", ttft_bars, "ms");
  detail::write_bar_svg(out_dir / "throughput.svg", "Throughput proxy by policy", tput_bars,
                        "tokens/s");
  if (!defense_bars.empty())
    detail::write_bar_svg(out_dir / "defense_rate.svg", "Defense success rate by policy",
                          defense_bars, "fraction");
  if (!tier_bars.empty())
    detail::write_bar_svg(out_dir / "tier_split.svg", "Tier-1/2 resolution share", tier_bars,
                          "fraction");
}

}  // namespace safekv
