#include <catch_amalgamated.hpp>

#include "safekv/detection.hpp"
#include "safekv/workload.hpp"

using namespace safekv;

namespace {

WorkloadSpec sharegpt_like(uint64_t seed = 1) {
  WorkloadSpec s;
  s.scenario = ScenarioKind::MultiTurnChat;
  s.n_users = 8;
  s.n_requests = 400;
  s.inter_user_overlap = 0.2549;
  s.intra_user_overlap = 0.0706;
  s.secret_density = 0.2;
  s.context_dependent_fraction = 0.1;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic for a fixed spec and seed") {
  Workload a = generate(sharegpt_like(5));
  Workload b = generate(sharegpt_like(5));
  CHECK(a.canonical_bytes() == b.canonical_bytes());
  Workload c = generate(sharegpt_like(6));
  CHECK(a.canonical_bytes() != c.canonical_bytes());
}

TEST_CASE("multi-turn overlap targets are met within two points") {
  Workload wl = generate(sharegpt_like());
  ReuseStats st = measure_reuse(wl.requests);
  CHECK(st.inter_reuse == Catch::Approx(0.2549).margin(0.02));
  CHECK(st.intra_reuse == Catch::Approx(0.0706).margin(0.02));
}

TEST_CASE("prompt-multitasks style targets (no intra, heavy inter)") {
  WorkloadSpec s;
  s.scenario = ScenarioKind::SingleRequestPII;
  s.n_users = 8;
  s.n_requests = 400;
  s.inter_user_overlap = 0.631;
  s.intra_user_overlap = 0.0;
  s.secret_density = 0.0;
  s.seed = 3;
  Workload wl = generate(s);
  ReuseStats st = measure_reuse(wl.requests);
  CHECK(st.inter_reuse == Catch::Approx(0.631).margin(0.02));
  CHECK(st.intra_reuse == Catch::Approx(0.0).margin(0.02));
}

TEST_CASE("multiturn-chat style targets (heavy intra, light inter)") {
  WorkloadSpec s;
  s.scenario = ScenarioKind::MultiTurnChat;
  s.n_users = 8;
  s.n_requests = 400;
  s.inter_user_overlap = 0.0945;
  s.intra_user_overlap = 0.3147;
  s.secret_density = 0.0;
  s.seed = 4;
  Workload wl = generate(s);
  ReuseStats st = measure_reuse(wl.requests);
  CHECK(st.inter_reuse == Catch::Approx(0.0945).margin(0.02));
  CHECK(st.intra_reuse == Catch::Approx(0.3147).margin(0.02));
}

TEST_CASE("impossible overlap targets are rejected") {
  WorkloadSpec s;
  s.scenario = ScenarioKind::MultiTurnChat;
  s.inter_user_overlap = 0.9;
  s.intra_user_overlap = 0.9;
  CHECK_THROWS_AS(generate(s), InfeasibleSpec);
}

TEST_CASE("zero secret density yields an empty ground truth") {
  WorkloadSpec s = sharegpt_like();
  s.secret_density = 0.0;
  Workload wl = generate(s);
  CHECK(wl.secrets.empty());
  for (const Request& r : wl.requests) CHECK(r.truth.empty());
}

TEST_CASE("measure_reuse analytic cases") {
  auto mk = [](uint64_t id, uint64_t user, const std::string& text, double t) {
    Request r;
    r.request_id = id;
    r.user = UserId{user};
    r.arrival_ms = t;
    r.text = text;
    r.tokens = tokenize(text);
    return r;
  };
  SECTION("identical requests from one user: intra only") {
    std::vector<Request> stream;
    const int n = 10;
    for (int i = 0; i < n; ++i) stream.push_back(mk(i + 1, 1, "same request text", i * 10.0));
    ReuseStats st = measure_reuse(stream);
    CHECK(st.inter_reuse == 0.0);
    CHECK(st.intra_reuse == Catch::Approx((n - 1.0) / n));
  }
  SECTION("identical requests from distinct users: inter only") {
    std::vector<Request> stream;
    const int n = 10;
    for (int i = 0; i < n; ++i)
      stream.push_back(mk(i + 1, 100 + i, "same request text", i * 10.0));
    ReuseStats st = measure_reuse(stream);
    CHECK(st.intra_reuse == 0.0);
    CHECK(st.inter_reuse == Catch::Approx((n - 1.0) / n));
  }
}

TEST_CASE("planted always-secrets match a shipped tier1 rule") {
  RuleEngine rules;
  Workload wl = generate(sharegpt_like(9));
  size_t always = 0, context_only = 0;
  for (const Request& r : wl.requests) {
    for (const TruthSpan& sp : r.truth) {
      std::string span_text = r.text.substr(sp.begin, sp.end - sp.begin);
      if (sp.sensitivity == SpanSensitivity::Always) {
        ++always;
        INFO(span_text);
        CHECK(rules.tier1_scan(span_text).sensitive);
      } else {
        ++context_only;
        CHECK_FALSE(rules.tier1_scan(span_text).sensitive);
      }
    }
  }
  CHECK(always > 0);
  CHECK(context_only > 0);
}

TEST_CASE("context secrets carry their setup phrase in the session history") {
  WorkloadSpec s = sharegpt_like(12);
  s.context_dependent_fraction = 0.5;
  Workload wl = generate(s);
  size_t checked = 0;
  for (const Request& r : wl.requests) {
    for (const TruthSpan& sp : r.truth) {
      if (sp.sensitivity != SpanSensitivity::ContextOnly) continue;
      // the setup phrase was planted in the previous turn, so it precedes the
      // digits in this request's text and appears in the session history
      CHECK(r.text.substr(0, sp.begin).find("savings account at bankx") != std::string::npos);
      if (sp.begin >= r.text.size() - 200) {  // span in the newest turn: history carries the setup
        bool in_history = false;
        for (const auto& h : r.history)
          if (h.find("savings account at bankx") != std::string::npos) in_history = true;
        CHECK(in_history);
      }
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("secret plans contain the truth in every candidate set") {
  WorkloadSpec s = sharegpt_like(21);
  s.template_variety = false;  // all attack-eligible
  Workload wl = generate(s);
  REQUIRE_FALSE(wl.secrets.empty());
  for (const SecretPlan& p : wl.secrets) {
    REQUIRE(p.candidates.size() == s.secret_positions);
    REQUIRE(p.truth_tokens.size() == s.secret_positions);
    const Request* victim = nullptr;
    for (const Request& r : wl.requests)
      if (r.request_id == p.victim_request_id) victim = &r;
    REQUIRE(victim != nullptr);
    // known_prefix + truth digits form a prefix of the victim request
    TokenSeq probe = p.known_prefix;
    probe.insert(probe.end(), p.truth_tokens.begin(), p.truth_tokens.end());
    REQUIRE(probe.size() <= victim->tokens.size());
    CHECK(std::equal(probe.begin(), probe.end(), victim->tokens.begin()));
    for (size_t i = 0; i < p.candidates.size(); ++i) {
      CHECK(p.candidates[i].size() == s.candidates_per_position);
      CHECK(std::find(p.candidates[i].begin(), p.candidates[i].end(), p.truth_tokens[i]) !=
            p.candidates[i].end());
    }
  }
}

TEST_CASE("system prompt scenario prepends the shared prefix to every request") {
  WorkloadSpec s;
  s.scenario = ScenarioKind::SystemPrompt;
  s.n_users = 4;
  s.n_requests = 40;
  s.system_prompt_tokens = 1024;
  s.secret_density = 0.2;
  s.seed = 2;
  // the construction implies its overlap: 1024-byte prompt over 1504-byte
  // requests, first user re-hitting its own copy on every n_users-th request
  s.inter_user_overlap = 0.0;
  s.intra_user_overlap = 0.0;
  CHECK_THROWS_AS(generate(s), InfeasibleSpec);
  WorkloadSpec t = s;
  t.inter_user_overlap = 0.5106;
  t.intra_user_overlap = 0.1532;
  Workload wl = generate(t);
  ReuseStats implied = measure_reuse(wl.requests);
  CHECK(implied.inter_reuse == Catch::Approx(0.5106).margin(0.02));
  CHECK(implied.intra_reuse == Catch::Approx(0.1532).margin(0.02));
  std::string sys_prefix = wl.requests[0].text.substr(0, 32);
  for (const Request& r : wl.requests) CHECK(r.text.rfind(sys_prefix, 0) == 0);
  CHECK(wl.requests[0].text.size() >= 1024);
}

TEST_CASE("rule corpus generator ships rule-aligned samples") {
  RuleEngine rules;
  auto corpus = generate_rule_corpus(500, 77);
  for (const auto& [text, category] : corpus) {
    DetectionVerdict v = rules.tier1_scan(text);
    INFO(text);
    CHECK(v.sensitive);
    CHECK(std::find(v.categories.begin(), v.categories.end(), category) != v.categories.end());
  }
}

TEST_CASE("block truth slices spans by block boundaries") {
  Request r;
  r.text = std::string(100, 'a');
  r.truth.push_back({10, 20, SpanSensitivity::Always, "Financial Info"});
  r.truth.push_back({50, 60, SpanSensitivity::ContextOnly, "Financial Info"});
  BlockTruth t1 = block_truth(r, 0, 30);
  CHECK(t1.sensitive_alone);
  BlockTruth t2 = block_truth(r, 30, 100);
  CHECK_FALSE(t2.sensitive_alone);
  CHECK(t2.sensitive_with_context);
  BlockTruth t3 = block_truth(r, 20, 50);
  CHECK_FALSE(t3.sensitive_alone);
  CHECK_FALSE(t3.sensitive_with_context);
}
