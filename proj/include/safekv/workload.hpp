#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "safekv/core.hpp"
#include "safekv/detection.hpp"
#include "safekv/util.hpp"

namespace safekv {

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

enum class ScenarioKind : uint8_t { SingleRequestPII, MultiTurnChat, SystemPrompt };

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::SingleRequestPII: return "single_request_pii";
    case ScenarioKind::MultiTurnChat: return "multi_turn_chat";
    default: return "system_prompt";
  }
}

struct WorkloadSpec {
  uint64_t n_users = 8;
  uint64_t n_requests = 200;
  ScenarioKind scenario = ScenarioKind::MultiTurnChat;
  double inter_user_overlap = 0.25;
  double intra_user_overlap = 0.07;
  double secret_density = 0.2;
  double context_dependent_fraction = 0.1;
  uint32_t system_prompt_tokens = 8192;
  uint64_t seed = 1;
  // shape knobs
  uint32_t secret_positions = 5;         // attackable trailing digits per secret
  uint32_t candidates_per_position = 10; // <= 10 (candidates are digit bytes)
  double business_user_fraction = 0.0;
  bool template_variety = true;  // false: every planted secret is attack-eligible
};

// ---------------------------------------------------------------------------
// Ground truth and stream types
// ---------------------------------------------------------------------------

enum class SpanSensitivity : uint8_t { Always, ContextOnly };

struct TruthSpan {
  size_t begin = 0;  // byte offsets into the request text
  size_t end = 0;
  SpanSensitivity sensitivity = SpanSensitivity::Always;
  std::string category;
};

struct Request {
  uint64_t request_id = 0;
  UserId user{};
  UserKind user_kind = UserKind::Benign;
  OwnerClass owner = OwnerClass::Customer;
  double arrival_ms = 0.0;
  std::string text;
  TokenSeq tokens;
  std::vector<std::string> history;  // prior turn texts in the same session
  uint64_t session_id = 0;
  std::vector<TruthSpan> truth;
};

/// Candidate material handed to the adversary for one planted secret: the
/// known prefix before the secret digits and, per position, a candidate list
/// that contains the true token.
struct SecretPlan {
  uint64_t secret_id = 0;
  uint64_t victim_request_id = 0;
  UserId victim{};
  TokenSeq known_prefix;
  std::vector<std::vector<TokenId>> candidates;
  TokenSeq truth_tokens;
  std::string category;
};

struct Workload {
  WorkloadSpec spec;
  std::vector<Request> requests;  // time-ordered
  std::vector<SecretPlan> secrets;

  std::string canonical_bytes() const {
    ByteWriter w;
    w.u64(requests.size());
    for (const Request& r : requests) {
      w.u64(r.request_id);
      w.u64(r.user.value);
      w.u8(static_cast<uint8_t>(r.user_kind));
      w.u8(static_cast<uint8_t>(r.owner));
      uint64_t bits;
      static_assert(sizeof(bits) == sizeof(r.arrival_ms));
      std::memcpy(&bits, &r.arrival_ms, sizeof(bits));
      w.u64(bits);
      w.bytes(r.text);
      w.u64(r.session_id);
      w.u64(r.history.size());
      for (const auto& h : r.history) w.bytes(h);
      w.u64(r.truth.size());
      for (const auto& s : r.truth) {
        w.u64(s.begin);
        w.u64(s.end);
        w.u8(static_cast<uint8_t>(s.sensitivity));
        w.bytes(s.category);
      }
    }
    w.u64(secrets.size());
    for (const SecretPlan& s : secrets) {
      w.u64(s.secret_id);
      w.u64(s.victim_request_id);
      w.u64(s.victim.value);
      w.u64(s.known_prefix.size());
      for (TokenId t : s.known_prefix) w.u32(t);
      w.u64(s.candidates.size());
      for (const auto& pos : s.candidates) {
        w.u64(pos.size());
        for (TokenId t : pos) w.u32(t);
      }
      for (TokenId t : s.truth_tokens) w.u32(t);
      w.bytes(s.category);
    }
    return w.str();
  }
};

/// Ground truth for the block spanning byte range [begin, end) of a request.
inline BlockTruth block_truth(const Request& req, size_t begin, size_t end) {
  BlockTruth t;
  for (const TruthSpan& s : req.truth) {
    if (s.end <= begin || s.begin >= end) continue;
    if (s.sensitivity == SpanSensitivity::Always) t.sensitive_alone = true;
    t.sensitive_with_context = true;
    if (std::find(t.categories.begin(), t.categories.end(), s.category) == t.categories.end())
      t.categories.push_back(s.category);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Secret templates (aligned with the default Tier-1 rules)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string digits(SplitMix64& rng, size_t n) {
  std::string s;
  for (size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + rng.next_below(10)));
  return s;
}

inline std::string hex_pairs(SplitMix64& rng, size_t n) {
  static const char* kHex = "0123456789abcdef";
  std::string s;
  for (size_t i = 0; i < n; ++i) {
    if (i) s.push_back(':');
    s.push_back(kHex[rng.next_below(16)]);
    s.push_back(kHex[rng.next_below(16)]);
  }
  return s;
}

struct SecretInstance {
  std::string text;        // full PII phrase
  size_t span_begin = 0;   // sensitive span within text
  size_t span_end = 0;
  std::string category;
  size_t digit_run = 0;    // trailing contiguous digits usable as attack positions
};

/// Instantiates one secret phrase. Index selects the template family; every
/// family matches exactly one shipped rule.
inline SecretInstance make_secret(size_t family, SplitMix64& rng) {
  SecretInstance s;
  switch (family % 8) {
    case 0: {
      std::string d = digits(rng, 8);
      s.text = "account number " + d;
      s.category = "Financial Info";
      s.digit_run = 8;
      break;
    }
    case 1: {
      s.text = "my ssn is " + digits(rng, 3) + "-" + digits(rng, 2) + "-" + digits(rng, 4);
      s.category = "Identity Information";
      s.digit_run = 4;
      break;
    }
    case 2: {
      s.text = "call me at (" + digits(rng, 3) + ") " + digits(rng, 3) + "-" + digits(rng, 4);
      s.category = "Basic Information";
      s.digit_run = 4;
      break;
    }
    case 3: {
      s.text = "email me at user" + digits(rng, 4) + "@mail" + digits(rng, 2) + ".com";
      s.category = "Basic Information";
      s.digit_run = 0;
      break;
    }
    case 4: {
      s.text = "card number " + digits(rng, 4) + "-" + digits(rng, 4) + "-" + digits(rng, 4) + "-" +
               digits(rng, 4);
      s.category = "Financial Info";
      s.digit_run = 4;
      break;
    }
    case 5: {
      s.text = "server at 10." + std::to_string(rng.next_below(200)) + "." +
               std::to_string(rng.next_below(200)) + "." + std::to_string(rng.next_below(200));
      s.category = "System/Network Identification";
      s.digit_run = 0;
      break;
    }
    case 6: {
      s.text = "device mac " + hex_pairs(rng, 6);
      s.category = "Hardware Device Information";
      s.digit_run = 0;
      break;
    }
    default: {
      std::string d = digits(rng, 15);
      s.text = "imei " + d;
      s.category = "Hardware Device Information";
      s.digit_run = 15;
      break;
    }
  }
  s.span_begin = 0;
  s.span_end = s.text.size();
  return s;
}

inline std::string base36(uint64_t v) {
  static const char* kAlpha = "0123456789abcdefghijklmnopqrstuvwxyz";
  std::string s;
  do {
    s.push_back(kAlpha[v % 36]);
    v /= 36;
  } while (v);
  std::reverse(s.begin(), s.end());
  return s;
}

/// Letters-only filler of exactly n bytes; the embedded counter keeps every
/// fragment globally unique from its first bytes.
inline std::string filler(uint64_t uniq, size_t n, SplitMix64& rng) {
  std::string s = "u" + base36(uniq) + " ";
  while (s.size() < n) {
    size_t len = 3 + rng.next_below(6);
    for (size_t i = 0; i < len && s.size() < n; ++i)
      s.push_back(static_cast<char>('a' + rng.next_below(26)));
    if (s.size() < n) s.push_back(' ');
  }
  s.resize(n, 'x');
  return s;
}

}  // namespace detail

/// Synthetic labelled corpus for rule-engine evaluation: n secret-bearing
/// strings drawn from the shipped template families, with their categories.
inline std::vector<std::pair<std::string, std::string>> generate_rule_corpus(size_t n,
                                                                             uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> out;
  SplitMix64 rng(seed);
  for (size_t i = 0; i < n; ++i) {
    auto s = detail::make_secret(i, rng);
    std::string text = detail::filler(i, 16 + rng.next_below(24), rng) + " " + s.text + " " +
                       detail::filler(i + (1ull << 40), 8 + rng.next_below(16), rng);
    out.emplace_back(text, s.category);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reuse measurement (token-weighted, flat position model)
// ---------------------------------------------------------------------------

struct ReuseStats {
  double intra_reuse = 0.0;
  double inter_reuse = 0.0;
  uint64_t total_tokens = 0;
  uint64_t intra_tokens = 0;
  uint64_t inter_tokens = 0;
};

/// Replays the stream through an unbounded global-share position model and
/// attributes every matched token to same-user or cross-user provenance
/// (provenance of a position = the user whose request first recorded it).
inline ReuseStats measure_reuse(const std::vector<Request>& stream) {
  struct PosNode {
    std::map<TokenId, std::unique_ptr<PosNode>> ch;
    UserId creator{};
  };
  PosNode root;
  ReuseStats st;
  for (const Request& r : stream) {
    PosNode* cur = &root;
    size_t i = 0;
    for (; i < r.tokens.size(); ++i) {
      auto it = cur->ch.find(r.tokens[i]);
      if (it == cur->ch.end()) break;
      cur = it->second.get();
      if (cur->creator == r.user)
        ++st.intra_tokens;
      else
        ++st.inter_tokens;
    }
    for (; i < r.tokens.size(); ++i) {
      auto node = std::make_unique<PosNode>();
      node->creator = r.user;
      PosNode* raw = node.get();
      cur->ch.emplace(r.tokens[i], std::move(node));
      cur = raw;
    }
    st.total_tokens += r.tokens.size();
  }
  if (st.total_tokens > 0) {
    st.intra_reuse = static_cast<double>(st.intra_tokens) / static_cast<double>(st.total_tokens);
    st.inter_reuse = static_cast<double>(st.inter_tokens) / static_cast<double>(st.total_tokens);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

namespace detail {

/// Two session cohorts: single-turn sessions (cohort A) whose opener may be
/// fresh, foreign, or the user's own earlier opener, and multi-turn sessions
/// (cohort B, tb turns, fresh or foreign opener) whose later turns re-match
/// their own growing prefix. Token accounting per session:
///   A: tokens Lo+Lt; foreign adds inter Lo; own adds intra Lo
///   B: tokens tb*Lo + Lt*tb*(tb+1)/2; base intra Lt*tb*(tb-1)/2;
///      fresh adds intra (tb-1)*Lo; foreign adds inter tb*Lo
struct SessionShape {
  uint32_t tb = 3;
  uint32_t opener_bytes = 0;
  uint32_t turn_bytes = 0;
  uint64_t n_b = 0;   // multi-turn sessions
  uint64_t n_bf = 0;  // ... with a foreign opener
  uint64_t n_a = 0;   // single-turn sessions
  uint64_t n_af = 0;  // ... with a foreign opener
  uint64_t n_ao = 0;  // ... reusing the user's own opener
};

inline SessionShape solve_shape(const WorkloadSpec& spec) {
  const bool multi = spec.scenario == ScenarioKind::MultiTurnChat;
  const bool needs_secret_room = spec.secret_density > 0.0;
  const bool needs_context =
      multi && spec.secret_density > 0.0 && spec.context_dependent_fraction > 0.0;
  const double N = static_cast<double>(spec.n_requests);
  SessionShape best;
  double best_err = 1e18;
  const uint32_t lt_min = needs_secret_room ? 72 : 24;
  for (uint32_t tb : {2u, 3u, 4u}) {
    for (uint32_t lo = 40; lo <= 480; lo += 20) {
      for (uint32_t lt = lt_min; lt <= 240; lt += 12) {
        double s_a = lo + lt;
        double s_b = static_cast<double>(tb) * lo + static_cast<double>(lt) * tb * (tb + 1) / 2.0;
        double base_b = static_cast<double>(lt) * tb * (tb - 1) / 2.0;
        for (int qi = 0; qi <= 20; ++qi) {
          if (!multi && qi > 0) break;
          double q = multi ? qi / 20.0 : 0.0;  // request share of cohort B
          if (needs_context && q < 0.05) continue;
          uint64_t n_b = static_cast<uint64_t>(std::llround(q * N / tb));
          if (multi && needs_context && n_b == 0) n_b = 1;
          if (n_b * tb > spec.n_requests) continue;
          uint64_t n_a = spec.n_requests - n_b * tb;
          double tok = n_b * s_b + n_a * s_a;
          if (tok <= 0) continue;
          for (int fbi = 0; fbi <= 4; ++fbi) {
            double f_bf = fbi / 4.0;
            double n_bf = f_bf * static_cast<double>(n_b);
            double inter_from_b = n_bf * tb * lo;
            double intra_from_b =
                n_b * base_b + (static_cast<double>(n_b) - n_bf) * (tb - 1.0) * lo;
            double n_af = (spec.inter_user_overlap * tok - inter_from_b) / lo;
            double n_ao = (spec.intra_user_overlap * tok - intra_from_b) / lo;
            if (n_af < -0.5 || n_ao < -0.5) continue;
            if (n_af + n_ao > static_cast<double>(n_a) + 0.5) continue;
            SessionShape cand;
            cand.tb = tb;
            cand.opener_bytes = lo;
            cand.turn_bytes = lt;
            cand.n_b = n_b;
            cand.n_bf = static_cast<uint64_t>(std::llround(std::max(0.0, n_bf)));
            cand.n_a = n_a;
            cand.n_af = static_cast<uint64_t>(std::llround(std::max(0.0, n_af)));
            cand.n_ao = static_cast<uint64_t>(std::llround(std::max(0.0, n_ao)));
            if (cand.n_bf > cand.n_b || cand.n_af + cand.n_ao > cand.n_a) continue;
            double inter = static_cast<double>(cand.n_bf) * tb * lo + cand.n_af * lo;
            double intra = n_b * base_b +
                           static_cast<double>(cand.n_b - cand.n_bf) * (tb - 1.0) * lo +
                           static_cast<double>(cand.n_ao) * lo;
            double err = std::abs(inter / tok - spec.inter_user_overlap) +
                         std::abs(intra / tok - spec.intra_user_overlap);
            if (err < best_err) {
              best_err = err;
              best = cand;
            }
          }
        }
      }
    }
    if (!multi) break;  // single-turn scenarios ignore the (tb, q) axes
  }
  if (best_err > 0.015)
    throw InfeasibleSpec("workload: overlap targets unsatisfiable (best error " +
                         std::to_string(best_err) + ")");
  return best;
}

}  // namespace detail

inline Workload generate(const WorkloadSpec& spec) {
  if (spec.n_users == 0) throw ConfigError("workload: n_users must be positive");
  if (spec.n_requests == 0) throw ConfigError("workload: n_requests must be positive");
  for (double v : {spec.inter_user_overlap, spec.intra_user_overlap, spec.secret_density,
                   spec.context_dependent_fraction, spec.business_user_fraction})
    if (v < 0.0 || v > 1.0) throw ConfigError("workload: fractions must lie in [0,1]");
  if (spec.candidates_per_position < 2 || spec.candidates_per_position > 10)
    throw ConfigError("workload: candidates_per_position must be in [2,10]");

  Workload wl;
  wl.spec = spec;
  SplitMix64 rng(derive_seed(spec.seed, 0x01));
  SplitMix64 secret_rng(derive_seed(spec.seed, 0x02));

  const double interarrival_ms = 20.0;

  // owner class per user
  std::vector<OwnerClass> owner_of(spec.n_users, OwnerClass::Customer);
  {
    SplitMix64 orng(derive_seed(spec.seed, 0x03));
    for (auto& o : owner_of)
      if (orng.next_double() < spec.business_user_fraction) o = OwnerClass::Business;
  }

  if (spec.scenario == ScenarioKind::SystemPrompt) {
    // Uniform shared system prompt in front of unique bodies. Overlap is
    // implied by the construction; reject targets that contradict it.
    const size_t body_bytes = 480;
    std::string sys = detail::filler(0x5151, spec.system_prompt_tokens, rng);
    uint64_t n = spec.n_requests;
    double total = static_cast<double>(n) * (sys.size() + body_bytes);
    uint64_t u0_later = 0;
    for (uint64_t r = spec.n_users; r < n; r += spec.n_users) ++u0_later;
    double implied_intra = static_cast<double>(u0_later) * sys.size() / total;
    double implied_inter = static_cast<double>(n - 1 - u0_later) * sys.size() / total;
    if (std::abs(implied_intra - spec.intra_user_overlap) > 0.02 ||
        std::abs(implied_inter - spec.inter_user_overlap) > 0.02)
      throw InfeasibleSpec("workload: system-prompt scenario implies intra=" +
                           std::to_string(implied_intra) + " inter=" + std::to_string(implied_inter));
    uint64_t secret_seq = 0;
    for (uint64_t r = 0; r < n; ++r) {
      Request req;
      req.request_id = r + 1;
      uint64_t u = r % spec.n_users;
      req.user = UserId{u + 1};
      req.owner = owner_of[u];
      req.session_id = r + 1;
      req.arrival_ms = (r + 1) * interarrival_ms;
      std::string body = detail::filler(r + 1, body_bytes, rng);
      bool plant = rng.next_double() < spec.secret_density;
      if (plant) {
        size_t family = spec.template_variety ? secret_seq : 0;
        auto sec = detail::make_secret(family, secret_rng);
        ++secret_seq;
        size_t at = 24;  // keep a unique filler prefix before the secret
        body = body.substr(0, at) + " " + sec.text + " " +
               body.substr(0, body_bytes - at - sec.text.size() - 2);
        body.resize(body_bytes, 'x');
        size_t abs_begin = sys.size() + at + 1;
        req.truth.push_back(
            {abs_begin, abs_begin + sec.text.size(), SpanSensitivity::Always, sec.category});
        if (sec.digit_run >= spec.secret_positions) {
          SecretPlan plan;
          plan.secret_id = wl.secrets.size() + 1;
          plan.victim_request_id = req.request_id;
          plan.victim = req.user;
          size_t span_end = abs_begin + sec.text.size();
          size_t pos_begin = span_end - spec.secret_positions;
          plan.category = sec.category;
          req.text = sys + body;  // temporary for token slicing below
          for (size_t p = pos_begin; p < span_end; ++p) {
            TokenId truth_tok = static_cast<TokenId>(static_cast<unsigned char>((sys + body)[p]));
            plan.truth_tokens.push_back(truth_tok);
            std::vector<TokenId> cands;
            for (char d = '0'; d <= '9'; ++d) cands.push_back(static_cast<TokenId>(d));
            secret_rng.shuffle(cands);
            cands.resize(spec.candidates_per_position);
            if (std::find(cands.begin(), cands.end(), truth_tok) == cands.end())
              cands[secret_rng.next_below(cands.size())] = truth_tok;
            plan.candidates.push_back(std::move(cands));
          }
          plan.known_prefix = tokenize(std::string_view(sys + body).substr(0, pos_begin));
          wl.secrets.push_back(std::move(plan));
        }
      }
      req.text = sys + body;
      req.tokens = tokenize(req.text);
      wl.requests.push_back(std::move(req));
    }
    return wl;
  }

  // Session-based scenarios: a solved mix of single-turn and multi-turn
  // sessions with fresh / foreign / own openers hits the overlap targets.
  detail::SessionShape shape = detail::solve_shape(spec);
  struct Session {
    uint64_t user_idx = 0;
    uint32_t turns = 1;
    bool multi = false;
    std::string opener_text;
    std::vector<std::string> turn_texts;                  // per turn fragment
    std::vector<std::vector<TruthSpan>> turn_truth;       // spans relative to fragment
    std::vector<std::optional<SecretPlan>> turn_plan;     // fragment-relative prefixes
  };

  const uint64_t n_sessions = shape.n_a + shape.n_b;
  std::vector<Session> sessions(n_sessions);
  // Bresenham mix of the two cohorts so multi-turn sessions spread evenly
  for (uint64_t s = 0, acc = 0; s < n_sessions; ++s) {
    acc += shape.n_b;
    if (acc >= n_sessions) {
      acc -= n_sessions;
      sessions[s].multi = true;
      sessions[s].turns = shape.tb;
    }
  }

  struct PoolEntry {
    std::string text;
    uint64_t creator_idx;
  };
  std::vector<PoolEntry> opener_pool;
  uint64_t foreign_a_left = shape.n_af, own_a_left = shape.n_ao, foreign_b_left = shape.n_bf;
  uint64_t uniq = 1;

  for (uint64_t s = 0; s < n_sessions; ++s) {
    Session& sess = sessions[s];
    sess.user_idx = s % spec.n_users;
    int foreign_pick = -1, own_pick = -1;
    for (size_t i = 0; i < opener_pool.size(); ++i) {
      if (opener_pool[i].creator_idx != sess.user_idx && foreign_pick < 0)
        foreign_pick = static_cast<int>(i);
      if (opener_pool[i].creator_idx == sess.user_idx && own_pick < 0) own_pick = static_cast<int>(i);
    }
    uint64_t& foreign_left = sess.multi ? foreign_b_left : foreign_a_left;
    if (foreign_left > 0 && foreign_pick >= 0) {
      sess.opener_text = opener_pool[static_cast<size_t>(foreign_pick)].text;
      --foreign_left;
    } else if (!sess.multi && own_a_left > 0 && own_pick >= 0) {
      sess.opener_text = opener_pool[static_cast<size_t>(own_pick)].text;
      --own_a_left;
    } else {
      sess.opener_text = detail::filler(uniq++, shape.opener_bytes, rng);
      opener_pool.push_back({sess.opener_text, sess.user_idx});
    }
    sess.turn_texts.resize(sess.turns);
    sess.turn_truth.resize(sess.turns);
    sess.turn_plan.resize(sess.turns);
    for (uint32_t t = 0; t < sess.turns; ++t)
      sess.turn_texts[t] = detail::filler(uniq++, shape.turn_bytes, rng);
  }

  // Secrets: plant into turn fragments. A context-dependent secret needs a
  // prior turn in the same session for its setup phrase, and neither turn of
  // the pair may already carry a secret.
  uint64_t total_requests = shape.n_a + shape.n_b * shape.tb;
  uint64_t n_secrets = static_cast<uint64_t>(std::llround(spec.secret_density * total_requests));
  uint64_t n_context = spec.scenario == ScenarioKind::MultiTurnChat
                           ? static_cast<uint64_t>(std::llround(spec.context_dependent_fraction * n_secrets))
                           : 0;
  static const std::string kContextSetup = "my savings account at bankx";
  const size_t at = 12;  // unique filler prefix stays in front of every fragment

  std::vector<std::pair<uint64_t, uint32_t>> slots;
  for (uint64_t s = 0; s < n_sessions; ++s)
    for (uint32_t t = 0; t < sessions[s].turns; ++t) slots.emplace_back(s, t);
  secret_rng.shuffle(slots);
  std::vector<std::vector<bool>> used(n_sessions);
  for (uint64_t s = 0; s < n_sessions; ++s) used[s].assign(sessions[s].turns, false);

  auto embed = [&](std::string& frag, const std::string& phrase) -> size_t {
    std::string next = frag.substr(0, at) + " " + phrase + " " +
                       frag.substr(0, shape.turn_bytes - at - phrase.size() - 2);
    next.resize(shape.turn_bytes, 'x');
    frag = std::move(next);
    return at + 1;  // phrase begin within fragment
  };

  uint64_t planted = 0, planted_context = 0, secret_seq = 0;
  for (auto [s, t] : slots) {
    if (planted_context >= n_context) break;
    if (t < 1 || used[s][t] || used[s][t - 1]) continue;
    Session& sess = sessions[s];
    embed(sess.turn_texts[t - 1], kContextSetup);
    std::string d = detail::digits(secret_rng, 5);
    std::string phrase = "the code is " + d;
    size_t begin = embed(sess.turn_texts[t], phrase) + phrase.size() - d.size();
    sess.turn_truth[t].push_back(
        {begin, begin + d.size(), SpanSensitivity::ContextOnly, "Financial Info"});
    used[s][t] = used[s][t - 1] = true;
    ++planted_context;
    ++planted;
  }
  for (auto [s, t] : slots) {
    if (planted >= n_secrets) break;
    if (used[s][t]) continue;
    Session& sess = sessions[s];
    size_t family = spec.template_variety ? secret_seq : 0;
    auto sec = detail::make_secret(family, secret_rng);
    size_t begin = embed(sess.turn_texts[t], sec.text);
    sess.turn_truth[t].push_back(
        {begin, begin + sec.text.size(), SpanSensitivity::Always, sec.category});
    if (sec.digit_run >= spec.secret_positions) {
      SecretPlan plan;
      plan.category = sec.category;
      size_t span_end = begin + sec.text.size();
      size_t pos_begin = span_end - spec.secret_positions;
      const std::string& frag = sess.turn_texts[t];
      for (size_t p = pos_begin; p < span_end; ++p) {
        TokenId truth_tok = static_cast<TokenId>(static_cast<unsigned char>(frag[p]));
        plan.truth_tokens.push_back(truth_tok);
        std::vector<TokenId> cands;
        for (char dch = '0'; dch <= '9'; ++dch) cands.push_back(static_cast<TokenId>(dch));
        secret_rng.shuffle(cands);
        cands.resize(spec.candidates_per_position);
        if (std::find(cands.begin(), cands.end(), truth_tok) == cands.end())
          cands[secret_rng.next_below(cands.size())] = truth_tok;
        plan.candidates.push_back(std::move(cands));
      }
      // known_prefix is fragment-relative here; absolute offset fixed below
      plan.known_prefix = tokenize(std::string_view(frag).substr(0, pos_begin));
      sess.turn_plan[t] = std::move(plan);
    }
    used[s][t] = true;
    ++secret_seq;
    ++planted;
  }

  // Emit the stream: sessions advance round-robin so every turn k-1 precedes
  // turn k and openers exist before their foreign reuse.
  uint64_t rid = 0;
  uint32_t max_turns = 1;
  for (const Session& sess : sessions) max_turns = std::max(max_turns, sess.turns);
  for (uint32_t t = 0; t < max_turns; ++t) {
    for (uint64_t s = 0; s < n_sessions; ++s) {
      Session& sess = sessions[s];
      if (t >= sess.turns) continue;
      Request req;
      req.request_id = ++rid;
      req.user = UserId{sess.user_idx + 1};
      req.owner = owner_of[sess.user_idx];
      req.session_id = s + 1;
      req.arrival_ms = rid * interarrival_ms;
      std::string text = sess.opener_text;
      for (uint32_t k = 0; k < t; ++k)
        req.history.push_back(k == 0 ? sess.opener_text + sess.turn_texts[0] : sess.turn_texts[k]);
      for (uint32_t k = 0; k <= t; ++k) text += sess.turn_texts[k];
      // absolute truth offsets for every turn included in this request
      for (uint32_t k = 0; k <= t; ++k) {
        size_t base = sess.opener_text.size();
        for (uint32_t j = 0; j < k; ++j) base += sess.turn_texts[j].size();
        for (const TruthSpan& sp : sess.turn_truth[k])
          req.truth.push_back({base + sp.begin, base + sp.end, sp.sensitivity, sp.category});
      }
      req.text = std::move(text);
      req.tokens = tokenize(req.text);
      if (sess.turn_plan[t]) {
        SecretPlan plan = *sess.turn_plan[t];
        plan.secret_id = wl.secrets.size() + 1;
        plan.victim_request_id = req.request_id;
        plan.victim = req.user;
        size_t base = sess.opener_text.size();
        for (uint32_t j = 0; j < t; ++j) base += sess.turn_texts[j].size();
        TokenSeq abs_prefix = tokenize(std::string_view(req.text).substr(0, base));
        abs_prefix.insert(abs_prefix.end(), plan.known_prefix.begin(), plan.known_prefix.end());
        plan.known_prefix = std::move(abs_prefix);
        wl.secrets.push_back(std::move(plan));
      }
      wl.requests.push_back(std::move(req));
    }
  }
  return wl;
}

}  // namespace safekv
