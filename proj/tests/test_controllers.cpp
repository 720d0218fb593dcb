#include <algorithm>

#include <doctest.h>

#include "support/fixtures.hpp"
#include "ttsreplay/controllers.hpp"
#include "ttsreplay/error.hpp"
#include "ttsreplay/evaluation.hpp"
#include "ttsreplay/spec_json.hpp"

using namespace ttsreplay;
using fixtures::canonical_pool;
using fixtures::finals_pool;

namespace {

ControllerSpec with(ControllerKind kind, Hyperparameters params) {
  ControllerSpec spec = default_spec(kind);
  for (const auto& [k, v] : params) {
    std::erase_if(spec.beta_map, [&](const BetaMapEntry& e) { return e.name == k; });
    spec.parameters[k] = v;
  }
  return spec;
}

EpisodeRun run(const ControllerSpec& spec, const TrajectoryPool& pool, double beta = 1.0) {
  return run_episode(spec, beta, pool, identity_permutation(pool.size()), {});
}

std::vector<std::string> actions(const EpisodeRun& r) {
  std::vector<std::string> out;
  for (const auto& e : r.trace.events) out.push_back(to_string(e.action));
  return out;
}

int count_kind(const EpisodeRun& r, ActionKind kind) {
  return static_cast<int>(std::count_if(r.trace.events.begin(), r.trace.events.end(),
                                        [&](const TraceEvent& e) { return e.action.kind == kind; }));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kUsage;
}

}  // namespace

TEST_CASE("beta map evaluation") {
  const auto cmc = default_cmc_spec();
  CHECK(resolve_hyperparameters(cmc, 0.5).at("max_width") == 8);
  CHECK(resolve_hyperparameters(cmc, 1.0).at("max_width") == 12);
  CHECK(resolve_hyperparameters(cmc, 1.0).at("stop_conf_threshold") == doctest::Approx(0.90));
  CHECK(resolve_hyperparameters(cmc, 0.5).at("burst_aligned") == 1);
  CHECK(resolve_hyperparameters(cmc, 0.25).at("abandon_patience") == 2);
  CHECK(resolve_hyperparameters(cmc, 1.0).at("abandon_patience") == 3);
  CHECK(resolve_hyperparameters(cmc, 0.0).at("ema_alpha") == doctest::Approx(0.3));

  ControllerSpec pp = default_spec(ControllerKind::kParallelProbe);
  pp.parameters.erase("prune_fraction");
  pp.beta_map.push_back({"prune_fraction", 0.5, 0.4});
  CHECK(resolve_hyperparameters(pp, 1.0).at("prune_fraction") == doctest::Approx(0.1));
  CHECK(resolve_hyperparameters(pp, 2.0).at("prune_fraction") == 0.0);  // clamped
}

TEST_CASE("spec validation") {
  auto bad = default_cmc_spec();
  bad.beta_map[0].coefficient = -0.1;
  CHECK(code_of([&] { validate_spec(bad); }) == ErrorCode::kInvalidSpec);

  bad = default_cmc_spec();
  bad.parameters["no_such_knob"] = 1;
  CHECK(code_of([&] { validate_spec(bad); }) == ErrorCode::kInvalidSpec);

  bad = default_cmc_spec();
  bad.beta_map.push_back({"ema_alpha", 0.3, 0.1});
  CHECK(code_of([&] { validate_spec(bad); }) == ErrorCode::kInvalidSpec);

  bad = default_cmc_spec();
  bad.parameters["ema_alpha"] = 0.0;
  CHECK(code_of([&] { validate_spec(bad); }) == ErrorCode::kInvalidSpec);

  bad = default_cmc_spec();
  bad.beta_map.push_back({"max_width", 2, 1});
  CHECK(code_of([&] { validate_spec(bad); }) == ErrorCode::kInvalidSpec);

  CHECK(code_of([] { parse_controller_kind("mcts"); }) == ErrorCode::kInvalidSpec);
  CHECK(code_of([] { resolve_hyperparameters(default_cmc_spec(), -1.0); }) ==
        ErrorCode::kInvalidSpec);
  for (auto kind : {ControllerKind::kSc, ControllerKind::kAsc, ControllerKind::kEsc,
                    ControllerKind::kParallelProbe, ControllerKind::kRoundPolicy}) {
    CHECK_NOTHROW(validate_spec(default_spec(kind)));
    CHECK(parse_controller_kind(to_string(kind)) == kind);
  }
}

TEST_CASE("spec JSON round trip") {
  const auto cmc = default_cmc_spec();
  CHECK(spec_from_json(spec_to_json(cmc)) == cmc);
  CHECK(spec_digest(cmc) == spec_digest(default_cmc_spec()));
  CHECK(spec_digest(cmc) != spec_digest(default_spec(ControllerKind::kSc)));
  CHECK(code_of([] { spec_from_json(nlohmann::json::array()); }) == ErrorCode::kInvalidSpec);
  CHECK(code_of([] { spec_from_json({{"kind", "sc"}, {"parameters", {{"width", "x"}}}}); }) ==
        ErrorCode::kInvalidSpec);
}

// Argument-level monotonicity of the beta map over random round_policy specs.
TEST_CASE("property: beta map is monotone in beta") {
  SplitMix64 rng(2024);
  const auto& table = parameter_table(ControllerKind::kRoundPolicy);
  for (int trial = 0; trial < 1000; ++trial) {
    ControllerSpec spec;
    spec.kind = ControllerKind::kRoundPolicy;
    for (const auto& p : table) {
      if (p.direction == BudgetDirection::kFixed || rng.below(2)) continue;
      const double hi = std::min(p.upper, p.lower + 20.0);
      spec.beta_map.push_back({p.name, p.lower + rng.uniform01() * (hi - p.lower),
                               rng.uniform01() * 10.0});
    }
    REQUIRE_NOTHROW(validate_spec(spec));
    double lo = rng.uniform01() * 2.0;
    double hi = lo + rng.uniform01() * 2.0;
    const auto a = resolve_hyperparameters(spec, lo);
    const auto b = resolve_hyperparameters(spec, hi);
    for (const auto& p : table) {
      if (p.direction == BudgetDirection::kExpanding) CHECK(b.at(p.name) >= a.at(p.name));
      if (p.direction == BudgetDirection::kContracting) CHECK(b.at(p.name) <= a.at(p.name));
      if (p.direction == BudgetDirection::kFixed) CHECK(b.at(p.name) == a.at(p.name));
      CHECK(b.at(p.name) >= p.lower);
      CHECK(b.at(p.name) <= p.upper);
    }
  }
}

TEST_CASE("SC on the canonical pool") {
  const auto r = run(with(ControllerKind::kSc, {{"width", 3}}), canonical_pool());
  CHECK(r.result.answer == Answer{"42"});
  CHECK(r.result.correct);
  CHECK(r.result.interval_cost == 6);
  CHECK(r.result.token_cost == 2800);
  CHECK(count_kind(r, ActionKind::kBranch) == 3);
  CHECK(count_kind(r, ActionKind::kProbe) == 0);

  const auto one = run(with(ControllerKind::kSc, {{"width", 1}}), canonical_pool());
  CHECK(one.result.answer == Answer{"42"});
  CHECK(one.result.interval_cost == 3);
}

TEST_CASE("SC on a unanimous pool answers that value at any width") {
  const auto pool = fixtures::unanimous_pool("u", "x", 5, 3);
  for (int w = 1; w <= 6; ++w) {
    CHECK(run(with(ControllerKind::kSc, {{"width", w}}), pool).result.answer == Answer{"x"});
  }
}

TEST_CASE("ASC sequential scan") {
  const auto asc = with(ControllerKind::kAsc, {{"threshold", 0.95}, {"k_min", 2}});
  const auto agree = finals_pool("a", "42", {"42", "42", "41", "40"});
  const auto r = run(asc, agree);
  CHECK(r.result.answer == Answer{"42"});
  CHECK(r.terminal.m() == 2);

  // T1, T2, T3: 1.0 at n=1 (below k_min), 0.5, 0.667; never stops early.
  const auto c = run(asc, canonical_pool());
  CHECK(c.terminal.m() == 3);
  CHECK(c.result.answer == Answer{"42"});

  const auto strict = with(ControllerKind::kAsc, {{"threshold", 1.0}, {"k_min", 2}});
  const auto split = finals_pool("s", "1", {"1", "2", "1", "1", "1"});
  CHECK(run(strict, split).terminal.m() == 5);
}

TEST_CASE("ESC chunk scan") {
  const auto esc = with(ControllerKind::kEsc, {{"chunk", 2}, {"max_chunks", 8}});
  const auto first = finals_pool("a", "42", {"42", "42", "41", "40"});
  CHECK(run(esc, first).terminal.m() == 2);

  const auto second = finals_pool("b", "42", {"42", "41", "42", "42", "40", "40"});
  const auto r = run(esc, second);
  CHECK(r.terminal.m() == 4);
  CHECK(r.result.answer == Answer{"42"});

  // No unanimous chunk: same branch set and answer as SC at full width.
  const auto never = finals_pool("c", "1", {"1", "2", "1", "3", "2", "1"});
  const auto e = run(esc, never);
  const auto s = run(with(ControllerKind::kSc, {{"width", 6}}), never);
  CHECK(e.terminal.m() == 6);
  CHECK(e.result.answer == s.result.answer);
}

TEST_CASE("Parallel-Probe") {
  const auto pp = with(ControllerKind::kParallelProbe,
                       {{"initial_width", 3}, {"stop_threshold", 0.9}});
  const auto unanimous = fixtures::unanimous_pool("u", "x", 3, 4);
  const auto r = run(pp, unanimous);
  CHECK(actions(r) == std::vector<std::string>{"BRANCH", "BRANCH", "BRANCH", "PROBE(1)",
                                               "PROBE(2)", "PROBE(3)", "ANSWER"});

  // Depth-1 reveals 7, 41, 42: agreement 1/3, so the episode goes on.
  const auto c = run(with(ControllerKind::kParallelProbe, {{"initial_width", 3}}), canonical_pool());
  REQUIRE(c.trace.events.size() > 7);
  CHECK(to_string(c.trace.events[6].action) != "ANSWER");
}

TEST_CASE("Parallel-Probe never prunes below two active branches") {
  SplitMix64 rng(8);
  const auto pp = with(ControllerKind::kParallelProbe, {{"initial_width", 6}, {"prune_fraction", 1.0}});
  for (int trial = 0; trial < 100; ++trial) {
    const auto pool = fixtures::random_pool(rng, 6, 5);
    const auto r = run_episode(pp, 1.0, pool, fixtures::random_permutation(rng, pool.size()), {});
    const int opened = r.terminal.m();
    for (const auto& e : r.trace.events) {
      if (e.action.kind == ActionKind::kPrune) CHECK(e.active_count >= std::min(2, opened));
    }
  }
}

TEST_CASE("round policy stops in round 1 on a unanimous pool") {
  const auto spec = with(ControllerKind::kRoundPolicy, {{"initial_width", 3},
                                                        {"stop_conf_threshold", 0.8},
                                                        {"burst_aligned", 0},
                                                        {"ema_alpha", 1.0},
                                                        {"stop_trend_min", 0.0}});
  const auto r = run(spec, fixtures::unanimous_pool("u", "42", 3, 4));
  CHECK(actions(r) == std::vector<std::string>{"BRANCH", "BRANCH", "BRANCH", "PROBE(1)",
                                               "PROBE(2)", "PROBE(3)", "ANSWER"});
  CHECK(r.result.correct);
}

TEST_CASE("round policy abandons a persistent dissenter in round 2") {
  const auto spec = with(ControllerKind::kRoundPolicy, {{"initial_width", 3},
                                                        {"max_width", 3},
                                                        {"abandon_patience", 2},
                                                        {"burst_aligned", 0},
                                                        {"stop_conf_threshold", 1.0},
                                                        {"widen_delta_threshold", -1.0}});
  const auto pool = finals_pool("p", "a", {"a", "a", "b"}, 4);
  const auto r = run(spec, pool);
  // Round 1: three branches and three probes. Round 2: three continue+probe
  // pairs, then the dissenter's counter reaches 2.
  REQUIRE(r.trace.events.size() > 12);
  CHECK(r.trace.events[12].action == Action::prune(3));
  CHECK(count_kind(r, ActionKind::kPrune) == 1);
  CHECK(r.result.answer == Answer{"a"});
}

TEST_CASE("round policy never prunes with exactly two active branches") {
  const auto spec = with(ControllerKind::kRoundPolicy, {{"initial_width", 2},
                                                        {"max_width", 2},
                                                        {"abandon_patience", 1}});
  const auto r = run(spec, finals_pool("p", "a", {"a", "b"}, 6));
  CHECK(count_kind(r, ActionKind::kPrune) == 0);
  CHECK_FALSE(r.result.forced_answer);
}

TEST_CASE("round policy respects the hard interval cap") {
  const auto spec = with(ControllerKind::kRoundPolicy, {{"hard_interval_cap", 5},
                                                        {"stop_conf_threshold", 1.0}});
  const auto pool = finals_pool("p", "a", {"a", "b", "c", "d"}, 8);
  const auto r = run(spec, pool);
  CHECK(r.result.interval_cost <= 5);
  CHECK_FALSE(r.result.forced_answer);
}

// Answers the controller may see are exactly the revealed ones; changing an
// unrevealed interval leaves the observation untouched.
TEST_CASE("property: observations hide unrevealed probe answers") {
  SplitMix64 rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    auto pool = fixtures::random_pool(rng, 4, 5);
    const auto order = fixtures::random_permutation(rng, pool.size());
    auto s = initial_state(pool, order);
    for (int step = 0; step < 15; ++step) {
      auto listed = admissible_actions(s, pool);
      std::erase_if(listed, [](const Action& a) { return a.kind == ActionKind::kAnswer; });
      if (listed.empty()) break;
      s = apply_action(s, listed[rng.below(listed.size())], pool);
    }
    const auto obs = observe(s, pool, {});
    int shown = 0;
    for (const auto& b : obs.branches) {
      for (const auto& p : b.probes) {
        ++shown;
        CHECK(std::find(s.revealed.begin(), s.revealed.end(), p) != s.revealed.end());
      }
    }
    CHECK(shown == static_cast<int>(s.revealed.size()));

    for (const auto& b : s.branches) {
      for (int k = 1; k <= b.depth; ++k) {
        if (s.probed_at(b.branch_id, k)) continue;
        pool.trajectories[b.pool_ref].intervals[k - 1].answer = "zz-unseen";
      }
    }
    const auto again = observe(s, pool, {});
    REQUIRE(again.branches.size() == obs.branches.size());
    for (std::size_t i = 0; i < obs.branches.size(); ++i) {
      CHECK(again.branches[i].probes == obs.branches[i].probes);
    }
  }
}

TEST_CASE("instantiate gives independent controllers") {
  const auto spec = default_cmc_spec();
  const auto pool = fixtures::finals_pool("p", "a", {"a", "b", "a", "c"}, 5);
  const auto first = run(spec, pool, 0.5);
  const auto second = run(spec, pool, 0.5);
  CHECK(first.trace == second.trace);
  CHECK(instantiate(spec, 0.5)->hyperparameters().at("max_width") == 8);
}
