#include <filesystem>
#include <sstream>

#include <doctest.h>

#include "support/fixtures.hpp"
#include "ttsreplay/error.hpp"
#include "ttsreplay/evaluation.hpp"
#include "ttsreplay/tracing.hpp"

using namespace ttsreplay;

namespace {

ControllerSpec sc3() {
  ControllerSpec spec = default_spec(ControllerKind::kSc);
  spec.beta_map.clear();
  spec.parameters["width"] = 3;
  return spec;
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

TEST_CASE("a recorded trace replays to the terminal state") {
  const auto pool = fixtures::canonical_pool();
  const auto r = run_episode(default_cmc_spec(), 1.0, pool, {2, 0, 1}, {0.2});
  const auto s = replay_trace(r.trace, pool, r.trace.header.permutation);
  CHECK(s == r.terminal);
  CHECK(r.trace.events.back().cumulative_cost == doctest::Approx(r.result.cost));
}

TEST_CASE("edited traces are rejected") {
  const auto pool = fixtures::canonical_pool();
  const auto r = run_episode(sc3(), 1.0, pool, {0, 1, 2}, {});
  REQUIRE(r.trace.events.size() > 3);

  auto dropped = r.trace;
  dropped.events.erase(dropped.events.begin() + 1);
  CHECK(code_of([&] { replay_trace(dropped, pool, {0, 1, 2}); }) == ErrorCode::kTraceCorrupt);

  auto renumbered = dropped;
  for (std::size_t i = 0; i < renumbered.events.size(); ++i) renumbered.events[i].step = static_cast<int>(i);
  CHECK(code_of([&] { replay_trace(renumbered, pool, {0, 1, 2}); }) == ErrorCode::kTraceCorrupt);

  auto costed = r.trace;
  costed.events[2].cumulative_cost += 1;
  CHECK(code_of([&] { replay_trace(costed, pool, {0, 1, 2}); }) == ErrorCode::kTraceCorrupt);

  // Same actions against a different branch order show different depths.
  CHECK(code_of([&] { replay_trace(r.trace, pool, {2, 1, 0}); }) == ErrorCode::kTraceCorrupt);
}

TEST_CASE("empty trace replays to s0") {
  const auto pool = fixtures::canonical_pool();
  EpisodeTrace empty;
  CHECK(replay_trace(empty, pool, {0, 1, 2}) == initial_state(pool));
  const auto d = digest_trace(empty);
  CHECK(d.stop_step == -1);
  CHECK(d.branches_opened == 0);
}

TEST_CASE("SC@3 digest") {
  const auto r = run_episode(sc3(), 1.0, fixtures::canonical_pool(), {0, 1, 2}, {});
  const auto d = digest_trace(r.trace);
  CHECK(d.branches_opened == 3);
  CHECK(d.prunes == 0);
  CHECK(d.probes == 0);
  CHECK(d.continues == 3);
  CHECK(d.max_depth == 3);
  CHECK(d.stop_step == static_cast<int>(r.trace.events.size()) - 1);
  CHECK(d.final_cost == 6.0);
  CHECK_FALSE(d.forced_answer);
  // Terminal answers 42, 41, 42 against the final 42.
  CHECK(d.final_agreement == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("forced flag and per-question means") {
  auto r = run_episode(sc3(), 1.0, fixtures::canonical_pool(), {0, 1, 2}, {});
  auto forced = r.trace;
  forced.header.forced_answer = true;
  forced.header.repeat = 1;
  const auto report = digest({r.trace, forced});
  REQUIRE(report.episodes.size() == 2);
  CHECK(report.episodes[1].forced_answer);
  REQUIRE(report.questions.size() == 1);
  CHECK(report.questions[0].episodes == 2);
  CHECK(report.questions[0].forced_rate == 0.5);
  CHECK(report.questions[0].branches_opened == 3.0);
  CHECK(digest_table(report).find("q1,1,3,0,0,3,3,") != std::string::npos);
}

TEST_CASE("trace files round-trip") {
  const auto pool = fixtures::finals_pool("p", "a", {"a", "b", "a", "c"}, 4);
  std::ostringstream out;
  std::vector<EpisodeTrace> traces;
  for (int r = 0; r < 3; ++r) {
    auto run = run_episode(default_cmc_spec(), 0.5, pool, subsample_permutation(pool, r, 1), {0.1}, r);
    write_trace(out, run.trace);
    traces.push_back(run.trace);
  }
  std::istringstream in(out.str());
  const auto back = read_traces(in, "t.jsonl");
  CHECK(back == traces);
  for (const auto& t : back) CHECK_NOTHROW(replay_trace(t, pool, t.header.permutation));

  std::istringstream orphan(R"({"type":"event","step":0,"action":"BRANCH"})");
  CHECK(code_of([&] { read_traces(orphan, "o.jsonl"); }) == ErrorCode::kFormat);
}

// Trace costs reconcile with the episode results for every controller kind.
TEST_CASE("property: trace cost equals the reported cost") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto pool = fixtures::random_pool(rng, 6, 5);
    const auto perm = fixtures::random_permutation(rng, pool.size());
    const auto kind = static_cast<ControllerKind>(rng.below(5));
    const double kappa = rng.uniform01();
    const auto r = run_episode(default_spec(kind), rng.uniform01() * 2, pool, perm, {kappa});
    REQUIRE_FALSE(r.trace.events.empty());
    CHECK(r.trace.events.back().cumulative_cost == doctest::Approx(r.result.cost));
    CHECK(replay_trace(r.trace, pool, perm) == r.terminal);
    const auto d = digest_trace(r.trace);
    CHECK(d.branches_opened + d.continues == r.result.interval_cost);
    CHECK(d.probes == r.result.probes);
  }
}
