#include <algorithm>
#include <map>

#include <doctest.h>

#include "support/fixtures.hpp"
#include "ttsreplay/error.hpp"
#include "ttsreplay/evaluation.hpp"

using namespace ttsreplay;

namespace {

ControllerSpec sc(int width) {
  ControllerSpec spec = default_spec(ControllerKind::kSc);
  spec.beta_map.clear();
  spec.parameters["width"] = width;
  return spec;
}

std::vector<TrajectoryPool> small_bench(std::uint64_t seed, int questions = 6) {
  SyntheticGenConfig c;
  c.question_count = questions;
  c.pool_size = 8;
  c.max_depth = 5;
  c.correct_rate = 0.6;
  c.seed = seed;
  return generate_synthetic(c);
}

}  // namespace

TEST_CASE("run_episode is deterministic") {
  const auto pool = fixtures::finals_pool("p", "a", {"a", "b", "a", "c", "b"}, 3);
  const auto spec = default_cmc_spec();
  const auto a = run_episode(spec, 0.5, pool, {4, 2, 0, 1, 3}, {0.1});
  const auto b = run_episode(spec, 0.5, pool, {4, 2, 0, 1, 3}, {0.1});
  CHECK(a.trace == b.trace);
  CHECK(a.terminal == b.terminal);
  CHECK(a.result.cost == b.result.cost);
  CHECK(a.trace.header.permutation == std::vector<int>{4, 2, 0, 1, 3});
  CHECK(a.trace.events.back().action == Action::answer());
}

TEST_CASE("SC@3 on the canonical pool") {
  EvalConfig c;
  c.repeats = 2;
  c.gamma = 0.01;
  const auto report = evaluate(sc(3), 1.0, {fixtures::canonical_pool()}, c);
  CHECK(report.metrics.accuracy == 1.0);
  CHECK(report.metrics.mean_intervals == 6.0);
  CHECK(report.metrics.mean_objective == doctest::Approx(0.94));
  CHECK(report.metrics.episodes == 2);
  CHECK(report.episodes.size() == 2);

  c.gamma = 0.0;
  const auto plain = evaluate(sc(3), 1.0, {fixtures::canonical_pool()}, c);
  CHECK(plain.metrics.mean_objective == plain.metrics.accuracy);
}

TEST_CASE("sweep yields one point per grid beta") {
  EvalConfig c;
  c.repeats = 4;
  c.beta_grid = {0.5, 1.0};
  const auto pools = small_bench(1);
  const auto curve = sweep(sc(4), pools, c);
  REQUIRE(curve.points.size() == 2);
  CHECK(curve.points[0].beta == 0.5);
  CHECK(curve.points[1].beta == 1.0);
  // SC ignores beta once its map is empty.
  CHECK(curve.points[0].accuracy == curve.points[1].accuracy);
  CHECK(curve.points[0].mean_intervals == curve.points[1].mean_intervals);
  CHECK(curve_table(curve).rfind("beta,accuracy,mean_intervals,mean_tokens,objective\n", 0) == 0);
}

TEST_CASE("bad eval configs are rejected") {
  EvalConfig c;
  c.repeats = 0;
  CHECK_THROWS_AS(validate_eval_config(c), Error);
  c = {};
  c.workers = 0;
  CHECK_THROWS_AS(validate_eval_config(c), Error);
  c = {};
  c.beta_grid = {-0.5};
  CHECK_THROWS_AS(evaluate(sc(1), -0.5, small_bench(2), c), Error);
}

// Metrics recomputed independently from the per-episode results.
TEST_CASE("property: metrics agree with the episode list") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    EvalConfig c;
    c.repeats = 1 + static_cast<int>(rng.below(6));
    c.gamma = rng.uniform01() * 0.05;
    c.cost_model.kappa_probe = rng.uniform01();
    c.seed = rng.next();
    const double beta = rng.uniform01();
    const auto pools = small_bench(rng.next(), 4);
    const auto spec = trial % 2 ? default_cmc_spec() : default_spec(ControllerKind::kParallelProbe);
    const auto report = evaluate(spec, beta, pools, c);
    const auto& eps = report.episodes;
    REQUIRE(eps.size() == pools.size() * c.repeats);
    double acc = 0, iv = 0, tok = 0, obj = 0, cost = 0, probes = 0;
    for (const auto& e : eps) {
      acc += e.correct;
      iv += e.interval_cost;
      tok += static_cast<double>(e.token_cost);
      cost += e.cost;
      obj += (e.correct ? 1.0 : 0.0) - c.gamma * e.cost;
      probes += e.probes;
      CHECK(e.cost == doctest::Approx(e.interval_cost + c.cost_model.kappa_probe * e.probes));
    }
    const double n = static_cast<double>(eps.size());
    CHECK(std::abs(report.metrics.accuracy - acc / n) <= 1e-9);
    CHECK(std::abs(report.metrics.mean_intervals - iv / n) <= 1e-9);
    CHECK(std::abs(report.metrics.mean_tokens - tok / n) <= 1e-9);
    CHECK(std::abs(report.metrics.mean_objective - obj / n) <= 1e-9);
    CHECK(std::abs(report.metrics.mean_cost - cost / n) <= 1e-9);
    CHECK(std::abs(report.metrics.mean_probes - probes / n) <= 1e-9);
  }
}

TEST_CASE("property: worker count does not change results") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    EvalConfig c;
    c.repeats = 8;
    c.seed = rng.next();
    c.trace_repeats = 2;
    const auto pools = small_bench(rng.next(), 5);
    const auto one = evaluate(default_cmc_spec(), 0.75, pools, c);
    c.workers = 1 + static_cast<int>(rng.below(7));
    const auto many = evaluate(default_cmc_spec(), 0.75, pools, c);
    CHECK(one.metrics == many.metrics);
    CHECK(one.traces == many.traces);
    REQUIRE(one.episodes.size() == many.episodes.size());
    for (std::size_t i = 0; i < one.episodes.size(); ++i) {
      CHECK(one.episodes[i].answer == many.episodes[i].answer);
      CHECK(one.episodes[i].cost == many.episodes[i].cost);
    }
  }
}

// Every controller replays the same branch orders for a given (question,
// repeat, seed).
TEST_CASE("property: controllers see the same permutations") {
  EvalConfig c;
  c.repeats = 5;
  c.seed = 42;
  c.trace_repeats = 5;
  const auto pools = small_bench(9, 4);
  std::map<std::pair<std::string, int>, std::vector<int>> seen;
  for (auto kind : {ControllerKind::kSc, ControllerKind::kAsc, ControllerKind::kEsc,
                    ControllerKind::kParallelProbe, ControllerKind::kRoundPolicy}) {
    for (double beta : {0.0, 1.0}) {
      const auto report = evaluate(default_spec(kind), beta, pools, c);
      REQUIRE(report.traces.size() == pools.size() * 5);
      for (const auto& t : report.traces) {
        const auto key = std::make_pair(t.header.question_id, t.header.repeat);
        const auto expected = subsample_permutation(
            *std::find_if(pools.begin(), pools.end(),
                          [&](const TrajectoryPool& p) { return p.question_id == key.first; }),
            key.second, c.seed);
        CHECK(t.header.permutation == expected);
        auto [it, fresh] = seen.emplace(key, t.header.permutation);
        if (!fresh) CHECK(it->second == t.header.permutation);
      }
    }
  }
}
