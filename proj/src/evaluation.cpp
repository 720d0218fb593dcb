#include "ttsreplay/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "ttsreplay/error.hpp"
#include "ttsreplay/spec_json.hpp"

namespace ttsreplay {

EpisodeRun run_episode(const ControllerSpec& spec, double beta, const TrajectoryPool& pool,
                       std::vector<int> permutation, const CostModel& cost_model,
                       int repeat_index) {
  auto controller = instantiate(spec, beta);
  EpisodeRun run;
  run.trace.header.question_id = pool.question_id;
  run.trace.header.repeat = repeat_index;
  run.trace.header.spec_digest = spec_digest(spec);
  run.trace.header.beta = beta;
  run.trace.header.permutation = permutation;
  run.trace.header.kappa_probe = cost_model.kappa_probe;

  ReplayState state = initial_state(pool, std::move(permutation));
  bool forced = false;
  // Every non-Answer action consumes a finite resource of the pool, so the
  // loop is bounded even for an adversarial controller.
  for (int step = 0; !state.terminated; ++step) {
    Action action = controller->decide(observe(state, pool, controller->hyperparameters()));
    if (!inadmissibility_reason(state, action, pool).empty()) {
      action = Action::answer();
      forced = true;
    }
    state = apply_action(state, action, pool);
    run.trace.events.push_back(make_event(step, action, state, cost_model));
  }

  EpisodeResult& r = run.result;
  r.question_id = pool.question_id;
  r.repeat_index = repeat_index;
  try {
    r.answer = controller->aggregate(state, pool);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoAggregableAnswer) throw;
  }
  r.correct = r.answer && *r.answer == pool.ground_truth;
  r.interval_cost = interval_cost(state);
  r.token_cost = token_cost(state);
  r.cost = cost_of(state, {cost_model.kappa_probe, TokenAccounting::kIntervalUnits});
  r.probes = state.probes_taken;
  r.forced_answer = forced;

  run.trace.header.forced_answer = forced;
  run.trace.header.final_answer = r.answer;
  if (r.answer && state.m() > 0) {
    int agree = 0;
    for (const auto& b : state.branches) {
      agree += current_answer(state, pool, b.branch_id) == r.answer ? 1 : 0;
    }
    run.trace.header.final_agreement = static_cast<double>(agree) / state.m();
  }
  run.terminal = std::move(state);
  return run;
}

void validate_eval_config(const EvalConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kUsage, what); };
  if (c.repeats < 1) fail("repeats must be >= 1");
  if (c.workers < 1) fail("workers must be >= 1");
  if (!(c.gamma >= 0.0)) fail("gamma must be >= 0");
  if (!(c.cost_model.kappa_probe >= 0.0)) fail("kappa_probe must be >= 0");
  if (c.beta_grid.empty()) fail("beta grid must be nonempty");
  for (std::size_t i = 0; i < c.beta_grid.size(); ++i) {
    if (!std::isfinite(c.beta_grid[i]) || c.beta_grid[i] < 0) fail("beta values must be >= 0");
    if (i > 0 && !(c.beta_grid[i] > c.beta_grid[i - 1])) fail("beta grid must be strictly increasing");
  }
}

namespace {

/// Runs `task(i)` for i in [0, count) on `workers` threads. The first
/// exception is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& task) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> threads;
    const auto n = std::min<std::size_t>(workers, count);
    for (std::size_t w = 0; w < n; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            task(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

EvalReport evaluate(const ControllerSpec& spec, double beta,
                    const std::vector<TrajectoryPool>& pools, const EvalConfig& config) {
  validate_eval_config(config);
  if (pools.empty()) throw Error(ErrorCode::kUsage, "evaluate needs at least one pool");
  validate_spec(spec);

  const std::size_t repeats = config.repeats;
  const std::size_t count = pools.size() * repeats;
  std::vector<EpisodeResult> results(count);
  std::vector<TraceDigest> digests(count);
  std::vector<std::optional<EpisodeTrace>> kept(count);

  parallel_for(count, config.workers, [&](std::size_t i) {
    const TrajectoryPool& pool = pools[i / repeats];
    const int repeat = static_cast<int>(i % repeats);
    EpisodeRun run = run_episode(spec, beta, pool, subsample_permutation(pool, repeat, config.seed),
                                 config.cost_model, repeat);
    digests[i] = digest_trace(run.trace);
    results[i] = std::move(run.result);
    if (repeat < config.trace_repeats) kept[i] = std::move(run.trace);
  });

  EvalReport report;
  EvalMetrics& m = report.metrics;
  m.beta = beta;
  m.episodes = static_cast<int>(count);
  for (const auto& r : results) {
    m.accuracy += r.correct ? 1.0 : 0.0;
    m.mean_intervals += r.interval_cost;
    m.mean_tokens += static_cast<double>(r.token_cost);
    m.mean_cost += r.cost;
    m.mean_objective += (r.correct ? 1.0 : 0.0) - config.gamma * r.cost;
    m.mean_probes += r.probes;
    m.forced += r.forced_answer ? 1 : 0;
  }
  const double n = static_cast<double>(count);
  m.accuracy /= n;
  m.mean_intervals /= n;
  m.mean_tokens /= n;
  m.mean_cost /= n;
  m.mean_objective /= n;
  m.mean_probes /= n;

  for (auto& t : kept) {
    if (t) report.traces.push_back(std::move(*t));
  }
  report.episodes = std::move(results);
  report.digests = summarize_digests(std::move(digests));
  return report;
}

CurvePoint to_curve_point(const EvalMetrics& m) {
  return {m.beta, m.accuracy, m.mean_intervals, m.mean_tokens, m.mean_objective};
}

SweepReport sweep_detailed(const ControllerSpec& spec, const std::vector<TrajectoryPool>& pools,
                           const EvalConfig& config) {
  validate_eval_config(config);
  SweepReport report;
  for (double beta : config.beta_grid) {
    report.per_beta.push_back(evaluate(spec, beta, pools, config));
    report.curve.points.push_back(to_curve_point(report.per_beta.back().metrics));
  }
  return report;
}

ScalingCurve sweep(const ControllerSpec& spec, const std::vector<TrajectoryPool>& pools,
                   const EvalConfig& config) {
  return sweep_detailed(spec, pools, config).curve;
}

std::string curve_table(const ScalingCurve& curve) {
  std::string out = "beta,accuracy,mean_intervals,mean_tokens,objective\n";
  char buf[160];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.6f,%.3f,%.6f\n", p.beta, p.accuracy,
                  p.mean_intervals, p.mean_tokens, p.objective);
    out += buf;
  }
  return out;
}

}  // namespace ttsreplay
