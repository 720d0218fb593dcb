#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttsreplay/controllers.hpp"
#include "ttsreplay/pool.hpp"
#include "ttsreplay/replay.hpp"
#include "ttsreplay/tracing.hpp"

namespace ttsreplay {

struct EpisodeResult {
  std::string question_id;
  int repeat_index = 0;
  /// nullopt when the terminal state had nothing to aggregate.
  Answer answer;
  bool correct = false;
  int interval_cost = 0;
  std::int64_t token_cost = 0;
  /// Cost(s_T) in interval units, probes charged at kappa.
  double cost = 0.0;
  int probes = 0;
  bool forced_answer = false;
};

struct EpisodeRun {
  EpisodeResult result;
  EpisodeTrace trace;
  ReplayState terminal;
};

/// Runs decide -> apply until Answer. An inadmissible request from the
/// controller is replaced by a forced Answer and flagged; the run never
/// aborts. Deterministic in (spec, beta, pool, permutation).
EpisodeRun run_episode(const ControllerSpec& spec, double beta, const TrajectoryPool& pool,
                       std::vector<int> permutation, const CostModel& cost_model,
                       int repeat_index = 0);

struct EvalConfig {
  int repeats = 64;
  std::uint64_t seed = 0;
  /// Objective trade-off per interval.
  double gamma = 0.0;
  std::vector<double> beta_grid = {0.25, 0.5, 0.75, 1.0};
  CostModel cost_model;
  int workers = 1;
  /// Full traces are kept for repeats [0, trace_repeats) of every question.
  int trace_repeats = 1;
};

/// Throws Error(kUsage) on a bad config.
void validate_eval_config(const EvalConfig& config);

struct EvalMetrics {
  double beta = 0.0;
  double accuracy = 0.0;
  double mean_intervals = 0.0;
  double mean_tokens = 0.0;
  /// Mean of correct - gamma * Cost(s_T).
  double mean_objective = 0.0;
  double mean_cost = 0.0;
  double mean_probes = 0.0;
  int episodes = 0;
  int forced = 0;

  bool operator==(const EvalMetrics&) const = default;
};

struct EvalReport {
  EvalMetrics metrics;
  std::vector<EpisodeResult> episodes;
  std::vector<EpisodeTrace> traces;
  DigestReport digests;
};

/// repeats x |pools| episodes; repeat r of question q replays the branch
/// order subsample_permutation(q, r, seed), so every controller sees the
/// same subsets. Reduction order is fixed, so any worker count gives
/// identical results.
EvalReport evaluate(const ControllerSpec& spec, double beta,
                    const std::vector<TrajectoryPool>& pools, const EvalConfig& config);

struct CurvePoint {
  double beta = 0.0;
  double accuracy = 0.0;
  double mean_intervals = 0.0;
  double mean_tokens = 0.0;
  double objective = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct ScalingCurve {
  std::vector<CurvePoint> points;

  bool operator==(const ScalingCurve&) const = default;
};

struct SweepReport {
  ScalingCurve curve;
  std::vector<EvalReport> per_beta;
};

SweepReport sweep_detailed(const ControllerSpec& spec, const std::vector<TrajectoryPool>& pools,
                           const EvalConfig& config);
ScalingCurve sweep(const ControllerSpec& spec, const std::vector<TrajectoryPool>& pools,
                   const EvalConfig& config);

CurvePoint to_curve_point(const EvalMetrics& m);

/// "beta,accuracy,mean_intervals,mean_tokens,objective" plus one row per point.
std::string curve_table(const ScalingCurve& curve);

}  // namespace ttsreplay
