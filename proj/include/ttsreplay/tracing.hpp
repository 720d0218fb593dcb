#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ttsreplay/pool.hpp"
#include "ttsreplay/replay.hpp"

namespace ttsreplay {

/// State summary after one decision step.
struct TraceEvent {
  int step = 0;
  Action action;
  int active_count = 0;
  std::vector<int> depths;
  int revealed_count = 0;
  double cumulative_cost = 0.0;

  bool operator==(const TraceEvent&) const = default;
};

/// Episode identification plus the terminal outcome, so that a digest can be
/// computed from the trace alone.
struct TraceHeader {
  std::string question_id;
  int repeat = 0;
  std::string spec_digest;
  double beta = 0.0;
  std::vector<int> permutation;
  double kappa_probe = 0.0;
  bool forced_answer = false;
  Answer final_answer;
  /// Fraction of instantiated branches whose terminal answer equals the
  /// final answer.
  double final_agreement = 0.0;

  bool operator==(const TraceHeader&) const = default;
};

struct EpisodeTrace {
  TraceHeader header;
  std::vector<TraceEvent> events;

  bool operator==(const EpisodeTrace&) const = default;
};

/// Event describing `state` right after `action` was applied at `step`.
TraceEvent make_event(int step, const Action& action, const ReplayState& state,
                      const CostModel& model);

/// Re-applies the logged actions from s0 and checks every logged summary.
/// Throws Error(kTraceCorrupt) naming the first divergent step.
ReplayState replay_trace(const EpisodeTrace& trace, const TrajectoryPool& pool,
                         const std::vector<int>& permutation);

struct TraceDigest {
  std::string question_id;
  int repeat = 0;
  int branches_opened = 0;
  int prunes = 0;
  int probes = 0;
  int continues = 0;
  int max_depth = 0;
  /// Step index of the terminating Answer (-1 if the trace has none).
  int stop_step = -1;
  bool forced_answer = false;
  double final_agreement = 0.0;
  double final_cost = 0.0;
};

struct QuestionDigest {
  std::string question_id;
  int episodes = 0;
  double branches_opened = 0.0;
  double prunes = 0.0;
  double probes = 0.0;
  double max_depth = 0.0;
  double stop_step = 0.0;
  double forced_rate = 0.0;
  double final_agreement = 0.0;
};

struct DigestReport {
  std::vector<TraceDigest> episodes;
  /// Per-question means, in order of first appearance.
  std::vector<QuestionDigest> questions;
};

TraceDigest digest_trace(const EpisodeTrace& trace);
DigestReport summarize_digests(std::vector<TraceDigest> episodes);
DigestReport digest(const std::vector<EpisodeTrace>& traces);

// Trace file: one header record per episode followed by one record per
// event, all JSON lines.
void write_trace(std::ostream& out, const EpisodeTrace& trace);
std::vector<EpisodeTrace> read_traces(std::istream& in, std::string_view source = "<stream>");

/// CSV with one row per episode digest.
std::string digest_table(const DigestReport& report);

}  // namespace ttsreplay
