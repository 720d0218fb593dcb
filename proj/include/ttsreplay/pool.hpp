#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ttsreplay {

/// Probe answer at one interval. `std::nullopt` is the "no-answer" sentinel:
/// the prefix did not yield a parseable answer and never counts as a vote.
using Answer = std::optional<std::string>;

/// Human-readable form of an answer; the sentinel prints as "no-answer".
std::string answer_label(const Answer& answer);

/// Trims surrounding whitespace. Answers are compared as exact strings after
/// this canonicalization.
std::string canonical_answer(std::string_view raw);

struct Interval {
  int tokens = 0;
  Answer answer;

  bool operator==(const Interval&) const = default;
};

/// One pre-collected reasoning trajectory split into probe intervals. The
/// last interval's answer is the trajectory's final answer.
struct Trajectory {
  std::vector<Interval> intervals;

  int length() const { return static_cast<int>(intervals.size()); }
  const Answer& final_answer() const { return intervals.back().answer; }

  bool operator==(const Trajectory&) const = default;
};

/// All trajectories collected for one question. Immutable once validated and
/// safe to share across threads.
struct TrajectoryPool {
  std::string question_id;
  std::string ground_truth;
  int delta_tokens = 500;
  std::vector<Trajectory> trajectories;

  int size() const { return static_cast<int>(trajectories.size()); }
  int max_depth() const;

  bool operator==(const TrajectoryPool&) const = default;
};

/// Throws Error(kInvalidPool) naming the question and the violated rule.
void validate_pool(const TrajectoryPool& pool);

// Dataset format: one JSON record per line,
//   {"question_id":..., "ground_truth":..., "delta_tokens":...,
//    "trajectories":[[{"tokens":500,"answer":"42"}, ...], ...]}
// with a null answer encoding "no-answer".

std::vector<TrajectoryPool> read_pools(std::istream& in, std::string_view source = "<stream>");
void write_pools(std::ostream& out, const std::vector<TrajectoryPool>& pools);

std::vector<TrajectoryPool> load_pools(const std::filesystem::path& path);
void save_pools(const std::filesystem::path& path, const std::vector<TrajectoryPool>& pools);

/// Parses a single dataset record. Throws Error(kFormat) or Error(kInvalidPool).
TrajectoryPool parse_pool_record(std::string_view line, std::string_view locus);
std::string pool_record(const TrajectoryPool& pool);

struct SyntheticGenConfig {
  int question_count = 50;
  int pool_size = 16;
  int max_depth = 10;
  /// Trajectory lengths are uniform in [min_depth, max_depth]; 0 means
  /// every trajectory runs to max_depth.
  int min_depth = 0;
  double correct_rate = 0.7;
  /// Unnormalized weights over stabilization depth 1..size(); empty means
  /// uniform over 1..max_depth.
  std::vector<double> stabilize_weights;
  /// Number of distinct wrong answers per question.
  int wrong_answer_count = 4;
  /// Probability that a pre-stabilization interval yields no answer.
  double no_answer_rate = 0.0;
  int delta_tokens = 500;
  std::uint64_t seed = 0;
  std::string id_prefix = "q";
  /// Offset added to the question index when naming questions, so that
  /// disjoint benches can be generated from the same config.
  int id_offset = 0;
};

/// Throws Error(kInvalidSpec) on out-of-range fields.
void validate_synthetic_config(const SyntheticGenConfig& config);

/// Deterministic in `config` (including the seed).
std::vector<TrajectoryPool> generate_synthetic(const SyntheticGenConfig& config);

/// Branch-order permutation of [0, N) keyed by (question_id, repeat, seed).
/// The k-th Branch action of an episode consumes entry k, so a controller
/// that opens k branches sees a uniform k-subset of the pool.
std::vector<int> subsample_permutation(const TrajectoryPool& pool, int repeat_index,
                                       std::uint64_t seed);

std::vector<int> identity_permutation(int n);

}  // namespace ttsreplay
