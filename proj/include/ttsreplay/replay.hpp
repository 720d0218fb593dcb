#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttsreplay/pool.hpp"

namespace ttsreplay {

enum class ActionKind { kBranch, kContinue, kProbe, kPrune, kAnswer };

/// One of the five atomic width/depth actions. `branch_id` is 1-based and is
/// only meaningful for Continue, Probe and Prune.
struct Action {
  ActionKind kind = ActionKind::kAnswer;
  int branch_id = 0;

  static Action branch() { return {ActionKind::kBranch, 0}; }
  static Action continue_(int id) { return {ActionKind::kContinue, id}; }
  static Action probe(int id) { return {ActionKind::kProbe, id}; }
  static Action prune(int id) { return {ActionKind::kPrune, id}; }
  static Action answer() { return {ActionKind::kAnswer, 0}; }

  bool operator==(const Action&) const = default;
};

/// "BRANCH", "CONTINUE(3)", ... Parsed back by parse_action.
std::string to_string(const Action& action);
Action parse_action(std::string_view text);

struct BranchRecord {
  int branch_id = 0;
  int depth = 0;
  bool active = true;
  bool exhausted = false;
  /// 0-based index of the backing trajectory in the pool.
  int pool_ref = 0;
  /// Exact tokens generated so far on this branch.
  std::int64_t tokens = 0;

  bool operator==(const BranchRecord&) const = default;
};

struct RevealedProbe {
  int branch_id = 0;
  int depth = 0;
  Answer answer;

  bool operator==(const RevealedProbe&) const = default;
};

/// Replay state. `branch_order` is the episode's branch-order permutation:
/// the k-th Branch action is backed by trajectory branch_order[k].
struct ReplayState {
  std::string question_id;
  std::vector<int> branch_order;
  std::vector<BranchRecord> branches;
  /// Revelations in the order they happened.
  std::vector<RevealedProbe> revealed;
  int probes_taken = 0;
  bool terminated = false;

  int m() const { return static_cast<int>(branches.size()); }
  int pool_size() const { return static_cast<int>(branch_order.size()); }
  int active_count() const;
  std::vector<int> active_ids() const;
  const BranchRecord& branch(int branch_id) const { return branches.at(branch_id - 1); }
  bool probed_at(int branch_id, int depth) const;

  bool operator==(const ReplayState&) const = default;
};

enum class TokenAccounting { kIntervalUnits, kExactTokens };

struct CostModel {
  double kappa_probe = 0.0;
  TokenAccounting token_accounting = TokenAccounting::kIntervalUnits;
};

/// s0 for `pool` under the given branch order (defaults to identity).
ReplayState initial_state(const TrajectoryPool& pool);
ReplayState initial_state(const TrajectoryPool& pool, std::vector<int> branch_order);

/// Admissible actions in canonical order: Branch, Continue(i)..., Probe(i)...,
/// Prune(i)..., Answer. Throws Error(kEpisodeFinished) on a terminated state.
///
/// Continue is withheld on exhausted branches and Branch once every pool
/// trajectory backs a branch: replay cannot fabricate tokens.
std::vector<Action> admissible_actions(const ReplayState& state, const TrajectoryPool& pool);

/// Empty string when admissible, otherwise the reason it is not.
std::string inadmissibility_reason(const ReplayState& state, const Action& action,
                                   const TrajectoryPool& pool);

/// Pure transition. Throws Error(kInadmissibleAction) naming the action and
/// reason, or Error(kEpisodeFinished) if the state is terminal.
ReplayState apply_action(const ReplayState& state, const Action& action,
                         const TrajectoryPool& pool);

/// Sum of depths over instantiated branches plus kappa per revealed probe.
/// Under exact-token accounting each interval contributes its token count.
double cost_of(const ReplayState& state, const CostModel& model);

/// Total interval count (the objective's cost unit, probes excluded).
int interval_cost(const ReplayState& state);

std::int64_t token_cost(const ReplayState& state);

/// Answer a branch currently shows at its depth, read from the pool.
const Answer& current_answer(const ReplayState& state, const TrajectoryPool& pool,
                             int branch_id);

/// Modal non-sentinel answer; ties go to the answer whose first occurrence
/// has the lowest index. Returns nullopt when no vote is present.
Answer majority_vote(const std::vector<Answer>& answers);

/// Default aggregation: majority over every instantiated branch's answer at
/// its current (or frozen) depth. Throws Error(kNoAggregableAnswer).
std::string aggregate_majority(const ReplayState& state, const TrajectoryPool& pool);

}  // namespace ttsreplay
