#include "ttsreplay/replay.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>

#include "ttsreplay/error.hpp"

namespace ttsreplay {

std::string to_string(const Action& action) {
  const std::string id = "(" + std::to_string(action.branch_id) + ")";
  switch (action.kind) {
    case ActionKind::kBranch: return "BRANCH";
    case ActionKind::kContinue: return "CONTINUE" + id;
    case ActionKind::kProbe: return "PROBE" + id;
    case ActionKind::kPrune: return "PRUNE" + id;
    case ActionKind::kAnswer: return "ANSWER";
  }
  return "?";
}

Action parse_action(std::string_view text) {
  if (text == "BRANCH") return Action::branch();
  if (text == "ANSWER") return Action::answer();
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw Error(ErrorCode::kFormat, "unrecognized action '" + std::string(text) + "'");
  }
  const auto name = text.substr(0, open);
  const auto digits = text.substr(open + 1, text.size() - open - 2);
  int id = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || id < 1) {
    throw Error(ErrorCode::kFormat, "bad branch id in action '" + std::string(text) + "'");
  }
  if (name == "CONTINUE") return Action::continue_(id);
  if (name == "PROBE") return Action::probe(id);
  if (name == "PRUNE") return Action::prune(id);
  throw Error(ErrorCode::kFormat, "unrecognized action '" + std::string(text) + "'");
}

int ReplayState::active_count() const {
  return static_cast<int>(
      std::count_if(branches.begin(), branches.end(), [](const auto& b) { return b.active; }));
}

std::vector<int> ReplayState::active_ids() const {
  std::vector<int> ids;
  for (const auto& b : branches) {
    if (b.active) ids.push_back(b.branch_id);
  }
  return ids;
}

bool ReplayState::probed_at(int branch_id, int depth) const {
  return std::any_of(revealed.begin(), revealed.end(), [&](const RevealedProbe& p) {
    return p.branch_id == branch_id && p.depth == depth;
  });
}

ReplayState initial_state(const TrajectoryPool& pool) {
  return initial_state(pool, identity_permutation(pool.size()));
}

ReplayState initial_state(const TrajectoryPool& pool, std::vector<int> branch_order) {
  std::vector<int> sorted = branch_order;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != identity_permutation(pool.size())) {
    throw Error(ErrorCode::kInvalidPool,
                "question '" + pool.question_id + "': branch order is not a permutation of [0, N)");
  }
  ReplayState s;
  s.question_id = pool.question_id;
  s.branch_order = std::move(branch_order);
  return s;
}

namespace {

void require_live(const ReplayState& state) {
  if (state.terminated) {
    throw Error(ErrorCode::kEpisodeFinished, "question '" + state.question_id + "'");
  }
}

}  // namespace

std::string inadmissibility_reason(const ReplayState& state, const Action& action,
                                   const TrajectoryPool&) {
  if (state.terminated) return "episode already answered";
  switch (action.kind) {
    case ActionKind::kBranch:
      return state.m() < state.pool_size() ? "" : "every pool trajectory is already in use";
    case ActionKind::kAnswer:
      return "";
    default:
      break;
  }
  if (action.branch_id < 1 || action.branch_id > state.m()) return "branch is not instantiated";
  const BranchRecord& b = state.branch(action.branch_id);
  if (!b.active) return "branch is not active";
  if (action.kind == ActionKind::kContinue && b.exhausted) return "branch trajectory is exhausted";
  if (action.kind == ActionKind::kProbe && state.probed_at(b.branch_id, b.depth)) {
    return "probe at the current depth is already revealed";
  }
  return "";
}

std::vector<Action> admissible_actions(const ReplayState& state, const TrajectoryPool&) {
  require_live(state);
  std::vector<Action> actions;
  if (state.m() < state.pool_size()) actions.push_back(Action::branch());
  for (const auto& b : state.branches) {
    if (b.active && !b.exhausted) actions.push_back(Action::continue_(b.branch_id));
  }
  for (const auto& b : state.branches) {
    if (b.active && !state.probed_at(b.branch_id, b.depth)) {
      actions.push_back(Action::probe(b.branch_id));
    }
  }
  for (const auto& b : state.branches) {
    if (b.active) actions.push_back(Action::prune(b.branch_id));
  }
  actions.push_back(Action::answer());
  return actions;
}

ReplayState apply_action(const ReplayState& state, const Action& action,
                         const TrajectoryPool& pool) {
  require_live(state);
  if (auto reason = inadmissibility_reason(state, action, pool); !reason.empty()) {
    throw Error(ErrorCode::kInadmissibleAction, to_string(action) + ": " + reason);
  }
  ReplayState next = state;
  switch (action.kind) {
    case ActionKind::kBranch: {
      BranchRecord b;
      b.branch_id = state.m() + 1;
      b.pool_ref = state.branch_order[state.m()];
      const Trajectory& t = pool.trajectories.at(b.pool_ref);
      b.depth = 1;
      b.tokens = t.intervals[0].tokens;
      b.exhausted = t.length() == 1;
      next.branches.push_back(b);
      break;
    }
    case ActionKind::kContinue: {
      BranchRecord& b = next.branches[action.branch_id - 1];
      const Trajectory& t = pool.trajectories.at(b.pool_ref);
      b.tokens += t.intervals[b.depth].tokens;
      ++b.depth;
      b.exhausted = b.depth == t.length();
      break;
    }
    case ActionKind::kProbe: {
      const BranchRecord& b = next.branches[action.branch_id - 1];
      const Trajectory& t = pool.trajectories.at(b.pool_ref);
      next.revealed.push_back({b.branch_id, b.depth, t.intervals[b.depth - 1].answer});
      ++next.probes_taken;
      break;
    }
    case ActionKind::kPrune:
      next.branches[action.branch_id - 1].active = false;
      break;
    case ActionKind::kAnswer:
      next.terminated = true;
      break;
  }
  return next;
}

int interval_cost(const ReplayState& state) {
  int total = 0;
  for (const auto& b : state.branches) total += b.depth;
  return total;
}

std::int64_t token_cost(const ReplayState& state) {
  std::int64_t total = 0;
  for (const auto& b : state.branches) total += b.tokens;
  return total;
}

double cost_of(const ReplayState& state, const CostModel& model) {
  const double generation = model.token_accounting == TokenAccounting::kExactTokens
                                ? static_cast<double>(token_cost(state))
                                : static_cast<double>(interval_cost(state));
  return generation + model.kappa_probe * static_cast<double>(state.revealed.size());
}

const Answer& current_answer(const ReplayState& state, const TrajectoryPool& pool,
                             int branch_id) {
  const BranchRecord& b = state.branch(branch_id);
  return pool.trajectories.at(b.pool_ref).intervals.at(b.depth - 1).answer;
}

Answer majority_vote(const std::vector<Answer>& answers) {
  std::unordered_map<std::string_view, int> counts;
  for (const auto& a : answers) {
    if (a) ++counts[*a];
  }
  Answer best;
  int best_count = 0;
  // Scanning in index order and requiring a strictly larger count keeps the
  // earliest-held answer on ties.
  for (const auto& a : answers) {
    if (!a) continue;
    const int c = counts[*a];
    if (c > best_count) {
      best = a;
      best_count = c;
    }
  }
  return best;
}

std::string aggregate_majority(const ReplayState& state, const TrajectoryPool& pool) {
  std::vector<Answer> answers;
  answers.reserve(state.branches.size());
  for (const auto& b : state.branches) answers.push_back(current_answer(state, pool, b.branch_id));
  Answer winner = majority_vote(answers);
  if (!winner) {
    throw Error(ErrorCode::kNoAggregableAnswer,
                "question '" + state.question_id + "' has no branch with an answer");
  }
  return *winner;
}

}  // namespace ttsreplay
