#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "ttsreplay/pool.hpp"
#include "ttsreplay/random.hpp"
#include "ttsreplay/replay.hpp"

namespace fixtures {

using ttsreplay::Answer;
using ttsreplay::Interval;
using ttsreplay::Trajectory;
using ttsreplay::TrajectoryPool;

// q1: truth "42"; T1 = 7,42,42 (last interval 300 tokens), T2 = 41,41, T3 = 42.
inline TrajectoryPool canonical_pool() {
  TrajectoryPool pool;
  pool.question_id = "q1";
  pool.ground_truth = "42";
  pool.delta_tokens = 500;
  pool.trajectories = {
      Trajectory{{{500, "7"}, {500, "42"}, {300, "42"}}},
      Trajectory{{{500, "41"}, {500, "41"}}},
      Trajectory{{{500, "42"}}},
  };
  return pool;
}

/// Pool whose trajectories carry `answer` at every interval.
inline TrajectoryPool unanimous_pool(const std::string& id, const std::string& answer, int n,
                                     int depth) {
  TrajectoryPool pool;
  pool.question_id = id;
  pool.ground_truth = answer;
  for (int i = 0; i < n; ++i) {
    Trajectory t;
    for (int k = 0; k < depth; ++k) t.intervals.push_back({500, answer});
    pool.trajectories.push_back(t);
  }
  return pool;
}

/// Pool with one trajectory per listed final answer; every interval shows it.
inline TrajectoryPool finals_pool(const std::string& id, const std::string& truth,
                                  const std::vector<std::string>& finals, int depth = 1) {
  TrajectoryPool pool;
  pool.question_id = id;
  pool.ground_truth = truth;
  for (const auto& f : finals) {
    Trajectory t;
    for (int k = 0; k < depth; ++k) t.intervals.push_back({500, f});
    pool.trajectories.push_back(t);
  }
  return pool;
}

/// Small random pool: N in [1, max_n], lengths in [1, max_len], answers from
/// a tiny alphabet plus the no-answer sentinel.
inline TrajectoryPool random_pool(ttsreplay::SplitMix64& rng, int max_n, int max_len,
                                  const std::string& id = "r") {
  static const char* kAlphabet[] = {"a", "b", "c"};
  TrajectoryPool pool;
  pool.question_id = id;
  pool.ground_truth = "a";
  const int n = 1 + static_cast<int>(rng.below(max_n));
  for (int i = 0; i < n; ++i) {
    Trajectory t;
    const int len = 1 + static_cast<int>(rng.below(max_len));
    for (int k = 0; k < len; ++k) {
      const auto pick = rng.below(4);
      Answer a = pick == 3 ? Answer{} : Answer{kAlphabet[pick]};
      const int tokens = k + 1 == len ? 1 + static_cast<int>(rng.below(500)) : 500;
      t.intervals.push_back({tokens, a});
    }
    pool.trajectories.push_back(t);
  }
  return pool;
}

inline std::vector<int> random_permutation(ttsreplay::SplitMix64& rng, int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(i + 1)]);
  return p;
}

// Brute-force transcription of the replay MDP, kept deliberately naive:
// sets and tuples straight from the transition equations, sharing nothing
// with the library beyond the pool type.
struct OracleState {
  int m = 0;
  std::set<int> active;                                   // I
  std::vector<int> depth;                                 // l, 1-based by index+1
  std::set<std::tuple<int, int, std::string>> revealed;  // Omega, sentinel as "\x01"
};

enum class OKind { kBranch, kContinue, kProbe, kPrune, kAnswer };
struct OAction {
  OKind kind;
  int i = 0;
};

class Oracle {
 public:
  Oracle(const TrajectoryPool& pool, std::vector<int> order)
      : pool_(pool), order_(std::move(order)) {}

  const OracleState& state() const { return s_; }

  int length_of(int i) const { return pool_.trajectories[order_[i - 1]].length(); }

  std::string omega(int i, int k) const {
    const Answer& a = pool_.trajectories[order_[i - 1]].intervals[k - 1].answer;
    return a ? *a : std::string("\x01");
  }

  bool probed_at_depth(int i) const {
    const int k = s_.depth[i - 1];
    for (const auto& [bi, bk, w] : s_.revealed) {
      if (bi == i && bk == k) return true;
    }
    return false;
  }

  bool admissible(const OAction& a) const {
    switch (a.kind) {
      case OKind::kBranch: return s_.m < static_cast<int>(order_.size());
      case OKind::kContinue:
        return s_.active.count(a.i) && s_.depth[a.i - 1] < length_of(a.i);
      case OKind::kProbe: return s_.active.count(a.i) && !probed_at_depth(a.i);
      case OKind::kPrune: return s_.active.count(a.i) > 0;
      case OKind::kAnswer: return true;
    }
    return false;
  }

  void apply(const OAction& a) {
    switch (a.kind) {
      case OKind::kBranch:
        s_.m += 1;
        s_.active.insert(s_.m);
        s_.depth.push_back(1);
        break;
      case OKind::kContinue: s_.depth[a.i - 1] += 1; break;
      case OKind::kProbe: s_.revealed.insert({a.i, s_.depth[a.i - 1], omega(a.i, s_.depth[a.i - 1])}); break;
      case OKind::kPrune: s_.active.erase(a.i); break;
      case OKind::kAnswer: break;
    }
  }

  double cost(double kappa) const {
    double c = 0;
    for (int d : s_.depth) c += d;
    return c + kappa * static_cast<double>(s_.revealed.size());
  }

 private:
  const TrajectoryPool& pool_;
  std::vector<int> order_;
  OracleState s_;
};

inline ttsreplay::Action to_action(const OAction& a) {
  using ttsreplay::Action;
  switch (a.kind) {
    case OKind::kBranch: return Action::branch();
    case OKind::kContinue: return Action::continue_(a.i);
    case OKind::kProbe: return Action::probe(a.i);
    case OKind::kPrune: return Action::prune(a.i);
    case OKind::kAnswer: return Action::answer();
  }
  return Action::answer();
}

/// True when the library state and the oracle state describe the same
/// (m, I, l, Omega).
inline bool same_state(const ttsreplay::ReplayState& s, const OracleState& o) {
  if (s.m() != o.m) return false;
  std::set<int> active;
  std::vector<int> depth;
  for (const auto& b : s.branches) {
    if (b.active) active.insert(b.branch_id);
    depth.push_back(b.depth);
  }
  std::set<std::tuple<int, int, std::string>> revealed;
  for (const auto& p : s.revealed) {
    revealed.insert({p.branch_id, p.depth, p.answer ? *p.answer : std::string("\x01")});
  }
  return active == o.active && depth == o.depth && revealed == o.revealed &&
         static_cast<int>(s.revealed.size()) == static_cast<int>(o.revealed.size());
}

/// Uniformly random action among all syntactically possible ones (branch
/// ids up to m + 1), admissible or not.
inline OAction random_raw_action(ttsreplay::SplitMix64& rng, int m) {
  const auto kind = static_cast<OKind>(rng.below(5));
  return {kind, 1 + static_cast<int>(rng.below(m + 1))};
}

/// Plurality over non-sentinel answers; earliest first occurrence wins ties.
inline Answer plurality(const std::vector<Answer>& answers) {
  std::map<std::string, int> count;
  for (const auto& a : answers) {
    if (a) ++count[*a];
  }
  int best = 0;
  for (const auto& [k, c] : count) best = std::max(best, c);
  for (const auto& a : answers) {
    if (a && count[*a] == best) return a;
  }
  return std::nullopt;
}

}  // namespace fixtures
