#include "ttsreplay/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

#include "ttsreplay/error.hpp"

namespace ttsreplay {

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kSc: return "sc";
    case ControllerKind::kAsc: return "asc";
    case ControllerKind::kEsc: return "esc";
    case ControllerKind::kParallelProbe: return "parallel_probe";
    case ControllerKind::kRoundPolicy: return "round_policy";
  }
  return "?";
}

ControllerKind parse_controller_kind(std::string_view text) {
  for (auto kind : {ControllerKind::kSc, ControllerKind::kAsc, ControllerKind::kEsc,
                    ControllerKind::kParallelProbe, ControllerKind::kRoundPolicy}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::kInvalidSpec, "unknown controller kind '" + std::string(text) + "'");
}

namespace {

constexpr double kBig = 1e9;
// Lower edge for parameters whose admissible range is open at zero.
constexpr double kTiny = 1e-9;

using D = BudgetDirection;

const std::vector<ParameterInfo> kScParams = {
    {"width", 64, 1, kBig, true, D::kExpanding},
};

const std::vector<ParameterInfo> kAscParams = {
    // Thresholds above 1 disable early stopping entirely.
    {"threshold", 0.95, kTiny, 2.0, false, D::kExpanding},
    {"k_min", 2, 1, kBig, true, D::kExpanding},
    {"max_width", 64, 1, kBig, true, D::kExpanding},
};

const std::vector<ParameterInfo> kEscParams = {
    {"chunk", 8, 1, kBig, true, D::kExpanding},
    {"max_chunks", 8, 1, kBig, true, D::kExpanding},
};

const std::vector<ParameterInfo> kParallelProbeParams = {
    {"initial_width", 8, 1, kBig, true, D::kExpanding},
    {"prune_fraction", 0.25, 0.0, 1.0, false, D::kContracting},
    {"stop_threshold", 0.75, kTiny, 1.0, false, D::kExpanding},
};

const std::vector<ParameterInfo> kRoundPolicyParams = {
    {"ema_alpha", 0.3, kTiny, 1.0, false, D::kFixed},
    {"stop_conf_threshold", 0.70, kTiny, 1.0, false, D::kExpanding},
    {"stop_trend_min", 0.0, -1.0, 1.0, false, D::kExpanding},
    {"widen_delta_threshold", 0.01, -1.0, 1.0, false, D::kExpanding},
    {"max_width", 4, 1, kBig, true, D::kExpanding},
    {"initial_width", 2, 1, kBig, true, D::kExpanding},
    {"burst_aligned", 0, 0, kBig, true, D::kExpanding},
    {"abandon_patience", 2, 1, kBig, true, D::kExpanding},
    // 0 selects N times the longest trajectory.
    {"hard_interval_cap", 0, 0, kBig, true, D::kFixed},
};

constexpr int kMinActive = 2;

const ParameterInfo* find_param(ControllerKind kind, const std::string& name) {
  for (const auto& p : parameter_table(kind)) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

}  // namespace

const std::vector<ParameterInfo>& parameter_table(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kSc: return kScParams;
    case ControllerKind::kAsc: return kAscParams;
    case ControllerKind::kEsc: return kEscParams;
    case ControllerKind::kParallelProbe: return kParallelProbeParams;
    case ControllerKind::kRoundPolicy: return kRoundPolicyParams;
  }
  return kScParams;
}

ControllerSpec default_spec(ControllerKind kind) {
  ControllerSpec spec;
  spec.kind = kind;
  if (kind == ControllerKind::kRoundPolicy) {
    spec.parameters = {{"ema_alpha", 0.3},
                       {"stop_trend_min", 0.0},
                       {"widen_delta_threshold", 0.01},
                       {"hard_interval_cap", 0}};
    spec.beta_map = {{"stop_conf_threshold", 0.70, 0.20},
                     {"max_width", 4, 8},
                     {"burst_aligned", 0, 2},
                     {"abandon_patience", 2, 1}};
    return spec;
  }
  for (const auto& p : parameter_table(kind)) spec.parameters[p.name] = p.default_value;
  return spec;
}

void validate_spec(const ControllerSpec& spec) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kInvalidSpec, to_string(spec.kind) + ": " + what);
  };
  auto in_bounds = [](const ParameterInfo& p, double v) {
    return std::isfinite(v) && v >= p.lower && v <= p.upper;
  };
  for (const auto& [name, value] : spec.parameters) {
    const ParameterInfo* p = find_param(spec.kind, name);
    if (!p) fail("unknown parameter '" + name + "'");
    if (!in_bounds(*p, value)) fail("parameter '" + name + "' out of bounds");
  }
  std::vector<std::string> seen;
  for (const auto& e : spec.beta_map) {
    const ParameterInfo* p = find_param(spec.kind, e.name);
    if (!p) fail("beta_map names unknown parameter '" + e.name + "'");
    if (std::find(seen.begin(), seen.end(), e.name) != seen.end()) {
      fail("beta_map maps '" + e.name + "' twice");
    }
    seen.push_back(e.name);
    if (!std::isfinite(e.coefficient) || e.coefficient < 0) {
      fail("beta coefficient for '" + e.name + "' must be finite and >= 0");
    }
    if (p->direction == BudgetDirection::kFixed && e.coefficient != 0) {
      fail("'" + e.name + "' has no budget direction and cannot depend on beta");
    }
    if (!in_bounds(*p, e.base)) fail("beta_map base for '" + e.name + "' out of bounds");
  }
}

Hyperparameters resolve_hyperparameters(const ControllerSpec& spec, double beta) {
  validate_spec(spec);
  if (!std::isfinite(beta) || beta < 0) {
    throw Error(ErrorCode::kInvalidSpec, "beta must be a finite nonnegative number");
  }
  Hyperparameters out;
  for (const auto& p : parameter_table(spec.kind)) out[p.name] = p.default_value;
  for (const auto& [name, value] : spec.parameters) out[name] = value;
  for (const auto& e : spec.beta_map) {
    const ParameterInfo& p = *find_param(spec.kind, e.name);
    double v = p.direction == BudgetDirection::kContracting ? e.base - e.coefficient * beta
                                                            : e.base + e.coefficient * beta;
    out[e.name] = std::clamp(v, p.lower, p.upper);
  }
  for (const auto& p : parameter_table(spec.kind)) {
    if (p.integer) out[p.name] = std::clamp(std::floor(out[p.name] + 1e-9), p.lower, p.upper);
  }
  return out;
}

std::optional<Answer> BranchView::latest() const {
  if (probes.empty()) return std::nullopt;
  return probes.back().answer;
}

Observation observe(const ReplayState& state, const TrajectoryPool& pool,
                    const Hyperparameters& hyper) {
  Observation obs;
  obs.question_id = state.question_id;
  obs.pool_size = state.pool_size();
  obs.max_trajectory_depth = pool.max_depth();
  obs.probes_taken = state.probes_taken;
  obs.intervals_used = interval_cost(state);
  obs.hyper = hyper;
  obs.branches.reserve(state.branches.size());
  for (const auto& b : state.branches) {
    obs.branches.push_back({b.branch_id, b.depth, b.active, b.exhausted, {}});
  }
  for (const auto& p : state.revealed) obs.branches[p.branch_id - 1].probes.push_back(p);
  for (auto& view : obs.branches) {
    std::sort(view.probes.begin(), view.probes.end(),
              [](const auto& a, const auto& b) { return a.depth < b.depth; });
  }
  return obs;
}

PoolAgreement pool_agreement(const Observation& obs) {
  std::vector<Answer> latest;
  int active = 0;
  for (const auto& b : obs.branches) {
    if (!b.active) continue;
    ++active;
    if (auto a = b.latest()) latest.push_back(*a);
  }
  PoolAgreement out;
  out.mode = majority_vote(latest);
  if (!out.mode || active == 0) return out;
  const auto votes = std::count(latest.begin(), latest.end(), out.mode);
  out.fraction = static_cast<double>(votes) / active;
  return out;
}

std::string Controller::aggregate(const ReplayState& terminal, const TrajectoryPool& pool) const {
  return aggregate_majority(terminal, pool);
}

namespace {

int capped_width(double width, int pool_size) {
  return std::min(static_cast<int>(width), pool_size);
}

/// Lowest-depth non-exhausted branch among `ids` (ties: lowest id), or 0.
int shallowest_open(const Observation& obs, const std::vector<int>& ids) {
  int pick = 0;
  for (int id : ids) {
    const auto& b = obs.branch(id);
    if (!b.active || b.exhausted) continue;
    if (pick == 0 || b.depth < obs.branch(pick).depth) pick = id;
  }
  return pick;
}

std::vector<int> all_ids(const Observation& obs) {
  std::vector<int> ids(obs.m());
  for (int i = 0; i < obs.m(); ++i) ids[i] = i + 1;
  return ids;
}

/// Self-consistency: open W branches, run all to completion, majority vote.
class ScController final : public Controller {
 public:
  using Controller::Controller;

  Action decide(const Observation& obs) override {
    if (obs.m() < capped_width(param("width"), obs.pool_size)) return Action::branch();
    if (int id = shallowest_open(obs, all_ids(obs))) return Action::continue_(id);
    return Action::answer();
  }
};

/// Adaptive self-consistency: sample one full trajectory at a time and stop
/// once the modal final answer reaches the threshold frequency.
class AscController final : public Controller {
 public:
  using Controller::Controller;

  Action decide(const Observation& obs) override {
    if (obs.m() > 0) {
      const auto& last = obs.branches.back();
      if (!last.exhausted) return Action::continue_(last.branch_id);
      if (!last.probed_current()) return Action::probe(last.branch_id);
      if (obs.m() >= int_param("k_min")) {
        std::vector<Answer> finals;
        for (const auto& b : obs.branches) finals.push_back(b.probes.back().answer);
        const Answer mode = majority_vote(finals);
        if (mode) {
          const auto votes = std::count(finals.begin(), finals.end(), mode);
          if (static_cast<double>(votes) / obs.m() >= param("threshold")) return Action::answer();
        }
      }
    }
    if (obs.m() < capped_width(param("max_width"), obs.pool_size)) return Action::branch();
    return Action::answer();
  }
};

/// Early-stopping self-consistency: sample chunks of c full trajectories and
/// stop when a chunk's final answers are unanimous.
class EscController final : public Controller {
 public:
  using Controller::Controller;

  Action decide(const Observation& obs) override {
    const int chunk = int_param("chunk");
    const int limit = capped_width(chunk * param("max_chunks"), obs.pool_size);
    if (obs.m() == 0) {
      chunk_begin_ = 0;
      chunk_end_ = std::min(chunk, limit);
    }
    if (obs.m() < chunk_end_) return Action::branch();

    std::vector<int> ids;
    for (int id = chunk_begin_ + 1; id <= chunk_end_; ++id) ids.push_back(id);
    if (int id = shallowest_open(obs, ids)) return Action::continue_(id);
    for (int id : ids) {
      if (!obs.branch(id).probed_current()) return Action::probe(id);
    }

    const Answer first = obs.branch(ids.front()).probes.back().answer;
    const bool unanimous = first && std::all_of(ids.begin(), ids.end(), [&](int id) {
      return obs.branch(id).probes.back().answer == first;
    });
    if (unanimous || obs.m() >= limit) return Action::answer();
    chunk_begin_ = obs.m();
    chunk_end_ = std::min(obs.m() + chunk, limit);
    return Action::branch();
  }

 private:
  int chunk_begin_ = 0;
  int chunk_end_ = 0;
};

/// Aggregation over the latest revealed answers of active branches, falling
/// back to the full-state majority when nothing usable was revealed.
std::string aggregate_revealed_active(const ReplayState& terminal, const TrajectoryPool& pool) {
  std::vector<Answer> latest;
  for (const auto& b : terminal.branches) {
    if (!b.active) continue;
    const RevealedProbe* best = nullptr;
    for (const auto& p : terminal.revealed) {
      if (p.branch_id == b.branch_id && (!best || p.depth > best->depth)) best = &p;
    }
    if (best) latest.push_back(best->answer);
  }
  if (Answer mode = majority_vote(latest)) return *mode;
  return aggregate_majority(terminal, pool);
}

/// Round-structured controllers plan a batch of actions and then replay the
/// batch one step at a time. Planned steps are re-checked against the live
/// observation so a branch that runs out mid-burst is skipped, not forced.
class PlannedController : public Controller {
 public:
  using Controller::Controller;

 protected:
  std::optional<Action> next_planned(const Observation& obs) {
    while (!plan_.empty()) {
      const Action a = plan_.front();
      plan_.pop_front();
      if (a.kind == ActionKind::kContinue || a.kind == ActionKind::kProbe) {
        const auto& b = obs.branch(a.branch_id);
        if (!b.active) continue;
        if (a.kind == ActionKind::kContinue && b.exhausted) continue;
        if (a.kind == ActionKind::kProbe && b.probed_current()) continue;
      }
      if (a.kind == ActionKind::kBranch && obs.m() >= obs.pool_size) continue;
      return a;
    }
    return std::nullopt;
  }

  void plan(Action a) { plan_.push_back(a); }
  void plan_advance(const BranchView& b) {
    if (!b.probed_current()) {
      plan(Action::probe(b.branch_id));
    } else if (!b.exhausted) {
      plan(Action::continue_(b.branch_id));
      plan(Action::probe(b.branch_id));
    }
  }
  bool plan_empty() const { return plan_.empty(); }

 private:
  std::deque<Action> plan_;
};

/// Starts wide, then each round deepens and probes every active branch,
/// prunes a fraction of the dissenters and stops on sufficient agreement.
class ParallelProbeController final : public PlannedController {
 public:
  using PlannedController::PlannedController;

  Action decide(const Observation& obs) override {
    for (int guard = 0; guard < 3; ++guard) {
      if (auto a = next_planned(obs)) return *a;
      if (!opened_) {
        opened_ = true;
        const int width = std::max(1, capped_width(param("initial_width"), obs.pool_size));
        for (int i = 0; i < width; ++i) plan(Action::branch());
        for (int i = 0; i < width; ++i) plan(Action::probe(obs.m() + i + 1));
        continue;
      }
      const PoolAgreement agreement = pool_agreement(obs);
      if (agreement.mode && agreement.fraction >= param("stop_threshold")) return Action::answer();
      std::vector<int> active;
      bool any_open = false;
      for (const auto& b : obs.branches) {
        if (!b.active) continue;
        active.push_back(b.branch_id);
        any_open = any_open || !b.exhausted;
      }
      if (!any_open) return Action::answer();

      int budget = static_cast<int>(std::floor(param("prune_fraction") * active.size() + 1e-9));
      int remaining = static_cast<int>(active.size());
      std::vector<int> pruned;
      for (int id : active) {
        if (budget == 0 || remaining <= kMinActive) break;
        const auto latest = obs.branch(id).latest();
        if (latest && *latest != agreement.mode) {
          plan(Action::prune(id));
          pruned.push_back(id);
          --budget;
          --remaining;
        }
      }
      for (int id : active) {
        if (std::find(pruned.begin(), pruned.end(), id) == pruned.end()) {
          plan_advance(obs.branch(id));
        }
      }
    }
    return Action::answer();
  }

  std::string aggregate(const ReplayState& terminal, const TrajectoryPool& pool) const override {
    return aggregate_revealed_active(terminal, pool);
  }

 private:
  bool opened_ = false;
};

/// Confidence-momentum round policy. Each round advances and probes every
/// active branch, gives consensus branches extra depth, then tracks an EMA of
/// pool agreement: stop when the EMA is high and not falling, widen when it
/// stalls, and abandon branches that dissent for too many rounds in a row.
class RoundPolicyController final : public PlannedController {
 public:
  using PlannedController::PlannedController;

  Action decide(const Observation& obs) override {
    const int cap = interval_cap(obs);
    // Every phase either emits an action or plans one, so a handful of
    // passes always suffices.
    for (int guard = 0; guard < 8; ++guard) {
      if (auto a = next_planned(obs)) {
        const bool costs = a->kind == ActionKind::kBranch || a->kind == ActionKind::kContinue;
        if (costs && obs.intervals_used + 1 > cap) return Action::answer();
        return *a;
      }
      switch (phase_) {
        case Phase::kOpen: {
          // max_width only gates widening; the opening width is its own knob.
          const int width = std::min(int_param("initial_width"), obs.pool_size);
          for (int i = 0; i < width; ++i) plan(Action::branch());
          phase_ = Phase::kAdvance;
          break;
        }
        case Phase::kAdvance:
          for (const auto& b : obs.branches) {
            if (b.active) plan_advance(b);
          }
          phase_ = Phase::kBurst;
          break;
        case Phase::kBurst: {
          const int burst = int_param("burst_aligned");
          const Answer mode = pool_agreement(obs).mode;
          if (burst > 0 && mode) {
            for (const auto& b : obs.branches) {
              if (!b.active || b.exhausted || b.latest() != mode) continue;
              for (int k = 0; k < burst; ++k) {
                plan(Action::continue_(b.branch_id));
                plan(Action::probe(b.branch_id));
              }
            }
          }
          phase_ = Phase::kEvaluate;
          break;
        }
        case Phase::kEvaluate:
          if (evaluate_round(obs)) return Action::answer();
          phase_ = Phase::kAdvance;
          break;
      }
    }
    return Action::answer();
  }

  std::string aggregate(const ReplayState& terminal, const TrajectoryPool& pool) const override {
    return aggregate_revealed_active(terminal, pool);
  }

 private:
  enum class Phase { kOpen, kAdvance, kBurst, kEvaluate };

  int max_width(const Observation& obs) const {
    return capped_width(param("max_width"), obs.pool_size);
  }

  int interval_cap(const Observation& obs) const {
    const int cap = int_param("hard_interval_cap");
    return cap > 0 ? cap : obs.pool_size * obs.max_trajectory_depth;
  }

  /// Returns true when the episode should answer now.
  bool evaluate_round(const Observation& obs) {
    const PoolAgreement agreement = pool_agreement(obs);
    const double alpha = param("ema_alpha");
    const double previous = ema_;
    ema_ = alpha * agreement.fraction + (1.0 - alpha) * ema_;
    const double delta = ema_ - previous;
    if (ema_ >= param("stop_conf_threshold") && delta >= param("stop_trend_min")) return true;

    // Exhausted branches cannot move the EMA any more, which counts as
    // stagnation.
    bool all_exhausted = true;
    for (const auto& b : obs.branches) {
      if (b.active && !b.exhausted) all_exhausted = false;
    }
    bool widened = false;
    if ((delta < param("widen_delta_threshold") || all_exhausted) && obs.m() < max_width(obs)) {
      plan(Action::branch());
      widened = true;
    }

    patience_.resize(obs.m(), 0);
    int active = 0;
    for (const auto& b : obs.branches) active += b.active ? 1 : 0;
    const int patience = int_param("abandon_patience");
    bool any_open = false;
    for (const auto& b : obs.branches) {
      if (!b.active) continue;
      int& counter = patience_[b.branch_id - 1];
      if (const auto latest = b.latest()) {
        counter = *latest == agreement.mode ? 0 : counter + 1;
      }
      if (counter >= patience && active > kMinActive) {
        plan(Action::prune(b.branch_id));
        --active;
        continue;
      }
      any_open = any_open || !b.exhausted;
    }
    return !widened && !any_open;
  }

  Phase phase_ = Phase::kOpen;
  double ema_ = 0.0;
  std::vector<int> patience_;
};

}  // namespace

std::unique_ptr<Controller> instantiate(const ControllerSpec& spec, double beta) {
  Hyperparameters hyper = resolve_hyperparameters(spec, beta);
  switch (spec.kind) {
    case ControllerKind::kSc: return std::make_unique<ScController>(std::move(hyper));
    case ControllerKind::kAsc: return std::make_unique<AscController>(std::move(hyper));
    case ControllerKind::kEsc: return std::make_unique<EscController>(std::move(hyper));
    case ControllerKind::kParallelProbe:
      return std::make_unique<ParallelProbeController>(std::move(hyper));
    case ControllerKind::kRoundPolicy:
      return std::make_unique<RoundPolicyController>(std::move(hyper));
  }
  throw Error(ErrorCode::kInvalidSpec, "unknown controller kind");
}

}  // namespace ttsreplay
