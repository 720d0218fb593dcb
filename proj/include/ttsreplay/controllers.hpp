#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ttsreplay/pool.hpp"
#include "ttsreplay/replay.hpp"

namespace ttsreplay {

enum class ControllerKind { kSc, kAsc, kEsc, kParallelProbe, kRoundPolicy };

std::string to_string(ControllerKind kind);
ControllerKind parse_controller_kind(std::string_view text);

/// How a hyperparameter moves the token budget when it grows.
enum class BudgetDirection {
  kExpanding,    // larger value -> more computation; map is base + c*beta
  kContracting,  // larger value -> less computation; map is base - c*beta
  kFixed,        // not beta-mappable
};

struct ParameterInfo {
  std::string name;
  double default_value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool integer = false;
  BudgetDirection direction = BudgetDirection::kFixed;
};

/// Declared hyperparameters of a controller kind, in a fixed order.
const std::vector<ParameterInfo>& parameter_table(ControllerKind kind);

struct BetaMapEntry {
  std::string name;
  double base = 0.0;
  double coefficient = 0.0;

  bool operator==(const BetaMapEntry&) const = default;
};

using Hyperparameters = std::map<std::string, double>;

/// Machine-proposable controller description. Every mapped hyperparameter is
/// a monotone function of one scalar beta; larger beta never shrinks the
/// budget.
struct ControllerSpec {
  ControllerKind kind = ControllerKind::kRoundPolicy;
  Hyperparameters parameters;
  std::vector<BetaMapEntry> beta_map;

  bool operator==(const ControllerSpec&) const = default;
};

ControllerSpec default_spec(ControllerKind kind);

/// The confidence-momentum round policy with its stock beta map.
inline ControllerSpec default_cmc_spec() { return default_spec(ControllerKind::kRoundPolicy); }

/// Throws Error(kInvalidSpec) for unknown names, out-of-bound values, negative
/// or non-finite coefficients, or a mapped parameter with no budget direction.
void validate_spec(const ControllerSpec& spec);

/// Resolves every declared hyperparameter at `beta`: defaults, then explicit
/// parameters, then the beta map (floored for integers, clamped to bounds).
Hyperparameters resolve_hyperparameters(const ControllerSpec& spec, double beta);

/// Controller-visible projection of one branch.
struct BranchView {
  int branch_id = 0;
  int depth = 0;
  bool active = false;
  bool exhausted = false;
  /// Revealed probes on this branch, in increasing depth.
  std::vector<RevealedProbe> probes;

  bool probed_current() const { return !probes.empty() && probes.back().depth == depth; }
  /// Latest revealed answer; nullopt if nothing was revealed on this branch.
  std::optional<Answer> latest() const;
};

/// What a controller may condition on. Unrevealed probe answers are not
/// reachable from here.
struct Observation {
  std::string question_id;
  std::vector<BranchView> branches;
  int intervals_used = 0;
  int probes_taken = 0;
  int pool_size = 0;
  int max_trajectory_depth = 0;
  Hyperparameters hyper;

  int m() const { return static_cast<int>(branches.size()); }
  const BranchView& branch(int id) const { return branches.at(id - 1); }
};

Observation observe(const ReplayState& state, const TrajectoryPool& pool,
                    const Hyperparameters& hyper);

/// A per-episode policy plus its terminal aggregation rule.
class Controller {
 public:
  explicit Controller(Hyperparameters hyper) : hyper_(std::move(hyper)) {}
  virtual ~Controller() = default;

  virtual Action decide(const Observation& obs) = 0;

  /// Default: majority over every branch's answer at its current depth.
  virtual std::string aggregate(const ReplayState& terminal, const TrajectoryPool& pool) const;

  const Hyperparameters& hyperparameters() const { return hyper_; }

 protected:
  double param(const std::string& name) const { return hyper_.at(name); }
  int int_param(const std::string& name) const { return static_cast<int>(hyper_.at(name)); }

 private:
  Hyperparameters hyper_;
};

/// Fresh controller for one episode. Throws Error(kInvalidSpec).
std::unique_ptr<Controller> instantiate(const ControllerSpec& spec, double beta);

/// Modal answer among the latest revealed answers of active branches and the
/// fraction of active branches holding it (0 when nothing is revealed).
struct PoolAgreement {
  Answer mode;
  double fraction = 0.0;
};
PoolAgreement pool_agreement(const Observation& obs);

}  // namespace ttsreplay
