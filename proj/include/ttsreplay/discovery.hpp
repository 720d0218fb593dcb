#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttsreplay/evaluation.hpp"
#include "ttsreplay/explorer.hpp"
#include "ttsreplay/history.hpp"
#include "ttsreplay/pool.hpp"

namespace ttsreplay {

/// Instructions sent with every propose request.
const std::string& default_discovery_prompt();

struct DiscoveryConfig {
  int rounds = 5;
  std::vector<std::string> search_pools;
  /// Held out: never serialized into a request.
  std::vector<std::string> eval_pools;
  EvalConfig eval;
  /// Betas swept on the search set each round; empty means eval.beta_grid.
  std::vector<double> selection_grid;
  /// Explorer process argv; empty runs the scripted explorer in-process.
  std::vector<std::string> explorer_command;
  std::uint64_t explorer_seed = 0;
  /// Retained traces per beta rendered into the history.
  int trace_samples = 2;
  std::string prompt = default_discovery_prompt();
  /// Where the history file is written (also on abort); empty disables.
  std::string history_path;
};

nlohmann::json discovery_config_to_json(const DiscoveryConfig& config);
DiscoveryConfig discovery_config_from_json(const nlohmann::json& record);
DiscoveryConfig load_discovery_config(const std::filesystem::path& path);

struct DiscoveryResult {
  Selection selection;
  std::vector<HistoryEntry> history;
  /// Every request line sent to the explorer, in order.
  std::vector<std::string> requests;
  /// Selection evaluated on the held-out pools (absent without eval pools).
  std::optional<EvalMetrics> held_out;
};

/// Propose -> validate -> sweep -> record, for config.rounds rounds, then
/// select. An invalid proposal is retried once (the prompt carries the
/// rejection) and then recorded as a failed round. Throws Error(kNoRounds),
/// Error(kNoCandidate), or Error(kExplorerUnavailable) after persisting the
/// partial history.
DiscoveryResult run_discovery(const DiscoveryConfig& config,
                              const std::vector<TrajectoryPool>& search,
                              const std::vector<TrajectoryPool>& held_out, Explorer& explorer);

/// Loads pools from the configured paths and launches the configured explorer.
DiscoveryResult run_discovery(const DiscoveryConfig& config);

nlohmann::json discovery_record(const DiscoveryConfig& config,
                                const std::vector<HistoryEntry>& history,
                                const std::optional<Selection>& selection,
                                const std::optional<EvalMetrics>& held_out);

}  // namespace ttsreplay
