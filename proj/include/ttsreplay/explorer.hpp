#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttsreplay/controllers.hpp"
#include "ttsreplay/history.hpp"

namespace ttsreplay {

// Explorer wire protocol, one JSON object per line:
//   request  {"type":"propose","round":<int>,"prompt":<string>,"history":[<entry>...]}
//   response {"type":"proposal","spec":<ControllerSpec>,"commentary":<string>}

/// Anything that answers a propose request with one response line.
class Explorer {
 public:
  virtual ~Explorer() = default;

  /// Sends one request line (without the newline) and returns the response
  /// line. Throws Error(kExplorerUnavailable) if the explorer is gone.
  virtual std::string exchange(const std::string& request_line) = 0;
};

/// Deterministic stand-in for an LLM explorer. Round 1 (or a history with no
/// successful entry) yields the default round policy; later rounds take the
/// best entry so far and change exactly one hyperparameter, following a
/// fixed schedule whose starting offset is picked by the seed.
ControllerSpec scripted_mutation(const std::vector<HistoryEntry>& history, std::uint64_t seed);

class ScriptedMutationExplorer final : public Explorer {
 public:
  explicit ScriptedMutationExplorer(std::uint64_t seed = 0) : seed_(seed) {}

  std::string exchange(const std::string& request_line) override;

 private:
  std::uint64_t seed_;
};

/// Spawns `argv` and talks to it over its standard streams. Diagnostics from
/// the child go to its inherited stderr.
class SubprocessExplorer final : public Explorer {
 public:
  explicit SubprocessExplorer(std::vector<std::string> argv);
  ~SubprocessExplorer() override;

  SubprocessExplorer(const SubprocessExplorer&) = delete;
  SubprocessExplorer& operator=(const SubprocessExplorer&) = delete;

  std::string exchange(const std::string& request_line) override;

 private:
  void shutdown();

  std::vector<std::string> argv_;
  int pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
};

nlohmann::json make_propose_request(int round, const std::string& prompt,
                                    const std::vector<HistoryEntry>& history);

}  // namespace ttsreplay
