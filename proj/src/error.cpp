#include "ttsreplay/error.hpp"

namespace ttsreplay {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEpisodeFinished: return "episode-finished";
    case ErrorCode::kInadmissibleAction: return "inadmissible-action";
    case ErrorCode::kNoAggregableAnswer: return "no-aggregable-answer";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kInvalidPool: return "invalid-pool";
    case ErrorCode::kInvalidSpec: return "invalid-spec";
    case ErrorCode::kTraceCorrupt: return "trace-corrupt";
    case ErrorCode::kNoRounds: return "no-rounds";
    case ErrorCode::kNoCandidate: return "no-candidate";
    case ErrorCode::kExplorerUnavailable: return "explorer-unavailable";
    case ErrorCode::kUsage: return "usage";
  }
  return "unknown";
}

}  // namespace ttsreplay
