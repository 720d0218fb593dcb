#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ttsreplay {

enum class ErrorCode {
  kEpisodeFinished,
  kInadmissibleAction,
  kNoAggregableAnswer,
  kFormat,
  kInvalidPool,
  kInvalidSpec,
  kTraceCorrupt,
  kNoRounds,
  kNoCandidate,
  kExplorerUnavailable,
  kUsage,
};

/// Stable kebab-case name used in messages and on the wire.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ttsreplay
