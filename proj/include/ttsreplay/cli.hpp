#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ttsreplay/controllers.hpp"

namespace ttsreplay {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one `ttsreplay` command line. Tables go to `out`; the run manifest
/// and diagnostics go to `err` unless --manifest names a file.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Accepts a kind name ("sc", "round_policy", ...), a path to a JSON spec
/// file, or an inline JSON object; `overrides` are "name=value" pairs applied
/// to the explicit parameters.
ControllerSpec resolve_spec_argument(const std::string& text,
                                     const std::vector<std::string>& overrides = {});

/// Resolves a dataset path: as given if it exists, otherwise relative to
/// $TTSREPLAY_DATA_DIR when that is set.
std::string resolve_dataset_path(const std::string& path);

}  // namespace ttsreplay
