#pragma once

#include <string>

#include <json.hpp>

#include "ttsreplay/controllers.hpp"

namespace ttsreplay {

/// {"kind": "...", "parameters": {...}, "beta_map": [{"name","base","coefficient"}]}
nlohmann::json spec_to_json(const ControllerSpec& spec);

/// Structural parse only; call validate_spec for the semantic checks.
/// Throws Error(kInvalidSpec) on a malformed record.
ControllerSpec spec_from_json(const nlohmann::json& record);

/// Short hex digest of the canonical encoding.
std::string spec_digest(const ControllerSpec& spec);

}  // namespace ttsreplay
