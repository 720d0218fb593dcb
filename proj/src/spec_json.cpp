#include "ttsreplay/spec_json.hpp"

#include <cstdio>

#include "ttsreplay/error.hpp"
#include "ttsreplay/random.hpp"

namespace ttsreplay {

using nlohmann::json;

json spec_to_json(const ControllerSpec& spec) {
  json beta_map = json::array();
  for (const auto& e : spec.beta_map) {
    beta_map.push_back({{"name", e.name}, {"base", e.base}, {"coefficient", e.coefficient}});
  }
  return {{"kind", to_string(spec.kind)},
          {"parameters", json(spec.parameters)},
          {"beta_map", std::move(beta_map)}};
}

ControllerSpec spec_from_json(const json& record) {
  try {
    ControllerSpec spec;
    spec.kind = parse_controller_kind(record.at("kind").get<std::string>());
    if (auto it = record.find("parameters"); it != record.end() && !it->is_null()) {
      if (!it->is_object()) throw Error(ErrorCode::kInvalidSpec, "parameters must be an object");
      for (const auto& [name, value] : it->items()) {
        if (!value.is_number()) {
          throw Error(ErrorCode::kInvalidSpec, "parameter '" + name + "' must be numeric");
        }
        spec.parameters[name] = value.get<double>();
      }
    }
    if (auto it = record.find("beta_map"); it != record.end() && !it->is_null()) {
      if (!it->is_array()) throw Error(ErrorCode::kInvalidSpec, "beta_map must be an array");
      for (const auto& e : *it) {
        spec.beta_map.push_back({e.at("name").get<std::string>(), e.at("base").get<double>(),
                                 e.at("coefficient").get<double>()});
      }
    }
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidSpec, std::string("malformed spec record: ") + e.what());
  }
}

std::string spec_digest(const ControllerSpec& spec) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(stable_hash64(spec_to_json(spec).dump())));
  return buf;
}

}  // namespace ttsreplay
