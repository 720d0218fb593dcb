#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ttsreplay/controllers.hpp"
#include "ttsreplay/evaluation.hpp"
#include "ttsreplay/tracing.hpp"

namespace ttsreplay {

/// Compact rendering of one retained episode for the explorer.
struct TraceSample {
  std::string question_id;
  int repeat = 0;
  std::string actions;  // space-separated action labels
  bool correct = false;

  bool operator==(const TraceSample&) const = default;
};

/// Behavioral evidence for one beta of a round's sweep.
struct BetaDigest {
  double beta = 0.0;
  std::vector<QuestionDigest> questions;
  std::vector<TraceSample> samples;
};

struct HistoryEntry {
  int round = 0;
  bool failed = false;
  ControllerSpec spec;
  ScalingCurve curve;
  std::vector<BetaDigest> digests;
  std::string commentary;
  std::string failure_reason;
};

nlohmann::json history_entry_to_json(const HistoryEntry& entry);
HistoryEntry history_entry_from_json(const nlohmann::json& record);

struct Selection {
  ControllerSpec spec;
  double beta = 0.0;
  int round = 0;
  CurvePoint point;
};

/// Highest search-set accuracy over (round, beta); ties go to lower mean
/// tokens, then the earlier round, then the smaller beta. An empty grid
/// admits every beta on each curve. Throws Error(kNoCandidate).
Selection select_controller(const std::vector<HistoryEntry>& history,
                            const std::vector<double>& grid = {});

}  // namespace ttsreplay
