#include "ttsreplay/tracing.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "ttsreplay/error.hpp"

namespace ttsreplay {

using nlohmann::json;

TraceEvent make_event(int step, const Action& action, const ReplayState& state,
                      const CostModel& model) {
  TraceEvent e;
  e.step = step;
  e.action = action;
  e.active_count = state.active_count();
  e.depths.reserve(state.branches.size());
  for (const auto& b : state.branches) e.depths.push_back(b.depth);
  e.revealed_count = static_cast<int>(state.revealed.size());
  e.cumulative_cost = cost_of(state, {model.kappa_probe, TokenAccounting::kIntervalUnits});
  return e;
}

ReplayState replay_trace(const EpisodeTrace& trace, const TrajectoryPool& pool,
                         const std::vector<int>& permutation) {
  const CostModel model{trace.header.kappa_probe, TokenAccounting::kIntervalUnits};
  ReplayState state = initial_state(pool, permutation);
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& logged = trace.events[i];
    const std::string where = "step " + std::to_string(i);
    if (logged.step != static_cast<int>(i)) {
      throw Error(ErrorCode::kTraceCorrupt,
                  where + ": expected step index " + std::to_string(i) + ", found " +
                      std::to_string(logged.step));
    }
    try {
      state = apply_action(state, logged.action, pool);
    } catch (const Error& e) {
      throw Error(ErrorCode::kTraceCorrupt, where + ": " + e.what());
    }
    if (make_event(logged.step, logged.action, state, model) != logged) {
      throw Error(ErrorCode::kTraceCorrupt,
                  where + ": state after " + to_string(logged.action) + " does not match the log");
    }
  }
  return state;
}

TraceDigest digest_trace(const EpisodeTrace& trace) {
  TraceDigest d;
  d.question_id = trace.header.question_id;
  d.repeat = trace.header.repeat;
  d.forced_answer = trace.header.forced_answer;
  d.final_agreement = trace.header.final_agreement;
  for (const auto& e : trace.events) {
    switch (e.action.kind) {
      case ActionKind::kBranch: ++d.branches_opened; break;
      case ActionKind::kContinue: ++d.continues; break;
      case ActionKind::kProbe: ++d.probes; break;
      case ActionKind::kPrune: ++d.prunes; break;
      case ActionKind::kAnswer: d.stop_step = e.step; break;
    }
    for (int depth : e.depths) d.max_depth = std::max(d.max_depth, depth);
  }
  if (!trace.events.empty()) d.final_cost = trace.events.back().cumulative_cost;
  return d;
}

DigestReport summarize_digests(std::vector<TraceDigest> episodes) {
  DigestReport report;
  std::map<std::string, std::size_t> index;
  for (const auto& d : episodes) {
    auto [it, fresh] = index.emplace(d.question_id, report.questions.size());
    if (fresh) report.questions.push_back({d.question_id});
    QuestionDigest& q = report.questions[it->second];
    ++q.episodes;
    q.branches_opened += d.branches_opened;
    q.prunes += d.prunes;
    q.probes += d.probes;
    q.max_depth += d.max_depth;
    q.stop_step += d.stop_step;
    q.forced_rate += d.forced_answer ? 1.0 : 0.0;
    q.final_agreement += d.final_agreement;
  }
  for (auto& q : report.questions) {
    const double n = q.episodes;
    q.branches_opened /= n;
    q.prunes /= n;
    q.probes /= n;
    q.max_depth /= n;
    q.stop_step /= n;
    q.forced_rate /= n;
    q.final_agreement /= n;
  }
  report.episodes = std::move(episodes);
  return report;
}

DigestReport digest(const std::vector<EpisodeTrace>& traces) {
  std::vector<TraceDigest> episodes;
  episodes.reserve(traces.size());
  for (const auto& t : traces) episodes.push_back(digest_trace(t));
  return summarize_digests(std::move(episodes));
}

void write_trace(std::ostream& out, const EpisodeTrace& trace) {
  const TraceHeader& h = trace.header;
  json header = {{"type", "episode"},
                 {"question_id", h.question_id},
                 {"repeat", h.repeat},
                 {"spec_digest", h.spec_digest},
                 {"beta", h.beta},
                 {"permutation", h.permutation},
                 {"kappa_probe", h.kappa_probe},
                 {"forced_answer", h.forced_answer},
                 {"final_answer", h.final_answer ? json(*h.final_answer) : json(nullptr)},
                 {"final_agreement", h.final_agreement},
                 {"events", trace.events.size()}};
  out << header.dump() << '\n';
  for (const auto& e : trace.events) {
    json event = {{"type", "event"},
                  {"step", e.step},
                  {"action", to_string(e.action)},
                  {"active", e.active_count},
                  {"depths", e.depths},
                  {"revealed", e.revealed_count},
                  {"cost", e.cumulative_cost}};
    out << event.dump() << '\n';
  }
}

std::vector<EpisodeTrace> read_traces(std::istream& in, std::string_view source) {
  std::vector<EpisodeTrace> traces;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string locus = std::string(source) + ":" + std::to_string(lineno);
    try {
      const json record = json::parse(line);
      const std::string type = record.at("type").get<std::string>();
      if (type == "episode") {
        EpisodeTrace t;
        TraceHeader& h = t.header;
        h.question_id = record.at("question_id").get<std::string>();
        h.repeat = record.at("repeat").get<int>();
        h.spec_digest = record.at("spec_digest").get<std::string>();
        h.beta = record.at("beta").get<double>();
        h.permutation = record.at("permutation").get<std::vector<int>>();
        h.kappa_probe = record.at("kappa_probe").get<double>();
        h.forced_answer = record.at("forced_answer").get<bool>();
        const json& answer = record.at("final_answer");
        if (!answer.is_null()) h.final_answer = answer.get<std::string>();
        h.final_agreement = record.at("final_agreement").get<double>();
        traces.push_back(std::move(t));
      } else if (type == "event") {
        if (traces.empty()) throw Error(ErrorCode::kFormat, locus + ": event before any episode header");
        TraceEvent e;
        e.step = record.at("step").get<int>();
        e.action = parse_action(record.at("action").get<std::string>());
        e.active_count = record.at("active").get<int>();
        e.depths = record.at("depths").get<std::vector<int>>();
        e.revealed_count = record.at("revealed").get<int>();
        e.cumulative_cost = record.at("cost").get<double>();
        traces.back().events.push_back(std::move(e));
      } else {
        throw Error(ErrorCode::kFormat, locus + ": unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, locus + ": " + e.what());
    }
  }
  return traces;
}

std::string digest_table(const DigestReport& report) {
  std::string out =
      "question_id,repeat,branches,prunes,probes,continues,max_depth,stop_step,forced,"
      "final_agreement,final_cost\n";
  char buf[256];
  for (const auto& d : report.episodes) {
    std::snprintf(buf, sizeof buf, ",%d,%d,%d,%d,%d,%d,%d,%d,%.6f,%.6f\n", d.repeat,
                  d.branches_opened, d.prunes, d.probes, d.continues, d.max_depth, d.stop_step,
                  d.forced_answer ? 1 : 0, d.final_agreement, d.final_cost);
    out += d.question_id;
    out += buf;
  }
  return out;
}

}  // namespace ttsreplay
