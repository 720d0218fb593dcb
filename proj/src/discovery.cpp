#include "ttsreplay/discovery.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <set>

#include "ttsreplay/error.hpp"
#include "ttsreplay/spec_json.hpp"

namespace ttsreplay {

using nlohmann::json;

const std::string& default_discovery_prompt() {
  static const std::string prompt =
      "You are designing a test-time compute controller for a reasoning model. "
      "Each question has a pool of pre-collected reasoning branches split into fixed-length "
      "intervals; at each step the controller may BRANCH (open a new branch at depth 1), "
      "CONTINUE(i) (advance branch i by one interval), PROBE(i) (read branch i's intermediate "
      "answer at its current depth), PRUNE(i) (drop branch i, keeping what it produced), or "
      "ANSWER (stop and aggregate). Cost is the total number of generated intervals.\n"
      "Propose one controller as a ControllerSpec of kind round_policy: a JSON object "
      "{\"kind\":\"round_policy\",\"parameters\":{name:value},\"beta_map\":[{\"name\",\"base\","
      "\"coefficient\"}]}. The controller exposes a single scalar beta; every mapped "
      "hyperparameter is base + coefficient*beta (or base - coefficient*beta for "
      "budget-contracting ones), coefficients must be >= 0, and larger beta must never reduce "
      "the budget. Hyperparameters: initial_width, ema_alpha, stop_conf_threshold, "
      "stop_trend_min, widen_delta_threshold, max_width, burst_aligned, abandon_patience, hard_interval_cap.\n"
      "The history lists every earlier proposal with its scaling curve (accuracy and mean "
      "intervals/tokens per beta) and digests of its execution traces (branches opened, "
      "prunes, probes, stop step, sample action sequences). Diagnose where earlier "
      "controllers spent compute without gaining accuracy, then propose a controller that "
      "raises accuracy while using fewer tokens. Reply with "
      "{\"type\":\"proposal\",\"spec\":{...},\"commentary\":\"...\"} on one line.";
  return prompt;
}

namespace {

json curve_to_json(const ScalingCurve& curve) {
  json points = json::array();
  for (const auto& p : curve.points) {
    points.push_back({{"beta", p.beta},
                      {"accuracy", p.accuracy},
                      {"mean_intervals", p.mean_intervals},
                      {"mean_tokens", p.mean_tokens},
                      {"objective", p.objective}});
  }
  return points;
}

ScalingCurve curve_from_json(const json& points) {
  ScalingCurve curve;
  for (const auto& p : points) {
    curve.points.push_back({p.at("beta").get<double>(), p.at("accuracy").get<double>(),
                            p.at("mean_intervals").get<double>(), p.at("mean_tokens").get<double>(),
                            p.at("objective").get<double>()});
  }
  return curve;
}

json metrics_to_json(const EvalMetrics& m) {
  return {{"beta", m.beta},
          {"accuracy", m.accuracy},
          {"mean_intervals", m.mean_intervals},
          {"mean_tokens", m.mean_tokens},
          {"mean_objective", m.mean_objective},
          {"mean_cost", m.mean_cost},
          {"mean_probes", m.mean_probes},
          {"episodes", m.episodes},
          {"forced", m.forced}};
}

}  // namespace

json history_entry_to_json(const HistoryEntry& entry) {
  json digests = json::array();
  for (const auto& d : entry.digests) {
    json questions = json::array();
    for (const auto& q : d.questions) {
      questions.push_back({{"question_id", q.question_id},
                           {"episodes", q.episodes},
                           {"branches_opened", q.branches_opened},
                           {"prunes", q.prunes},
                           {"probes", q.probes},
                           {"max_depth", q.max_depth},
                           {"stop_step", q.stop_step},
                           {"forced_rate", q.forced_rate},
                           {"final_agreement", q.final_agreement}});
    }
    json samples = json::array();
    for (const auto& s : d.samples) {
      samples.push_back({{"question_id", s.question_id},
                         {"repeat", s.repeat},
                         {"correct", s.correct},
                         {"actions", s.actions}});
    }
    digests.push_back({{"beta", d.beta}, {"questions", std::move(questions)},
                       {"samples", std::move(samples)}});
  }
  json record = {{"round", entry.round},
                 {"status", entry.failed ? "failed" : "ok"},
                 {"spec", entry.failed ? json(nullptr) : spec_to_json(entry.spec)},
                 {"curve", curve_to_json(entry.curve)},
                 {"digests", std::move(digests)},
                 {"commentary", entry.commentary}};
  if (entry.failed) record["error"] = entry.failure_reason;
  return record;
}

HistoryEntry history_entry_from_json(const json& record) {
  try {
    HistoryEntry entry;
    entry.round = record.at("round").get<int>();
    entry.failed = record.at("status").get<std::string>() == "failed";
    if (!entry.failed) entry.spec = spec_from_json(record.at("spec"));
    entry.curve = curve_from_json(record.at("curve"));
    entry.commentary = record.value("commentary", "");
    entry.failure_reason = record.value("error", "");
    for (const auto& d : record.at("digests")) {
      BetaDigest bd;
      bd.beta = d.at("beta").get<double>();
      for (const auto& q : d.at("questions")) {
        QuestionDigest qd;
        qd.question_id = q.at("question_id").get<std::string>();
        qd.episodes = q.at("episodes").get<int>();
        qd.branches_opened = q.at("branches_opened").get<double>();
        qd.prunes = q.at("prunes").get<double>();
        qd.probes = q.at("probes").get<double>();
        qd.max_depth = q.at("max_depth").get<double>();
        qd.stop_step = q.at("stop_step").get<double>();
        qd.forced_rate = q.at("forced_rate").get<double>();
        qd.final_agreement = q.at("final_agreement").get<double>();
        bd.questions.push_back(std::move(qd));
      }
      for (const auto& s : d.at("samples")) {
        bd.samples.push_back({s.at("question_id").get<std::string>(), s.at("repeat").get<int>(),
                              s.at("actions").get<std::string>(), s.at("correct").get<bool>()});
      }
      entry.digests.push_back(std::move(bd));
    }
    return entry;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed history entry: ") + e.what());
  }
}

Selection select_controller(const std::vector<HistoryEntry>& history,
                            const std::vector<double>& grid) {
  std::optional<Selection> best;
  for (const auto& entry : history) {
    if (entry.failed) continue;
    for (const auto& p : entry.curve.points) {
      if (!grid.empty() && std::find(grid.begin(), grid.end(), p.beta) == grid.end()) continue;
      // Entries are visited in round order and points in beta order, so
      // strict comparisons keep the earlier round and smaller beta on ties.
      const bool better = !best || p.accuracy > best->point.accuracy ||
                          (p.accuracy == best->point.accuracy &&
                           p.mean_tokens < best->point.mean_tokens);
      if (better) best = Selection{entry.spec, p.beta, entry.round, p};
    }
  }
  if (!best) throw Error(ErrorCode::kNoCandidate, "no successful round to select from");
  return *best;
}

json discovery_config_to_json(const DiscoveryConfig& c) {
  json record = {{"rounds", c.rounds},
                 {"search_pools", c.search_pools},
                 {"eval_pools", c.eval_pools},
                 {"repeats", c.eval.repeats},
                 {"seed", c.eval.seed},
                 {"gamma", c.eval.gamma},
                 {"beta_grid", c.eval.beta_grid},
                 {"selection_grid", c.selection_grid},
                 {"kappa_probe", c.eval.cost_model.kappa_probe},
                 {"workers", c.eval.workers},
                 {"trace_repeats", c.eval.trace_repeats},
                 {"explorer", c.explorer_command},
                 {"explorer_seed", c.explorer_seed},
                 {"trace_samples", c.trace_samples},
                 {"history_path", c.history_path}};
  if (c.prompt != default_discovery_prompt()) record["prompt"] = c.prompt;
  return record;
}

DiscoveryConfig discovery_config_from_json(const json& r) {
  try {
    DiscoveryConfig c;
    c.rounds = r.value("rounds", c.rounds);
    c.search_pools = r.value("search_pools", c.search_pools);
    c.eval_pools = r.value("eval_pools", c.eval_pools);
    c.eval.repeats = r.value("repeats", c.eval.repeats);
    c.eval.seed = r.value("seed", c.eval.seed);
    c.eval.gamma = r.value("gamma", c.eval.gamma);
    c.eval.beta_grid = r.value("beta_grid", c.eval.beta_grid);
    c.selection_grid = r.value("selection_grid", c.selection_grid);
    c.eval.cost_model.kappa_probe = r.value("kappa_probe", c.eval.cost_model.kappa_probe);
    c.eval.workers = r.value("workers", c.eval.workers);
    c.eval.trace_repeats = r.value("trace_repeats", c.eval.trace_repeats);
    c.explorer_command = r.value("explorer", c.explorer_command);
    c.explorer_seed = r.value("explorer_seed", c.explorer_seed);
    c.trace_samples = r.value("trace_samples", c.trace_samples);
    c.prompt = r.value("prompt", c.prompt);
    c.history_path = r.value("history_path", c.history_path);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed discovery config: ") + e.what());
  }
}

DiscoveryConfig load_discovery_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFormat, path.string() + ": cannot open config");
  try {
    DiscoveryConfig c = discovery_config_from_json(json::parse(in));
    // Relative pool and history paths resolve against the working directory.
    return c;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

json discovery_record(const DiscoveryConfig& config, const std::vector<HistoryEntry>& history,
                      const std::optional<Selection>& selection,
                      const std::optional<EvalMetrics>& held_out) {
  json entries = json::array();
  for (const auto& e : history) entries.push_back(history_entry_to_json(e));
  json record = {{"config", discovery_config_to_json(config)}, {"history", std::move(entries)}};
  if (selection) {
    record["selection"] = {{"round", selection->round},
                           {"beta", selection->beta},
                           {"spec", spec_to_json(selection->spec)},
                           {"search_accuracy", selection->point.accuracy},
                           {"search_mean_tokens", selection->point.mean_tokens}};
  } else {
    record["selection"] = nullptr;
  }
  record["held_out"] = held_out ? metrics_to_json(*held_out) : json(nullptr);
  return record;
}

namespace {

void persist(const DiscoveryConfig& config, const std::vector<HistoryEntry>& history,
             const std::optional<Selection>& selection, const std::optional<EvalMetrics>& held_out) {
  if (config.history_path.empty()) return;
  std::ofstream out(config.history_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kFormat, config.history_path + ": cannot write history");
  out << discovery_record(config, history, selection, held_out).dump(2) << '\n';
}

std::string render_actions(const EpisodeTrace& trace) {
  std::string out;
  for (const auto& e : trace.events) {
    if (!out.empty()) out += ' ';
    out += to_string(e.action);
  }
  return out;
}

HistoryEntry evaluate_candidate(int round, const ControllerSpec& spec, std::string commentary,
                                const std::vector<TrajectoryPool>& search,
                                const EvalConfig& eval, int trace_samples) {
  HistoryEntry entry;
  entry.round = round;
  entry.spec = spec;
  entry.commentary = std::move(commentary);
  const SweepReport sweep = sweep_detailed(spec, search, eval);
  entry.curve = sweep.curve;
  for (const auto& report : sweep.per_beta) {
    BetaDigest d;
    d.beta = report.metrics.beta;
    d.questions = report.digests.questions;
    for (const auto& trace : report.traces) {
      if (static_cast<int>(d.samples.size()) >= trace_samples) break;
      const bool correct = std::any_of(report.episodes.begin(), report.episodes.end(),
                                       [&](const EpisodeResult& r) {
                                         return r.question_id == trace.header.question_id &&
                                                r.repeat_index == trace.header.repeat && r.correct;
                                       });
      d.samples.push_back({trace.header.question_id, trace.header.repeat, render_actions(trace),
                           correct});
    }
    entry.digests.push_back(std::move(d));
  }
  return entry;
}

/// Parses and validates a response line; returns the reason on rejection.
std::optional<std::string> parse_proposal(const std::string& line, ControllerSpec& spec,
                                          std::string& commentary) {
  try {
    const json response = json::parse(line);
    const std::string type = response.at("type").get<std::string>();
    if (type == "error") return "explorer reported an error: " + response.value("message", "");
    if (type != "proposal") return "unexpected response type '" + type + "'";
    spec = spec_from_json(response.at("spec"));
    commentary = response.value("commentary", "");
    validate_spec(spec);
    return std::nullopt;
  } catch (const json::exception& e) {
    return std::string("malformed response: ") + e.what();
  } catch (const Error& e) {
    return std::string(e.what());
  }
}

}  // namespace

DiscoveryResult run_discovery(const DiscoveryConfig& config,
                              const std::vector<TrajectoryPool>& search,
                              const std::vector<TrajectoryPool>& held_out, Explorer& explorer) {
  if (config.rounds < 1) throw Error(ErrorCode::kNoRounds, "discovery needs at least one round");
  if (search.empty()) throw Error(ErrorCode::kUsage, "discovery needs a nonempty search set");
  std::set<std::string> search_ids;
  for (const auto& p : search) search_ids.insert(p.question_id);
  for (const auto& p : held_out) {
    if (search_ids.count(p.question_id)) {
      throw Error(ErrorCode::kUsage,
                  "question '" + p.question_id + "' is in both the search and eval sets");
    }
  }
  EvalConfig eval = config.eval;
  if (!config.selection_grid.empty()) eval.beta_grid = config.selection_grid;
  validate_eval_config(eval);

  DiscoveryResult result;
  for (int round = 1; round <= config.rounds; ++round) {
    std::string prompt = config.prompt;
    std::optional<std::string> rejection;
    ControllerSpec spec;
    std::string commentary;
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (rejection) prompt = config.prompt + "\nYour previous proposal was rejected: " + *rejection;
      const std::string request = make_propose_request(round, prompt, result.history).dump();
      result.requests.push_back(request);
      std::string response;
      try {
        response = explorer.exchange(request);
      } catch (const Error&) {
        persist(config, result.history, std::nullopt, std::nullopt);
        throw;
      }
      rejection = parse_proposal(response, spec, commentary);
      if (!rejection) break;
    }
    if (rejection) {
      HistoryEntry failed;
      failed.round = round;
      failed.failed = true;
      failed.failure_reason = *rejection;
      result.history.push_back(std::move(failed));
      continue;
    }
    result.history.push_back(
        evaluate_candidate(round, spec, std::move(commentary), search, eval, config.trace_samples));
  }

  try {
    result.selection = select_controller(result.history, eval.beta_grid);
  } catch (const Error&) {
    persist(config, result.history, std::nullopt, std::nullopt);
    throw;
  }
  if (!held_out.empty()) {
    result.held_out = evaluate(result.selection.spec, result.selection.beta, held_out, eval).metrics;
  }
  persist(config, result.history, result.selection, result.held_out);
  return result;
}

DiscoveryResult run_discovery(const DiscoveryConfig& config) {
  if (config.rounds < 1) throw Error(ErrorCode::kNoRounds, "discovery needs at least one round");
  std::vector<TrajectoryPool> search;
  for (const auto& path : config.search_pools) {
    auto pools = load_pools(path);
    search.insert(search.end(), pools.begin(), pools.end());
  }
  std::vector<TrajectoryPool> held_out;
  for (const auto& path : config.eval_pools) {
    auto pools = load_pools(path);
    held_out.insert(held_out.end(), pools.begin(), pools.end());
  }
  std::unique_ptr<Explorer> explorer;
  if (config.explorer_command.empty()) {
    explorer = std::make_unique<ScriptedMutationExplorer>(config.explorer_seed);
  } else {
    explorer = std::make_unique<SubprocessExplorer>(config.explorer_command);
  }
  return run_discovery(config, search, held_out, *explorer);
}

}  // namespace ttsreplay
