#include "ttsreplay/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttsreplay/discovery.hpp"
#include "ttsreplay/error.hpp"
#include "ttsreplay/evaluation.hpp"
#include "ttsreplay/pool.hpp"
#include "ttsreplay/spec_json.hpp"
#include "ttsreplay/tracing.hpp"

#ifndef TTSREPLAY_VERSION
#define TTSREPLAY_VERSION "dev"
#endif

namespace ttsreplay {

using nlohmann::json;
namespace fs = std::filesystem;

std::string resolve_dataset_path(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
  if (const char* dir = std::getenv("TTSREPLAY_DATA_DIR"); dir && *dir) {
    const fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

ControllerSpec resolve_spec_argument(const std::string& text,
                                     const std::vector<std::string>& overrides) {
  ControllerSpec spec;
  if (!text.empty() && text.front() == '{') {
    try {
      spec = spec_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kInvalidSpec, std::string("inline spec: ") + e.what());
    }
  } else if (fs::exists(text)) {
    std::ifstream in(text);
    try {
      spec = spec_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kInvalidSpec, text + ": " + e.what());
    }
  } else {
    spec = default_spec(parse_controller_kind(text));
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kUsage, "--set expects name=value, got '" + kv + "'");
    }
    const std::string name = kv.substr(0, eq);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(kv.substr(eq + 1), &used);
      if (used != kv.size() - eq - 1) throw std::invalid_argument(kv);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kUsage, "--set value for '" + name + "' is not a number");
    }
    // An override pins the parameter, so drop any beta mapping for it.
    std::erase_if(spec.beta_map, [&](const BetaMapEntry& e) { return e.name == name; });
    spec.parameters[name] = value;
  }
  validate_spec(spec);
  return spec;
}

namespace {

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kUsage, "bad grid value '" + item + "'");
    }
  }
  return grid;
}

std::vector<TrajectoryPool> load_all(const std::vector<std::string>& paths) {
  std::vector<TrajectoryPool> pools;
  for (const auto& p : paths) {
    auto loaded = load_pools(resolve_dataset_path(p));
    pools.insert(pools.end(), std::make_move_iterator(loaded.begin()),
                 std::make_move_iterator(loaded.end()));
  }
  return pools;
}

/// Emits `table` to `out` and, when set, to the file sink.
void emit(std::ostream& out, const std::string& table, const std::string& sink) {
  out << table;
  if (!sink.empty()) {
    std::ofstream file(sink, std::ios::binary);
    if (!file) throw Error(ErrorCode::kFormat, sink + ": cannot write output");
    file << table;
  }
}

struct ManifestSink {
  std::string path;

  void write(std::ostream& err, const json& manifest) const {
    if (path.empty()) {
      err << manifest.dump() << '\n';
      return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::kFormat, path + ": cannot write manifest");
    file << manifest.dump(2) << '\n';
  }
};

json base_manifest(const std::string& command, const std::vector<std::string>& args) {
  return {{"command", command}, {"args", args}, {"version", TTSREPLAY_VERSION}};
}

json eval_config_json(const EvalConfig& c) {
  return {{"repeats", c.repeats},
          {"seed", c.seed},
          {"gamma", c.gamma},
          {"beta_grid", c.beta_grid},
          {"kappa_probe", c.cost_model.kappa_probe},
          {"workers", c.workers},
          {"trace_repeats", c.trace_repeats}};
}

std::string metrics_table(const std::vector<EvalMetrics>& rows) {
  std::string out =
      "beta,accuracy,mean_intervals,mean_tokens,objective,mean_probes,episodes,forced\n";
  char buf[256];
  for (const auto& m : rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.6f,%.3f,%.6f,%.6f,%d,%d\n", m.beta, m.accuracy,
                  m.mean_intervals, m.mean_tokens, m.mean_objective, m.mean_probes, m.episodes,
                  m.forced);
    out += buf;
  }
  return out;
}

std::string episodes_table(const std::vector<EpisodeResult>& episodes) {
  std::string out = "question_id,repeat,answer,correct,intervals,tokens,cost,probes,forced\n";
  char buf[160];
  for (const auto& e : episodes) {
    std::snprintf(buf, sizeof buf, ",%d,%lld,%.6f,%d,%d\n", e.interval_cost,
                  static_cast<long long>(e.token_cost), e.cost, e.probes, e.forced_answer ? 1 : 0);
    out += e.question_id + "," + std::to_string(e.repeat_index) + "," + answer_label(e.answer) +
           "," + (e.correct ? "1" : "0") + buf;
  }
  return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Offline replay engine and discovery harness for width/depth test-time-scaling "
               "controllers",
               "ttsreplay"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TTSREPLAY_VERSION);

  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "Write the run manifest here instead of stderr");

  // gen-synth
  SyntheticGenConfig gen;
  std::string gen_out;
  std::string gen_weights;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic trajectory dataset");
  gen_cmd->add_option("--out", gen_out, "Dataset file (stdout when omitted)");
  gen_cmd->add_option("--questions", gen.question_count)->capture_default_str();
  gen_cmd->add_option("--pool-size", gen.pool_size)->capture_default_str();
  gen_cmd->add_option("--max-depth", gen.max_depth)->capture_default_str();
  gen_cmd->add_option("--min-depth", gen.min_depth, "0 = every trajectory runs to max-depth")
      ->capture_default_str();
  gen_cmd->add_option("--correct-rate", gen.correct_rate)->capture_default_str();
  gen_cmd->add_option("--stabilize-weights", gen_weights,
                      "Comma-separated weights over stabilization depth 1..k");
  gen_cmd->add_option("--wrong-answers", gen.wrong_answer_count)->capture_default_str();
  gen_cmd->add_option("--no-answer-rate", gen.no_answer_rate)->capture_default_str();
  gen_cmd->add_option("--delta", gen.delta_tokens)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--id-prefix", gen.id_prefix)->capture_default_str();
  gen_cmd->add_option("--id-offset", gen.id_offset)->capture_default_str();

  // validate
  std::vector<std::string> validate_pools;
  auto* validate_cmd = app.add_subcommand("validate", "Validate datasets and summarize them");
  validate_cmd->add_option("--pools", validate_pools, "Dataset file(s)")->required();

  // eval / sweep share most flags
  std::string spec_text;
  std::vector<std::string> overrides;
  std::vector<std::string> pool_paths;
  EvalConfig eval;
  double beta = 1.0;
  std::string grid_text;
  std::string table_out;
  std::string trace_out;
  std::string episodes_out;
  auto add_eval_flags = [&](CLI::App* cmd) {
    cmd->add_option("--spec", spec_text, "Controller kind, spec file, or inline JSON")->required();
    cmd->add_option("--set", overrides, "Parameter override name=value (repeatable)");
    cmd->add_option("--pools", pool_paths, "Dataset file(s)")->required();
    cmd->add_option("--repeats", eval.repeats)->capture_default_str();
    cmd->add_option("--seed", eval.seed)->capture_default_str();
    cmd->add_option("--gamma", eval.gamma)->capture_default_str();
    cmd->add_option("--kappa", eval.cost_model.kappa_probe, "Probe cost in intervals")
        ->capture_default_str();
    cmd->add_option("--workers", eval.workers)->capture_default_str();
    cmd->add_option("--out", table_out, "Also write the table to this file");
  };
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate one controller at one beta");
  add_eval_flags(eval_cmd);
  eval_cmd->add_option("--beta", beta)->capture_default_str();
  eval_cmd->add_option("--trace-out", trace_out, "Write retained episode traces here");
  eval_cmd->add_option("--trace-repeats", eval.trace_repeats)->capture_default_str();
  eval_cmd->add_option("--episodes-out", episodes_out, "Write per-episode results here");

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep beta and print the scaling curve");
  add_eval_flags(sweep_cmd);
  sweep_cmd->add_option("--grid", grid_text, "Comma-separated beta grid")
      ->default_str("0.25,0.5,0.75,1.0");

  // discover
  std::string config_path;
  std::string history_out;
  int rounds_override = -1;
  auto* discover_cmd = app.add_subcommand("discover", "Run the discovery loop");
  discover_cmd->add_option("--config", config_path, "Discovery config JSON")->required();
  discover_cmd->add_option("--history", history_out, "History file (overrides the config)");
  discover_cmd->add_option("--rounds", rounds_override, "Round count (overrides the config)");

  // trace
  std::string trace_file;
  std::vector<std::string> trace_pools;
  auto* trace_cmd = app.add_subcommand("trace", "Digest a trace file");
  trace_cmd->add_option("--file", trace_file, "Trace file")->required();
  trace_cmd->add_option("--pools", trace_pools, "Replay each trace against these datasets");

  std::vector<std::string> argv_storage = args;
  std::reverse(argv_storage.begin(), argv_storage.end());
  try {
    app.parse(argv_storage);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  const ManifestSink manifest{manifest_path};
  try {
    if (*gen_cmd) {
      if (!gen_weights.empty()) gen.stabilize_weights = parse_grid(gen_weights);
      validate_synthetic_config(gen);
      json m = base_manifest("gen-synth", args);
      m["config"] = {{"questions", gen.question_count},   {"pool_size", gen.pool_size},
                     {"max_depth", gen.max_depth},        {"min_depth", gen.min_depth},
                     {"correct_rate", gen.correct_rate},  {"stabilize_weights", gen.stabilize_weights},
                     {"wrong_answers", gen.wrong_answer_count},
                     {"no_answer_rate", gen.no_answer_rate}, {"delta_tokens", gen.delta_tokens},
                     {"id_prefix", gen.id_prefix},        {"id_offset", gen.id_offset}};
      m["seed"] = gen.seed;
      m["outputs"] = {{"dataset", gen_out.empty() ? "<stdout>" : gen_out}};
      manifest.write(err, m);
      const auto pools = generate_synthetic(gen);
      if (gen_out.empty()) {
        write_pools(out, pools);
      } else {
        save_pools(gen_out, pools);
      }
      return kExitOk;
    }

    if (*validate_cmd) {
      json m = base_manifest("validate", args);
      m["config"] = {{"pools", validate_pools}};
      manifest.write(err, m);
      std::string table = "question_id,trajectories,max_depth,final_majority,majority_correct\n";
      int total = 0;
      for (const auto& path : validate_pools) {
        for (const auto& pool : load_pools(resolve_dataset_path(path))) {
          std::vector<Answer> finals;
          for (const auto& t : pool.trajectories) finals.push_back(t.final_answer());
          const Answer winner = majority_vote(finals);
          table += pool.question_id + "," + std::to_string(pool.size()) + "," +
                   std::to_string(pool.max_depth()) + "," + answer_label(winner) + "," +
                   (winner == pool.ground_truth ? "1" : "0") + "\n";
          ++total;
        }
      }
      out << table;
      err << "validated " << total << " pool(s)\n";
      return kExitOk;
    }

    if (*eval_cmd || *sweep_cmd) {
      const ControllerSpec spec = resolve_spec_argument(spec_text, overrides);
      if (*sweep_cmd) {
        eval.beta_grid = parse_grid(grid_text.empty() ? "0.25,0.5,0.75,1.0" : grid_text);
      } else {
        eval.beta_grid = {beta};
      }
      validate_eval_config(eval);
      json m = base_manifest(*eval_cmd ? "eval" : "sweep", args);
      m["config"] = eval_config_json(eval);
      m["config"]["spec"] = spec_to_json(spec);
      m["config"]["pools"] = pool_paths;
      m["seed"] = eval.seed;
      m["outputs"] = {{"table", table_out}, {"traces", trace_out}, {"episodes", episodes_out}};
      manifest.write(err, m);

      const auto pools = load_all(pool_paths);
      if (*sweep_cmd) {
        emit(out, curve_table(sweep(spec, pools, eval)), table_out);
        return kExitOk;
      }
      const EvalReport report = evaluate(spec, beta, pools, eval);
      emit(out, metrics_table({report.metrics}), table_out);
      if (!trace_out.empty()) {
        std::ofstream file(trace_out, std::ios::binary);
        if (!file) throw Error(ErrorCode::kFormat, trace_out + ": cannot write traces");
        for (const auto& t : report.traces) write_trace(file, t);
      }
      if (!episodes_out.empty()) {
        std::ofstream file(episodes_out, std::ios::binary);
        if (!file) throw Error(ErrorCode::kFormat, episodes_out + ": cannot write episodes");
        file << episodes_table(report.episodes);
      }
      return kExitOk;
    }

    if (*discover_cmd) {
      DiscoveryConfig config = load_discovery_config(config_path);
      if (!history_out.empty()) config.history_path = history_out;
      if (rounds_override >= 0) config.rounds = rounds_override;
      for (auto& p : config.search_pools) p = resolve_dataset_path(p);
      for (auto& p : config.eval_pools) p = resolve_dataset_path(p);
      json m = base_manifest("discover", args);
      m["config"] = discovery_config_to_json(config);
      m["seed"] = config.eval.seed;
      m["outputs"] = {{"history", config.history_path}};
      manifest.write(err, m);

      const DiscoveryResult result = run_discovery(config);
      std::string table = "round,status,beta,accuracy,mean_intervals,mean_tokens,objective\n";
      char buf[192];
      for (const auto& e : result.history) {
        if (e.failed) {
          table += std::to_string(e.round) + ",failed,,,,,\n";
          continue;
        }
        for (const auto& p : e.curve.points) {
          std::snprintf(buf, sizeof buf, "%d,ok,%.4f,%.6f,%.6f,%.3f,%.6f\n", e.round, p.beta,
                        p.accuracy, p.mean_intervals, p.mean_tokens, p.objective);
          table += buf;
        }
      }
      table += "\nselected_round,selected_beta,search_accuracy,search_mean_tokens,"
               "heldout_accuracy,heldout_mean_intervals,heldout_mean_tokens\n";
      const auto& s = result.selection;
      std::snprintf(buf, sizeof buf, "%d,%.4f,%.6f,%.3f,", s.round, s.beta, s.point.accuracy,
                    s.point.mean_tokens);
      table += buf;
      if (result.held_out) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.3f\n", result.held_out->accuracy,
                      result.held_out->mean_intervals, result.held_out->mean_tokens);
        table += buf;
      } else {
        table += ",,\n";
      }
      out << table;
      return kExitOk;
    }

    if (*trace_cmd) {
      json m = base_manifest("trace", args);
      m["config"] = {{"file", trace_file}, {"pools", trace_pools}};
      manifest.write(err, m);
      std::ifstream in(trace_file);
      if (!in) throw Error(ErrorCode::kFormat, trace_file + ": cannot open trace file");
      const auto traces = read_traces(in, trace_file);
      if (!trace_pools.empty()) {
        std::map<std::string, TrajectoryPool> by_id;
        for (auto& p : load_all(trace_pools)) by_id.emplace(p.question_id, std::move(p));
        for (const auto& t : traces) {
          const auto it = by_id.find(t.header.question_id);
          if (it == by_id.end()) {
            throw Error(ErrorCode::kTraceCorrupt,
                        "no pool for question '" + t.header.question_id + "'");
          }
          replay_trace(t, it->second, t.header.permutation);
        }
        err << "replayed " << traces.size() << " trace(s) exactly\n";
      }
      out << digest_table(digest(traces));
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kUsage || e.code() == ErrorCode::kNoRounds ? kExitUsage
                                                                             : kExitData;
  }
  return kExitUsage;
}

}  // namespace ttsreplay
