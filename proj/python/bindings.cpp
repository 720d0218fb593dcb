#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ttsreplay/cli.hpp"
#include "ttsreplay/controllers.hpp"
#include "ttsreplay/discovery.hpp"
#include "ttsreplay/error.hpp"
#include "ttsreplay/evaluation.hpp"
#include "ttsreplay/pool.hpp"
#include "ttsreplay/replay.hpp"
#include "ttsreplay/spec_json.hpp"

namespace py = pybind11;
using namespace ttsreplay;
using nlohmann::json;

// Specs, pools and reports cross the boundary as JSON text; the Python
// package decodes them.
namespace {

std::vector<TrajectoryPool> pools_from_text(const std::string& text) {
  std::istringstream in(text);
  return read_pools(in, "<python>");
}

ControllerSpec spec_from_text(const std::string& text) {
  ControllerSpec spec = spec_from_json(json::parse(text));
  validate_spec(spec);
  return spec;
}

std::string metrics_text(const EvalMetrics& m) {
  return json{{"beta", m.beta},
              {"accuracy", m.accuracy},
              {"mean_intervals", m.mean_intervals},
              {"mean_tokens", m.mean_tokens},
              {"mean_objective", m.mean_objective},
              {"mean_cost", m.mean_cost},
              {"mean_probes", m.mean_probes},
              {"episodes", m.episodes},
              {"forced", m.forced}}
      .dump();
}

json state_json(const ReplayState& s, const TrajectoryPool& pool, double kappa) {
  json branches = json::array();
  for (const auto& b : s.branches) {
    branches.push_back({{"branch_id", b.branch_id},
                        {"depth", b.depth},
                        {"active", b.active},
                        {"exhausted", b.exhausted},
                        {"tokens", b.tokens}});
  }
  json revealed = json::array();
  for (const auto& p : s.revealed) {
    revealed.push_back({{"branch_id", p.branch_id},
                        {"depth", p.depth},
                        {"answer", p.answer ? json(*p.answer) : json(nullptr)}});
  }
  json admissible = json::array();
  if (!s.terminated) {
    for (const auto& a : admissible_actions(s, pool)) admissible.push_back(to_string(a));
  }
  return {{"m", s.m()},
          {"branches", branches},
          {"revealed", revealed},
          {"terminated", s.terminated},
          {"cost", cost_of(s, {kappa})},
          {"interval_cost", interval_cost(s)},
          {"token_cost", token_cost(s)},
          {"admissible", admissible}};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deterministic replay engine for width-depth test-time controllers";

  static py::exception<Error> error_type(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
      err.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  py::class_<SyntheticGenConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("question_count", &SyntheticGenConfig::question_count)
      .def_readwrite("pool_size", &SyntheticGenConfig::pool_size)
      .def_readwrite("max_depth", &SyntheticGenConfig::max_depth)
      .def_readwrite("min_depth", &SyntheticGenConfig::min_depth)
      .def_readwrite("correct_rate", &SyntheticGenConfig::correct_rate)
      .def_readwrite("stabilize_weights", &SyntheticGenConfig::stabilize_weights)
      .def_readwrite("wrong_answer_count", &SyntheticGenConfig::wrong_answer_count)
      .def_readwrite("no_answer_rate", &SyntheticGenConfig::no_answer_rate)
      .def_readwrite("delta_tokens", &SyntheticGenConfig::delta_tokens)
      .def_readwrite("seed", &SyntheticGenConfig::seed)
      .def_readwrite("id_prefix", &SyntheticGenConfig::id_prefix)
      .def_readwrite("id_offset", &SyntheticGenConfig::id_offset);

  py::class_<EvalConfig>(m, "EvalConfig")
      .def(py::init<>())
      .def_readwrite("repeats", &EvalConfig::repeats)
      .def_readwrite("seed", &EvalConfig::seed)
      .def_readwrite("gamma", &EvalConfig::gamma)
      .def_readwrite("beta_grid", &EvalConfig::beta_grid)
      .def_readwrite("workers", &EvalConfig::workers)
      .def_property(
          "kappa_probe", [](const EvalConfig& c) { return c.cost_model.kappa_probe; },
          [](EvalConfig& c, double k) { c.cost_model.kappa_probe = k; });

  m.def("version", [] { return std::string(TTSREPLAY_PY_VERSION); });

  m.def("generate_synthetic", [](const SyntheticGenConfig& c) {
    std::ostringstream out;
    write_pools(out, generate_synthetic(c));
    return out.str();
  }, "JSONL text of a synthetic bench.");

  m.def("validate_pools", [](const std::string& text) {
    return static_cast<int>(pools_from_text(text).size());
  });

  m.def("default_spec", [](const std::string& kind) {
    return spec_to_json(default_spec(parse_controller_kind(kind))).dump();
  });

  m.def("resolve_spec", [](const std::string& text, const std::vector<std::string>& overrides) {
    return spec_to_json(resolve_spec_argument(text, overrides)).dump();
  }, py::arg("text"), py::arg("overrides") = std::vector<std::string>{});

  m.def("resolve_hyperparameters", [](const std::string& spec, double beta) {
    return resolve_hyperparameters(spec_from_text(spec), beta);
  });

  m.def("replay", [](const std::string& pool_text, const std::vector<int>& order,
                     const std::vector<std::string>& actions, double kappa) {
    const auto pools = pools_from_text(pool_text);
    if (pools.size() != 1) throw Error(ErrorCode::kUsage, "replay needs exactly one pool");
    const auto& pool = pools.front();
    ReplayState s = order.empty() ? initial_state(pool) : initial_state(pool, order);
    for (const auto& label : actions) s = apply_action(s, parse_action(label), pool);
    return state_json(s, pool, kappa).dump();
  }, py::arg("pool"), py::arg("order") = std::vector<int>{},
     py::arg("actions") = std::vector<std::string>{}, py::arg("kappa") = 0.0,
     "Applies action labels from s0 and returns the resulting state.");

  m.def("evaluate", [](const std::string& spec, double beta, const std::string& pools,
                       const EvalConfig& config) {
    const auto parsed = pools_from_text(pools);
    py::gil_scoped_release release;
    return metrics_text(evaluate(spec_from_text(spec), beta, parsed, config).metrics);
  });

  m.def("sweep", [](const std::string& spec, const std::string& pools, const EvalConfig& config) {
    const auto parsed = pools_from_text(pools);
    py::gil_scoped_release release;
    return curve_table(sweep(spec_from_text(spec), parsed, config));
  }, "CSV table, one row per beta.");

  m.def("run_discovery", [](const std::string& config_text) {
    const DiscoveryConfig config = discovery_config_from_json(json::parse(config_text));
    DiscoveryResult r;
    {
      py::gil_scoped_release release;
      r = run_discovery(config);
    }
    return discovery_record(config, r.history, r.selection, r.held_out).dump();
  }, "Runs the discovery loop from a config record; returns the history record.");

  m.def("cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = dispatch(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, "Runs one command line; returns (exit_code, stdout, stderr).");
}
