#include "ttsreplay/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "ttsreplay/error.hpp"
#include "ttsreplay/spec_json.hpp"

namespace ttsreplay {

using nlohmann::json;

namespace {

enum class Field { kBase, kCoefficient };

struct Mutation {
  const char* name;
  double scale;   // multiplicative step
  double offset;  // additive step, applied after scaling
  Field field;    // which beta_map field, when the parameter is mapped
};

// Width first, then stopping sharpness, then the remaining knobs.
constexpr Mutation kSchedule[] = {
    {"initial_width", 4.0, 0.0, Field::kBase},
    {"initial_width", 4.0, 0.0, Field::kBase},
    {"ema_alpha", 2.0, 0.0, Field::kBase},
    {"stop_conf_threshold", 0.9, 0.0, Field::kBase},
    {"max_width", 1.0, 4.0, Field::kBase},
    {"abandon_patience", 1.0, 1.0, Field::kBase},
    {"burst_aligned", 1.0, -1.0, Field::kCoefficient},
    {"widen_delta_threshold", 1.0, 0.05, Field::kBase},
};
constexpr std::size_t kScheduleSize = std::size(kSchedule);

/// Applies one schedule step; returns false when it would not change the
/// spec or would make it invalid.
bool apply_mutation(ControllerSpec& spec, const Mutation& mut) {
  const auto& table = parameter_table(spec.kind);
  const auto info = std::find_if(table.begin(), table.end(),
                                 [&](const ParameterInfo& p) { return p.name == mut.name; });
  if (info == table.end()) return false;

  auto step = [&](double v, double lo, double hi) {
    double next = v * mut.scale + mut.offset;
    if (info->integer) next = std::round(next);
    return std::clamp(next, lo, hi);
  };

  ControllerSpec candidate = spec;
  auto mapped = std::find_if(candidate.beta_map.begin(), candidate.beta_map.end(),
                             [&](const BetaMapEntry& e) { return e.name == mut.name; });
  if (mapped != candidate.beta_map.end()) {
    double& field = mut.field == Field::kBase ? mapped->base : mapped->coefficient;
    const double lo = mut.field == Field::kBase ? info->lower : 0.0;
    const double hi = mut.field == Field::kBase ? info->upper : 1e6;
    const double next = step(field, lo, hi);
    if (next == field) return false;
    field = next;
  } else {
    if (mut.field == Field::kCoefficient) return false;
    const auto it = candidate.parameters.find(mut.name);
    const double current = it != candidate.parameters.end() ? it->second : info->default_value;
    const double next = step(current, info->lower, info->upper);
    if (next == current) return false;
    candidate.parameters[mut.name] = next;
  }
  try {
    validate_spec(candidate);
  } catch (const Error&) {
    return false;
  }
  spec = std::move(candidate);
  return true;
}

}  // namespace

ControllerSpec scripted_mutation(const std::vector<HistoryEntry>& history, std::uint64_t seed) {
  const bool any_success = std::any_of(history.begin(), history.end(),
                                       [](const HistoryEntry& e) { return !e.failed; });
  if (!any_success) return default_cmc_spec();

  ControllerSpec spec = select_controller(history).spec;
  const std::size_t start = (history.size() - 1 + seed % kScheduleSize) % kScheduleSize;
  for (std::size_t k = 0; k < kScheduleSize; ++k) {
    if (apply_mutation(spec, kSchedule[(start + k) % kScheduleSize])) return spec;
  }
  return spec;
}

std::string ScriptedMutationExplorer::exchange(const std::string& request_line) {
  json response;
  try {
    const json request = json::parse(request_line);
    if (request.at("type") != "propose") throw Error(ErrorCode::kFormat, "expected a propose request");
    std::vector<HistoryEntry> history;
    for (const auto& e : request.at("history")) history.push_back(history_entry_from_json(e));
    const ControllerSpec spec = scripted_mutation(history, seed_);
    response = {{"type", "proposal"},
                {"spec", spec_to_json(spec)},
                {"commentary", history.empty() ? "baseline round policy"
                                               : "single-parameter mutation of the best entry"}};
  } catch (const std::exception& e) {
    response = {{"type", "error"}, {"message", e.what()}};
  }
  return response.dump();
}

json make_propose_request(int round, const std::string& prompt,
                          const std::vector<HistoryEntry>& history) {
  json entries = json::array();
  for (const auto& e : history) entries.push_back(history_entry_to_json(e));
  return {{"type", "propose"}, {"round", round}, {"prompt", prompt}, {"history", std::move(entries)}};
}

SubprocessExplorer::SubprocessExplorer(std::vector<std::string> argv) : argv_(std::move(argv)) {
  if (argv_.empty()) throw Error(ErrorCode::kExplorerUnavailable, "empty explorer command");
  // A dead child must surface as a write error, not kill the driver.
  std::signal(SIGPIPE, SIG_IGN);

  int down[2];  // driver -> child stdin
  int up[2];    // child stdout -> driver
  if (pipe2(down, O_CLOEXEC) != 0) throw Error(ErrorCode::kExplorerUnavailable, std::strerror(errno));
  if (pipe2(up, O_CLOEXEC) != 0) {
    close(down[0]);
    close(down[1]);
    throw Error(ErrorCode::kExplorerUnavailable, std::strerror(errno));
  }
  // Failed exec is reported through this pipe, which closes on success.
  int status_pipe[2];
  if (pipe2(status_pipe, O_CLOEXEC) != 0) {
    for (int fd : {down[0], down[1], up[0], up[1]}) close(fd);
    throw Error(ErrorCode::kExplorerUnavailable, std::strerror(errno));
  }

  std::vector<char*> args;
  for (auto& a : argv_) args.push_back(a.data());
  args.push_back(nullptr);

  pid_ = fork();
  if (pid_ < 0) {
    for (int fd : {down[0], down[1], up[0], up[1], status_pipe[0], status_pipe[1]}) close(fd);
    throw Error(ErrorCode::kExplorerUnavailable, std::strerror(errno));
  }
  if (pid_ == 0) {
    dup2(down[0], STDIN_FILENO);
    dup2(up[1], STDOUT_FILENO);
    execvp(args[0], args.data());
    const int err = errno;
    [[maybe_unused]] auto n = write(status_pipe[1], &err, sizeof err);
    _exit(127);
  }
  close(down[0]);
  close(up[1]);
  close(status_pipe[1]);
  int child_errno = 0;
  const auto got = read(status_pipe[0], &child_errno, sizeof child_errno);
  close(status_pipe[0]);
  to_child_ = fdopen(down[1], "w");
  from_child_ = fdopen(up[0], "r");
  if (got > 0) {
    shutdown();
    throw Error(ErrorCode::kExplorerUnavailable,
                "cannot launch '" + argv_[0] + "': " + std::strerror(child_errno));
  }
}

SubprocessExplorer::~SubprocessExplorer() { shutdown(); }

void SubprocessExplorer::shutdown() {
  if (to_child_) std::fclose(to_child_);
  if (from_child_) std::fclose(from_child_);
  to_child_ = from_child_ = nullptr;
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string SubprocessExplorer::exchange(const std::string& request_line) {
  if (!to_child_ || !from_child_) throw Error(ErrorCode::kExplorerUnavailable, "explorer closed");
  if (std::fputs(request_line.c_str(), to_child_) < 0 || std::fputc('\n', to_child_) == EOF ||
      std::fflush(to_child_) != 0) {
    throw Error(ErrorCode::kExplorerUnavailable, "explorer stdin closed");
  }
  std::string line;
  for (int c; (c = std::fgetc(from_child_)) != EOF;) {
    if (c == '\n') return line;
    line.push_back(static_cast<char>(c));
  }
  throw Error(ErrorCode::kExplorerUnavailable, "explorer closed its output stream");
}

}  // namespace ttsreplay
