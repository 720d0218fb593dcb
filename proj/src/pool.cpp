#include "ttsreplay/pool.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ttsreplay/error.hpp"
#include "ttsreplay/random.hpp"

namespace ttsreplay {

using nlohmann::json;

std::string answer_label(const Answer& answer) {
  return answer ? *answer : std::string("no-answer");
}

std::string canonical_answer(std::string_view raw) {
  constexpr std::string_view kSpace = " \t\r\n\f\v";
  const auto first = raw.find_first_not_of(kSpace);
  if (first == std::string_view::npos) return {};
  const auto last = raw.find_last_not_of(kSpace);
  return std::string(raw.substr(first, last - first + 1));
}

int TrajectoryPool::max_depth() const {
  int depth = 0;
  for (const auto& t : trajectories) depth = std::max(depth, t.length());
  return depth;
}

void validate_pool(const TrajectoryPool& pool) {
  auto fail = [&](const std::string& rule) {
    throw Error(ErrorCode::kInvalidPool, "question '" + pool.question_id + "': " + rule);
  };
  if (pool.question_id.empty()) fail("question_id must be nonempty");
  if (pool.delta_tokens < 1) fail("delta_tokens must be positive");
  if (pool.trajectories.empty()) fail("pool must contain at least one trajectory");
  for (std::size_t i = 0; i < pool.trajectories.size(); ++i) {
    const auto& intervals = pool.trajectories[i].intervals;
    const std::string where = "trajectory " + std::to_string(i);
    if (intervals.empty()) fail(where + " has no intervals");
    for (std::size_t k = 0; k < intervals.size(); ++k) {
      const int tokens = intervals[k].tokens;
      const bool last = k + 1 == intervals.size();
      if (!last && tokens != pool.delta_tokens) {
        fail(where + " interval " + std::to_string(k + 1) + " has " + std::to_string(tokens) +
             " tokens; non-final intervals must have exactly delta_tokens=" +
             std::to_string(pool.delta_tokens));
      }
      if (last && (tokens < 1 || tokens > pool.delta_tokens)) {
        fail(where + " final interval has " + std::to_string(tokens) +
             " tokens; must be in [1, delta_tokens]");
      }
    }
  }
}

namespace {

json pool_to_json(const TrajectoryPool& pool) {
  json trajectories = json::array();
  for (const auto& t : pool.trajectories) {
    json intervals = json::array();
    for (const auto& iv : t.intervals) {
      json answer = iv.answer ? json(*iv.answer) : json(nullptr);
      intervals.push_back({{"tokens", iv.tokens}, {"answer", std::move(answer)}});
    }
    trajectories.push_back(std::move(intervals));
  }
  return {{"question_id", pool.question_id},
          {"ground_truth", pool.ground_truth},
          {"delta_tokens", pool.delta_tokens},
          {"trajectories", std::move(trajectories)}};
}

[[noreturn]] void format_error(std::string_view locus, const std::string& what) {
  throw Error(ErrorCode::kFormat, std::string(locus) + ": " + what);
}

const json& require(const json& obj, const char* key, std::string_view locus) {
  auto it = obj.find(key);
  if (it == obj.end()) format_error(locus, std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace

TrajectoryPool parse_pool_record(std::string_view line, std::string_view locus) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    format_error(locus, e.what());
  }
  if (!record.is_object()) format_error(locus, "record must be an object");

  TrajectoryPool pool;
  const auto& qid = require(record, "question_id", locus);
  const auto& truth = require(record, "ground_truth", locus);
  const auto& delta = require(record, "delta_tokens", locus);
  const auto& trajectories = require(record, "trajectories", locus);
  if (!qid.is_string()) format_error(locus, "question_id must be a string");
  if (!truth.is_string()) format_error(locus, "ground_truth must be a string");
  if (!delta.is_number_integer()) format_error(locus, "delta_tokens must be an integer");
  if (!trajectories.is_array()) format_error(locus, "trajectories must be an array");

  pool.question_id = qid.get<std::string>();
  pool.ground_truth = canonical_answer(truth.get<std::string>());
  pool.delta_tokens = delta.get<int>();
  for (const auto& t : trajectories) {
    if (!t.is_array()) format_error(locus, "each trajectory must be an array of intervals");
    Trajectory traj;
    for (const auto& iv : t) {
      if (!iv.is_object()) format_error(locus, "each interval must be an object");
      const auto& tokens = require(iv, "tokens", locus);
      const auto& answer = require(iv, "answer", locus);
      if (!tokens.is_number_integer()) format_error(locus, "interval tokens must be an integer");
      Interval interval{tokens.get<int>(), std::nullopt};
      if (answer.is_string()) {
        interval.answer = canonical_answer(answer.get<std::string>());
      } else if (!answer.is_null()) {
        format_error(locus, "interval answer must be a string or null");
      }
      traj.intervals.push_back(std::move(interval));
    }
    pool.trajectories.push_back(std::move(traj));
  }
  validate_pool(pool);
  return pool;
}

std::string pool_record(const TrajectoryPool& pool) { return pool_to_json(pool).dump(); }

std::vector<TrajectoryPool> read_pools(std::istream& in, std::string_view source) {
  std::vector<TrajectoryPool> pools;
  std::set<std::string> seen;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (canonical_answer(line).empty()) continue;
    const std::string locus = std::string(source) + ":" + std::to_string(lineno);
    pools.push_back(parse_pool_record(line, locus));
    if (!seen.insert(pools.back().question_id).second) {
      throw Error(ErrorCode::kInvalidPool,
                  locus + ": duplicate question_id '" + pools.back().question_id + "'");
    }
  }
  return pools;
}

void write_pools(std::ostream& out, const std::vector<TrajectoryPool>& pools) {
  for (const auto& pool : pools) out << pool_record(pool) << '\n';
}

std::vector<TrajectoryPool> load_pools(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFormat, path.string() + ": cannot open dataset");
  return read_pools(in, path.string());
}

void save_pools(const std::filesystem::path& path, const std::vector<TrajectoryPool>& pools) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kFormat, path.string() + ": cannot open for writing");
  write_pools(out, pools);
}

void validate_synthetic_config(const SyntheticGenConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidSpec, what); };
  if (c.question_count < 1) fail("question_count must be >= 1");
  if (c.pool_size < 1) fail("pool_size must be >= 1");
  if (c.max_depth < 1) fail("max_depth must be >= 1");
  if (c.min_depth < 0 || c.min_depth > c.max_depth) fail("min_depth must be in [0, max_depth]");
  if (!(c.correct_rate >= 0.0 && c.correct_rate <= 1.0)) fail("correct_rate must be in [0,1]");
  if (!(c.no_answer_rate >= 0.0 && c.no_answer_rate <= 1.0)) fail("no_answer_rate must be in [0,1]");
  if (c.wrong_answer_count < 1) fail("wrong_answer_count must be >= 1");
  if (c.delta_tokens < 1) fail("delta_tokens must be >= 1");
  if (static_cast<int>(c.stabilize_weights.size()) > c.max_depth) {
    fail("stabilize_weights cannot extend past max_depth");
  }
  double total = 0.0;
  for (double w : c.stabilize_weights) {
    if (!(w >= 0.0)) fail("stabilize_weights must be nonnegative");
    total += w;
  }
  if (!c.stabilize_weights.empty() && total <= 0.0) fail("stabilize_weights must not sum to 0");
}

std::vector<TrajectoryPool> generate_synthetic(const SyntheticGenConfig& config) {
  validate_synthetic_config(config);
  std::vector<double> weights = config.stabilize_weights;
  if (weights.empty()) weights.assign(config.max_depth, 1.0);
  std::vector<double> cumulative(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
  const double total = cumulative.back();
  const int min_depth = config.min_depth == 0 ? config.max_depth : config.min_depth;

  std::vector<TrajectoryPool> pools;
  pools.reserve(config.question_count);
  for (int q = 0; q < config.question_count; ++q) {
    const int index = q + config.id_offset;
    TrajectoryPool pool;
    pool.question_id = config.id_prefix + std::to_string(index);
    pool.delta_tokens = config.delta_tokens;
    SplitMix64 rng(hash_combine(config.seed, stable_hash64(pool.question_id)));

    // Candidate answers: index 0 is the truth, 1..K are wrong.
    const auto base = static_cast<long long>(rng.below(100000));
    std::vector<std::string> candidates;
    for (int k = 0; k <= config.wrong_answer_count; ++k) {
      candidates.push_back(std::to_string(base + k));
    }
    pool.ground_truth = candidates[0];

    for (int n = 0; n < config.pool_size; ++n) {
      const int length =
          min_depth + static_cast<int>(rng.below(config.max_depth - min_depth + 1));
      const double u = rng.uniform01() * total;
      int stabilize = static_cast<int>(
          std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin()) + 1;
      stabilize = std::min({stabilize, static_cast<int>(weights.size()), length});

      const bool correct = rng.uniform01() < config.correct_rate;
      const std::size_t final_index =
          correct ? 0 : 1 + static_cast<std::size_t>(rng.below(config.wrong_answer_count));

      Trajectory traj;
      for (int k = 1; k <= length; ++k) {
        Interval iv;
        iv.tokens = k < length ? config.delta_tokens
                               : 1 + static_cast<int>(rng.below(config.delta_tokens));
        if (k >= stabilize) {
          iv.answer = candidates[final_index];
        } else if (rng.uniform01() < config.no_answer_rate) {
          iv.answer = std::nullopt;
        } else {
          // Pre-stabilization noise never matches the answer it settles on.
          std::size_t pick = rng.below(candidates.size() - 1);
          if (pick >= final_index) ++pick;
          iv.answer = candidates[pick];
        }
        traj.intervals.push_back(std::move(iv));
      }
      pool.trajectories.push_back(std::move(traj));
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

std::vector<int> identity_permutation(int n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  return perm;
}

std::vector<int> subsample_permutation(const TrajectoryPool& pool, int repeat_index,
                                       std::uint64_t seed) {
  std::uint64_t key = stable_hash64(pool.question_id);
  key = hash_combine(key, static_cast<std::uint64_t>(repeat_index));
  key = hash_combine(key, seed);
  SplitMix64 rng(key);
  std::vector<int> perm = identity_permutation(pool.size());
  for (int i = pool.size() - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

}  // namespace ttsreplay
