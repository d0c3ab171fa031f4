#include "grpolab/difficulty.hpp"

#include <sstream>

#include "grpolab/errors.hpp"
#include "grpolab/io.hpp"
#include "grpolab/parallel.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

int default_probe_k(TaskKind kind) { return kind == TaskKind::shuffled_objects ? 10 : 5; }

std::vector<DifficultyEstimate> probe_pool(const PolicyParams& base,
                                           const std::vector<TaskInstance>& tasks, int k,
                                           double temperature, std::uint64_t seed) {
  if (k < 1) throw ParameterError("probe k must be >= 1");
  if (!(temperature > 0.0)) throw ParameterError("probe temperature must be positive");
  std::vector<DifficultyEstimate> out(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const TaskInstance& task = tasks[i];
    Rng rng(derive_seed(seed, {fnv1a(task.id)}));
    int successes = 0;
    for (int s = 0; s < k; ++s) {
      const Trajectory traj = sample_trajectory(base, task, temperature, rng);
      successes += check_correct(task, traj.derived_answer) ? 1 : 0;
    }
    out[i] = {task.id, k, successes, static_cast<double>(successes) / k, temperature};
  });
  return out;
}

ProbeCacheKey make_probe_key(const PolicyParams& base, const std::vector<TaskInstance>& tasks,
                             int k, double temperature, std::uint64_t seed) {
  return {params_hash(base), fnv1a(nlohmann::json(tasks).dump()), k, temperature, seed};
}

void to_json(nlohmann::json& j, const DifficultyEstimate& e) {
  j = nlohmann::json{{"task_id", e.task_id},
                     {"k", e.k},
                     {"successes", e.successes},
                     {"p_hat", e.p_hat},
                     {"probe_temperature", e.probe_temperature}};
}

void from_json(const nlohmann::json& j, DifficultyEstimate& e) {
  e.task_id = j.at("task_id").get<std::string>();
  e.k = j.at("k").get<int>();
  e.successes = j.at("successes").get<int>();
  e.p_hat = j.at("p_hat").get<double>();
  e.probe_temperature = j.value("probe_temperature", 1.0);
  if (e.k < 1 || e.successes < 0 || e.successes > e.k ||
      e.p_hat != static_cast<double>(e.successes) / e.k)
    throw ConfigError("inconsistent difficulty estimate for " + e.task_id);
}

void to_json(nlohmann::json& j, const ProbeCacheKey& k) {
  j = nlohmann::json{{"policy_hash", hex64(k.policy_hash)},
                     {"pool_hash", hex64(k.pool_hash)},
                     {"k", k.k},
                     {"temperature", k.temperature},
                     {"seed", k.seed}};
}

void from_json(const nlohmann::json& j, ProbeCacheKey& k) {
  k.policy_hash = parse_hex64(j.at("policy_hash").get<std::string>());
  k.pool_hash = parse_hex64(j.at("pool_hash").get<std::string>());
  k.k = j.at("k").get<int>();
  k.temperature = j.at("temperature").get<double>();
  k.seed = j.at("seed").get<std::uint64_t>();
}

std::string serialize_estimates(const ProbeCacheKey& key,
                                const std::vector<DifficultyEstimate>& estimates) {
  std::string out = nlohmann::json{{"cache_key", key}}.dump() + "\n";
  for (const auto& e : estimates) out += nlohmann::json(e).dump() + "\n";
  return out;
}

EstimateFile parse_estimates(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  EstimateFile file;
  try {
    if (!std::getline(in, line)) throw ConfigError("empty difficulty file");
    file.key = nlohmann::json::parse(line).at("cache_key").get<ProbeCacheKey>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      file.estimates.push_back(nlohmann::json::parse(line).get<DifficultyEstimate>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed difficulty file: ") + e.what());
  }
  return file;
}

std::vector<DifficultyEstimate> probe_pool_cached(const std::string& path, const PolicyParams& base,
                                                  const std::vector<TaskInstance>& tasks, int k,
                                                  double temperature, std::uint64_t seed,
                                                  bool* cache_hit) {
  const ProbeCacheKey key = make_probe_key(base, tasks, k, temperature, seed);
  if (file_exists(path)) {
    try {
      EstimateFile cached = parse_estimates(read_file(path));
      if (cached.key == key && cached.estimates.size() == tasks.size()) {
        if (cache_hit) *cache_hit = true;
        return cached.estimates;
      }
    } catch (const ConfigError&) {
      // Unreadable cache: fall through and overwrite.
    }
  }
  if (cache_hit) *cache_hit = false;
  auto estimates = probe_pool(base, tasks, k, temperature, seed);
  write_file(path, serialize_estimates(key, estimates));
  return estimates;
}

}  // namespace grpolab
