#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

struct DifficultyEstimate {
  std::string task_id;
  int k = 0;
  int successes = 0;
  double p_hat = 0.0;  // successes / k
  double probe_temperature = 1.0;
  bool operator==(const DifficultyEstimate&) const = default;
};

// Default probe sample counts per task family.
int default_probe_k(TaskKind kind);

// Samples k trajectories per task from `base` and records the success rate. Each
// task draws from its own stream keyed by (seed, task id), so the result does
// not depend on pool order or thread count. Output order follows the input.
std::vector<DifficultyEstimate> probe_pool(const PolicyParams& base,
                                           const std::vector<TaskInstance>& tasks, int k,
                                           double temperature, std::uint64_t seed);

struct ProbeCacheKey {
  std::uint64_t policy_hash = 0;
  std::uint64_t pool_hash = 0;
  int k = 0;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool operator==(const ProbeCacheKey&) const = default;
};

ProbeCacheKey make_probe_key(const PolicyParams& base, const std::vector<TaskInstance>& tasks,
                             int k, double temperature, std::uint64_t seed);

void to_json(nlohmann::json& j, const DifficultyEstimate& e);
void from_json(const nlohmann::json& j, DifficultyEstimate& e);
void to_json(nlohmann::json& j, const ProbeCacheKey& k);
void from_json(const nlohmann::json& j, ProbeCacheKey& k);

// `.difficulty.jsonl`: a header line {"cache_key": {...}} then one estimate per line.
std::string serialize_estimates(const ProbeCacheKey& key,
                                const std::vector<DifficultyEstimate>& estimates);
struct EstimateFile {
  ProbeCacheKey key;
  std::vector<DifficultyEstimate> estimates;
};
EstimateFile parse_estimates(const std::string& text);

// Reuses `path` when its header matches the key; otherwise probes and rewrites it.
std::vector<DifficultyEstimate> probe_pool_cached(const std::string& path, const PolicyParams& base,
                                                  const std::vector<TaskInstance>& tasks, int k,
                                                  double temperature, std::uint64_t seed,
                                                  bool* cache_hit = nullptr);

}  // namespace grpolab
