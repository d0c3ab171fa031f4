#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpolab/difficulty.hpp"

namespace grpolab {

enum class SelectionPolicy { hardest, easiest, middle, random };

std::string to_string(SelectionPolicy policy);
SelectionPolicy selection_policy_from_string(const std::string& s);
inline constexpr SelectionPolicy kAllPolicies[] = {SelectionPolicy::hardest, SelectionPolicy::easiest,
                                                   SelectionPolicy::middle, SelectionPolicy::random};

struct SelectionSummary {
  double mean_p_hat = 0.0;
  double min_p_hat = 0.0;
  double max_p_hat = 0.0;
  bool operator==(const SelectionSummary&) const = default;
};

struct SelectionResult {
  SelectionPolicy policy = SelectionPolicy::random;
  double fraction = 0.1;
  std::vector<std::string> selected_ids;
  std::uint64_t selection_seed = 0;
  SelectionSummary summary;
  bool operator==(const SelectionResult&) const = default;
};

// floor(fraction * pool_size), tolerant to binary rounding of the product.
std::size_t selection_budget(double fraction, std::size_t pool_size);

// hardest: smallest p_hat; easiest: largest p_hat; middle: smallest distance to
// the median p_hat; random: uniform without replacement. Ties go to the
// lexicographically smaller task_id. Only `random` reads the seed.
SelectionResult select(const std::vector<DifficultyEstimate>& estimates, SelectionPolicy policy,
                       double fraction, std::uint64_t seed);

void to_json(nlohmann::json& j, const SelectionResult& r);
void from_json(const nlohmann::json& j, SelectionResult& r);

// Looks up the selected tasks (in selection order) from `pool`.
std::vector<TaskInstance> gather_tasks(const std::vector<TaskInstance>& pool,
                                       const std::vector<std::string>& ids);

}  // namespace grpolab
