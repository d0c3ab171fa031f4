#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

struct EvalRecord {
  int checkpoint_step = 0;
  double exact_accuracy = 0.0;    // mean oracle success probability over the test set
  double sampled_accuracy = 0.0;  // one tau = 1 sample per task
  std::optional<double> pass_at_k;
  int k = 0;
  bool exact_fallback = false;  // some task exceeded the oracle cap and was sampled instead
  bool operator==(const EvalRecord&) const = default;
};

void to_json(nlohmann::json& j, const EvalRecord& r);
void from_json(const nlohmann::json& j, EvalRecord& r);

// Samples per task used when a task is outside the exact oracle's size caps.
inline constexpr int kFallbackSamples = 4000;

struct AccuracyResult {
  double accuracy = 0.0;
  bool fallback = false;
};

AccuracyResult evaluate_accuracy_detailed(const PolicyParams& params,
                                          const std::vector<TaskInstance>& tasks,
                                          std::uint64_t fallback_seed = 0);

// Mean exact success probability over `tasks` (0 for an empty list).
double evaluate_accuracy(const PolicyParams& params, const std::vector<TaskInstance>& tasks);

double sampled_accuracy(const PolicyParams& params, const std::vector<TaskInstance>& tasks,
                        std::uint64_t seed);

// Fraction of tasks solved by at least one of k samples. Sample j of a task is
// the same for every k, so the value is non-decreasing in k.
double pass_at_k(const PolicyParams& params, const std::vector<TaskInstance>& tasks, int k,
                 double temperature, std::uint64_t seed);

// pass@1 .. pass@k_max from one nested sample set.
std::vector<double> pass_at_k_curve(const PolicyParams& params, const std::vector<TaskInstance>& tasks,
                                    int k_max, double temperature, std::uint64_t seed);

// Absolute change in percentage points.
double improvement_over_base(double base_acc, double final_acc);

// Squared Pearson correlation; 0 when either variance is 0.
double correlation_r2(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace grpolab
