#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpolab/rng.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

// Per-step feature map phi(task, t) = [1, t/M, M/max_steps, N/max_objects]
// (arithmetic tasks use 0 for the last entry). All entries lie in [0, 1]; tasks
// longer or wider than the normalizers are rejected with ContractError.
struct FeatureSpec {
  int max_steps = 32;
  int max_objects = 8;

  static constexpr std::size_t kDim = 4;

  // "phi4/m<max_steps>/n<max_objects>"
  std::string id() const;
  static FeatureSpec parse(const std::string& id);
  bool operator==(const FeatureSpec&) const = default;
};

using Features = std::array<double, FeatureSpec::kDim>;

Features features(const FeatureSpec& spec, const TaskInstance& task, int step);

struct PolicyParams {
  std::vector<double> theta = std::vector<double>(FeatureSpec::kDim, 0.0);
  FeatureSpec feature_spec;
  double temperature_default = 1.0;
  bool operator==(const PolicyParams&) const = default;
};

// Throws ContractError when theta has the wrong size or a non-finite entry.
void validate(const PolicyParams& params);

void to_json(nlohmann::json& j, const PolicyParams& p);
void from_json(const nlohmann::json& j, PolicyParams& p);
std::uint64_t params_hash(const PolicyParams& params);

// One sampled completion. actions[t] == 0 is the instructed operation; a value
// k >= 1 selects the k-th wrong alternative (see alternatives()).
struct Trajectory {
  std::string task_id;
  std::vector<int> actions;
  std::int64_t derived_answer = 0;
  double log_prob = 0.0;
  std::vector<double> per_step_p;
  bool operator==(const Trajectory&) const = default;
};

// Wrong alternatives available at each step: C(N,2) - 1 other transpositions for
// shuffled objects, the four perturbations {+1, -1, +10, -10} for arithmetic.
int num_alternatives(const TaskInstance& task);

// Deterministic replay of an action sequence.
std::int64_t replay(const TaskInstance& task, const std::vector<int>& actions);

double logistic(double x) noexcept;

double step_logit(const PolicyParams& params, const TaskInstance& task, int step);

// logistic(theta . phi / temperature). Steps with no wrong alternative (N = 2)
// are forced: the instructed action is the only action.
double step_success_prob(const PolicyParams& params, const TaskInstance& task, int step,
                         double temperature);

Trajectory sample_trajectory(const PolicyParams& params, const TaskInstance& task,
                             double temperature, Rng& rng);

// log pi(actions | task) recomputed from scratch.
double trajectory_log_prob(const PolicyParams& params, const TaskInstance& task,
                           const std::vector<int>& actions, double temperature);

std::vector<double> grad_log_prob(const PolicyParams& params, const TaskInstance& task,
                                  const Trajectory& traj, double temperature);

struct KlResult {
  double value = 0.0;
  std::vector<double> grad;
};

// Exact KL(pi_params || pi_ref) summed over the task's steps at temperature 1,
// with its gradient in params.theta. The uniform split of error mass is shared by
// both policies, so each step reduces to a Bernoulli KL.
KlResult kl_to_reference(const PolicyParams& params, const PolicyParams& ref,
                         const TaskInstance& task);

// Largest shuffled-objects arrangement count the permutation DP accepts (6! = 720).
inline constexpr int kMaxExactObjects = 6;
// Cap on distinct reachable values for the arithmetic value DP.
inline constexpr std::size_t kMaxArithmeticStates = 1'000'000;

// Exact probability that a sampled trajectory answers correctly. Shuffled
// objects: DP over the distribution of arrangements. Arithmetic: DP over the
// distribution of running values. Throws UnsupportedSizeError past the caps.
double exact_success_probability(const PolicyParams& params, const TaskInstance& task,
                                 double temperature);

bool exact_oracle_supported(const TaskInstance& task);

}  // namespace grpolab
