#pragma once

#include <functional>
#include <string>
#include <vector>

#include "grpolab/policy.hpp"
#include "grpolab/tasks.hpp"

namespace grpolab {

struct GradCheckReport {
  double max_relative_error = 0.0;
  int worst_component = 0;
  double h = 1e-6;
};

inline constexpr double kDefaultFiniteDiffStep = 1e-6;

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h. Throws NumericError
// when an evaluation is not finite.
std::vector<double> finite_diff_grad(const ScalarFn& fn, const std::vector<double>& theta,
                                     double h = kDefaultFiniteDiffStep);

// Per-component |analytic - numeric| / max(1, |analytic|).
GradCheckReport compare_gradients(const std::vector<double>& analytic,
                                  const std::vector<double>& numeric, double h);

GradCheckReport check_grad_log_prob(const PolicyParams& params, const TaskInstance& task,
                                    const Trajectory& traj, double temperature,
                                    double h = kDefaultFiniteDiffStep);
GradCheckReport check_kl_grad(const PolicyParams& params, const PolicyParams& ref,
                              const TaskInstance& task, double h = kDefaultFiniteDiffStep);

// Probability that a group of G binary rewards with success rate q is mixed,
// summed term by term over the binomial outcome counts.
double enumerate_group_outcomes(double q, int group_size);

// Sum over every action sequence of its probability, restricted to sequences whose
// replay is correct. Independent of the DP in exact_success_probability.
inline constexpr double kMaxEnumeratedSequences = 1e6;
double exhaustive_success(const PolicyParams& params, const TaskInstance& task,
                          double temperature = 1.0);

struct VerifyLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Oracle cross-checks on freshly generated small problems (the `verify` subcommand).
std::vector<VerifyLine> run_verification(std::uint64_t seed);

}  // namespace grpolab
