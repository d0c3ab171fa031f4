#include "grpolab/oracle.hpp"

#include <cmath>
#include <cstdio>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

std::vector<double> finite_diff_grad(const ScalarFn& fn, const std::vector<double>& theta, double h) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be positive");
  std::vector<double> grad(theta.size());
  std::vector<double> x = theta;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    x[j] = theta[j] + h;
    const double up = fn(x);
    x[j] = theta[j] - h;
    const double down = fn(x);
    x[j] = theta[j];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("non-finite function value at component " + std::to_string(j));
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

GradCheckReport compare_gradients(const std::vector<double>& analytic,
                                  const std::vector<double>& numeric, double h) {
  if (analytic.size() != numeric.size()) throw ParameterError("gradient sizes differ");
  GradCheckReport r;
  r.h = h;
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    const double err = std::abs(analytic[j] - numeric[j]) / std::max(1.0, std::abs(analytic[j]));
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_component = static_cast<int>(j);
    }
  }
  return r;
}

GradCheckReport check_grad_log_prob(const PolicyParams& params, const TaskInstance& task,
                                    const Trajectory& traj, double temperature, double h) {
  const auto analytic = grad_log_prob(params, task, traj, temperature);
  PolicyParams probe = params;
  const auto numeric = finite_diff_grad(
      [&](const std::vector<double>& theta) {
        probe.theta = theta;
        return trajectory_log_prob(probe, task, traj.actions, temperature);
      },
      params.theta, h);
  return compare_gradients(analytic, numeric, h);
}

GradCheckReport check_kl_grad(const PolicyParams& params, const PolicyParams& ref,
                              const TaskInstance& task, double h) {
  const auto analytic = kl_to_reference(params, ref, task).grad;
  PolicyParams probe = params;
  const auto numeric = finite_diff_grad(
      [&](const std::vector<double>& theta) {
        probe.theta = theta;
        return kl_to_reference(probe, ref, task).value;
      },
      params.theta, h);
  return compare_gradients(analytic, numeric, h);
}

double enumerate_group_outcomes(double q, int group_size) {
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("q must lie in [0, 1]");
  if (group_size < 1) throw ParameterError("group size must be >= 1");
  // Mixed outcomes: between 1 and G-1 successes.
  double total = 0.0;
  double choose = 1.0;  // C(G, s)
  for (int s = 0; s <= group_size; ++s) {
    if (s > 0) choose = choose * (group_size - s + 1) / s;
    if (s == 0 || s == group_size) continue;
    total += choose * std::pow(q, s) * std::pow(1.0 - q, group_size - s);
  }
  return total;
}

double exhaustive_success(const PolicyParams& params, const TaskInstance& task, double temperature) {
  const int m = task.num_steps();
  const int alts = num_alternatives(task);
  const int choices = alts + 1;
  if (std::pow(static_cast<double>(choices), m) > kMaxEnumeratedSequences)
    throw UnsupportedSizeError("exhaustive enumeration exceeds 1e6 action sequences");
  std::vector<double> p(static_cast<std::size_t>(m));
  for (int t = 0; t < m; ++t) p[t] = step_success_prob(params, task, t, temperature);

  // Odometer over action sequences.
  std::vector<int> actions(static_cast<std::size_t>(m), 0);
  double success = 0.0;
  for (;;) {
    double prob = 1.0;
    for (int t = 0; t < m; ++t) prob *= actions[t] == 0 ? p[t] : (1.0 - p[t]) / alts;
    if (prob > 0.0 && check_correct(task, replay(task, actions))) success += prob;
    int t = 0;
    while (t < m && ++actions[t] == choices) actions[t++] = 0;
    if (t == m) break;
  }
  return success;
}

std::vector<VerifyLine> run_verification(std::uint64_t seed) {
  std::vector<VerifyLine> lines;
  auto add = [&](std::string name, bool ok, std::string detail) {
    lines.push_back({std::move(name), ok, std::move(detail)});
  };
  char buf[160];
  Rng rng(derive_seed(seed, {0x7e41f}));
  auto random_params = [&] {
    PolicyParams p;
    for (double& x : p.theta) x = -3.0 + 6.0 * rng.uniform();
    return p;
  };

  // DP vs enumeration on small shuffled-objects and arithmetic tasks.
  double worst_dp = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int n = 3 + static_cast<int>(rng.below(2));
    const int max_m = n == 3 ? 8 : 5;
    const TaskInstance task = generate_shuffled_objects(rng.below(1u << 30), n,
                                                        1 + static_cast<int>(rng.below(max_m)));
    const PolicyParams params = random_params();
    worst_dp = std::max(worst_dp, std::abs(exact_success_probability(params, task, 1.0) -
                                           exhaustive_success(params, task)));
  }
  for (int i = 0; i < 20; ++i) {
    const TaskInstance task = generate_arithmetic_chain(rng.below(1u << 30),
                                                        1 + static_cast<int>(rng.below(6)), {1, 9});
    const PolicyParams params = random_params();
    worst_dp = std::max(worst_dp, std::abs(exact_success_probability(params, task, 1.0) -
                                           exhaustive_success(params, task)));
  }
  std::snprintf(buf, sizeof buf, "max |DP - enumeration| = %.3g (tol 1e-10)", worst_dp);
  add("dp_vs_enumeration", worst_dp < 1e-10, buf);

  double worst_grad = 0.0, worst_kl = 0.0;
  for (int i = 0; i < 100; ++i) {
    const TaskInstance task = generate_shuffled_objects(rng.below(1u << 30),
                                                        3 + static_cast<int>(rng.below(3)),
                                                        1 + static_cast<int>(rng.below(12)));
    const PolicyParams params = random_params();
    const PolicyParams ref = random_params();
    Rng stream(rng.below(~0ULL));
    const double tau = 0.5 + 1.5 * rng.uniform();
    const Trajectory traj = sample_trajectory(params, task, tau, stream);
    worst_grad = std::max(worst_grad, check_grad_log_prob(params, task, traj, tau).max_relative_error);
    worst_kl = std::max(worst_kl, check_kl_grad(params, ref, task).max_relative_error);
  }
  std::snprintf(buf, sizeof buf, "max relative error = %.3g (tol 1e-5)", worst_grad);
  add("grad_log_prob_vs_finite_differences", worst_grad < 1e-5, buf);
  std::snprintf(buf, sizeof buf, "max relative error = %.3g (tol 1e-5)", worst_kl);
  add("kl_grad_vs_finite_differences", worst_kl < 1e-5, buf);

  // Closed form vs brute force over all reward vectors.
  double worst_group = 0.0;
  for (double q : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    for (int g = 1; g <= 10; ++g) {
      double brute = 0.0;
      for (unsigned mask = 0; mask < (1u << g); ++mask) {
        const int ones = __builtin_popcount(mask);
        if (ones == 0 || ones == g) continue;
        brute += std::pow(q, ones) * std::pow(1.0 - q, g - ones);
      }
      const double closed = 1.0 - std::pow(q, g) - std::pow(1.0 - q, g);
      worst_group = std::max({worst_group, std::abs(brute - enumerate_group_outcomes(q, g)),
                              std::abs(closed - enumerate_group_outcomes(q, g))});
    }
  }
  std::snprintf(buf, sizeof buf, "max deviation = %.3g (tol 1e-12)", worst_group);
  add("group_outcome_enumeration", worst_group < 1e-12, buf);
  return lines;
}

}  // namespace grpolab
