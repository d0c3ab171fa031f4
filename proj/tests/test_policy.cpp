#include <doctest.h>

#include <cmath>

#include "grpolab/errors.hpp"
#include "grpolab/oracle.hpp"
#include "grpolab/policy.hpp"

using namespace grpolab;

namespace {

PolicyParams with_theta(std::vector<double> theta) {
  PolicyParams p;
  p.theta = std::move(theta);
  return p;
}

PolicyParams random_params(Rng& rng, double scale = 3.0) {
  PolicyParams p;
  for (double& x : p.theta) x = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

TaskInstance random_task(Rng& rng) {
  if (rng.below(4) == 0) return generate_arithmetic_chain(rng.below(1u << 30), 1 + rng.below(10), {1, 9});
  return generate_shuffled_objects(rng.below(1u << 30), 3 + static_cast<int>(rng.below(4)),
                                   1 + static_cast<int>(rng.below(16)));
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("feature map") {
  const auto t = make_shuffled_objects("t", 4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, 1);
  const FeatureSpec spec;
  const Features phi = features(spec, t, 2);
  CHECK(phi[0] == 1.0);
  CHECK(phi[1] == doctest::Approx(0.5));
  CHECK(phi[2] == doctest::Approx(4.0 / 32));
  CHECK(phi[3] == doctest::Approx(4.0 / 8));
  const auto a = make_arithmetic_chain("a", 1, {{ArithOp::add, 1}});
  CHECK(features(spec, a, 0)[3] == 0.0);
  CHECK(FeatureSpec::parse(spec.id()) == spec);
  CHECK_THROWS_AS(FeatureSpec::parse("phi5/m3"), ConfigError);
}

TEST_CASE("step success probability") {
  const auto t = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  CHECK(step_success_prob(PolicyParams{}, t, 0, 1.0) == doctest::Approx(0.5));
  PolicyParams p = with_theta({2.0, 0, 0, 0});
  // t = 0 step: phi = [1, 0, 1/32, 3/8]; only the bias matters here.
  CHECK(step_success_prob(p, t, 0, 1.0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK(step_success_prob(p, t, 0, 2.0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(std::abs(step_success_prob(p, t, 0, 1e9) - 0.5) < 1e-8);
  CHECK_THROWS_AS(step_success_prob(p, t, 0, 0.0), ParameterError);
  CHECK_THROWS_AS(step_success_prob(p, t, 0, -1.0), ParameterError);
  CHECK_THROWS_AS(step_success_prob(p, t, 1, 1.0), ContractError);
}

TEST_CASE("saturated policy always follows instructions") {
  const auto t = generate_shuffled_objects(5, 4, 9);
  const PolicyParams p = with_theta({40.0, 0, 0, 0});
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto traj = sample_trajectory(p, t, 1.0, rng);
    for (int a : traj.actions) CHECK(a == 0);
    CHECK(check_correct(t, traj.derived_answer));
  }
  CHECK(exact_success_probability(p, t, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("replay of a wrong transposition") {
  // N=3, instructed (0,1); alternatives in order are (0,2), (1,2).
  const auto t = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  CHECK(t.truth == 1);
  CHECK(num_alternatives(t) == 2);
  CHECK(replay(t, {2}) == 0);  // (1,2) leaves object 0 at position 0
  CHECK(replay(t, {1}) == 2);  // (0,2) moves it to position 2
  CHECK(replay(t, {0}) == 1);
}

TEST_CASE("sampling is deterministic in the stream and log_prob is recomputable") {
  Rng gen(11);
  for (int i = 0; i < 200; ++i) {
    const PolicyParams p = random_params(gen);
    const TaskInstance t = random_task(gen);
    const std::uint64_t seed = gen.below(~0ULL);
    Rng a(seed), b(seed);
    const auto ta = sample_trajectory(p, t, 1.3, a);
    const auto tb = sample_trajectory(p, t, 1.3, b);
    CHECK(ta == tb);
    CHECK(ta.derived_answer == replay(t, ta.actions));
    double lp = 0.0;
    const int alts = num_alternatives(t);
    for (std::size_t s = 0; s < ta.actions.size(); ++s)
      lp += ta.actions[s] == 0 ? std::log(ta.per_step_p[s]) : std::log((1 - ta.per_step_p[s]) / alts);
    CHECK(std::abs(lp - ta.log_prob) < 1e-12);
    CHECK(std::abs(trajectory_log_prob(p, t, ta.actions, 1.3) - ta.log_prob) < 1e-12);
  }
}

TEST_CASE("grad_log_prob closed form and finite differences") {
  const auto t = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  const PolicyParams zero;
  Trajectory err{t.id, {1}, 2, 0.0, {0.5}};
  const auto g = grad_log_prob(zero, t, err, 1.0);
  const Features phi = features(zero.feature_spec, t, 0);
  for (std::size_t i = 0; i < phi.size(); ++i) CHECK(g[i] == doctest::Approx(-0.5 * phi[i]));
  CHECK(g[0] == doctest::Approx(-0.5));

  const PolicyParams saturated = with_theta({60.0, 0, 0, 0});
  Trajectory ok{t.id, {0}, 1, 0.0, {1.0}};
  for (double x : grad_log_prob(saturated, t, ok, 1.0)) CHECK(std::abs(x) < 1e-20);

  Trajectory wrong_task = err;
  wrong_task.task_id = "other";
  CHECK_THROWS_AS(grad_log_prob(zero, t, wrong_task, 1.0), ContractError);
  Trajectory wrong_len = err;
  wrong_len.actions = {0, 0};
  CHECK_THROWS_AS(grad_log_prob(zero, t, wrong_len, 1.0), ContractError);

  Rng gen(5);
  for (int i = 0; i < 100; ++i) {
    const PolicyParams p = random_params(gen);
    const TaskInstance task = random_task(gen);
    Rng s(gen.below(~0ULL));
    const double tau = 0.5 + gen.uniform();
    const auto traj = sample_trajectory(p, task, tau, s);
    CHECK(check_grad_log_prob(p, task, traj, tau).max_relative_error < 1e-5);
  }
}

TEST_CASE("KL to the reference") {
  const auto t = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  const PolicyParams ref = with_theta({0.0, 0, 0, 0});
  const KlResult same = kl_to_reference(ref, ref, t);
  CHECK(same.value == 0.0);
  for (double g : same.grad) CHECK(g == 0.0);

  // One step with p = 0.9 against p' = 0.5.
  const PolicyParams p = with_theta({logit(0.9), 0, 0, 0});
  const double expected = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  CHECK(kl_to_reference(p, ref, t).value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.368064).epsilon(1e-5));

  Rng gen(9);
  for (int i = 0; i < 1000; ++i) {
    const PolicyParams a = random_params(gen, 6.0);
    const PolicyParams b = random_params(gen, 6.0);
    const TaskInstance task = random_task(gen);
    CHECK(kl_to_reference(a, b, task).value >= 0.0);
    if (i < 100) CHECK(check_kl_grad(a, b, task).max_relative_error < 1e-5);
  }

  PolicyParams other = ref;
  other.feature_spec.max_steps = 40;
  CHECK_THROWS_AS(kl_to_reference(other, ref, t), ContractError);
}

TEST_CASE("exact success probability") {
  // One swap (0,1), query 0, p = 0.4: only the instructed swap is correct.
  const auto t = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  const PolicyParams p = with_theta({logit(0.4), 0, 0, 0});
  CHECK(exact_success_probability(p, t, 1.0) == doctest::Approx(0.4).epsilon(1e-12));

  // N = 2 has no alternative action: forced success.
  const auto two = make_shuffled_objects("two", 2, {{0, 1}, {0, 1}}, 0);
  CHECK(exact_success_probability(PolicyParams{}, two, 1.0) == 1.0);
  CHECK(num_alternatives(two) == 0);

  const auto big = generate_shuffled_objects(1, 7, 3);
  CHECK_THROWS_AS(exact_success_probability(p, big, 1.0), UnsupportedSizeError);
  CHECK_FALSE(exact_oracle_supported(big));
}

TEST_CASE("Monte Carlo success frequency matches the exact oracle") {
  Rng gen(77);
  for (int i = 0; i < 5; ++i) {
    const PolicyParams p = random_params(gen, 2.0);
    const TaskInstance t = random_task(gen);
    const double q = exact_success_probability(p, t, 1.0);
    Rng s(gen.below(~0ULL));
    const int n = 20000;
    int hits = 0;
    for (int k = 0; k < n; ++k) hits += check_correct(t, sample_trajectory(p, t, 1.0, s).derived_answer);
    const double sd = std::sqrt(q * (1 - q) / n);
    CHECK(std::abs(static_cast<double>(hits) / n - q) <= 3 * sd + 1e-12);
  }
}

TEST_CASE("score function has zero mean") {
  const auto t = generate_shuffled_objects(8, 4, 5);
  const PolicyParams p = with_theta({1.0, -0.5, 0.3, 0.2});
  Rng s(3);
  const int n = 100000;
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  for (int k = 0; k < n; ++k) {
    const auto g = grad_log_prob(p, t, sample_trajectory(p, t, 1.0, s), 1.0);
    for (int d = 0; d < 4; ++d) {
      sum[d] += g[d];
      sq[d] += g[d] * g[d];
    }
  }
  for (int d = 0; d < 4; ++d) {
    const double mean = sum[d] / n;
    const double se = std::sqrt((sq[d] / n - mean * mean) / n);
    CHECK(std::abs(mean) <= 3 * se);
  }
}

TEST_CASE("params serialization") {
  const PolicyParams p = with_theta({1.5, -0.25, 3.0, 0.125});
  CHECK(nlohmann::json(p).get<PolicyParams>() == p);
  nlohmann::json bad = p;
  bad["theta"] = {1.0, 2.0};
  CHECK_THROWS_AS(bad.get<PolicyParams>(), ContractError);
}
