#include <doctest.h>

#include <cmath>

#include "grpolab/errors.hpp"
#include "grpolab/eval.hpp"

using namespace grpolab;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// One-swap N=3 tasks: success probability equals the per-step probability.
std::vector<TaskInstance> one_step_tasks(int n) {
  std::vector<TaskInstance> out;
  for (int i = 0; i < n; ++i) out.push_back(make_shuffled_objects("t" + std::to_string(i), 3, {{0, 1}}, 0));
  return out;
}

PolicyParams with_q(double q) {
  PolicyParams p;
  // phi = [1, 0, 1/32, 3/8] at the only step; theta[2], theta[3] are zero.
  p.theta = {logit(q), 0, 0, 0};
  return p;
}

}  // namespace

TEST_CASE("exact accuracy") {
  CHECK(evaluate_accuracy(with_q(0.3), one_step_tasks(5)) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(evaluate_accuracy(with_q(0.3), {}) == 0.0);
  const auto r = evaluate_accuracy_detailed(with_q(0.3), one_step_tasks(3));
  CHECK_FALSE(r.fallback);

  std::vector<TaskInstance> wide{generate_shuffled_objects(1, 7, 4)};
  PolicyParams sure;
  sure.theta = {60, 0, 0, 0};
  const auto fb = evaluate_accuracy_detailed(sure, wide, 3);
  CHECK(fb.fallback);
  CHECK(fb.accuracy == doctest::Approx(1.0));
}

TEST_CASE("pass@k matches 1 - (1-q)^k") {
  const auto tasks = one_step_tasks(10000);
  const auto curve = pass_at_k_curve(with_q(0.3), tasks, 8, 1.0, 21);
  REQUIRE(curve.size() == 8);
  for (int k = 1; k <= 8; ++k) {
    CHECK(std::abs(curve[k - 1] - (1 - std::pow(0.7, k))) < 0.01);
    if (k > 1) CHECK(curve[k - 1] >= curve[k - 2]);
  }
  CHECK(1 - std::pow(0.7, 8) == doctest::Approx(0.94235199).epsilon(1e-8));
  CHECK(pass_at_k(with_q(0.3), tasks, 8, 1.0, 21) == curve[7]);
  CHECK_THROWS_AS(pass_at_k(with_q(0.3), tasks, 0, 1.0, 21), ParameterError);
}

TEST_CASE("pass@k is monotone on random tasks") {
  std::vector<TaskInstance> tasks;
  for (int i = 0; i < 200; ++i) tasks.push_back(generate_shuffled_objects(i, 4, 3 + i % 10));
  PolicyParams p;
  p.theta = {1.0, -0.5, -2.0, 0.0};
  const auto curve = pass_at_k_curve(p, tasks, 16, 1.0, 4);
  for (std::size_t k = 1; k < curve.size(); ++k) CHECK(curve[k] >= curve[k - 1]);
  CHECK(curve == pass_at_k_curve(p, tasks, 16, 1.0, 4));
}

TEST_CASE("sampled accuracy is near the exact value") {
  const auto tasks = one_step_tasks(20000);
  CHECK(std::abs(sampled_accuracy(with_q(0.6), tasks, 8) - 0.6) < 0.015);
}

TEST_CASE("improvement and correlation") {
  CHECK(improvement_over_base(0.42, 0.57) == doctest::Approx(15.0));
  CHECK(improvement_over_base(0.5, 0.4) == doctest::Approx(-10.0));
  CHECK(correlation_r2({1, 2, 3, 4}, {2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK(correlation_r2({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(1.0));
  CHECK(correlation_r2({1, 1, 1}, {1, 2, 3}) == 0.0);
  // x = {1,2,3}, y = {1,3,2}: cov = 0.5, var x = var y = 1 (sample), r = 0.5.
  CHECK(correlation_r2({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(correlation_r2({1, 2}, {1}), ParameterError);
  CHECK_THROWS_AS(correlation_r2({1}, {1}), ParameterError);
}

TEST_CASE("eval record json") {
  EvalRecord r{100, 0.5, 0.45, 0.9, 8, false};
  CHECK(nlohmann::json(r).get<EvalRecord>() == r);
  EvalRecord none{0, 0.1, 0.2, std::nullopt, 0, true};
  CHECK(nlohmann::json(none).get<EvalRecord>() == none);
}
