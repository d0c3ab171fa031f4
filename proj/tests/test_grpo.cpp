#include <doctest.h>

#include <cmath>
#include <numeric>

#include "grpolab/errors.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/oracle.hpp"

using namespace grpolab;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

GrpoConfig small_config() {
  GrpoConfig c;
  c.group_size = 4;
  c.batch_prompts = 4;
  c.total_steps = 20;
  c.eval_every = 5;
  c.lr0 = 0.05;
  c.seed = 99;
  return c;
}

std::vector<TaskInstance> subset() {
  std::vector<TaskInstance> out;
  for (int i = 0; i < 10; ++i) out.push_back(generate_shuffled_objects(500 + i, 3 + i % 2, 2 + i % 5));
  return out;
}

PolicyParams start() {
  PolicyParams p;
  p.theta = {1.0, -0.5, -1.0, -1.0};
  return p;
}

}  // namespace

TEST_CASE("advantages") {
  const std::vector<int> r{1, 0, 0, 1, 1, 0, 0, 0};
  const auto adv = compute_advantages(r);
  CHECK(adv.baseline == doctest::Approx(3.0 / 8));
  CHECK(adv.advantages[0] == doctest::Approx(5.0 / 8));
  CHECK(adv.advantages[1] == doctest::Approx(-3.0 / 8));
  CHECK(std::abs(std::accumulate(adv.advantages.begin(), adv.advantages.end(), 0.0)) < 1e-12);

  for (const std::vector<int>& flat : {std::vector<int>(8, 0), std::vector<int>(8, 1)}) {
    CHECK_FALSE(is_learnable(flat));
    for (double a : compute_advantages(flat).advantages) CHECK(a == 0.0);
    for (double a : compute_advantages(flat, true).advantages) CHECK(a == 0.0);
  }
  CHECK(is_learnable(r));

  // Population std of {1,0,0,1,1,0,0,0} is sqrt(15)/8.
  const auto norm = compute_advantages(r, true);
  CHECK(norm.advantages[0] == doctest::Approx((5.0 / 8) / (std::sqrt(15.0) / 8)));

  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<int> g(2 + rng.below(15));
    for (int& x : g) x = static_cast<int>(rng.below(2));
    const auto a = compute_advantages(g);
    CHECK(std::abs(std::accumulate(a.advantages.begin(), a.advantages.end(), 0.0)) < 1e-12);
    bool all_zero = true;
    for (double x : a.advantages) all_zero = all_zero && x == 0.0;
    CHECK(all_zero == !is_learnable(g));
  }
}

TEST_CASE("learning rate and KL schedules") {
  GrpoConfig c;
  CHECK(lr_at(c, 0) == doctest::Approx(3e-5));
  CHECK(lr_at(c, 500) == doctest::Approx(1.5e-5));
  CHECK(std::abs(lr_at(c, 1000)) < 1e-20);
  for (int t = 1; t <= 1000; ++t) CHECK(lr_at(c, t) <= lr_at(c, t - 1));
  CHECK_THROWS_AS(lr_at(c, 1001), ParameterError);
  CHECK_THROWS_AS(lr_at(c, -1), ParameterError);
  c.lr_schedule = LrSchedule::constant;
  CHECK(lr_at(c, 900) == 3e-5);
  CHECK(beta_at(c, 700) == 0.1);
  c.kl_schedule = KlSchedule::linear_decay;
  CHECK(beta_at(c, 0) == doctest::Approx(0.1));
  CHECK(beta_at(c, 500) == doctest::Approx(0.05));
}

TEST_CASE("config validation and json") {
  GrpoConfig c = small_config();
  CHECK(nlohmann::json(c).get<GrpoConfig>() == c);
  for (auto mutate : std::vector<std::function<void(GrpoConfig&)>>{
           [](GrpoConfig& x) { x.group_size = 1; }, [](GrpoConfig& x) { x.batch_prompts = 0; },
           [](GrpoConfig& x) { x.total_steps = 0; }, [](GrpoConfig& x) { x.kl_beta = -1; },
           [](GrpoConfig& x) { x.momentum = 1.0; }, [](GrpoConfig& x) { x.eval_every = 0; },
           [](GrpoConfig& x) { x.train_temperature = 0; }}) {
    GrpoConfig bad = small_config();
    mutate(bad);
    CHECK_THROWS(validate(bad));
  }
}

TEST_CASE("hand-computed update for a two-rollout group") {
  const auto task = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  GrpoConfig c;
  c.group_size = 2;
  c.batch_prompts = 1;
  c.total_steps = 10;
  c.lr0 = 0.1;
  c.lr_schedule = LrSchedule::constant;
  c.kl_beta = 0.1;
  const double p = 0.4;
  const double z = logit(p);

  const TaskInstance* batch[] = {&task};
  bool found = false;
  for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
    TrainState state{PolicyParams{}};
    state.params.theta = {z, 0, 0, 0};
    const auto out = grpo_step(state, batch, c, seed);
    if (!out.groups[0].learnable) continue;
    found = true;
    const Features phi = features(FeatureSpec{}, task, 0);
    // A = +-1/2; grad log pi is (1-p) phi on success and -p phi on failure.
    const double adv = 0.5 * (0.5 * (1 - p) + 0.5 * p);
    const double kl = p * (1 - p) * (z - 0.0);
    for (int d = 0; d < 4; ++d) {
      CHECK(out.group_advantage_grads[0][d] == doctest::Approx(adv * phi[d]).epsilon(1e-12));
      CHECK(out.kl_grad[d] == doctest::Approx(kl * phi[d]).epsilon(1e-12));
      CHECK(out.gradient[d] == doctest::Approx((adv - 0.1 * kl) * phi[d]).epsilon(1e-12));
    }
    CHECK(out.gradient[0] == doctest::Approx(0.25973116).epsilon(1e-7));
    CHECK(state.params.theta[0] == doctest::Approx(z + 0.1 * out.gradient[0]).epsilon(1e-12));
    CHECK(state.step == 1);
    CHECK(out.metrics.learnable_groups == 1);
    CHECK(out.metrics.mean_reward == doctest::Approx(0.5));
  }
  CHECK(found);
}

TEST_CASE("uniform groups contribute only the KL term") {
  const auto task = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  GrpoConfig c;
  c.group_size = 4;
  c.batch_prompts = 1;
  c.total_steps = 10;
  c.lr0 = 0.1;
  TrainState state{PolicyParams{}};
  state.params.theta = {60.0, 0, 0, 0};
  const TaskInstance* batch[] = {&task};
  const auto out = grpo_step(state, batch, c, 1);
  CHECK_FALSE(out.groups[0].learnable);
  for (double g : out.group_advantage_grads[0]) CHECK(g == 0.0);
  for (int d = 0; d < 4; ++d) CHECK(out.gradient[d] == doctest::Approx(-0.1 * out.kl_grad[d]));
}

TEST_CASE("batch contract") {
  const auto task = make_shuffled_objects("t", 3, {{0, 1}}, 0);
  GrpoConfig c = small_config();
  TrainState state{start()};
  const TaskInstance* batch[] = {&task};
  CHECK_THROWS_AS(grpo_step(state, batch, c, 0), ContractError);
}

TEST_CASE("grpo gradient is an unbiased estimate of the objective gradient") {
  // With beta = 0 the leave-in mean baseline scales the expected direction by (G-1)/G.
  const auto task = generate_shuffled_objects(17, 3, 3);
  GrpoConfig c;
  c.group_size = 4;
  c.batch_prompts = 1;
  c.total_steps = 10;
  c.kl_beta = 0.0;
  c.lr0 = 1e-12;
  const PolicyParams p = start();
  const auto exact = finite_diff_grad(
      [&](const std::vector<double>& th) {
        PolicyParams q = p;
        q.theta = th;
        return exact_success_probability(q, task, 1.0);
      },
      p.theta, 1e-6);
  const TaskInstance* batch[] = {&task};
  const int reps = 40000;
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  for (int s = 0; s < reps; ++s) {
    TrainState state{p};
    const auto out = grpo_step(state, batch, c, s);
    for (int d = 0; d < 4; ++d) {
      sum[d] += out.gradient[d];
      sq[d] += out.gradient[d] * out.gradient[d];
    }
  }
  for (int d = 0; d < 4; ++d) {
    const double mean = sum[d] / reps;
    const double se = std::sqrt((sq[d] / reps - mean * mean) / reps);
    const double expected = exact[d] * (c.group_size - 1.0) / c.group_size;
    INFO("component " << d << " mean " << mean << " expected " << expected);
    CHECK(std::abs(mean - expected) <= 4 * se + 1e-9);
  }
}

TEST_CASE("strong KL keeps the policy near the reference") {
  GrpoConfig c = small_config();
  c.kl_beta = 1e3;
  c.lr0 = 1e-4;
  c.total_steps = 50;
  const auto report = train(subset(), start(), c);
  double dist = 0.0;
  for (int d = 0; d < 4; ++d) dist += std::pow(report.final_params.theta[d] - start().theta[d], 2);
  CHECK(std::sqrt(dist) < 1e-2);

  c.kl_beta = 0.0;
  c.lr0 = 0.5;
  const auto free = train(subset(), start(), c);
  double free_dist = 0.0;
  for (int d = 0; d < 4; ++d) free_dist += std::pow(free.final_params.theta[d] - start().theta[d], 2);
  CHECK(std::sqrt(free_dist) > std::sqrt(dist));
}

TEST_CASE("train bookkeeping and determinism") {
  const GrpoConfig c = small_config();
  std::vector<int> hook_steps;
  const auto report = train(subset(), start(), c, [&](int step, const PolicyParams&) {
    hook_steps.push_back(step);
    EvalRecord r;
    r.checkpoint_step = step;
    return r;
  });
  CHECK(report.metrics.size() == 20);
  CHECK(report.total_rollouts == 20 * 4 * 4);
  CHECK(hook_steps == std::vector<int>{0, 5, 10, 15, 20});
  CHECK(report.evaluations.size() == 5);
  CHECK(report.checkpoints.size() == 4);
  CHECK(report.checkpoints.count(20) == 1);
  CHECK(report.checkpoints.at(20) == report.final_params);
  int learnable = 0, total = 0;
  for (const auto& m : report.metrics) {
    learnable += m.learnable_groups;
    total += m.total_groups;
    CHECK(m.total_groups == 4);
  }
  CHECK(learnable_percentage(report) == doctest::Approx(100.0 * learnable / total));
  CHECK(report.metrics.back().lr == doctest::Approx(lr_at(c, 19)));

  const auto again = train(subset(), start(), c, [&](int step, const PolicyParams&) {
    EvalRecord r;
    r.checkpoint_step = step;
    return r;
  });
  CHECK(again == report);
  CHECK(serialize_metrics(again) == serialize_metrics(report));
  CHECK(nlohmann::json(report).get<RunReport>() == report);

  GrpoConfig other = c;
  other.seed = 100;
  CHECK_FALSE(train(subset(), start(), other).final_params == report.final_params);
  CHECK_THROWS(train({}, start(), c));
}

TEST_CASE("momentum and std normalization variants run") {
  GrpoConfig c = small_config();
  c.momentum = 0.9;
  c.normalize_by_std = true;
  const auto r = train(subset(), start(), c);
  for (double x : r.final_params.theta) CHECK(std::isfinite(x));
  CHECK_FALSE(r.final_params == train(subset(), start(), small_config()).final_params);
}
