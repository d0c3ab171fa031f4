#include "grpolab/grpo.hpp"

#include <cmath>
#include <numbers>

#include "grpolab/errors.hpp"
#include "grpolab/parallel.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

namespace {

std::string to_string(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "constant"; }
std::string to_string(KlSchedule s) { return s == KlSchedule::constant ? "constant" : "linear_decay"; }

LrSchedule lr_schedule_from(const std::string& s) {
  if (s == "cosine") return LrSchedule::cosine;
  if (s == "constant") return LrSchedule::constant;
  throw ConfigError("unknown lr_schedule: " + s);
}

KlSchedule kl_schedule_from(const std::string& s) {
  if (s == "constant") return KlSchedule::constant;
  if (s == "linear_decay") return KlSchedule::linear_decay;
  throw ConfigError("unknown kl_schedule: " + s);
}

}  // namespace

void validate(const GrpoConfig& c) {
  if (c.group_size < 2) throw ConfigError("group_size must be >= 2");
  if (c.batch_prompts < 1) throw ConfigError("batch_prompts must be >= 1");
  if (c.total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (c.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (!(c.kl_beta >= 0.0)) throw ConfigError("kl_beta must be >= 0");
  if (!(c.lr0 >= 0.0)) throw ConfigError("lr0 must be >= 0");
  if (!(c.train_temperature > 0.0)) throw ConfigError("train_temperature must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const GrpoConfig& c) {
  j = nlohmann::json{{"group_size", c.group_size},
                     {"kl_beta", c.kl_beta},
                     {"kl_schedule", to_string(c.kl_schedule)},
                     {"total_steps", c.total_steps},
                     {"batch_prompts", c.batch_prompts},
                     {"lr0", c.lr0},
                     {"lr_schedule", to_string(c.lr_schedule)},
                     {"eval_every", c.eval_every},
                     {"train_temperature", c.train_temperature},
                     {"seed", c.seed},
                     {"normalize_by_std", c.normalize_by_std},
                     {"momentum", c.momentum}};
}

void from_json(const nlohmann::json& j, GrpoConfig& c) {
  const GrpoConfig d;
  c.group_size = j.value("group_size", d.group_size);
  c.kl_beta = j.value("kl_beta", d.kl_beta);
  c.kl_schedule = kl_schedule_from(j.value("kl_schedule", to_string(d.kl_schedule)));
  c.total_steps = j.value("total_steps", d.total_steps);
  c.batch_prompts = j.value("batch_prompts", d.batch_prompts);
  c.lr0 = j.value("lr0", d.lr0);
  c.lr_schedule = lr_schedule_from(j.value("lr_schedule", to_string(d.lr_schedule)));
  c.eval_every = j.value("eval_every", d.eval_every);
  c.train_temperature = j.value("train_temperature", d.train_temperature);
  c.seed = j.value("seed", d.seed);
  c.normalize_by_std = j.value("normalize_by_std", d.normalize_by_std);
  c.momentum = j.value("momentum", d.momentum);
}

double lr_at(const GrpoConfig& config, int step) {
  if (step < 0 || step > config.total_steps) throw ParameterError("lr_at: step out of range");
  if (config.lr_schedule == LrSchedule::constant) return config.lr0;
  const double frac = static_cast<double>(step) / config.total_steps;
  return config.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double beta_at(const GrpoConfig& config, int step) {
  if (config.kl_schedule == KlSchedule::constant) return config.kl_beta;
  return config.kl_beta * (1.0 - static_cast<double>(step) / config.total_steps);
}

Advantages compute_advantages(std::span<const int> rewards, bool normalize_by_std) {
  if (rewards.empty()) throw ParameterError("compute_advantages: empty reward list");
  Advantages out;
  double sum = 0.0;
  for (int r : rewards) sum += r;
  out.baseline = sum / static_cast<double>(rewards.size());
  out.advantages.reserve(rewards.size());
  for (int r : rewards) out.advantages.push_back(r - out.baseline);
  if (normalize_by_std) {
    double var = 0.0;
    for (double a : out.advantages) var += a * a;
    const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
    if (sd > 0.0)
      for (double& a : out.advantages) a /= sd;
  }
  return out;
}

bool is_learnable(std::span<const int> rewards) {
  bool zero = false, one = false;
  for (int r : rewards) {
    zero = zero || r == 0;
    one = one || r != 0;
  }
  return zero && one;
}

void to_json(nlohmann::json& j, const StepMetrics& m) {
  j = nlohmann::json{{"step", m.step},
                     {"lr", m.lr},
                     {"mean_reward", m.mean_reward},
                     {"learnable_groups", m.learnable_groups},
                     {"total_groups", m.total_groups},
                     {"mean_kl", m.mean_kl},
                     {"grad_norm", m.grad_norm}};
}

void from_json(const nlohmann::json& j, StepMetrics& m) {
  m.step = j.at("step").get<int>();
  m.lr = j.at("lr").get<double>();
  m.mean_reward = j.at("mean_reward").get<double>();
  m.learnable_groups = j.at("learnable_groups").get<int>();
  m.total_groups = j.at("total_groups").get<int>();
  m.mean_kl = j.at("mean_kl").get<double>();
  m.grad_norm = j.at("grad_norm").get<double>();
}

StepOutcome grpo_step(TrainState& state, std::span<const TaskInstance* const> batch,
                      const GrpoConfig& config, std::uint64_t stream_seed) {
  if (static_cast<int>(batch.size()) != config.batch_prompts)
    throw ContractError("grpo_step: batch size does not match batch_prompts");
  const std::size_t B = batch.size();
  const int G = config.group_size;
  const std::size_t dim = FeatureSpec::kDim;

  StepOutcome out;
  out.groups.resize(B);
  out.group_advantage_grads.assign(B, std::vector<double>(dim, 0.0));
  std::vector<KlResult> kls(B);

  const PolicyParams& params = state.params;
  const double scale = 1.0 / (static_cast<double>(B) * G);

  parallel_for(B, [&](std::size_t b) {
    const TaskInstance& task = *batch[b];
    GroupRollout& group = out.groups[b];
    group.task_id = task.id;
    group.trajectories.reserve(static_cast<std::size_t>(G));
    group.rewards.reserve(static_cast<std::size_t>(G));
    for (int i = 0; i < G; ++i) {
      Rng rng(derive_seed(stream_seed, {b, fnv1a(task.id), static_cast<std::uint64_t>(i)}));
      Trajectory traj = sample_trajectory(params, task, config.train_temperature, rng);
      group.rewards.push_back(check_correct(task, traj.derived_answer) ? 1 : 0);
      group.trajectories.push_back(std::move(traj));
    }
    Advantages adv = compute_advantages(group.rewards, config.normalize_by_std);
    group.baseline = adv.baseline;
    group.advantages = std::move(adv.advantages);
    group.learnable = is_learnable(group.rewards);
    if (group.learnable) {
      auto& acc = out.group_advantage_grads[b];
      for (int i = 0; i < G; ++i) {
        const double a = group.advantages[static_cast<std::size_t>(i)];
        if (a == 0.0) continue;
        const auto g = grad_log_prob(params, task, group.trajectories[static_cast<std::size_t>(i)],
                                     config.train_temperature);
        for (std::size_t d = 0; d < dim; ++d) acc[d] += scale * a * g[d];
      }
    }
    kls[b] = kl_to_reference(params, state.ref_params(), task);
  });

  // Serial reduction in slot order.
  const double beta = beta_at(config, state.step);
  out.kl_grad.assign(dim, 0.0);
  out.gradient.assign(dim, 0.0);
  StepMetrics& m = out.metrics;
  m.step = state.step;
  m.lr = lr_at(config, state.step);
  m.total_groups = static_cast<int>(B);
  double reward_sum = 0.0, kl_sum = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (int r : out.groups[b].rewards) reward_sum += r;
    m.learnable_groups += out.groups[b].learnable ? 1 : 0;
    kl_sum += kls[b].value;
    for (std::size_t d = 0; d < dim; ++d) {
      out.kl_grad[d] += kls[b].grad[d] / static_cast<double>(B);
      out.gradient[d] += out.group_advantage_grads[b][d];
    }
  }
  double norm2 = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    out.gradient[d] -= beta * out.kl_grad[d];
    norm2 += out.gradient[d] * out.gradient[d];
  }
  m.mean_reward = reward_sum / (static_cast<double>(B) * G);
  m.mean_kl = kl_sum / static_cast<double>(B);
  m.grad_norm = std::sqrt(norm2);

  for (std::size_t d = 0; d < dim; ++d) {
    state.velocity[d] = config.momentum * state.velocity[d] + out.gradient[d];
    state.params.theta[d] += m.lr * state.velocity[d];
  }
  validate(state.params);
  state.metrics_log.push_back(m);
  ++state.step;
  return out;
}

RunReport train(const std::vector<TaskInstance>& subset, const PolicyParams& base,
                const GrpoConfig& config, const EvalHook& eval_hook) {
  if (subset.empty()) throw ParameterError("train: empty subset");
  validate(config);
  validate(base);
  TrainState state(base);
  RunReport report;
  if (eval_hook) report.evaluations.push_back(eval_hook(0, state.params));

  std::vector<const TaskInstance*> batch(static_cast<std::size_t>(config.batch_prompts));
  for (int t = 0; t < config.total_steps; ++t) {
    Rng picker(derive_seed(config.seed, {0xba7c4, static_cast<std::uint64_t>(t)}));
    for (auto& slot : batch) slot = &subset[picker.below(subset.size())];
    grpo_step(state, batch, config, derive_seed(config.seed, {0x5011, static_cast<std::uint64_t>(t)}));
    const int done = t + 1;
    if (done % config.eval_every == 0 || done == config.total_steps) {
      state.checkpoints.emplace(done, state.params);
      if (eval_hook) report.evaluations.push_back(eval_hook(done, state.params));
    }
  }
  report.metrics = std::move(state.metrics_log);
  report.checkpoints = std::move(state.checkpoints);
  report.final_params = state.params;
  report.learnable_pct = learnable_percentage(report.metrics);
  report.total_rollouts =
      static_cast<std::int64_t>(config.total_steps) * config.batch_prompts * config.group_size;
  return report;
}

double learnable_percentage(const std::vector<StepMetrics>& metrics) {
  long long learnable = 0, total = 0;
  for (const auto& m : metrics) {
    learnable += m.learnable_groups;
    total += m.total_groups;
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(learnable) / static_cast<double>(total);
}

double learnable_percentage(const RunReport& report) { return learnable_percentage(report.metrics); }

void to_json(nlohmann::json& j, const RunReport& r) {
  nlohmann::json ckpts = nlohmann::json::object();
  for (const auto& [step, p] : r.checkpoints) ckpts[std::to_string(step)] = p;
  j = nlohmann::json{{"metrics", r.metrics},
                     {"evaluations", r.evaluations},
                     {"checkpoints", std::move(ckpts)},
                     {"final_params", r.final_params},
                     {"learnable_pct", r.learnable_pct},
                     {"total_rollouts", r.total_rollouts}};
}

void from_json(const nlohmann::json& j, RunReport& r) {
  r.metrics = j.at("metrics").get<std::vector<StepMetrics>>();
  r.evaluations = j.at("evaluations").get<std::vector<EvalRecord>>();
  r.checkpoints.clear();
  for (const auto& [key, value] : j.at("checkpoints").items())
    r.checkpoints.emplace(std::stoi(key), value.get<PolicyParams>());
  r.final_params = j.at("final_params").get<PolicyParams>();
  r.learnable_pct = j.at("learnable_pct").get<double>();
  r.total_rollouts = j.at("total_rollouts").get<std::int64_t>();
}

std::string serialize_metrics(const RunReport& report) {
  std::string out;
  for (const auto& m : report.metrics) {
    nlohmann::json j = m;
    j["type"] = "step";
    out += j.dump() + "\n";
  }
  for (const auto& e : report.evaluations) {
    nlohmann::json j = e;
    j["type"] = "eval";
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace grpolab
