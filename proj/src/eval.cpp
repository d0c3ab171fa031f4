#include "grpolab/eval.hpp"

#include "grpolab/errors.hpp"
#include "grpolab/parallel.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

void to_json(nlohmann::json& j, const EvalRecord& r) {
  j = nlohmann::json{{"checkpoint_step", r.checkpoint_step},
                     {"exact_accuracy", r.exact_accuracy},
                     {"sampled_accuracy", r.sampled_accuracy},
                     {"exact_fallback", r.exact_fallback}};
  if (r.pass_at_k) {
    j["pass_at_k"] = *r.pass_at_k;
    j["k"] = r.k;
  }
}

void from_json(const nlohmann::json& j, EvalRecord& r) {
  r.checkpoint_step = j.at("checkpoint_step").get<int>();
  r.exact_accuracy = j.at("exact_accuracy").get<double>();
  r.sampled_accuracy = j.at("sampled_accuracy").get<double>();
  r.exact_fallback = j.value("exact_fallback", false);
  if (j.contains("pass_at_k")) {
    r.pass_at_k = j.at("pass_at_k").get<double>();
    r.k = j.at("k").get<int>();
  } else {
    r.pass_at_k.reset();
    r.k = 0;
  }
}

AccuracyResult evaluate_accuracy_detailed(const PolicyParams& params,
                                          const std::vector<TaskInstance>& tasks,
                                          std::uint64_t fallback_seed) {
  if (tasks.empty()) return {};
  std::vector<double> per_task(tasks.size());
  std::vector<char> sampled(tasks.size(), 0);
  parallel_for(tasks.size(), [&](std::size_t i) {
    const TaskInstance& task = tasks[i];
    if (exact_oracle_supported(task)) {
      try {
        per_task[i] = exact_success_probability(params, task, 1.0);
        return;
      } catch (const UnsupportedSizeError&) {
      }
    }
    sampled[i] = 1;
    Rng rng(derive_seed(fallback_seed, {fnv1a(task.id), 0xfa11}));
    int hits = 0;
    for (int s = 0; s < kFallbackSamples; ++s)
      hits += check_correct(task, sample_trajectory(params, task, 1.0, rng).derived_answer) ? 1 : 0;
    per_task[i] = static_cast<double>(hits) / kFallbackSamples;
  });
  AccuracyResult out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    out.accuracy += per_task[i];
    out.fallback = out.fallback || sampled[i];
  }
  out.accuracy /= static_cast<double>(tasks.size());
  return out;
}

double evaluate_accuracy(const PolicyParams& params, const std::vector<TaskInstance>& tasks) {
  return evaluate_accuracy_detailed(params, tasks).accuracy;
}

double sampled_accuracy(const PolicyParams& params, const std::vector<TaskInstance>& tasks,
                        std::uint64_t seed) {
  if (tasks.empty()) return 0.0;
  std::vector<char> hit(tasks.size(), 0);
  parallel_for(tasks.size(), [&](std::size_t i) {
    Rng rng(derive_seed(seed, {fnv1a(tasks[i].id), 0x5a3}));
    hit[i] = check_correct(tasks[i], sample_trajectory(params, tasks[i], 1.0, rng).derived_answer);
  });
  double n = 0;
  for (char h : hit) n += h;
  return n / static_cast<double>(tasks.size());
}

std::vector<double> pass_at_k_curve(const PolicyParams& params, const std::vector<TaskInstance>& tasks,
                                    int k_max, double temperature, std::uint64_t seed) {
  if (k_max < 1) throw ParameterError("pass@k needs k >= 1");
  std::vector<double> curve(static_cast<std::size_t>(k_max), 0.0);
  if (tasks.empty()) return curve;
  // first_hit[i] = index of the first correct sample, or k_max when none.
  std::vector<int> first_hit(tasks.size(), k_max);
  parallel_for(tasks.size(), [&](std::size_t i) {
    Rng rng(derive_seed(seed, {fnv1a(tasks[i].id), 0x9a55}));
    for (int s = 0; s < k_max; ++s) {
      if (check_correct(tasks[i], sample_trajectory(params, tasks[i], temperature, rng).derived_answer)) {
        first_hit[i] = s;
        break;
      }
    }
  });
  for (int h : first_hit)
    for (int k = h; k < k_max; ++k) curve[static_cast<std::size_t>(k)] += 1.0;
  for (double& c : curve) c /= static_cast<double>(tasks.size());
  return curve;
}

double pass_at_k(const PolicyParams& params, const std::vector<TaskInstance>& tasks, int k,
                 double temperature, std::uint64_t seed) {
  return pass_at_k_curve(params, tasks, k, temperature, seed).back();
}

double improvement_over_base(double base_acc, double final_acc) {
  return 100.0 * (final_acc - base_acc);
}

double correlation_r2(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ParameterError("correlation inputs differ in length");
  if (xs.size() < 2) throw ParameterError("correlation needs at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return (sxy * sxy) / (sxx * syy);
}

}  // namespace grpolab
