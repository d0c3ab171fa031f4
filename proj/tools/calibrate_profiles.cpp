// Sweeps base-policy bias and learning rate for the shipped profiles and prints
// the exact-oracle success spread plus the protocol outcomes of each setting.
//
//   calibrate_profiles [--lr 0.05,0.1] [--bias 3.5,4.5] [--weak-bias 2.5] [--theta b,t,m,n]
//                      [--weak-theta b,t,m,n] [--spread-only]
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>

#include "grpolab/eval.hpp"
#include "grpolab/harness.hpp"

using namespace grpolab;

namespace {

void print_spread(const char* label, const PolicyParams& params, const TaskPool& pool) {
  std::vector<double> q;
  for (const auto& t : pool.train) q.push_back(exact_success_probability(params, t, 1.0));
  std::sort(q.begin(), q.end());
  auto at = [&](double f) { return q[static_cast<std::size_t>(f * (q.size() - 1))]; };
  std::printf("%s q: min %.3f p10 %.3f p50 %.3f p90 %.3f max %.3f | test %.3f ood %.3f\n", label,
              q.front(), at(0.1), at(0.5), at(0.9), q.back(), evaluate_accuracy(params, pool.test),
              evaluate_accuracy(params, pool.ood));
}

struct Outcome {
  double imp[4]{};
  double learn[4]{};
  double r2 = 0;
  int ood_wins = 0;
};

Outcome run(const PolicyParams& base, double lr) {
  ExperimentConfig c = default_experiment_config();
  c.base_override = base;
  c.grpo.lr0 = lr;
  const ExperimentReport r = run_experiment(c);
  Outcome o;
  const auto agg = aggregate_by_policy(r);
  for (std::size_t i = 0; i < agg.size(); ++i) {
    o.imp[i] = agg[i].mean_improvement;
    o.learn[i] = agg[i].mean_learnable_pct;
  }
  o.r2 = r.correlation ? r.correlation->r2 : 0.0;
  for (const auto& run : r.runs)
    if (run.policy == SelectionPolicy::hardest && run.ood_final_pass.back() >= run.ood_base_pass.back())
      ++o.ood_wins;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"profile calibration sweep"};
  std::vector<double> lrs{kProfileLearningRate};
  std::vector<double> strong_bias{profile_params("strong").theta[0]};
  std::vector<double> weak_bias{profile_params("weak").theta[0]};
  std::vector<double> shape = profile_params("strong").theta;
  std::vector<double> weak_shape = profile_params("weak").theta;
  app.add_option("--lr", lrs)->delimiter(',');
  app.add_option("--bias", strong_bias)->delimiter(',');
  app.add_option("--weak-bias", weak_bias)->delimiter(',');
  app.add_option("--theta", shape, "shape (bias entry ignored)")->delimiter(',')->expected(4);
  app.add_option("--weak-theta", weak_shape, "weak shape (bias entry ignored)")->delimiter(',')->expected(4);
  bool spread_only = false;
  app.add_flag("--spread-only", spread_only);
  CLI11_PARSE(app, argc, argv);

  const TaskPool pool = build_pool(default_pool_config());
  for (double sb : strong_bias) {
    for (double wb : weak_bias) {
      PolicyParams strong, weak;
      strong.theta = shape;
      strong.theta[0] = sb;
      weak.theta = weak_shape;
      weak.theta[0] = wb;
      print_spread("strong", strong, pool);
      print_spread("weak  ", weak, pool);
      if (spread_only) continue;
      for (double lr : lrs) {
        const Outcome s = run(strong, lr);
        const Outcome w = run(weak, lr);
        const double gap_s = s.imp[0] - s.imp[1], gap_w = w.imp[0] - w.imp[1];
        const bool order = s.imp[0] > std::max(s.imp[2], s.imp[3]) &&
                           s.imp[1] < std::min(s.imp[2], s.imp[3]);
        std::printf(
            "bias %.2f/%.2f lr %.3f | strong imp H %.2f E %.2f M %.2f R %.2f learn H %.1f E %.1f M %.1f R %.1f "
            "r2 %.2f ood %d/3 | weak imp H %.2f E %.2f M %.2f R %.2f learnE %.1f | order %s gap %.2f->%.2f %s "
            "learnE %s\n",
            sb, wb, lr, s.imp[0], s.imp[1], s.imp[2], s.imp[3], s.learn[0], s.learn[1], s.learn[2], s.learn[3],
            s.r2, s.ood_wins, w.imp[0], w.imp[1], w.imp[2], w.imp[3], w.learn[1], order ? "ok" : "NO", gap_s,
            gap_w, gap_w < gap_s ? "ok" : "NO", w.learn[1] > s.learn[1] ? "ok" : "NO");
        std::fflush(stdout);
      }
    }
  }
  return 0;
}
