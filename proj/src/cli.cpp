#include "grpolab/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>

#include "grpolab/difficulty.hpp"
#include "grpolab/errors.hpp"
#include "grpolab/eval.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/harness.hpp"
#include "grpolab/io.hpp"
#include "grpolab/oracle.hpp"
#include "grpolab/selection.hpp"

namespace grpolab {

namespace {

// Flags shared by every subcommand plus the ExperimentConfig overrides.
struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;

  std::optional<std::string> profile;
  std::string base_path;
  std::optional<int> k;
  std::optional<double> probe_temperature;
  std::optional<double> fraction;
  std::vector<std::string> policies;
  std::optional<int> steps, batch, group, eval_every, ood_k;
  std::optional<double> beta, lr, momentum;
  std::optional<std::string> lr_schedule;
  std::vector<std::uint64_t> seeds;
  bool normalize_by_std = false;

  // Subcommand inputs.
  std::string pool_path, estimates_path, selection_path, params_path, in_path;
  std::string policy = "hardest";
  std::string split = "test";
  std::string format = "csv";
  double temperature = 1.0;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "experiment config (JSON)");
  app->add_option("--seed", o.seed, "seed for this subcommand's random streams");
  app->add_option("--out", o.out, "output file or directory");
}

void add_policy_source(CLI::App* app, Options& o) {
  app->add_option("--profile", o.profile, "base-policy profile (strong|weak)");
  app->add_option("--base", o.base_path, "base policy params JSON (overrides --profile)");
}

void add_grpo_flags(CLI::App* app, Options& o) {
  app->add_option("--steps", o.steps, "total GRPO steps T");
  app->add_option("--batch", o.batch, "prompts per step B");
  app->add_option("--group", o.group, "rollouts per prompt G");
  app->add_option("--beta", o.beta, "KL coefficient");
  app->add_option("--lr", o.lr, "initial learning rate");
  app->add_option("--lr-schedule", o.lr_schedule, "cosine|constant");
  app->add_option("--eval-every", o.eval_every, "checkpoint interval");
  app->add_option("--momentum", o.momentum, "heavy-ball momentum");
  app->add_flag("--normalize-by-std", o.normalize_by_std, "divide advantages by group std");
}

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig c = default_experiment_config();
  if (!o.config_path.empty()) {
    try {
      c = nlohmann::json::parse(read_file(o.config_path)).get<ExperimentConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad config file: ") + e.what());
    }
  }
  if (o.profile) c.profile = *o.profile;
  if (!o.base_path.empty()) {
    try {
      c.base_override = nlohmann::json::parse(read_file(o.base_path)).get<PolicyParams>();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bad base policy file: ") + e.what());
    }
  }
  if (o.k) c.probe.k = *o.k;
  if (o.probe_temperature) c.probe.temperature = *o.probe_temperature;
  if (o.fraction) c.fraction = *o.fraction;
  if (!o.policies.empty()) {
    c.policies.clear();
    for (const auto& p : o.policies) c.policies.push_back(selection_policy_from_string(p));
  }
  if (o.steps) c.grpo.total_steps = *o.steps;
  if (o.batch) c.grpo.batch_prompts = *o.batch;
  if (o.group) c.grpo.group_size = *o.group;
  if (o.eval_every) c.grpo.eval_every = *o.eval_every;
  if (o.beta) c.grpo.kl_beta = *o.beta;
  if (o.lr) c.grpo.lr0 = *o.lr;
  if (o.momentum) c.grpo.momentum = *o.momentum;
  if (o.lr_schedule) {
    nlohmann::json g = c.grpo;
    g["lr_schedule"] = *o.lr_schedule;
    c.grpo = g.get<GrpoConfig>();
  }
  if (o.normalize_by_std) c.grpo.normalize_by_std = true;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.ood_k) c.ood_k = *o.ood_k;
  return c;
}

TaskPool load_pool(const Options& o, const ExperimentConfig& c) {
  if (!o.pool_path.empty()) return parse_pool(read_file(o.pool_path));
  return build_pool(c.pool);
}

int cmd_genpool(const Options& o, std::ostream& out) {
  ExperimentConfig c = resolve(o);
  if (o.seed) c.pool.master_seed = *o.seed;
  const TaskPool pool = build_pool(c.pool);
  const std::string path = o.out.empty() ? "pool.pool.json" : o.out;
  write_file(path, serialize_pool(pool));
  out << "wrote " << path << ": train=" << pool.train.size() << " test=" << pool.test.size()
      << " ood=" << pool.ood.size() << "\n";
  return kExitOk;
}

int cmd_probe(const Options& o, std::ostream& out) {
  ExperimentConfig c = resolve(o);
  if (o.seed) c.probe.seed = *o.seed;
  validate(c);
  const TaskPool pool = load_pool(o, c);
  const PolicyParams base = base_policy(c);
  const std::string path = o.out.empty() ? "probe.difficulty.jsonl" : o.out;
  bool hit = false;
  const auto estimates =
      probe_pool_cached(path, base, pool.train, c.probe.k, c.probe.temperature, c.probe.seed, &hit);
  double mean = 0.0;
  for (const auto& e : estimates) mean += e.p_hat;
  if (!estimates.empty()) mean /= static_cast<double>(estimates.size());
  out << (hit ? "reused " : "wrote ") << path << ": " << estimates.size()
      << " estimates, mean p_hat " << fixed(mean, 4) << "\n";
  return kExitOk;
}

int cmd_select(const Options& o, std::ostream& out) {
  ExperimentConfig c = resolve(o);
  if (o.estimates_path.empty()) throw ConfigError("select needs --estimates");
  const auto file = parse_estimates(read_file(o.estimates_path));
  const SelectionResult r =
      select(file.estimates, selection_policy_from_string(o.policy), c.fraction, o.seed.value_or(0));
  const std::string path = o.out.empty() ? o.policy + ".selection.json" : o.out;
  write_file(path, nlohmann::json(r).dump(2) + "\n");
  out << "policy " << to_string(r.policy) << " fraction " << r.fraction << " selected "
      << r.selected_ids.size() << "\n"
      << "mean_p_hat " << fixed(r.summary.mean_p_hat, 4) << " min_p_hat " << fixed(r.summary.min_p_hat, 4)
      << " max_p_hat " << fixed(r.summary.max_p_hat, 4) << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  ExperimentConfig c = resolve(o);
  if (o.seed) c.grpo.seed = *o.seed;
  validate(c);
  if (o.selection_path.empty()) throw ConfigError("train needs --selection");
  const TaskPool pool = load_pool(o, c);
  const auto selection = nlohmann::json::parse(read_file(o.selection_path)).get<SelectionResult>();
  const auto subset = gather_tasks(pool.train, selection.selected_ids);
  const PolicyParams base = base_policy(c);
  const std::string dir = o.out.empty() ? "run" : o.out;
  const auto at = [&](const std::string& rel) { return (std::filesystem::path(dir) / rel).string(); };
  write_file(at("config.resolved.json"), nlohmann::json(c).dump(2) + "\n");

  const std::uint64_t sample_seed = c.grpo.seed;
  const RunReport report = train(subset, base, c.grpo, [&](int step, const PolicyParams& params) {
    EvalRecord rec;
    rec.checkpoint_step = step;
    const AccuracyResult acc = evaluate_accuracy_detailed(params, pool.test, sample_seed);
    rec.exact_accuracy = acc.accuracy;
    rec.exact_fallback = acc.fallback;
    rec.sampled_accuracy = sampled_accuracy(params, pool.test, sample_seed);
    return rec;
  });
  write_file(at("metrics.jsonl"), serialize_metrics(report));
  for (const auto& [step, params] : report.checkpoints)
    write_file(at("ckpt_" + std::to_string(step) + ".json"), nlohmann::json(params).dump(2) + "\n");
  write_file(at("run_report.json"), nlohmann::json(report).dump() + "\n");
  const double base_acc = report.evaluations.front().exact_accuracy;
  const double final_acc = report.evaluations.back().exact_accuracy;
  out << "trained " << report.metrics.size() << " steps on " << subset.size() << " prompts: acc "
      << fixed(base_acc, 4) << " -> " << fixed(final_acc, 4) << " ("
      << fixed(improvement_over_base(base_acc, final_acc), 2) << " pts), learnable "
      << fixed(report.learnable_pct, 2) << "%\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  ExperimentConfig c = resolve(o);
  if (o.params_path.empty()) throw ConfigError("eval needs --params");
  const TaskPool pool = load_pool(o, c);
  PolicyParams params;
  try {
    params = nlohmann::json::parse(read_file(o.params_path)).get<PolicyParams>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad params file: ") + e.what());
  }
  const std::vector<TaskInstance>* tasks = nullptr;
  if (o.split == "test") tasks = &pool.test;
  else if (o.split == "ood") tasks = &pool.ood;
  else if (o.split == "train") tasks = &pool.train;
  else throw ConfigError("unknown split: " + o.split);
  const std::uint64_t seed = o.seed.value_or(0);
  const int k = o.ood_k.value_or(c.ood_k);
  const AccuracyResult acc = evaluate_accuracy_detailed(params, *tasks, seed);
  EvalRecord rec;
  rec.exact_accuracy = acc.accuracy;
  rec.exact_fallback = acc.fallback;
  rec.sampled_accuracy = sampled_accuracy(params, *tasks, seed);
  const auto curve = pass_at_k_curve(params, *tasks, k, o.temperature, seed);
  rec.pass_at_k = curve.back();
  rec.k = k;
  nlohmann::json j = rec;
  j["split"] = o.split;
  j["pass_at_k_curve"] = curve;
  const std::string path = o.out.empty() ? "eval.json" : o.out;
  write_file(path, j.dump(2) + "\n");
  out << o.split << ": exact " << fixed(rec.exact_accuracy, 4) << " sampled " << fixed(rec.sampled_accuracy, 4)
      << " pass@" << k << " " << fixed(*rec.pass_at_k, 4) << "\n";
  return kExitOk;
}

int cmd_experiment(const Options& o, std::ostream& out) {
  ExperimentConfig c = resolve(o);
  if (o.seed) c.grpo.seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  if (c.out_dir.empty()) c.out_dir = "experiment";
  validate(c);
  const ExperimentReport r = run_experiment(c);
  out << summary_csv(r);
  for (const auto& a : aggregate_by_policy(r))
    out << "mean " << to_string(a.policy) << ": improvement " << fixed(a.mean_improvement, 2)
        << " learnable " << fixed(a.mean_learnable_pct, 2) << "%\n";
  if (r.correlation) out << "r2 " << fixed(r.correlation->r2, 4) << "\n";
  out << "parity " << (r.parity.passed ? "ok" : "FAILED") << "\n";
  return r.parity.passed ? kExitOk : kExitStageFailure;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.in_path.empty()) throw ConfigError("report needs --in");
  std::string path = o.in_path;
  if (std::filesystem::is_directory(path)) path = (std::filesystem::path(path) / "report.json").string();
  ExperimentReport r;
  try {
    r = nlohmann::json::parse(read_file(path)).get<ExperimentReport>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad report file: ") + e.what());
  }
  const std::string dir = o.out.empty() ? "." : o.out;
  out << "wrote " << emit_report(r, report_format_from_string(o.format), dir) << "\n";
  return kExitOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  const auto lines = run_verification(o.seed.value_or(1));
  bool ok = true;
  std::string text;
  for (const auto& l : lines) {
    text += std::string(l.passed ? "PASS " : "FAIL ") + l.name + ": " + l.detail + "\n";
    ok = ok && l.passed;
  }
  out << text;
  if (!o.out.empty()) write_file(o.out, text);
  return ok ? kExitOk : kExitStageFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Budget-aware GRPO laboratory on synthetic reasoning tasks", "grpolab"};
  app.require_subcommand(1);
  Options o;

  auto* genpool = app.add_subcommand("genpool", "generate a task pool");
  add_common(genpool, o);

  auto* probe = app.add_subcommand("probe", "estimate per-prompt success rates of the base policy");
  add_common(probe, o);
  add_policy_source(probe, o);
  probe->add_option("--pool", o.pool_path, "pool file (default: generate from config)");
  probe->add_option("--k", o.k, "samples per prompt");
  probe->add_option("--temperature", o.probe_temperature, "sampling temperature");

  auto* sel = app.add_subcommand("select", "choose a budgeted training subset");
  add_common(sel, o);
  sel->add_option("--estimates", o.estimates_path, "difficulty file")->required();
  sel->add_option("--policy", o.policy, "hardest|easiest|middle|random");
  sel->add_option("--fraction", o.fraction, "budget fraction p");

  auto* tr = app.add_subcommand("train", "run GRPO on a selected subset");
  add_common(tr, o);
  add_policy_source(tr, o);
  add_grpo_flags(tr, o);
  tr->add_option("--pool", o.pool_path, "pool file (default: generate from config)");
  tr->add_option("--selection", o.selection_path, "selection file")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, o);
  ev->add_option("--pool", o.pool_path, "pool file (default: generate from config)");
  ev->add_option("--params", o.params_path, "checkpoint JSON")->required();
  ev->add_option("--split", o.split, "test|ood|train");
  ev->add_option("--k", o.ood_k, "pass@k samples");
  ev->add_option("--temperature", o.temperature, "pass@k sampling temperature");

  auto* ex = app.add_subcommand("experiment", "run the full four-policy matrix");
  add_common(ex, o);
  add_policy_source(ex, o);
  add_grpo_flags(ex, o);
  ex->add_option("--k", o.k, "probe samples per prompt");
  ex->add_option("--fraction", o.fraction, "budget fraction p");
  ex->add_option("--policies", o.policies, "selection policies to run");
  ex->add_option("--seeds", o.seeds, "run seeds");
  ex->add_option("--ood-k", o.ood_k, "k for OOD pass@k");

  auto* rep = app.add_subcommand("report", "re-emit an experiment report");
  add_common(rep, o);
  rep->add_option("--in", o.in_path, "report.json or experiment directory")->required();
  rep->add_option("--format", o.format, "csv|json|plotdata");

  auto* ver = app.add_subcommand("verify", "run oracle cross-checks");
  add_common(ver, o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    if (genpool->parsed()) return cmd_genpool(o, out);
    if (probe->parsed()) return cmd_probe(o, out);
    if (sel->parsed()) return cmd_select(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (ex->parsed()) return cmd_experiment(o, out);
    if (rep->parsed()) return cmd_report(o, out);
    if (ver->parsed()) return cmd_verify(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "stage failure: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitConfigError;
}

}  // namespace grpolab
