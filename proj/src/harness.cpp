#include "grpolab/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "grpolab/errors.hpp"
#include "grpolab/eval.hpp"
#include "grpolab/io.hpp"
#include "grpolab/parallel.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

namespace {

constexpr std::uint64_t kOodTag = 0x00d;
constexpr std::uint64_t kTestSampleTag = 0x7e57;

nlohmann::json policy_list_json(const std::vector<SelectionPolicy>& policies) {
  nlohmann::json j = nlohmann::json::array();
  for (auto p : policies) j.push_back(to_string(p));
  return j;
}

std::string run_name(SelectionPolicy policy, std::uint64_t seed) {
  return to_string(policy) + "_s" + std::to_string(seed);
}

struct Manifest {
  std::string path;
  std::vector<std::string> stages;

  void mark(const std::string& stage, bool complete) {
    if (path.empty()) return;
    stages.push_back(stage);
    std::string text = "status: " + std::string(complete ? "complete" : "incomplete") + "\n";
    for (const auto& s : stages) text += "stage: " + s + "\n";
    write_file(path, text);
  }
};

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

PolicyParams profile_params(const std::string& name) {
  PolicyParams p;
  if (name == "strong") {
    p.theta = {5.9, -0.5, -8.2, -2.0};
  } else if (name == "weak") {
    p.theta = {3.0, -0.5, -3.0, -2.0};
  } else {
    throw ConfigError("unknown base-policy profile: " + name);
  }
  return p;
}

std::vector<std::string> profile_names() { return {"strong", "weak"}; }

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.grpo.lr0 = kProfileLearningRate;
  c.probe.k = default_probe_k(c.pool.kind);
  return c;
}

void validate(const ExperimentConfig& c) {
  validate(c.pool);
  validate(c.grpo);
  if (c.probe.k < 1) throw ConfigError("probe.k must be >= 1");
  if (!(c.probe.temperature > 0.0)) throw ConfigError("probe.temperature must be positive");
  if (!(c.fraction > 0.0 && c.fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  if (c.policies.empty()) throw ConfigError("no selection policies configured");
  if (c.seeds.empty()) throw ConfigError("no seeds configured");
  if (std::set(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw ConfigError("duplicate seeds");
  if (std::set(c.policies.begin(), c.policies.end()).size() != c.policies.size())
    throw ConfigError("duplicate selection policies");
  if (c.ood_k < 1) throw ConfigError("ood_k must be >= 1");
  if (!(c.ood_temperature > 0.0)) throw ConfigError("ood_temperature must be positive");
  if (c.base_override) validate(*c.base_override);
  else profile_params(c.profile);
}

PolicyParams base_policy(const ExperimentConfig& c) {
  return c.base_override ? *c.base_override : profile_params(c.profile);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"pool", c.pool},
                     {"profile", c.profile},
                     {"probe", {{"k", c.probe.k}, {"temperature", c.probe.temperature}, {"seed", c.probe.seed}}},
                     {"fraction", c.fraction},
                     {"policies", policy_list_json(c.policies)},
                     {"grpo", c.grpo},
                     {"seeds", c.seeds},
                     {"ood_k", c.ood_k},
                     {"ood_temperature", c.ood_temperature},
                     {"out_dir", c.out_dir}};
  if (c.base_override) j["base_override"] = *c.base_override;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{"pool",   "profile", "base_override", "probe", "fraction",
                                           "policies", "grpo",  "seeds",         "ood_k", "ood_temperature",
                                           "out_dir"};
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key: " + key);
  try {
    c = default_experiment_config();
    if (j.contains("pool")) c.pool = j.at("pool").get<PoolConfig>();
    c.profile = j.value("profile", c.profile);
    if (j.contains("base_override")) c.base_override = j.at("base_override").get<PolicyParams>();
    if (j.contains("probe")) {
      const auto& p = j.at("probe");
      c.probe.k = p.value("k", default_probe_k(c.pool.kind));
      c.probe.temperature = p.value("temperature", c.probe.temperature);
      c.probe.seed = p.value("seed", c.probe.seed);
    } else {
      c.probe.k = default_probe_k(c.pool.kind);
    }
    c.fraction = j.value("fraction", c.fraction);
    if (j.contains("policies")) {
      c.policies.clear();
      for (const auto& p : j.at("policies")) c.policies.push_back(selection_policy_from_string(p.get<std::string>()));
    }
    if (j.contains("grpo")) {
      nlohmann::json g = nlohmann::json(c.grpo);
      g.update(j.at("grpo"));
      c.grpo = g.get<GrpoConfig>();
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.ood_k = j.value("ood_k", c.ood_k);
    c.ood_temperature = j.value("ood_temperature", c.ood_temperature);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

namespace {

void to_json(nlohmann::json& j, const RunRecord& r) {
  j = nlohmann::json{{"policy", to_string(r.policy)},
                     {"seed", r.seed},
                     {"selection",
                      {{"mean_p_hat", r.selection.mean_p_hat},
                       {"min_p_hat", r.selection.min_p_hat},
                       {"max_p_hat", r.selection.max_p_hat}}},
                     {"base_acc", r.base_acc},
                     {"final_acc", r.final_acc},
                     {"improvement", r.improvement},
                     {"learnable_pct", r.learnable_pct},
                     {"total_rollouts", r.total_rollouts},
                     {"ood_base_acc", r.ood_base_acc},
                     {"ood_final_acc", r.ood_final_acc},
                     {"ood_base_pass_at_k", r.ood_base_pass},
                     {"ood_final_pass_at_k", r.ood_final_pass},
                     {"run", r.report}};
}

void from_json(const nlohmann::json& j, RunRecord& r) {
  r.policy = selection_policy_from_string(j.at("policy").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("selection");
  r.selection = {s.at("mean_p_hat").get<double>(), s.at("min_p_hat").get<double>(),
                 s.at("max_p_hat").get<double>()};
  r.base_acc = j.at("base_acc").get<double>();
  r.final_acc = j.at("final_acc").get<double>();
  r.improvement = j.at("improvement").get<double>();
  r.learnable_pct = j.at("learnable_pct").get<double>();
  r.total_rollouts = j.at("total_rollouts").get<std::int64_t>();
  r.ood_base_acc = j.at("ood_base_acc").get<double>();
  r.ood_final_acc = j.at("ood_final_acc").get<double>();
  r.ood_base_pass = j.at("ood_base_pass_at_k").get<std::vector<double>>();
  r.ood_final_pass = j.at("ood_final_pass_at_k").get<std::vector<double>>();
  r.report = j.at("run").get<RunReport>();
}

}  // namespace

void to_json(nlohmann::json& j, const ExperimentReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json rj;
    to_json(rj, run);
    runs.push_back(std::move(rj));
  }
  j = nlohmann::json{{"config", r.config},
                     {"probe_hash", r.probe_hash},
                     {"base_test_acc", r.base_test_acc},
                     {"base_ood_acc", r.base_ood_acc},
                     {"parity",
                      {{"passed", r.parity.passed},
                       {"rollouts_per_run", r.parity.rollouts_per_run},
                       {"total_steps", r.parity.total_steps},
                       {"batch_prompts", r.parity.batch_prompts},
                       {"group_size", r.parity.group_size}}},
                     {"runs", std::move(runs)}};
  if (r.correlation) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [x, y] : r.correlation->points) pts.push_back({x, y});
    j["correlation"] = {{"r2", r.correlation->r2}, {"points", std::move(pts)}};
  } else {
    j["correlation"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, ExperimentReport& r) {
  r.config = j.at("config").get<ExperimentConfig>();
  r.probe_hash = j.at("probe_hash").get<std::string>();
  r.base_test_acc = j.at("base_test_acc").get<double>();
  r.base_ood_acc = j.at("base_ood_acc").get<double>();
  const auto& p = j.at("parity");
  r.parity = {p.at("passed").get<bool>(), p.at("rollouts_per_run").get<std::int64_t>(),
              p.at("total_steps").get<int>(), p.at("batch_prompts").get<int>(),
              p.at("group_size").get<int>()};
  r.runs.clear();
  for (const auto& rj : j.at("runs")) {
    RunRecord run;
    from_json(rj, run);
    r.runs.push_back(std::move(run));
  }
  r.correlation.reset();
  if (!j.at("correlation").is_null()) {
    Correlation c;
    c.r2 = j.at("correlation").at("r2").get<double>();
    for (const auto& pt : j.at("correlation").at("points"))
      c.points.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
    r.correlation = std::move(c);
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  run_stage("config", [&] {
    validate(config);
    return 0;
  });
  const std::string& out = config.out_dir;
  const bool write = !out.empty();
  auto at = [&](const std::string& rel) { return (std::filesystem::path(out) / rel).string(); };
  Manifest manifest{write ? at("MANIFEST") : std::string{}, {}};
  if (write) write_file(at("config.resolved.json"), nlohmann::json(config).dump(2) + "\n");

  ExperimentReport report;
  report.config = config;
  const PolicyParams base = base_policy(config);

  const TaskPool pool = run_stage("genpool", [&] {
    TaskPool p = build_pool(config.pool);
    if (write) write_file(at("pool.pool.json"), serialize_pool(p));
    return p;
  });
  manifest.mark("genpool", false);

  const std::vector<DifficultyEstimate> estimates = run_stage("probe", [&] {
    if (write)
      return probe_pool_cached(at("probe.difficulty.jsonl"), base, pool.train, config.probe.k,
                               config.probe.temperature, config.probe.seed);
    return probe_pool(base, pool.train, config.probe.k, config.probe.temperature, config.probe.seed);
  });
  report.probe_hash = hex64(fnv1a(serialize_estimates(
      make_probe_key(base, pool.train, config.probe.k, config.probe.temperature, config.probe.seed),
      estimates)));
  manifest.mark("probe", false);

  // One selection per (policy, seed); only `random` actually varies with the seed.
  struct Arm {
    SelectionPolicy policy;
    std::uint64_t seed;
    SelectionResult selection;
    std::vector<TaskInstance> subset;
  };
  std::vector<Arm> arms = run_stage("select", [&] {
    std::vector<Arm> a;
    for (auto policy : config.policies) {
      for (auto seed : config.seeds) {
        SelectionResult sel = select(estimates, policy, config.fraction, seed);
        if (write)
          write_file(at("selections/" + run_name(policy, seed) + ".selection.json"),
                     nlohmann::json(sel).dump(2) + "\n");
        std::vector<TaskInstance> subset = gather_tasks(pool.train, sel.selected_ids);
        a.push_back({policy, seed, std::move(sel), std::move(subset)});
      }
    }
    return a;
  });
  manifest.mark("select", false);

  report.base_test_acc = evaluate_accuracy(base, pool.test);
  report.base_ood_acc = evaluate_accuracy(base, pool.ood);

  report.runs.resize(arms.size());
  run_stage("train", [&] {
    parallel_for(arms.size(), [&](std::size_t i) {
      const Arm& arm = arms[i];
      GrpoConfig grpo = config.grpo;
      grpo.seed = derive_seed(config.grpo.seed, {arm.seed});
      const std::uint64_t sample_seed = derive_seed(arm.seed, {kTestSampleTag});
      EvalHook hook = [&](int step, const PolicyParams& params) {
        EvalRecord rec;
        rec.checkpoint_step = step;
        const AccuracyResult acc = evaluate_accuracy_detailed(params, pool.test, sample_seed);
        rec.exact_accuracy = acc.accuracy;
        rec.exact_fallback = acc.fallback;
        rec.sampled_accuracy = sampled_accuracy(params, pool.test, sample_seed);
        return rec;
      };
      RunRecord& rec = report.runs[i];
      rec.policy = arm.policy;
      rec.seed = arm.seed;
      rec.selection = arm.selection.summary;
      rec.report = train(arm.subset, base, grpo, hook);
      rec.base_acc = rec.report.evaluations.front().exact_accuracy;
      rec.final_acc = rec.report.evaluations.back().exact_accuracy;
      rec.improvement = improvement_over_base(rec.base_acc, rec.final_acc);
      rec.learnable_pct = rec.report.learnable_pct;
      rec.total_rollouts = rec.report.total_rollouts;

      const std::uint64_t ood_seed = derive_seed(arm.seed, {kOodTag});
      rec.ood_base_acc = report.base_ood_acc;
      rec.ood_final_acc = evaluate_accuracy(rec.report.final_params, pool.ood);
      if (!pool.ood.empty()) {
        rec.ood_base_pass = pass_at_k_curve(base, pool.ood, config.ood_k, config.ood_temperature, ood_seed);
        rec.ood_final_pass = pass_at_k_curve(rec.report.final_params, pool.ood, config.ood_k,
                                             config.ood_temperature, ood_seed);
      }
      if (write) {
        const std::string dir = "runs/" + run_name(arm.policy, arm.seed) + "/";
        write_file(at(dir + "metrics.jsonl"), serialize_metrics(rec.report));
        for (const auto& [step, params] : rec.report.checkpoints)
          write_file(at(dir + "ckpt_" + std::to_string(step) + ".json"), nlohmann::json(params).dump(2) + "\n");
        write_file(at(dir + "run_report.json"), nlohmann::json(rec.report).dump() + "\n");
      }
    });
    return 0;
  });
  manifest.mark("train", false);
  manifest.mark("eval", false);

  // Compute parity across every arm.
  report.parity.total_steps = config.grpo.total_steps;
  report.parity.batch_prompts = config.grpo.batch_prompts;
  report.parity.group_size = config.grpo.group_size;
  report.parity.rollouts_per_run = report.runs.front().total_rollouts;
  report.parity.passed = std::all_of(report.runs.begin(), report.runs.end(), [&](const RunRecord& r) {
    std::int64_t sampled = 0;
    for (const auto& m : r.report.metrics) sampled += static_cast<std::int64_t>(m.total_groups) * config.grpo.group_size;
    return r.total_rollouts == report.parity.rollouts_per_run && sampled == r.total_rollouts &&
           static_cast<int>(r.report.metrics.size()) == config.grpo.total_steps;
  });

  std::vector<double> xs, ys;
  for (const auto& r : report.runs) {
    xs.push_back(r.learnable_pct);
    ys.push_back(r.improvement);
  }
  if (std::set<double>(xs.begin(), xs.end()).size() >= 2) {
    Correlation c;
    c.r2 = correlation_r2(xs, ys);
    for (std::size_t i = 0; i < xs.size(); ++i) c.points.emplace_back(xs[i], ys[i]);
    report.correlation = std::move(c);
  }

  if (write) {
    run_stage("report", [&] {
      emit_report(report, ReportFormat::json, out);
      emit_report(report, ReportFormat::csv, out);
      emit_report(report, ReportFormat::plotdata, out);
      return 0;
    });
    manifest.mark("report", true);
  }
  return report;
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  if (s == "plotdata") return ReportFormat::plotdata;
  throw ConfigError("unknown report format: " + s);
}

std::string summary_csv(const ExperimentReport& report) {
  std::string out =
      "policy,seed,base_acc,final_acc,improvement,learnable_pct,total_rollouts,ood_base_pass_at_k,ood_final_pass_at_k\n";
  for (const auto& r : report.runs) {
    const double base_pass = r.ood_base_pass.empty() ? 0.0 : r.ood_base_pass.back();
    const double final_pass = r.ood_final_pass.empty() ? 0.0 : r.ood_final_pass.back();
    out += to_string(r.policy) + "," + std::to_string(r.seed) + "," + fixed(r.base_acc) + "," +
           fixed(r.final_acc) + "," + fixed(r.improvement, 4) + "," + fixed(r.learnable_pct, 4) + "," +
           std::to_string(r.total_rollouts) + "," + fixed(base_pass) + "," + fixed(final_pass) + "\n";
  }
  return out;
}

std::string report_json(const ExperimentReport& report) { return nlohmann::json(report).dump() + "\n"; }

std::string plotdata_json(const ExperimentReport& report) {
  nlohmann::json curves = nlohmann::json::array();
  for (auto policy : report.config.policies) {
    std::map<int, std::pair<double, int>> acc;  // step -> (sum, n)
    for (const auto& r : report.runs) {
      if (r.policy != policy) continue;
      for (const auto& e : r.report.evaluations) {
        auto& slot = acc[e.checkpoint_step];
        slot.first += e.exact_accuracy;
        slot.second += 1;
      }
    }
    nlohmann::json steps = nlohmann::json::array(), ys = nlohmann::json::array();
    for (const auto& [step, s] : acc) {
      steps.push_back(step);
      ys.push_back(s.first / s.second);
    }
    curves.push_back({{"policy", to_string(policy)}, {"step", steps}, {"accuracy", ys}});
  }
  nlohmann::json scatter = nlohmann::json::array();
  for (const auto& r : report.runs)
    scatter.push_back({{"policy", to_string(r.policy)},
                       {"seed", r.seed},
                       {"learnable_pct", r.learnable_pct},
                       {"improvement", r.improvement}});
  nlohmann::json j{{"curves", std::move(curves)}, {"scatter", std::move(scatter)}};
  j["r2"] = report.correlation ? nlohmann::json(report.correlation->r2) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

std::string emit_report(const ExperimentReport& report, ReportFormat format, const std::string& dir) {
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  switch (format) {
    case ReportFormat::csv: {
      const auto p = path("summary.csv");
      write_file(p, summary_csv(report));
      return p;
    }
    case ReportFormat::json: {
      const auto p = path("report.json");
      write_file(p, report_json(report));
      return p;
    }
    case ReportFormat::plotdata: {
      const auto p = path("plotdata.json");
      write_file(p, plotdata_json(report));
      return p;
    }
  }
  throw ConfigError("unknown report format");
}

std::vector<PolicyAggregate> aggregate_by_policy(const ExperimentReport& report) {
  std::vector<PolicyAggregate> out;
  for (auto policy : report.config.policies) {
    PolicyAggregate a{policy};
    for (const auto& r : report.runs) {
      if (r.policy != policy) continue;
      a.mean_improvement += r.improvement;
      a.mean_learnable_pct += r.learnable_pct;
      ++a.runs;
    }
    if (a.runs > 0) {
      a.mean_improvement /= a.runs;
      a.mean_learnable_pct /= a.runs;
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace grpolab
