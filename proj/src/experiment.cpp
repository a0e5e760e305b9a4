#include "oodrl/experiment.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <sstream>

#include "oodrl/checkpoint.hpp"
#include "oodrl/corruptions.hpp"
#include "oodrl/error.hpp"
#include "oodrl/io.hpp"

namespace oodrl::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  const auto ids = envs::env_ids();
  if (std::find(ids.begin(), ids.end(), env) == ids.end())
    throw ConfigError("unknown environment '" + env + "'");
  // Building the env checks the override names and values.
  auto probe = envs::make_env(env, env_overrides);
  for (const auto& v : variants) {
    const auto preset = envs::find_preset(v);
    if (preset.env != env) throw ConfigError("variant " + v + " does not belong to " + env);
  }
  agent.validate();
  if (agent.algorithm != agents::default_algorithm(env))
    throw ConfigError("algorithm " + agents::to_string(agent.algorithm) + " does not fit " + env);
  if (methods.empty()) throw ConfigError("at least one method is required");
  std::vector<std::string> labels;
  for (const auto& m : methods) {
    m.validate();
    labels.push_back(method_label(m));
  }
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
    throw ConfigError("each method kind may appear only once");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (episodes_per_side < 1) throw ConfigError("episodes_per_side must be >= 1");
  if (evaluate_episodes < 1) throw ConfigError("evaluate_episodes must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (out.empty()) throw ConfigError("out must not be empty");
}

namespace {

uncertainty::Method method_from_json(const json& j) {
  uncertainty::Method m;
  if (j.is_string()) {
    m.kind = uncertainty::method_from_string(j.get<std::string>());
    return m;
  }
  if (!j.is_object()) throw ConfigError("method must be a name or an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") m.kind = uncertainty::method_from_string(value.get<std::string>());
    else if (key == "samples") m.samples = value.get<int>();
    else if (key == "aggregation") m.aggregation = uncertainty::aggregation_from_string(value.get<std::string>());
    else if (key == "rate") m.rate = value.get<double>();
    else throw ConfigError("method: unknown key '" + key + "'");
  }
  return m;
}

json method_to_json(const uncertainty::Method& m) {
  return {{"kind", uncertainty::to_string(m.kind)},
          {"samples", m.samples},
          {"aggregation", uncertainty::to_string(m.aggregation)},
          {"rate", m.rate}};
}

std::string flat(std::string id) {
  std::replace(id.begin(), id.end(), '/', '_');
  return id;
}

agents::Behaviour behaviour_from_json(const json& j) {
  agents::Behaviour b;
  for (const auto& [key, value] : j.items()) {
    if (key == "policy") {
      const auto p = value.get<std::string>();
      if (p != "greedy" && p != "explore") throw ConfigError("rollout.policy must be greedy or explore");
      b.greedy = p == "greedy";
    } else if (key == "epsilon") b.epsilon = value.get<double>();
    else if (key == "action_noise") b.action_noise = value.get<double>();
    else throw ConfigError("unknown rollout key '" + key + "'");
  }
  b.validate();
  return b;
}

void write_json(const fs::path& path, const json& j) { io::atomic_write(path, j.dump(2) + "\n"); }

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  try {
    c.env = j.value("env", std::string("cartpole"));
    c.agent = agents::default_config(c.env);
    for (const auto& [key, value] : j.items()) {
      if (key == "env") continue;
      if (key == "env_overrides") c.env_overrides = value.get<envs::Overrides>();
      else if (key == "variants") {
        if (value.is_string()) {
          if (value.get<std::string>() != "all") throw ConfigError("variants must be a list or \"all\"");
          for (const auto& p : envs::variant_presets(c.env)) c.variants.push_back(p.id);
        } else {
          for (const auto& v : value) c.variants.push_back(envs::find_preset(v.get<std::string>()).id);
        }
      } else if (key == "agent") c.agent = agents::config_from_json(value, c.agent);
      else if (key == "method") c.methods = {method_from_json(value)};
      else if (key == "methods") {
        c.methods.clear();
        for (const auto& m : value) c.methods.push_back(method_from_json(m));
      } else if (key == "trials") c.trials = value.get<int>();
      else if (key == "episodes_per_side") c.episodes_per_side = value.get<int>();
      else if (key == "evaluate_episodes") c.evaluate_episodes = value.get<int>();
      else if (key == "base_seed") c.base_seed = value.get<std::uint64_t>();
      else if (key == "out") c.out = value.get<std::string>();
      else if (key == "threshold_rule") c.threshold_rule = evalkit::threshold_rule_from_string(value.get<std::string>());
      else if (key == "granularity") {
        const auto g = value.get<std::string>();
        if (g != "step" && g != "episode") throw ConfigError("granularity must be step or episode");
        c.episode_level = g == "episode";
      } else if (key == "jobs") c.jobs = value.get<int>();
      else if (key == "rollout") c.rollout = behaviour_from_json(value);
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (const auto& m : c.methods) methods.push_back(method_to_json(m));
  return {{"env", c.env},
          {"env_overrides", c.env_overrides},
          {"variants", c.variants},
          {"agent", agents::to_json(c.agent)},
          {"methods", methods},
          {"trials", c.trials},
          {"episodes_per_side", c.episodes_per_side},
          {"evaluate_episodes", c.evaluate_episodes},
          {"base_seed", c.base_seed},
          {"out", c.out.string()},
          {"threshold_rule", evalkit::to_string(c.threshold_rule)},
          {"granularity", c.episode_level ? "episode" : "step"},
          {"jobs", c.jobs},
          {"rollout",
           {{"policy", c.rollout.greedy ? "greedy" : "explore"},
            {"epsilon", c.rollout.epsilon},
            {"action_noise", c.rollout.action_noise}}}};
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply(ExperimentConfig& c, const Overrides& o) {
  if (o.seed) c.base_seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.trials) c.trials = *o.trials;
  if (o.jobs) c.jobs = *o.jobs;
  c.validate();
}

std::string method_label(const uncertainty::Method& m) { return uncertainty::to_string(m.kind); }

std::uint64_t trial_seed(const ExperimentConfig& c, int trial) {
  return c.base_seed + static_cast<std::uint64_t>(trial);
}

std::uint64_t member_seed(const ExperimentConfig& c, int trial, int member) {
  return derive_seed(trial_seed(c, trial), {static_cast<std::uint64_t>(member)});
}

fs::path trial_dir(const ExperimentConfig& c, const uncertainty::Method& m, int trial) {
  return c.out / "checkpoints" / method_label(m) / ("trial_" + std::to_string(trial));
}

fs::path member_path(const ExperimentConfig& c, const uncertainty::Method& m, int trial, int member) {
  return trial_dir(c, m, trial) / ("member_" + std::to_string(member) + ".orlb");
}

// ---- train ----------------------------------------------------------------------

TrainSummary cmd_train(const ExperimentConfig& c) {
  c.validate();
  write_json(c.out / "effective_config.json", to_json(c));
  struct Unit {
    const uncertainty::Method* method;
    int trial;
  };
  std::vector<Unit> units;
  for (const auto& m : c.methods)
    for (int t = 0; t < c.trials; ++t) units.push_back({&m, t});

  std::vector<std::string> errors(units.size());
  evalkit::parallel_for(static_cast<int>(units.size()), c.jobs, [&](int u) {
    const auto& [m, trial] = units[static_cast<std::size_t>(u)];
    const auto dir = trial_dir(c, *m, trial);
    json status = {{"method", method_label(*m)}, {"trial", trial}, {"seed", trial_seed(c, trial)}};
    json members = json::array();
    try {
      for (int k = 0; k < m->members(); ++k) {
        auto env = envs::make_env(c.env, c.env_overrides);
        const auto seed = member_seed(c, trial, k);
        auto result = agents::train(*env, c.agent, m->stochastic(), seed);
        const auto path = member_path(c, *m, trial, k);
        save_checkpoint(path, result.model);
        if (result.critic) {
          auto critic_path = path;
          critic_path.replace_extension(".critic.orlb");
          save_checkpoint(critic_path, *result.critic);
        }
        io::atomic_write(c.out / "curves" /
                             (method_label(*m) + "_trial_" + std::to_string(trial) + "_member_" +
                              std::to_string(k) + ".csv"),
                         agents::curve_csv(result.curve));
        members.push_back({{"member", k},
                           {"seed", seed},
                           {"best_eval_return", result.best_eval_return},
                           {"best_eval_step", result.best_eval_step}});
      }
      status["ok"] = true;
    } catch (const TrainingError& e) {
      status["ok"] = false;
      status["error"] = e.what();
      errors[static_cast<std::size_t>(u)] = e.what();
    }
    status["members"] = members;
    write_json(dir / "status.json", status);
  });

  TrainSummary s;
  s.units = static_cast<int>(units.size());
  std::string first;
  for (const auto& e : errors) {
    if (e.empty()) continue;
    ++s.failed;
    if (first.empty()) first = e;
  }
  if (s.failed > 0)
    throw TrainingError(std::to_string(s.failed) + " of " + std::to_string(s.units) +
                        " training units diverged; first: " + first);
  return s;
}

TrialModels load_trial(const ExperimentConfig& c, const uncertainty::Method& m, int trial) {
  TrialModels models;
  const auto status_path = trial_dir(c, m, trial) / "status.json";
  if (!fs::exists(status_path))
    throw ConfigError("no checkpoints for " + method_label(m) + " trial " + std::to_string(trial) +
                      " under " + c.out.string() + "; run `train` first");
  const auto status = json::parse(io::read_file(status_path));
  if (!status.value("ok", false)) {
    models.failed = true;
    models.error = status.value("error", std::string("training failed"));
    return models;
  }
  for (int k = 0; k < m.members(); ++k) {
    auto ckpt = load_checkpoint(member_path(c, m, trial, k));
    models.members.push_back(std::move(ckpt.network));
  }
  return models;
}

// ---- evaluate -------------------------------------------------------------------

std::vector<EvaluateRow> cmd_evaluate(const ExperimentConfig& c) {
  c.validate();
  write_json(c.out / "effective_config.json", to_json(c));
  std::vector<EvaluateRow> rows;
  json failing = json::object();
  const std::uint64_t seed = derive_seed(c.base_seed, {7});
  const auto rule = agents::FailureRule::for_family(c.env);
  for (const auto& m : c.methods) {
    auto models = load_trial(c, m, 0);
    if (models.failed) throw TrainingError("trial 0 of " + method_label(m) + " failed to train");
    auto def = envs::make_env(c.env, c.env_overrides);
    const auto policy = agents::make_policy(std::move(models.members), *def, c.agent.downsample);
    json ids = json::array();
    if (c.variants.empty()) {
      const double r = agents::mean_greedy_return(policy, *def, c.evaluate_episodes, seed);
      rows.push_back({method_label(m), c.env, r, rule.threshold(r), false});
    } else {
      const auto report = agents::find_failing_variants(policy, c.env, c.variants, c.evaluate_episodes,
                                                        rule, seed, c.env_overrides);
      rows.push_back({method_label(m), c.env, report.default_return, report.threshold, false});
      for (const auto& v : report.variants) {
        rows.push_back({method_label(m), v.id, v.mean_return, report.threshold, v.failing});
        if (v.failing) ids.push_back(v.id);
      }
    }
    failing[method_label(m)] = ids;
  }
  std::ostringstream csv;
  csv << "method,variant,mean_return,threshold,failing\n";
  for (const auto& r : rows)
    csv << r.method << ',' << r.variant << ',' << io::format_double(r.mean_return) << ','
        << io::format_double(r.threshold) << ',' << (r.failing ? 1 : 0) << '\n';
  io::atomic_write(c.out / "evaluate" / "returns.csv", csv.str());
  write_json(c.out / "evaluate" / "failing.json", failing);
  return rows;
}

// ---- detect ---------------------------------------------------------------------

DetectOutput cmd_detect(const ExperimentConfig& c) {
  c.validate();
  if (c.variants.empty()) throw ConfigError("detect needs at least one variant");
  write_json(c.out / "effective_config.json", to_json(c));
  const bool discrete = envs::make_env(c.env, c.env_overrides)->action_space().discrete;

  // Load everything up front so missing or incompatible checkpoints fail before any work.
  struct Unit {
    const uncertainty::Method* method;
    int trial;
    TrialModels models;
  };
  std::vector<Unit> units;
  for (const auto& m : c.methods) {
    for (int t = 0; t < c.trials; ++t) {
      Unit u{&m, t, load_trial(c, m, t)};
      if (!u.models.failed) {
        auto env = envs::make_env(c.env, c.env_overrides);
        agents::make_policy(u.models.members, *env, c.agent.downsample);
        uncertainty::Scorer(m, u.models.members, discrete);
      }
      units.push_back(std::move(u));
    }
  }

  // results[unit][variant]
  std::vector<std::vector<evalkit::TrialResult>> results(units.size());
  std::vector<std::vector<std::string>> traces(units.size());
  evalkit::parallel_for(static_cast<int>(units.size()), c.jobs, [&](int ui) {
    auto& u = units[static_cast<std::size_t>(ui)];
    auto& out = results[static_cast<std::size_t>(ui)];
    const auto seed = trial_seed(c, u.trial);
    if (u.models.failed) {
      for (std::size_t v = 0; v < c.variants.size(); ++v) {
        evalkit::TrialResult r;
        r.trial = u.trial;
        r.seed = seed;
        r.failed = true;
        r.error = u.models.error;
        out.push_back(r);
      }
      return;
    }
    auto id_env = envs::make_env(c.env, c.env_overrides);
    const auto policy = agents::make_policy(u.models.members, *id_env, c.agent.downsample);
    const uncertainty::Scorer scorer(*u.method, u.models.members, discrete);
    const auto score_seed = derive_seed(seed, {11});
    const auto id_side = evalkit::collect_side(scorer, policy, *id_env, 0, c.episodes_per_side, score_seed,
                                               c.rollout);
    for (const auto& variant : c.variants) {
      auto ood_env = envs::make_env(variant, c.env_overrides);
      const auto ood_side =
          evalkit::collect_side(scorer, policy, *ood_env, 1, c.episodes_per_side, score_seed, c.rollout);
      const auto scores = evalkit::join_sides(id_side, ood_side);
      const auto id_scores = c.episode_level ? scores.episode_scores(false) : scores.scores(false);
      const auto ood_scores = c.episode_level ? scores.episode_scores(true) : scores.scores(true);
      const auto roc = evalkit::auc(id_scores, ood_scores, c.threshold_rule);
      evalkit::TrialResult r;
      r.trial = u.trial;
      r.seed = seed;
      r.auc = roc.auc;
      r.best_threshold = roc.best_threshold;
      r.youden_j = roc.youden_j;
      r.n_id = id_scores.size();
      r.n_ood = ood_scores.size();
      out.push_back(r);
      traces[static_cast<std::size_t>(ui)].push_back(
          evalkit::trace_csv(scores.id_trace, scores.ood_trace, roc.best_threshold));
    }
  });

  DetectOutput d;
  d.aggregate = json::array();
  std::vector<std::pair<fs::path, std::string>> trace_files;
  for (const auto& m : c.methods) {
    for (std::size_t v = 0; v < c.variants.size(); ++v) {
      std::vector<evalkit::TrialResult> trials;
      for (std::size_t ui = 0; ui < units.size(); ++ui) {
        if (units[ui].method != &m) continue;
        const auto& r = results[ui][v];
        trials.push_back(r);
        d.rows.push_back({c.env, c.variants[v], method_label(m), uncertainty::to_string(m.aggregation), r});
        if (!r.failed)
          trace_files.emplace_back(c.out / "detect" / "traces" /
                                       (method_label(m) + "__" + flat(c.variants[v]) + "__trial_" +
                                        std::to_string(r.trial) + ".csv"),
                                   traces[ui][v]);
      }
      json entry = {{"env", c.env},
                    {"variant", c.variants[v]},
                    {"method", method_label(m)},
                    {"aggregation", uncertainty::to_string(m.aggregation)}};
      json failed = json::array();
      for (const auto& t : trials)
        if (t.failed) failed.push_back(t.trial);
      entry["failed_trials"] = failed;
      if (failed.size() == trials.size()) {
        entry["mean_auc"] = nullptr;
        entry["std_auc"] = nullptr;
        entry["n"] = 0;
        entry["single_trial"] = false;
        entry["aucs"] = json::array();
      } else {
        const auto agg = evalkit::aggregate_trials(trials);
        entry["mean_auc"] = agg.mean;
        entry["std_auc"] = agg.std;
        entry["n"] = agg.n;
        entry["single_trial"] = agg.single_trial;
        entry["aucs"] = agg.values;
      }
      d.aggregate.push_back(entry);
    }
  }
  for (const auto& [path, text] : trace_files) io::atomic_write(path, text);
  io::atomic_write(c.out / "detect" / "results.csv", evalkit::results_csv(d.rows));
  write_json(c.out / "detect" / "aggregate.json", d.aggregate);
  return d;
}

// ---- report ---------------------------------------------------------------------

std::string cmd_report(const ExperimentConfig& c) {
  const auto path = c.out / "detect" / "results.csv";
  if (!fs::exists(path)) throw ConfigError("no detection results at " + path.string() + "; run `detect` first");
  const auto rows = io::parse_csv(io::read_file(path));
  if (rows.empty()) throw DataError("empty results file " + path.string());
  // Group by (variant, method) in file order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<std::string, std::string>>> groups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 11) throw DataError("malformed row in " + path.string());
    const auto key = std::make_pair(r[1], r[2]);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].emplace_back(r[4], r[5]);
  }
  std::ostringstream out;
  for (const auto& key : keys) {
    out << key.first << "  [" << key.second << "]\n";
    std::vector<double> aucs;
    for (const auto& [trial, auc] : groups[key]) {
      out << "  trial " << trial << "  " << auc << '\n';
      if (auc != "failed") aucs.push_back(std::stod(auc));
    }
    if (aucs.empty()) {
      out << "  all trials failed\n";
    } else {
      const auto agg = evalkit::aggregate(aucs);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3f +- %.3f", agg.mean, agg.std);
      out << "  mean AUC " << buf << (agg.single_trial ? "  (single trial)" : "") << '\n';
    }
  }
  io::atomic_write(c.out / "report" / "summary.txt", out.str());
  return out.str();
}

// ---- preview-corruption ---------------------------------------------------------

std::vector<fs::path> cmd_preview_corruption(const std::string& kind_name, std::optional<int> level,
                                             std::optional<std::string> param,
                                             std::optional<fs::path> input, std::uint64_t seed,
                                             const fs::path& out) {
  const auto kind = corruptions::kind_from_string(kind_name);
  std::vector<corruptions::CorruptionSpec> specs;
  if (param) specs.push_back(corruptions::parse_spec(kind, *param));
  else if (level) specs.push_back(corruptions::severity(kind, *level));
  else specs = corruptions::severity_grid(kind);

  Frame clean;
  if (input) {
    if (!fs::exists(*input)) throw ConfigError("input frame not found: " + input->string());
    clean = io::decode_pgm(io::read_file(*input));
  } else {
    envs::MiniPongParams p;
    Rng rng(seed);
    clean = envs::minipong_render(envs::minipong_reset(p, rng), p);
  }
  std::vector<fs::path> written;
  const auto clean_path = out / "preview" / "clean.pgm";
  io::atomic_write(clean_path, io::encode_pgm(clean));
  written.push_back(clean_path);
  for (const auto& spec : specs) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(spec.severity.value_or(0))}));
    const Frame f = corruptions::corrupt(clean, spec, rng);
    const std::string name = corruptions::to_string(kind) + "_" +
                             (spec.severity && !param ? "severity_" + std::to_string(*spec.severity)
                                                      : spec.parameter_label()) +
                             ".pgm";
    const auto path = out / "preview" / name;
    io::atomic_write(path, io::encode_pgm(f));
    written.push_back(path);
  }
  return written;
}

std::string list_envs() {
  std::ostringstream out;
  for (const auto& env : envs::env_ids()) {
    out << env << '\n';
    for (const auto& p : envs::variant_presets(env)) out << "  " << p.id << '\n';
  }
  return out.str();
}

}  // namespace oodrl::experiment
