#include "cli.hpp"

#include <cstdlib>
#include <optional>

#include <CLI11.hpp>

#include "oodrl/error.hpp"
#include "oodrl/experiment.hpp"

namespace oodrl::cli {

namespace {

std::uint64_t parse_seed(const std::string& text, const char* source) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || text[0] == '-')
    throw ConfigError(std::string(source) + " must be a non-negative integer, got '" + text + "'");
  return v;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Out-of-distribution detection benchmark for deep RL", "oodrl"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> seed_text;
  std::optional<std::string> out_dir;
  std::optional<int> trials, jobs;
  auto add_globals = [&](CLI::App* a) {
    a->add_option("--config", config_path, "Experiment config (JSON)");
    a->add_option("--seed", seed_text, "Base seed (falls back to OODRL_SEED)");
    a->add_option("--out", out_dir, "Output directory");
    a->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
    a->add_option("--jobs", jobs, "Parallel trial workers")->check(CLI::PositiveNumber);
  };

  auto* train = app.add_subcommand("train", "Train the models of every trial");
  auto* evaluate = app.add_subcommand("evaluate", "Greedy returns on the default env and each variant");
  auto* detect = app.add_subcommand("detect", "OOD detection AUC per variant, method and trial");
  auto* report = app.add_subcommand("report", "Summarise detection results");
  auto* preview = app.add_subcommand("preview-corruption", "Write corrupted sample frames as PGM");
  auto* list = app.add_subcommand("list-envs", "List environments and variant presets");
  add_globals(&app);
  for (auto* s : {train, evaluate, detect, report, preview}) add_globals(s);

  std::string kind;
  std::optional<int> severity;
  std::optional<std::string> param, input;
  preview->add_option("--kind", kind, "gaussian, impulse, motion_blur or pixelate")->required();
  preview->add_option("--severity", severity, "Severity level 1-5 (default: all)");
  preview->add_option("--param", param, "Explicit parameter, e.g. 0.5 or 15x8");
  preview->add_option("--input", input, "Input frame (PGM); default is a MiniPong frame");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (list->parsed()) {
      out << experiment::list_envs();
      return kExitOk;
    }
    experiment::Overrides o;
    if (seed_text) o.seed = parse_seed(*seed_text, "--seed");
    else if (const char* env_seed = std::getenv("OODRL_SEED")) o.seed = parse_seed(env_seed, "OODRL_SEED");
    if (out_dir) o.out = *out_dir;
    o.trials = trials;
    o.jobs = jobs;

    if (preview->parsed()) {
      const auto written = experiment::cmd_preview_corruption(
          kind, severity, param, input ? std::optional<std::filesystem::path>(*input) : std::nullopt,
          o.seed.value_or(0), o.out.value_or("runs"));
      for (const auto& p : written) out << p.string() << '\n';
      return kExitOk;
    }

    auto config = config_path.empty() ? experiment::config_from_json(nlohmann::json::object())
                                      : experiment::load_config(config_path);
    experiment::apply(config, o);

    if (train->parsed()) {
      const auto s = experiment::cmd_train(config);
      out << "trained " << s.units << " unit(s) into " << config.out.string() << '\n';
    } else if (evaluate->parsed()) {
      for (const auto& r : experiment::cmd_evaluate(config))
        out << r.method << "  " << r.variant << "  " << r.mean_return << (r.failing ? "  FAILING" : "")
            << '\n';
    } else if (detect->parsed()) {
      const auto d = experiment::cmd_detect(config);
      for (const auto& a : d.aggregate) {
        out << a["variant"].get<std::string>() << "  " << a["method"].get<std::string>() << "  ";
        if (a["mean_auc"].is_null()) out << "all trials failed\n";
        else out << a["mean_auc"].get<double>() << " +- " << a["std_auc"].get<double>() << '\n';
      }
    } else if (report->parsed()) {
      out << experiment::cmd_report(config);
    }
    return kExitOk;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kExitTraining;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace oodrl::cli
