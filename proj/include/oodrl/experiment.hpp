#pragma once

// Experiment configuration and the train / evaluate / detect / report pipeline
// behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodrl/agents.hpp"
#include "oodrl/envs.hpp"
#include "oodrl/evalkit.hpp"
#include "oodrl/uncertainty.hpp"

namespace oodrl::experiment {

struct ExperimentConfig {
  std::string env = "cartpole";
  envs::Overrides env_overrides;      // applied to the default env and every variant
  std::vector<std::string> variants;  // preset ids
  agents::AgentConfig agent = agents::default_config("cartpole");
  std::vector<uncertainty::Method> methods = {uncertainty::Method{}};
  int trials = 5;
  int episodes_per_side = 10;
  int evaluate_episodes = 20;
  std::uint64_t base_seed = 0;
  std::filesystem::path out = "runs";
  evalkit::ThresholdRule threshold_rule = evalkit::ThresholdRule::youden;
  bool episode_level = false;  // score episodes by their mean step score
  int jobs = 1;
  agents::Behaviour rollout;  // scoring rollouts: greedy by default

  void validate() const;
};

// Unspecified fields take defaults; the agent section starts from the env's
// default AgentConfig. "variants": "all" expands to every preset of the env.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

// Command-line overrides applied on top of a loaded config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> trials;
  std::optional<int> jobs;
};

void apply(ExperimentConfig& c, const Overrides& o);

// Methods are identified in paths and tables by their kind name.
std::string method_label(const uncertainty::Method& m);

std::uint64_t trial_seed(const ExperimentConfig& c, int trial);
std::uint64_t member_seed(const ExperimentConfig& c, int trial, int member);

std::filesystem::path trial_dir(const ExperimentConfig& c, const uncertainty::Method& m, int trial);
std::filesystem::path member_path(const ExperimentConfig& c, const uncertainty::Method& m,
                                  int trial, int member);

// ---- Commands -------------------------------------------------------------------

struct TrainSummary {
  int units = 0;
  int failed = 0;  // (method, trial) units whose training diverged
};

// Trains every (method, trial) unit and writes checkpoints, curves and a per-trial
// status file. Throws TrainingError after writing everything if any unit diverged.
TrainSummary cmd_train(const ExperimentConfig& c);

struct TrialModels {
  bool failed = false;
  std::string error;
  std::vector<nn::Network> members;
};

// Loads the networks of one (method, trial) unit; a missing checkpoint throws ConfigError.
TrialModels load_trial(const ExperimentConfig& c, const uncertainty::Method& m, int trial);

struct EvaluateRow {
  std::string method, variant;
  double mean_return = 0.0;
  double threshold = 0.0;
  bool failing = false;
};

// Greedy returns of the trial-0 models on the default env and every variant.
std::vector<EvaluateRow> cmd_evaluate(const ExperimentConfig& c);

struct DetectOutput {
  std::vector<evalkit::ResultRow> rows;
  nlohmann::json aggregate;
};

DetectOutput cmd_detect(const ExperimentConfig& c);

// Renders detect/results.csv as per-(variant, method) trial tables with mean +- std.
std::string cmd_report(const ExperimentConfig& c);

// Writes one PGM per severity (or one for `param`) plus the clean frame; returns the paths.
std::vector<std::filesystem::path> cmd_preview_corruption(
    const std::string& kind, std::optional<int> severity, std::optional<std::string> param,
    std::optional<std::filesystem::path> input, std::uint64_t seed,
    const std::filesystem::path& out);

std::string list_envs();

}  // namespace oodrl::experiment
