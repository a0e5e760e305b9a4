#pragma once

// DQN and DDPG trainers, greedy rollouts and failing-variant search.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodrl/checkpoint.hpp"
#include "oodrl/envs.hpp"
#include "oodrl/nn.hpp"
#include "oodrl/rng.hpp"

namespace oodrl::agents {

enum class Algorithm { dqn, ddpg };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

// Default pairing: cartpole and MiniPong use DQN, pendulum uses DDPG.
Algorithm default_algorithm(const std::string& family);

struct AgentConfig {
  Algorithm algorithm = Algorithm::dqn;
  std::vector<std::size_t> hidden_dims = {64, 64};
  nn::Activation activation = nn::Activation::relu;
  double lr = 1e-3;         // Q network (DQN) or critic (DDPG)
  double actor_lr = 1e-4;   // DDPG only
  double gamma = 0.99;
  std::size_t batch = 64;
  std::size_t buffer_capacity = 50000;
  std::int64_t target_update_every = 500;  // DQN hard update period, in env steps
  double tau = 0.005;                      // DDPG soft update rate
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 10000;
  double action_noise = 0.1;  // DDPG, as a fraction of the action bound
  std::int64_t train_steps = 50000;
  std::int64_t learning_starts = 1000;
  std::int64_t train_every = 1;
  double grad_clip = 10.0;
  // Greedy evaluation during training; the best-scoring snapshot is returned.
  std::int64_t eval_every = 5000;  // 0 disables
  int eval_episodes = 10;
  // Pixel observations are area-downsampled by this factor per axis.
  std::size_t downsample = 1;

  void validate() const;
  bool operator==(const AgentConfig&) const = default;
};

AgentConfig default_config(const std::string& family);

nlohmann::json to_json(const AgentConfig& c);
// Missing keys keep the values already in `base`; unknown keys throw ConfigError.
AgentConfig config_from_json(const nlohmann::json& j, AgentConfig base);

// ---- Observation preprocessing ------------------------------------------------

// Network input for an observation: vector observations pass through; frame
// stacks are downsampled frame by frame and flattened oldest first.
std::vector<double> preprocess(const envs::Observation& obs, std::size_t downsample);
std::size_t input_dim(const envs::Environment& env, std::size_t downsample);

// ---- Replay buffer ------------------------------------------------------------

struct Transition {
  std::vector<double> obs;
  double action = 0.0;  // discrete index stored as a double
  double reward = 0.0;
  std::vector<double> next_obs;
  bool terminated = false;
};

struct Batch {
  nn::Matrix obs;       // obs_dim x n
  nn::Matrix next_obs;  // obs_dim x n
  std::vector<double> actions, rewards;
  std::vector<bool> terminated;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim);

  void add(std::span<const double> obs, double action, double reward,
           std::span<const double> next_obs, bool terminated);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t obs_dim() const { return obs_dim_; }
  // Index 0 is the oldest stored transition.
  Transition at(std::size_t i) const;
  // Uniform with replacement over the current contents.
  Batch sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_, obs_dim_;
  std::size_t head_ = 0, size_ = 0;
  std::vector<float> obs_, next_obs_;
  std::vector<double> actions_, rewards_;
  std::vector<char> terminated_;
};

// ---- DQN / DDPG building blocks ------------------------------------------------

double epsilon_at(const AgentConfig& c, std::int64_t step);

// Uniform random action with probability epsilon, otherwise argmax (lowest index on ties).
int epsilon_greedy(const nn::Vector& q, double epsilon, Rng& rng);

int argmax(const nn::Vector& v);

// r + gamma * max_a' next_q(a') * (1 - terminated), column-wise.
nn::Vector td_targets(const nn::Matrix& next_q, const std::vector<double>& rewards,
                      const std::vector<bool>& terminated, double gamma);

nn::NetworkSpec q_network_spec(const envs::Environment& env, const AgentConfig& c,
                               nn::Stochastic stochastic);
nn::NetworkSpec actor_spec(const envs::Environment& env, const AgentConfig& c,
                           nn::Stochastic stochastic);
nn::NetworkSpec critic_spec(const envs::Environment& env, const AgentConfig& c);

struct CurvePoint {
  int episode = 0;
  double ret = 0.0;
  double epsilon = 0.0;  // DQN: value at episode end; DDPG: noise scale
  double loss_mean = 0.0;
};

struct TrainResult {
  Checkpoint model;                  // Q network or actor
  std::optional<Checkpoint> critic;  // DDPG only
  std::vector<CurvePoint> curve;
  std::int64_t steps = 0;
  double best_eval_return = 0.0;
  std::int64_t best_eval_step = -1;  // -1 when the final weights were kept
};

TrainResult dqn_train(envs::Environment& env, const nn::NetworkSpec& spec,
                      const AgentConfig& config, std::uint64_t seed);

TrainResult ddpg_train(envs::Environment& env, const nn::NetworkSpec& actor,
                       const nn::NetworkSpec& critic, const AgentConfig& config,
                       std::uint64_t seed);

// Picks the trainer for config.algorithm and builds specs from the config.
TrainResult train(envs::Environment& env, const AgentConfig& config, nn::Stochastic stochastic,
                  std::uint64_t seed);

std::string curve_csv(const std::vector<CurvePoint>& curve);

// ---- Policies and rollouts -----------------------------------------------------

// One or more member networks acting together: Q networks (discrete) or actors.
struct Policy {
  std::vector<nn::Network> members;
  bool discrete = true;
  std::size_t downsample = 1;

  // Member-mean network output under deterministic masks.
  nn::Vector mean_output(std::span<const double> input) const;
  envs::Action greedy_action(std::span<const double> input) const;
};

Policy make_policy(std::vector<nn::Network> members, const envs::Environment& env,
                   std::size_t downsample);

struct StepRecord {
  int t = 0;
  const std::vector<double>* input = nullptr;  // preprocessed network input
  envs::Action action;
  double reward = 0.0;
  const nn::Vector* output = nullptr;  // member-mean output behind the action
};

using StepCallback = std::function<void(const StepRecord&)>;

struct EpisodeSummary {
  double ret = 0.0;
  int length = 0;
};

// How actions are chosen in a scored rollout. Non-greedy rollouts explore like
// training does: epsilon-greedy for discrete actions, otherwise Gaussian noise
// of std action_noise * bound, clamped to the bound.
struct Behaviour {
  bool greedy = true;
  double epsilon = 0.05;
  double action_noise = 0.1;

  void validate() const;
  bool operator==(const Behaviour&) const = default;
};

// Episode from env.reset(seed); greedy unless `behaviour` says otherwise, in
// which case `explore` must be given.
EpisodeSummary run_episode(const Policy& policy, envs::Environment& env, std::uint64_t seed,
                           const StepCallback& on_step = {}, const Behaviour& behaviour = {},
                           Rng* explore = nullptr);

struct Episode {
  std::vector<std::vector<double>> inputs;
  std::vector<envs::Action> actions;
  std::vector<double> rewards;
  std::vector<nn::Vector> outputs;
  double ret = 0.0;
};

// Episode i resets with derive_seed(seed, {i}). Non-greedy rollouts act on
// sampled masks drawn from `rng`.
std::vector<Episode> rollout(const Policy& policy, envs::Environment& env, int episodes,
                             std::uint64_t seed, bool greedy, Rng* rng = nullptr);

double mean_greedy_return(const Policy& policy, envs::Environment& env, int episodes,
                          std::uint64_t seed);

// ---- Failing variants -----------------------------------------------------------

struct FailureRule {
  enum class Kind { relative_to_default, absolute };
  Kind kind = Kind::relative_to_default;
  double value = 0.5;  // factor, or absolute threshold

  static FailureRule for_family(const std::string& family);
  double threshold(double default_return) const;
};

struct VariantOutcome {
  std::string id;
  double mean_return = 0.0;
  bool failing = false;
};

struct FailingReport {
  double default_return = 0.0;
  double threshold = 0.0;
  std::vector<VariantOutcome> variants;
  std::vector<std::string> failing_ids() const;
};

FailingReport find_failing_variants(const Policy& policy, const std::string& family,
                                    const std::vector<std::string>& variant_ids, int episodes,
                                    const FailureRule& rule, std::uint64_t seed,
                                    const envs::Overrides& base = {});

}  // namespace oodrl::agents
