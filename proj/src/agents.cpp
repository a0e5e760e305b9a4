#include "oodrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "oodrl/corruptions.hpp"
#include "oodrl/error.hpp"
#include "oodrl/io.hpp"

namespace oodrl::agents {

std::string to_string(Algorithm a) { return a == Algorithm::dqn ? "dqn" : "ddpg"; }

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "dqn") return Algorithm::dqn;
  if (s == "ddpg") return Algorithm::ddpg;
  throw ConfigError("unknown algorithm '" + s + "' (expected dqn or ddpg)");
}

Algorithm default_algorithm(const std::string& family) {
  return family == "pendulum" ? Algorithm::ddpg : Algorithm::dqn;
}

void AgentConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("agent: gamma must lie in (0, 1]");
  for (double e : {epsilon_start, epsilon_end})
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("agent: epsilon must lie in [0, 1]");
  if (hidden_dims.empty()) throw ConfigError("agent: hidden_dims must not be empty");
  for (auto h : hidden_dims)
    if (h == 0) throw ConfigError("agent: hidden layer width must be positive");
  if (!(lr > 0.0) || !(actor_lr > 0.0)) throw ConfigError("agent: learning rates must be positive");
  if (batch == 0) throw ConfigError("agent: batch must be positive");
  if (buffer_capacity < batch) throw ConfigError("agent: buffer_capacity must be >= batch");
  if (target_update_every < 1) throw ConfigError("agent: target_update_every must be >= 1");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("agent: tau must lie in [0, 1]");
  if (epsilon_decay_steps < 0) throw ConfigError("agent: epsilon_decay_steps must be >= 0");
  if (!(action_noise >= 0.0)) throw ConfigError("agent: action_noise must be >= 0");
  if (train_steps < 1) throw ConfigError("agent: train_steps must be >= 1");
  if (learning_starts < 0) throw ConfigError("agent: learning_starts must be >= 0");
  if (train_every < 1) throw ConfigError("agent: train_every must be >= 1");
  if (!(grad_clip > 0.0)) throw ConfigError("agent: grad_clip must be positive");
  if (eval_every < 0) throw ConfigError("agent: eval_every must be >= 0");
  if (eval_every > 0 && eval_episodes < 1) throw ConfigError("agent: eval_episodes must be >= 1");
  if (downsample == 0) throw ConfigError("agent: downsample must be >= 1");
}

AgentConfig default_config(const std::string& family) {
  AgentConfig c;
  c.algorithm = default_algorithm(family);
  if (family == "pendulum") {
    c.lr = 1e-3;
    c.actor_lr = 1e-4;
    c.train_steps = 30000;
    c.eval_every = 5000;
    c.eval_episodes = 5;
  } else if (family == "minipong") {
    c.hidden_dims = {256, 256};
    c.downsample = 4;
    c.buffer_capacity = 10000;
    c.train_steps = 200000;
    c.epsilon_decay_steps = 50000;
    c.train_every = 4;
    c.target_update_every = 2000;
    c.eval_every = 25000;
    c.eval_episodes = 2;
  } else if (family != "cartpole") {
    throw ConfigError("unknown environment '" + family + "'");
  }
  return c;
}

nlohmann::json to_json(const AgentConfig& c) {
  return {{"algorithm", to_string(c.algorithm)},
          {"hidden_dims", c.hidden_dims},
          {"activation", nn::to_string(c.activation)},
          {"lr", c.lr},
          {"actor_lr", c.actor_lr},
          {"gamma", c.gamma},
          {"batch", c.batch},
          {"buffer_capacity", c.buffer_capacity},
          {"target_update_every", c.target_update_every},
          {"tau", c.tau},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_decay_steps", c.epsilon_decay_steps},
          {"action_noise", c.action_noise},
          {"train_steps", c.train_steps},
          {"learning_starts", c.learning_starts},
          {"train_every", c.train_every},
          {"grad_clip", c.grad_clip},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes},
          {"downsample", c.downsample}};
}

AgentConfig config_from_json(const nlohmann::json& j, AgentConfig c) {
  if (!j.is_object()) throw ConfigError("agent config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "algorithm") c.algorithm = algorithm_from_string(value.get<std::string>());
      else if (key == "hidden_dims") c.hidden_dims = value.get<std::vector<std::size_t>>();
      else if (key == "activation") c.activation = nn::activation_from_string(value.get<std::string>());
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "actor_lr") c.actor_lr = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "batch") c.batch = value.get<std::size_t>();
      else if (key == "buffer_capacity") c.buffer_capacity = value.get<std::size_t>();
      else if (key == "target_update_every") c.target_update_every = value.get<std::int64_t>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "epsilon_start") c.epsilon_start = value.get<double>();
      else if (key == "epsilon_end") c.epsilon_end = value.get<double>();
      else if (key == "epsilon_decay_steps") c.epsilon_decay_steps = value.get<std::int64_t>();
      else if (key == "action_noise") c.action_noise = value.get<double>();
      else if (key == "train_steps") c.train_steps = value.get<std::int64_t>();
      else if (key == "learning_starts") c.learning_starts = value.get<std::int64_t>();
      else if (key == "train_every") c.train_every = value.get<std::int64_t>();
      else if (key == "grad_clip") c.grad_clip = value.get<double>();
      else if (key == "eval_every") c.eval_every = value.get<std::int64_t>();
      else if (key == "eval_episodes") c.eval_episodes = value.get<int>();
      else if (key == "downsample") c.downsample = value.get<std::size_t>();
      else throw ConfigError("agent: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("agent: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- Preprocessing ------------------------------------------------------------

std::vector<double> preprocess(const envs::Observation& obs, std::size_t downsample) {
  if (!obs.is_pixels() || downsample <= 1) return obs.values;
  const std::size_t fs = obs.frame_size;
  if (fs % downsample != 0) throw ShapeError("frame size is not divisible by the downsample factor");
  const std::size_t small = fs / downsample;
  std::vector<double> out;
  out.reserve(obs.frame_count * small * small);
  Frame frame(fs, fs);
  for (std::size_t k = 0; k < obs.frame_count; ++k) {
    const auto first = obs.values.begin() + static_cast<std::ptrdiff_t>(k * fs * fs);
    std::copy(first, first + static_cast<std::ptrdiff_t>(fs * fs), frame.pixels.begin());
    const Frame d = corruptions::area_downscale(frame, small, small);
    out.insert(out.end(), d.pixels.begin(), d.pixels.end());
  }
  return out;
}

std::size_t input_dim(const envs::Environment& env, std::size_t downsample) {
  const std::size_t n = env.observation_size();
  if (env.family() != "minipong" || downsample <= 1) return n;
  const auto params = env.parameters();
  const auto fs = static_cast<std::size_t>(params.at("frame_size"));
  const auto stack = static_cast<std::size_t>(params.at("frame_stack"));
  if (fs % downsample != 0) throw ConfigError("frame size is not divisible by the downsample factor");
  return stack * (fs / downsample) * (fs / downsample);
}

// ---- Replay buffer ------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim)
    : capacity_(capacity), obs_dim_(obs_dim) {
  if (capacity == 0 || obs_dim == 0) throw ConfigError("replay buffer needs positive capacity and obs_dim");
  obs_.resize(capacity * obs_dim);
  next_obs_.resize(capacity * obs_dim);
  actions_.resize(capacity);
  rewards_.resize(capacity);
  terminated_.resize(capacity);
}

void ReplayBuffer::add(std::span<const double> obs, double action, double reward,
                       std::span<const double> next_obs, bool terminated) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_)
    throw ShapeError("replay buffer: observation size mismatch");
  const std::size_t off = head_ * obs_dim_;
  std::transform(obs.begin(), obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(off),
                 [](double v) { return static_cast<float>(v); });
  std::transform(next_obs.begin(), next_obs.end(),
                 next_obs_.begin() + static_cast<std::ptrdiff_t>(off),
                 [](double v) { return static_cast<float>(v); });
  actions_[head_] = action;
  rewards_[head_] = reward;
  terminated_[head_] = terminated ? 1 : 0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw UsageError("replay buffer: index out of range");
  const std::size_t slot = (head_ + capacity_ - size_ + i) % capacity_;
  Transition t;
  const auto first = static_cast<std::ptrdiff_t>(slot * obs_dim_);
  const auto last = first + static_cast<std::ptrdiff_t>(obs_dim_);
  t.obs.assign(obs_.begin() + first, obs_.begin() + last);
  t.next_obs.assign(next_obs_.begin() + first, next_obs_.begin() + last);
  t.action = actions_[slot];
  t.reward = rewards_[slot];
  t.terminated = terminated_[slot] != 0;
  return t;
}

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw UsageError("replay buffer: sampling from an empty buffer");
  Batch b;
  b.obs.resize(static_cast<Eigen::Index>(obs_dim_), static_cast<Eigen::Index>(n));
  b.next_obs.resize(static_cast<Eigen::Index>(obs_dim_), static_cast<Eigen::Index>(n));
  b.actions.resize(n);
  b.rewards.resize(n);
  b.terminated.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t slot = rng.index(size_);
    const std::size_t off = slot * obs_dim_;
    for (std::size_t i = 0; i < obs_dim_; ++i) {
      b.obs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = obs_[off + i];
      b.next_obs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = next_obs_[off + i];
    }
    b.actions[j] = actions_[slot];
    b.rewards[j] = rewards_[slot];
    b.terminated[j] = terminated_[slot] != 0;
  }
  return b;
}

// ---- Building blocks ----------------------------------------------------------

double epsilon_at(const AgentConfig& c, std::int64_t step) {
  if (c.epsilon_decay_steps <= 0 || step >= c.epsilon_decay_steps) return c.epsilon_end;
  const double frac = static_cast<double>(step) / static_cast<double>(c.epsilon_decay_steps);
  return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start);
}

int argmax(const nn::Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

int epsilon_greedy(const nn::Vector& q, double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return static_cast<int>(rng.index(static_cast<std::uint64_t>(q.size())));
  return argmax(q);
}

nn::Vector td_targets(const nn::Matrix& next_q, const std::vector<double>& rewards,
                      const std::vector<bool>& terminated, double gamma) {
  const auto n = next_q.cols();
  if (static_cast<std::size_t>(n) != rewards.size() || rewards.size() != terminated.size())
    throw ShapeError("td_targets: batch size mismatch");
  nn::Vector y(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    y(j) = rewards[static_cast<std::size_t>(j)];
    if (!terminated[static_cast<std::size_t>(j)] && gamma != 0.0)
      y(j) += gamma * next_q.col(j).maxCoeff();
  }
  return y;
}

namespace {

std::vector<std::size_t> dims_with(std::size_t in, const std::vector<std::size_t>& hidden,
                                   std::size_t out) {
  std::vector<std::size_t> d = {in};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(out);
  return d;
}

}  // namespace

nn::NetworkSpec q_network_spec(const envs::Environment& env, const AgentConfig& c,
                               nn::Stochastic stochastic) {
  const auto space = env.action_space();
  if (!space.discrete) throw ConfigError("DQN needs a discrete-action environment; got " + env.id());
  return nn::NetworkSpec::mlp(dims_with(input_dim(env, c.downsample), c.hidden_dims,
                                        static_cast<std::size_t>(space.count)),
                              c.activation, {}, stochastic);
}

nn::NetworkSpec actor_spec(const envs::Environment& env, const AgentConfig& c,
                           nn::Stochastic stochastic) {
  const auto space = env.action_space();
  if (space.discrete) throw ConfigError("DDPG needs a continuous-action environment; got " + env.id());
  return nn::NetworkSpec::mlp(dims_with(input_dim(env, c.downsample), c.hidden_dims, 1),
                              c.activation, nn::OutputActivation::tanh_scaled(space.bound),
                              stochastic);
}

nn::NetworkSpec critic_spec(const envs::Environment& env, const AgentConfig& c) {
  if (env.action_space().discrete)
    throw ConfigError("DDPG needs a continuous-action environment; got " + env.id());
  return nn::NetworkSpec::mlp(dims_with(input_dim(env, c.downsample) + 1, c.hidden_dims, 1),
                              c.activation);
}

// ---- Training -------------------------------------------------------------------

namespace {

void check_finite(const nn::Network& net, const char* what, std::int64_t step) {
  if (!net.all_finite())
    throw TrainingError(std::string(what) + " parameters became non-finite at step " +
                        std::to_string(step));
}

nlohmann::json training_metadata(const AgentConfig& c, const envs::Environment& env,
                                 const char* role, std::int64_t steps) {
  return {{"algorithm", to_string(c.algorithm)},
          {"role", role},
          {"env", env.id()},
          {"downsample", c.downsample},
          {"train_steps", steps},
          {"agent", to_json(c)}};
}

// Periodic greedy evaluation with best-snapshot retention.
struct SnapshotKeeper {
  const AgentConfig& config;
  envs::Environment& env;
  std::uint64_t seed;
  bool discrete;
  SnapshotKeeper(const AgentConfig& c, envs::Environment& e, std::uint64_t s, bool d)
      : config(c), env(e), seed(s), discrete(d) {}

  double best = -std::numeric_limits<double>::infinity();
  std::int64_t best_step = -1;
  std::vector<nn::Network> best_nets;
  int evaluations = 0;

  void consider(const std::vector<const nn::Network*>& nets, std::int64_t step) {
    Policy p;
    p.members = {*nets.front()};
    p.discrete = discrete;
    p.downsample = config.downsample;
    const double r = mean_greedy_return(p, env, config.eval_episodes,
                                        derive_seed(seed, {6, static_cast<std::uint64_t>(evaluations++)}));
    if (r >= best) {
      best = r;
      best_step = step;
      best_nets.clear();
      for (const auto* n : nets) best_nets.push_back(*n);
    }
  }
};

}  // namespace

TrainResult dqn_train(envs::Environment& env, const nn::NetworkSpec& spec,
                      const AgentConfig& config, std::uint64_t seed) {
  config.validate();
  const auto space = env.action_space();
  if (!space.discrete) throw ConfigError("dqn_train: environment " + env.id() + " has continuous actions");
  const std::size_t obs_dim = input_dim(env, config.downsample);
  if (spec.input_dim() != obs_dim || spec.output_dim() != static_cast<std::size_t>(space.count))
    throw SpecError("dqn_train: network shape does not match the environment");

  nn::Network online = nn::init_network(spec, derive_seed(seed, {1}));
  nn::Network target = online;
  nn::AdamState adam = nn::AdamState::for_network(online);
  ReplayBuffer buffer(config.buffer_capacity, obs_dim);
  Rng explore(derive_seed(seed, {3}));
  Rng masks(derive_seed(seed, {4}));
  Rng replay(derive_seed(seed, {5}));
  SnapshotKeeper keeper{config, env, seed, true};

  TrainResult result;
  int episode = 0;
  auto obs = preprocess(env.reset(derive_seed(seed, {2, 0})), config.downsample);
  double ep_return = 0.0, loss_sum = 0.0;
  int loss_count = 0;
  const auto batch = static_cast<Eigen::Index>(config.batch);

  auto new_episode = [&] {
    ep_return = 0.0;
    loss_sum = 0.0;
    loss_count = 0;
    ++episode;
    obs = preprocess(env.reset(derive_seed(seed, {2, static_cast<std::uint64_t>(episode)})),
                     config.downsample);
  };

  for (std::int64_t step = 0; step < config.train_steps; ++step) {
    const double eps = epsilon_at(config, step);
    int action;
    if (explore.uniform() < eps) {
      action = static_cast<int>(explore.index(static_cast<std::uint64_t>(space.count)));
    } else {
      action = argmax(nn::predict(online, obs, nn::StochasticMode::deterministic()));
    }
    const auto r = env.step(action);
    auto next = preprocess(r.obs, config.downsample);
    buffer.add(obs, action, r.reward, next, r.terminated);
    ep_return += r.reward;
    obs = std::move(next);

    if (r.terminated || r.truncated) {
      result.curve.push_back({episode, ep_return, eps, loss_count ? loss_sum / loss_count : 0.0});
      new_episode();
    }

    if (step >= config.learning_starts && buffer.size() >= config.batch &&
        step % config.train_every == 0) {
      const Batch b = buffer.sample(config.batch, replay);
      const nn::Matrix next_q = nn::predict(target, b.next_obs, nn::StochasticMode::deterministic());
      const nn::Vector y = td_targets(next_q, b.rewards, b.terminated, config.gamma);
      auto fwd = nn::forward(online, b.obs, nn::StochasticMode::sampled(masks));
      nn::Matrix grad = nn::Matrix::Zero(fwd.output.rows(), batch);
      double loss = 0.0;
      for (Eigen::Index j = 0; j < batch; ++j) {
        const auto a = static_cast<Eigen::Index>(b.actions[static_cast<std::size_t>(j)]);
        const double err = fwd.output(a, j) - y(j);
        loss += err * err;
        grad(a, j) = 2.0 * err / static_cast<double>(batch);
      }
      loss /= static_cast<double>(batch);
      auto grads = nn::backward(online, fwd.tape, grad);
      nn::clip_global_norm(grads, config.grad_clip);
      nn::adam_step(online, grads, adam, config.lr);
      if (std::isfinite(loss)) {
        loss_sum += loss;
        ++loss_count;
      }
    }
    if ((step + 1) % config.target_update_every == 0) {
      check_finite(online, "Q network", step);
      target = online;
    }
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0) {
      check_finite(online, "Q network", step);
      keeper.consider({&online}, step + 1);
      // Evaluation reused the environment; start a fresh training episode.
      new_episode();
    }
  }
  check_finite(online, "Q network", config.train_steps);
  result.steps = config.train_steps;

  const nn::Network* chosen = &online;
  if (config.eval_every > 0) {
    keeper.consider({&online}, config.train_steps);
    chosen = &keeper.best_nets.front();
    result.best_eval_return = keeper.best;
    result.best_eval_step = keeper.best_step;
  }
  result.model = make_checkpoint(*chosen, seed, training_metadata(config, env, "q", config.train_steps));
  return result;
}

TrainResult ddpg_train(envs::Environment& env, const nn::NetworkSpec& actor_s,
                       const nn::NetworkSpec& critic_s, const AgentConfig& config,
                       std::uint64_t seed) {
  config.validate();
  const auto space = env.action_space();
  if (space.discrete) throw ConfigError("ddpg_train: environment " + env.id() + " has discrete actions");
  const std::size_t obs_dim = input_dim(env, config.downsample);
  if (actor_s.input_dim() != obs_dim || actor_s.output_dim() != 1)
    throw SpecError("ddpg_train: actor shape does not match the environment");
  if (critic_s.input_dim() != obs_dim + 1 || critic_s.output_dim() != 1)
    throw SpecError("ddpg_train: critic must map (obs, action) to one value");

  nn::Network actor = nn::init_network(actor_s, derive_seed(seed, {1, 0}));
  nn::Network critic = nn::init_network(critic_s, derive_seed(seed, {1, 1}));
  nn::Network actor_t = actor, critic_t = critic;
  auto actor_adam = nn::AdamState::for_network(actor);
  auto critic_adam = nn::AdamState::for_network(critic);
  ReplayBuffer buffer(config.buffer_capacity, obs_dim);
  Rng explore(derive_seed(seed, {3}));
  Rng masks(derive_seed(seed, {4}));
  Rng replay(derive_seed(seed, {5}));
  SnapshotKeeper keeper{config, env, seed, false};
  const double bound = space.bound;
  const double noise = config.action_noise * bound;

  TrainResult result;
  int episode = 0;
  auto obs = preprocess(env.reset(derive_seed(seed, {2, 0})), config.downsample);
  double ep_return = 0.0, loss_sum = 0.0;
  int loss_count = 0;
  const auto batch = static_cast<Eigen::Index>(config.batch);
  const auto od = static_cast<Eigen::Index>(obs_dim);

  auto new_episode = [&] {
    ep_return = 0.0;
    loss_sum = 0.0;
    loss_count = 0;
    ++episode;
    obs = preprocess(env.reset(derive_seed(seed, {2, static_cast<std::uint64_t>(episode)})),
                     config.downsample);
  };

  for (std::int64_t step = 0; step < config.train_steps; ++step) {
    double a;
    if (step < config.learning_starts) {
      a = explore.uniform(-bound, bound);
    } else {
      a = nn::predict(actor, obs, nn::StochasticMode::deterministic())(0) + explore.normal(0.0, noise);
      a = std::clamp(a, -bound, bound);
    }
    const auto r = env.step(a);
    auto next = preprocess(r.obs, config.downsample);
    buffer.add(obs, a, r.reward, next, r.terminated);
    ep_return += r.reward;
    obs = std::move(next);
    if (r.terminated || r.truncated) {
      result.curve.push_back({episode, ep_return, noise, loss_count ? loss_sum / loss_count : 0.0});
      new_episode();
    }

    if (step >= config.learning_starts && buffer.size() >= config.batch &&
        step % config.train_every == 0) {
      const Batch b = buffer.sample(config.batch, replay);

      // Critic: regress Q(s, a) on r + gamma * Q_t(s', mu_t(s')).
      nn::Matrix next_in(od + 1, batch);
      next_in.topRows(od) = b.next_obs;
      next_in.row(od) = nn::predict(actor_t, b.next_obs, nn::StochasticMode::deterministic());
      const nn::Matrix next_q = nn::predict(critic_t, next_in, nn::StochasticMode::deterministic());
      const nn::Vector y = td_targets(next_q, b.rewards, b.terminated, config.gamma);
      nn::Matrix in(od + 1, batch);
      in.topRows(od) = b.obs;
      for (Eigen::Index j = 0; j < batch; ++j) in(od, j) = b.actions[static_cast<std::size_t>(j)];
      auto cf = nn::forward(critic, in, nn::StochasticMode::deterministic());
      const nn::Matrix err = cf.output - y.transpose();
      const double loss = err.squaredNorm() / static_cast<double>(batch);
      auto cg = nn::backward(critic, cf.tape, 2.0 * err / static_cast<double>(batch));
      nn::clip_global_norm(cg, config.grad_clip);
      nn::adam_step(critic, cg, critic_adam, config.lr);

      // Actor: ascend Q(s, mu(s)) through the critic's action input.
      auto af = nn::forward(actor, b.obs, nn::StochasticMode::sampled(masks));
      nn::Matrix pin(od + 1, batch);
      pin.topRows(od) = b.obs;
      pin.row(od) = af.output;
      auto pf = nn::forward(critic, pin, nn::StochasticMode::deterministic());
      const auto qg = nn::backward(critic, pf.tape,
                                   nn::Matrix::Constant(1, batch, -1.0 / static_cast<double>(batch)));
      auto ag = nn::backward(actor, af.tape, qg.input.bottomRows(1));
      nn::clip_global_norm(ag, config.grad_clip);
      nn::adam_step(actor, ag, actor_adam, config.actor_lr);

      nn::soft_update(critic_t, critic, config.tau);
      nn::soft_update(actor_t, actor, config.tau);
      if (std::isfinite(loss)) {
        loss_sum += loss;
        ++loss_count;
      }
    }
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0) {
      check_finite(actor, "actor", step);
      check_finite(critic, "critic", step);
      keeper.consider({&actor, &critic}, step + 1);
      new_episode();
    }
  }
  check_finite(actor, "actor", config.train_steps);
  check_finite(critic, "critic", config.train_steps);
  result.steps = config.train_steps;

  const nn::Network* a_out = &actor;
  const nn::Network* c_out = &critic;
  if (config.eval_every > 0) {
    keeper.consider({&actor, &critic}, config.train_steps);
    a_out = &keeper.best_nets[0];
    c_out = &keeper.best_nets[1];
    result.best_eval_return = keeper.best;
    result.best_eval_step = keeper.best_step;
  }
  result.model = make_checkpoint(*a_out, seed, training_metadata(config, env, "actor", config.train_steps));
  result.critic = make_checkpoint(*c_out, seed, training_metadata(config, env, "critic", config.train_steps));
  return result;
}

TrainResult train(envs::Environment& env, const AgentConfig& config, nn::Stochastic stochastic,
                  std::uint64_t seed) {
  if (config.algorithm == Algorithm::dqn)
    return dqn_train(env, q_network_spec(env, config, stochastic), config, seed);
  return ddpg_train(env, actor_spec(env, config, stochastic), critic_spec(env, config), config, seed);
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "episode,return,epsilon,loss_mean\n";
  for (const auto& p : curve)
    out << p.episode << ',' << io::format_double(p.ret) << ',' << io::format_double(p.epsilon)
        << ',' << io::format_double(p.loss_mean) << '\n';
  return out.str();
}

// ---- Policies and rollouts ------------------------------------------------------

nn::Vector Policy::mean_output(std::span<const double> input) const {
  if (members.empty()) throw UsageError("policy has no member networks");
  nn::Vector sum = nn::predict(members.front(), input, nn::StochasticMode::deterministic());
  for (std::size_t m = 1; m < members.size(); ++m)
    sum += nn::predict(members[m], input, nn::StochasticMode::deterministic());
  return sum / static_cast<double>(members.size());
}

envs::Action Policy::greedy_action(std::span<const double> input) const {
  const nn::Vector out = mean_output(input);
  if (discrete) return argmax(out);
  return out(0);
}

Policy make_policy(std::vector<nn::Network> members, const envs::Environment& env,
                   std::size_t downsample) {
  if (members.empty()) throw ConfigError("policy needs at least one network");
  const auto space = env.action_space();
  const std::size_t in = input_dim(env, downsample);
  for (const auto& m : members) {
    if (m.spec().input_dim() != in)
      throw ConfigError("checkpoint input size " + std::to_string(m.spec().input_dim()) +
                        " does not match environment " + env.id() + " (" + std::to_string(in) + ")");
    const std::size_t out = space.discrete ? static_cast<std::size_t>(space.count) : 1;
    if (m.spec().output_dim() != out)
      throw ConfigError("checkpoint output size does not match the action space of " + env.id());
  }
  Policy p;
  p.members = std::move(members);
  p.discrete = space.discrete;
  p.downsample = downsample;
  return p;
}

void Behaviour::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("behaviour: epsilon must be in [0, 1]");
  if (!(action_noise >= 0.0)) throw ConfigError("behaviour: action_noise must be >= 0");
}

EpisodeSummary run_episode(const Policy& policy, envs::Environment& env, std::uint64_t seed,
                           const StepCallback& on_step, const Behaviour& behaviour, Rng* explore) {
  if (!behaviour.greedy && !explore) throw UsageError("run_episode: exploring rollouts need an rng");
  const double bound = env.action_space().bound;
  EpisodeSummary s;
  auto input = preprocess(env.reset(seed), policy.downsample);
  for (;;) {
    const nn::Vector out = policy.mean_output(input);
    envs::Action action;
    if (policy.discrete)
      action = behaviour.greedy ? argmax(out) : epsilon_greedy(out, behaviour.epsilon, *explore);
    else if (behaviour.greedy)
      action = out(0);
    else
      action = std::clamp(out(0) + explore->normal(0.0, behaviour.action_noise * bound), -bound, bound);
    const auto r = env.step(action);
    if (on_step) on_step({s.length, &input, action, r.reward, &out});
    s.ret += r.reward;
    ++s.length;
    if (r.terminated || r.truncated) break;
    input = preprocess(r.obs, policy.downsample);
  }
  return s;
}

std::vector<Episode> rollout(const Policy& policy, envs::Environment& env, int episodes,
                             std::uint64_t seed, bool greedy, Rng* rng) {
  if (episodes < 0) throw ConfigError("rollout: negative episode count");
  if (!greedy && !rng) throw UsageError("rollout: non-greedy rollouts need an rng");
  std::vector<Episode> out(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Episode& ep = out[static_cast<std::size_t>(e)];
    auto input = preprocess(env.reset(derive_seed(seed, {static_cast<std::uint64_t>(e)})),
                            policy.downsample);
    for (;;) {
      nn::Vector y;
      if (greedy) {
        y = policy.mean_output(input);
      } else {
        y = nn::Vector::Zero(static_cast<Eigen::Index>(policy.members.front().spec().output_dim()));
        for (const auto& m : policy.members) y += nn::predict(m, input, nn::StochasticMode::sampled(*rng));
        y /= static_cast<double>(policy.members.size());
      }
      const envs::Action action = policy.discrete ? envs::Action(argmax(y)) : envs::Action(y(0));
      const auto r = env.step(action);
      ep.inputs.push_back(input);
      ep.actions.push_back(action);
      ep.rewards.push_back(r.reward);
      ep.outputs.push_back(y);
      ep.ret += r.reward;
      if (r.terminated || r.truncated) break;
      input = preprocess(r.obs, policy.downsample);
    }
  }
  return out;
}

double mean_greedy_return(const Policy& policy, envs::Environment& env, int episodes,
                          std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("mean_greedy_return: need at least one episode");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e)
    total += run_episode(policy, env, derive_seed(seed, {static_cast<std::uint64_t>(e)})).ret;
  return total / episodes;
}

// ---- Failing variants -----------------------------------------------------------

FailureRule FailureRule::for_family(const std::string& family) {
  if (family == "cartpole") return {Kind::relative_to_default, 0.5};
  if (family == "pendulum") return {Kind::relative_to_default, 2.0};
  if (family == "minipong") return {Kind::absolute, 0.0};
  throw ConfigError("unknown environment '" + family + "'");
}

double FailureRule::threshold(double default_return) const {
  return kind == Kind::absolute ? value : value * default_return;
}

std::vector<std::string> FailingReport::failing_ids() const {
  std::vector<std::string> ids;
  for (const auto& v : variants)
    if (v.failing) ids.push_back(v.id);
  return ids;
}

FailingReport find_failing_variants(const Policy& policy, const std::string& family,
                                    const std::vector<std::string>& variant_ids, int episodes,
                                    const FailureRule& rule, std::uint64_t seed,
                                    const envs::Overrides& base) {
  if (variant_ids.empty()) throw ConfigError("find_failing_variants: empty variant list");
  FailingReport report;
  auto def = envs::make_env(family, base);
  report.default_return = mean_greedy_return(policy, *def, episodes, seed);
  report.threshold = rule.threshold(report.default_return);
  for (const auto& id : variant_ids) {
    auto env = envs::make_env(id, base);
    if (env->family() != family)
      throw ConfigError("variant " + id + " does not belong to " + family);
    VariantOutcome v;
    v.id = id;
    v.mean_return = mean_greedy_return(policy, *env, episodes, seed);
    v.failing = v.mean_return < report.threshold;
    report.variants.push_back(v);
  }
  return report;
}

}  // namespace oodrl::agents
