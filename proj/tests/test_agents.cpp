#include <doctest.h>

#include <cmath>
#include <limits>

#include "oodrl/agents.hpp"
#include "oodrl/checkpoint.hpp"
#include "oodrl/error.hpp"

using namespace oodrl;
using namespace oodrl::agents;

namespace {

// Pendulum wrapper that records every applied action.
class RecordingPendulum final : public envs::Environment {
 public:
  const std::string& id() const override { return inner_.id(); }
  const std::string& family() const override { return inner_.family(); }
  envs::Observation reset(std::uint64_t seed) override { return inner_.reset(seed); }
  envs::StepResult step(const envs::Action& a) override {
    actions.push_back(std::get<double>(a));
    return inner_.step(a);
  }
  envs::ActionSpace action_space() const override { return inner_.action_space(); }
  std::size_t observation_size() const override { return inner_.observation_size(); }
  std::map<std::string, double> parameters() const override { return inner_.parameters(); }

  std::vector<double> actions;

 private:
  envs::Pendulum inner_;
};

AgentConfig tiny(const std::string& family) {
  auto c = default_config(family);
  c.hidden_dims = {16};
  c.train_steps = 600;
  c.learning_starts = 100;
  c.eval_every = 300;
  c.eval_episodes = 1;
  c.batch = 16;
  c.buffer_capacity = 200;
  c.target_update_every = 50;
  return c;
}

}  // namespace

TEST_CASE("td target with gamma 0 on a terminal transition is the reward") {
  nn::Matrix next_q(2, 2);
  next_q << 5.0, -1.0, 7.0, 3.0;
  const auto y = td_targets(next_q, {1.5, -2.0}, {true, false}, 0.0);
  CHECK(y(0) == 1.5);
  CHECK(y(1) == -2.0);
  const auto y2 = td_targets(next_q, {1.5, -2.0}, {true, false}, 0.5);
  CHECK(y2(0) == 1.5);
  CHECK(y2(1) == -2.0 + 0.5 * 3.0);
  CHECK_THROWS_AS(td_targets(next_q, {1.0}, {true}, 0.9), ShapeError);
}

TEST_CASE("epsilon 1 gives uniform actions") {
  Rng rng(5);
  const int n = 10000, k = 3;
  std::vector<int> counts(k, 0);
  nn::Vector q(3);
  q << 0.0, 10.0, 0.0;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(epsilon_greedy(q, 1.0, rng))];
  const double p = 1.0 / k;
  const double sd = std::sqrt(n * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - n * p) < 3.0 * sd);
  CHECK(epsilon_greedy(q, 0.0, rng) == 1);
}

TEST_CASE("epsilon schedule decays linearly then holds") {
  AgentConfig c;
  CHECK(epsilon_at(c, 0) == 1.0);
  CHECK(epsilon_at(c, 5000) == doctest::Approx(0.525));
  CHECK(epsilon_at(c, 10000) == 0.05);
  CHECK(epsilon_at(c, 1000000) == 0.05);
}

TEST_CASE("replay buffer keeps at most capacity items and drops the oldest") {
  ReplayBuffer buf(5, 2);
  for (int i = 0; i < 12; ++i) {
    const std::vector<double> o = {double(i), 0.5};
    const std::vector<double> n = {double(i + 1), 0.5};
    buf.add(o, i % 2, i, n, i == 11);
    CHECK(buf.size() == std::min(i + 1, 5));
  }
  CHECK(buf.at(0).obs[0] == 7.0);
  CHECK(buf.at(4).obs[0] == 11.0);
  CHECK(buf.at(4).terminated);
  CHECK(buf.at(4).next_obs[0] == 12.0);
  Rng rng(1);
  const auto b = buf.sample(200, rng);
  CHECK(b.obs.minCoeff() >= 0.5);
  for (int j = 0; j < 200; ++j) CHECK(b.obs(0, j) >= 7.0);
  CHECK_THROWS_AS(buf.at(5), UsageError);
  CHECK_THROWS_AS(buf.add(std::vector<double>{1.0}, 0, 0, std::vector<double>{1.0}, false),
                  ShapeError);
}

TEST_CASE("agent config json round trip and validation") {
  auto c = default_config("minipong");
  CHECK(config_from_json(to_json(c), AgentConfig{}) == c);
  CHECK_THROWS_AS(config_from_json({{"gamma", 0.0}}, AgentConfig{}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"epsilon_end", 1.5}}, AgentConfig{}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"learning_rate", 0.1}}, AgentConfig{}), ConfigError);
  CHECK(default_config("pendulum").algorithm == Algorithm::ddpg);
}

TEST_CASE("minipong observations are downsampled per frame") {
  auto env = envs::make_env("minipong");
  const auto obs = env->reset(1);
  const auto in = preprocess(obs, 4);
  CHECK(in.size() == 4 * 21 * 21);
  CHECK(in.size() == input_dim(*env, 4));
  envs::Cartpole cp;
  CHECK(preprocess(cp.reset(1), 4).size() == 4);
}

TEST_CASE("dqn rejects continuous envs and mismatched specs") {
  envs::Pendulum p;
  CHECK_THROWS_AS(dqn_train(p, nn::NetworkSpec::mlp({3, 8, 1}, nn::Activation::relu), {}, 0),
                  ConfigError);
  envs::Cartpole c;
  CHECK_THROWS_AS(dqn_train(c, nn::NetworkSpec::mlp({3, 8, 2}, nn::Activation::relu), {}, 0),
                  SpecError);
}

TEST_CASE("short training runs are deterministic") {
  envs::Cartpole a, b;
  const auto cfg = tiny("cartpole");
  const auto ra = train(a, cfg, nn::Stochastic::dropout(0.1), 9);
  const auto rb = train(b, cfg, nn::Stochastic::dropout(0.1), 9);
  CHECK(encode_checkpoint(ra.model) == encode_checkpoint(rb.model));
  CHECK(ra.curve.size() == rb.curve.size());
  CHECK(curve_csv(ra.curve) == curve_csv(rb.curve));
  CHECK(curve_csv(ra.curve).rfind("episode,return,epsilon,loss_mean\n", 0) == 0);
  const auto rc = train(a, cfg, nn::Stochastic::dropout(0.1), 10);
  CHECK(encode_checkpoint(ra.model) != encode_checkpoint(rc.model));
}

TEST_CASE("ddpg keeps applied actions within the torque bound") {
  RecordingPendulum env;
  auto cfg = tiny("pendulum");
  cfg.action_noise = 3.0;  // noise far beyond the bound to exercise clamping
  const auto r = train(env, cfg, nn::Stochastic::none(), 4);
  REQUIRE(r.critic.has_value());
  CHECK(r.critic->network.spec().input_dim() == 4);
  CHECK(r.model.network.spec().output.bound == 2.0);
  REQUIRE(!env.actions.empty());
  int at_bound = 0;
  for (double a : env.actions) {
    CHECK(std::abs(a) <= 2.0);
    at_bound += std::abs(a) == 2.0;
  }
  CHECK(at_bound > 0);
}

TEST_CASE("greedy rollouts: reproducible, cartpole return equals length, count honored") {
  envs::Cartpole env;
  auto net = nn::init_network(nn::NetworkSpec::mlp({4, 16, 2}, nn::Activation::relu, {},
                                                   nn::Stochastic::dropconnect(0.2)),
                              3);
  auto policy = make_policy({net}, env, 1);
  const auto e1 = rollout(policy, env, 7, 42, true);
  const auto e2 = rollout(policy, env, 7, 42, true);
  REQUIRE(e1.size() == 7);
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e1[i].ret == static_cast<double>(e1[i].rewards.size()));
    CHECK(e1[i].actions == e2[i].actions);
    CHECK(e1[i].inputs == e2[i].inputs);
    CHECK(e1[i].outputs.size() == e1[i].rewards.size());
  }
  const auto s = run_episode(policy, env, derive_seed(42, {0}));
  CHECK(s.ret == e1[0].ret);
  CHECK_THROWS_AS(rollout(policy, env, 1, 0, false), UsageError);

  envs::Pendulum p;
  CHECK_THROWS_AS(make_policy({net}, p, 1), ConfigError);
}

TEST_CASE("exploring rollouts") {
  envs::Cartpole env;
  auto net = nn::init_network(nn::NetworkSpec::mlp({4, 16, 2}, nn::Activation::relu), 5);
  auto policy = make_policy({net}, env, 1);
  const auto actions_of = [&](const Behaviour& b, Rng* rng) {
    std::vector<int> acts;
    run_episode(policy, env, 9, [&](const StepRecord& r) { acts.push_back(std::get<int>(r.action)); }, b, rng);
    return acts;
  };
  const auto greedy = actions_of({}, nullptr);

  Rng r0(1);
  CHECK(actions_of({false, 0.0, 0.1}, &r0) == greedy);  // epsilon 0 never explores
  CHECK_THROWS_AS(actions_of({false, 0.5, 0.1}, nullptr), UsageError);

  Rng a(7), b(7);
  CHECK(actions_of({false, 1.0, 0.1}, &a) == actions_of({false, 1.0, 0.1}, &b));

  // Continuous exploration stays within the torque bound.
  RecordingPendulum pend;
  auto actor = nn::init_network(
      nn::NetworkSpec::mlp({3, 8, 1}, nn::Activation::tanh, nn::OutputActivation::tanh_scaled(2.0)), 2);
  Rng noise(3);
  run_episode(make_policy({actor}, pend, 1), pend, 4, {}, {false, 0.0, 5.0}, &noise);
  REQUIRE(pend.actions.size() == 200);
  bool clamped = false;
  for (double u : pend.actions) {
    CHECK(std::abs(u) <= 2.0);
    clamped = clamped || std::abs(u) == 2.0;
  }
  CHECK(clamped);

  CHECK_THROWS_AS((Behaviour{false, 1.5, 0.1}.validate()), ConfigError);
}

TEST_CASE("failure rules") {
  CHECK(FailureRule::for_family("cartpole").threshold(400.0) == 200.0);
  CHECK(FailureRule::for_family("pendulum").threshold(-150.0) == -300.0);
  CHECK(FailureRule::for_family("minipong").threshold(-5.0) == 0.0);

  envs::Cartpole env;
  auto net = nn::init_network(nn::NetworkSpec::mlp({4, 8, 2}, nn::Activation::relu), 1);
  auto policy = make_policy({net}, env, 1);
  const FailureRule never{FailureRule::Kind::absolute, -std::numeric_limits<double>::infinity()};
  const auto rep = find_failing_variants(policy, "cartpole",
                                         {"cartpole/length/2", "cartpole/gravity/78.4"}, 3, never, 5);
  CHECK(rep.failing_ids().empty());
  CHECK(rep.variants.size() == 2);

  // A variant equal to the default scores the default return, so it never fails.
  const auto same = find_failing_variants(policy, "cartpole", {"cartpole"}, 3,
                                          FailureRule::for_family("cartpole"), 5);
  CHECK(same.variants[0].mean_return == same.default_return);
  CHECK_FALSE(same.variants[0].failing);
  CHECK_THROWS_AS(find_failing_variants(policy, "cartpole", {}, 3, never, 5), ConfigError);
}
