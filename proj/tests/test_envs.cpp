#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oodrl/envs.hpp"
#include "oodrl/error.hpp"

using namespace oodrl;
using namespace oodrl::envs;

TEST_CASE("cartpole: one push from rest") {
  const auto t = cartpole_step({}, CartpoleAction::right, CartpoleParams{});
  CHECK(t.state.x == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(t.state.x_dot == doctest::Approx(0.19512).epsilon(1e-4));
  CHECK(t.state.theta == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(t.state.theta_dot == doctest::Approx(-0.29268).epsilon(1e-4));
  CHECK(t.reward == 1.0);
  CHECK_FALSE(t.terminated);

  const auto l = cartpole_step({}, CartpoleAction::left, CartpoleParams{});
  CHECK(l.state.x_dot == doctest::Approx(-0.19512).epsilon(1e-4));
}

TEST_CASE("cartpole: reset distribution") {
  Rng rng(17);
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto s = cartpole_reset({}, rng);
    for (double v : {s.x, s.x_dot, s.theta, s.theta_dot}) {
      CHECK(v >= -0.05);
      CHECK(v <= 0.05);
    }
    sum += s.theta;
  }
  const double se = 0.1 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum / n) < 3.0 * se);

  Cartpole a, b;
  CHECK(a.reset(5) == b.reset(5));
  CHECK_FALSE(a.reset(5) == a.reset(6));
}

TEST_CASE("cartpole: termination and gravity") {
  CartpoleState s;
  s.x = 2.39;
  s.x_dot = 1.0;
  const auto t = cartpole_step(s, CartpoleAction::right, CartpoleParams{});
  CHECK(t.state.x > 2.4);
  CHECK(t.terminated);
  CHECK(t.reward == 1.0);

  // Upright pole: gravity does not enter the angular acceleration.
  CartpoleParams g0;
  g0.gravity = 0.0;
  CHECK(cartpole_step({}, CartpoleAction::right, g0).state ==
        cartpole_step({}, CartpoleAction::right, CartpoleParams{}).state);
}

TEST_CASE("cartpole: episode return equals its length") {
  Cartpole env;
  env.reset(3);
  double ret = 0.0;
  int steps = 0;
  for (;;) {
    const auto r = env.step(1);
    ret += r.reward;
    ++steps;
    if (r.terminated || r.truncated) break;
  }
  CHECK(ret == steps);
  CHECK(steps < 500);
  CHECK_THROWS_AS(env.step(0), UsageError);
  env.reset(3);
  CHECK_THROWS_AS(env.step(2), UsageError);
  CHECK_THROWS_AS(env.step(0.5), UsageError);
}

TEST_CASE("pendulum: equilibria and reward") {
  PendulumParams p;
  const auto up = pendulum_step({0.0, 0.0}, 0.0, p);
  CHECK(up.reward == 0.0);
  CHECK(up.state.theta == 0.0);
  CHECK(up.state.theta_dot == 0.0);

  const auto down = pendulum_step({std::numbers::pi, 0.0}, 0.0, p);
  CHECK(down.reward == doctest::Approx(-std::numbers::pi * std::numbers::pi).epsilon(1e-12));
  CHECK(std::abs(down.state.theta_dot) < 1e-12);

  const auto pushed = pendulum_step({0.0, 0.0}, 100.0, p);
  CHECK(pushed.applied_torque == 2.0);
  CHECK(pushed.reward == doctest::Approx(-0.001 * 4.0));
  CHECK(pendulum_step({0.0, 0.0}, -100.0, p).applied_torque == -2.0);
}

TEST_CASE("pendulum: invariants under random inputs") {
  Rng rng(9);
  PendulumParams p;
  for (int i = 0; i < 2000; ++i) {
    PendulumState s{rng.uniform(-10.0, 10.0), rng.uniform(-8.0, 8.0)};
    const auto t = pendulum_step(s, rng.uniform(-50.0, 50.0), p);
    CHECK(std::abs(t.applied_torque) <= p.max_torque);
    CHECK(std::abs(t.state.theta_dot) <= p.max_speed);
    CHECK(t.reward <= 0.0);
    const double w = wrap_angle(t.state.theta);
    CHECK(w >= -std::numbers::pi);
    CHECK(w < std::numbers::pi);
  }
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(-std::numbers::pi));
  CHECK(wrap_angle(2.0 * std::numbers::pi + 0.25) == doctest::Approx(0.25));

  Pendulum env;
  const auto obs = env.reset(4);
  REQUIRE(obs.values.size() == 3);
  CHECK(obs.values[0] * obs.values[0] + obs.values[1] * obs.values[1] ==
        doctest::Approx(1.0));
  int steps = 0;
  for (;;) {
    const auto r = env.step(0.0);
    ++steps;
    if (r.truncated) break;
    CHECK_FALSE(r.terminated);
  }
  CHECK(steps == 200);
  CHECK_THROWS_AS(env.step(1), UsageError);
}

TEST_CASE("minipong: binary frames and stacking") {
  MiniPong env;
  const auto obs = env.reset(1);
  CHECK(obs.frame_count == 4);
  CHECK(obs.frame_size == 84);
  CHECK(obs.values.size() == env.observation_size());
  CHECK(std::all_of(obs.values.begin(), obs.values.end(),
                    [](double v) { return v == 0.0 || v == 1.0; }));
  // Two paddles plus the ball in every frame.
  const auto lit = std::count(obs.values.begin(), obs.values.begin() + 84 * 84, 1.0);
  CHECK(lit == 2 * kPaddleWidth * 10 + kBallSize * kBallSize);

  MiniPong other;
  other.reset(1);
  for (int i = 0; i < 300; ++i) {
    const auto a = env.step(i % 3);
    const auto b = other.step(i % 3);
    REQUIRE(a.obs == b.obs);
    REQUIRE(a.reward == b.reward);
    if (a.terminated || a.truncated) break;
  }
}

TEST_CASE("minipong: straight shots are returned exactly when the paddle covers the ball") {
  MiniPongParams p;
  p.ball_speed = 1.0;
  p.opponent_skill = 1.0;
  Rng rng(0);
  const int y_max = p.frame_size - kBallSize;
  const int paddle_max = p.frame_size - p.paddle_len;
  for (int paddle = 0; paddle <= paddle_max; paddle += 3) {
    for (int y = 0; y <= y_max; ++y) {
      MiniPongState s;
      s.ball_x = 60.0;
      s.ball_y = y;
      s.ball_vx = 1.0;
      s.ball_vy = 0.0;
      s.agent_y = paddle;
      s.opponent_y = 0;
      int outcome = 0;  // +1 returned, -1 missed
      for (int k = 0; k < 100 && outcome == 0; ++k) {
        const auto t = minipong_step(s, MiniPongAction::noop, p, rng);
        if (t.reward < 0.0) outcome = -1;
        else if (t.state.ball_vx < 0.0) outcome = 1;
        s = t.state;
      }
      const bool covered = y + kBallSize > paddle && y < paddle + p.paddle_len;
      REQUIRE(outcome == (covered ? 1 : -1));
    }
  }
}

TEST_CASE("minipong: corrupted observations stay in range and match clean geometry") {
  auto env = make_env("minipong/gaussian/0.18");
  const auto obs = env->reset(2);
  CHECK(std::all_of(obs.values.begin(), obs.values.end(),
                    [](double v) { return v >= 0.0 && v <= 1.0; }));
  MiniPong clean;
  clean.reset(2);
  auto* mp = dynamic_cast<MiniPong*>(env.get());
  REQUIRE(mp != nullptr);
  CHECK(mp->state() == clean.state());
}

TEST_CASE("registry: variants and overrides") {
  auto heavy = make_variant("cartpole", {{"gravity", 78.4}});
  CHECK(dynamic_cast<Cartpole&>(*heavy).params().gravity == 78.4);
  auto plain = make_variant("cartpole", {});
  CHECK(dynamic_cast<Cartpole&>(*plain).params() == CartpoleParams{});
  auto longer = make_env("cartpole/length/2");
  CHECK(dynamic_cast<Cartpole&>(*longer).params().pole_half_length == 2.0);
  CHECK(make_env("cartpole/length/2.0")->id() == "cartpole/length/2");

  const auto presets = variant_presets("pendulum");
  const auto torque = std::count_if(presets.begin(), presets.end(),
                                    [](const VariantPreset& v) { return v.parameter == "max_torque"; });
  CHECK(torque == 8);
  CHECK(variant_presets("minipong").size() == 20);

  CHECK_THROWS_AS(make_variant("cartpole", {{"colour", 1.0}}), ConfigError);
  CHECK_THROWS_AS(make_variant("cartpole", {{"gravity", -1.0}}), ConfigError);
  CHECK_THROWS_AS(make_env("acrobot"), ConfigError);
  CHECK_THROWS_AS(find_preset("cartpole/gravity/3.3"), ConfigError);
  CHECK(env_ids().size() == 3);
}
