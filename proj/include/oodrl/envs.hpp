#pragma once

// Cartpole, Pendulum and MiniPong with every physical parameter settable,
// plus the registry of default and OOD variant instances.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "oodrl/corruptions.hpp"
#include "oodrl/frame.hpp"
#include "oodrl/rng.hpp"

namespace oodrl::envs {

struct Observation {
  std::vector<double> values;  // vector observation, or frames flattened oldest first
  std::size_t frame_count = 0;  // 0 for vector observations
  std::size_t frame_size = 0;

  bool is_pixels() const { return frame_count > 0; }
  bool operator==(const Observation&) const = default;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

// Discrete action index or continuous scalar action.
using Action = std::variant<int, double>;

struct ActionSpace {
  bool discrete = true;
  int count = 0;       // discrete
  double bound = 0.0;  // continuous: actions live in [-bound, bound]
};

class Environment {
 public:
  virtual ~Environment() = default;

  // "cartpole", or a variant id such as "cartpole/gravity/78.4".
  virtual const std::string& id() const = 0;
  virtual const std::string& family() const = 0;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Action& action) = 0;
  virtual ActionSpace action_space() const = 0;
  virtual std::size_t observation_size() const = 0;
  virtual std::map<std::string, double> parameters() const = 0;
};

// ---- Cartpole ---------------------------------------------------------------

struct CartpoleParams {
  double gravity = 9.8;
  double mass_cart = 1.0;
  double pole_half_length = 0.5;
  double mass_pole = 0.1;
  double force_magnitude = 10.0;
  double dt = 0.02;
  int max_steps = 500;

  void validate() const;
  bool operator==(const CartpoleParams&) const = default;
};

struct CartpoleState {
  double x = 0.0, x_dot = 0.0, theta = 0.0, theta_dot = 0.0;
  bool operator==(const CartpoleState&) const = default;
};

enum class CartpoleAction { left = 0, right = 1 };

inline constexpr double kCartpoleXLimit = 2.4;
inline constexpr double kCartpoleThetaLimit = 12.0 * 3.14159265358979323846 / 180.0;

CartpoleState cartpole_reset(const CartpoleParams& params, Rng& rng);

struct CartpoleTransition {
  CartpoleState state;
  double reward = 1.0;
  bool terminated = false;
};

CartpoleTransition cartpole_step(const CartpoleState& state, CartpoleAction action,
                                 const CartpoleParams& params);

// ---- Pendulum ---------------------------------------------------------------

struct PendulumParams {
  double gravity = 10.0;
  double mass = 1.0;
  double length = 1.0;
  double max_speed = 8.0;
  double max_torque = 2.0;
  double dt = 0.05;
  int max_steps = 200;

  void validate() const;
  bool operator==(const PendulumParams&) const = default;
};

struct PendulumState {
  double theta = 0.0, theta_dot = 0.0;
  bool operator==(const PendulumState&) const = default;
};

PendulumState pendulum_reset(const PendulumParams& params, Rng& rng);

struct PendulumTransition {
  PendulumState state;
  double reward = 0.0;
  double applied_torque = 0.0;
};

// Wraps an angle into [-pi, pi).
double wrap_angle(double theta);

PendulumTransition pendulum_step(const PendulumState& state, double torque,
                                 const PendulumParams& params);

// ---- MiniPong ---------------------------------------------------------------

struct MiniPongParams {
  int frame_size = 84;
  int paddle_len = 10;
  double ball_speed = 2.0;  // pixels per step along x
  int paddle_speed = 3;
  double opponent_skill = 0.75;
  int max_score = 21;
  int frame_stack = 4;
  int max_steps = 20000;

  void validate() const;
  bool operator==(const MiniPongParams&) const = default;
};

inline constexpr int kPaddleWidth = 2;
inline constexpr int kBallSize = 2;
inline constexpr int kPaddleInset = 2;

enum class MiniPongAction { noop = 0, up = 1, down = 2 };

struct MiniPongState {
  double ball_x = 0.0, ball_y = 0.0;  // top-left corner of the ball
  double ball_vx = 0.0, ball_vy = 0.0;
  int agent_y = 0;     // top of the agent (right) paddle
  int opponent_y = 0;  // top of the opponent (left) paddle
  int agent_score = 0;
  int opponent_score = 0;
  bool operator==(const MiniPongState&) const = default;
};

MiniPongState minipong_reset(const MiniPongParams& params, Rng& rng);

struct MiniPongTransition {
  MiniPongState state;
  double reward = 0.0;
  bool terminated = false;
};

// `rng` drives the opponent's tracking decisions and the serve after a point.
MiniPongTransition minipong_step(const MiniPongState& state, MiniPongAction action,
                                 const MiniPongParams& params, Rng& rng);

// Binary rendering: background 0.0, paddles and ball 1.0.
Frame minipong_render(const MiniPongState& state, const MiniPongParams& params);

// ---- Environment instances ---------------------------------------------------

class Cartpole final : public Environment {
 public:
  explicit Cartpole(CartpoleParams params = {}, std::string id = "cartpole");
  const std::string& id() const override { return id_; }
  const std::string& family() const override;
  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  ActionSpace action_space() const override { return {true, 2, 0.0}; }
  std::size_t observation_size() const override { return 4; }
  std::map<std::string, double> parameters() const override;

  const CartpoleParams& params() const { return params_; }
  const CartpoleState& state() const { return state_; }

 private:
  CartpoleParams params_;
  std::string id_;
  CartpoleState state_;
  int steps_ = 0;
  bool done_ = true;
};

class Pendulum final : public Environment {
 public:
  explicit Pendulum(PendulumParams params = {}, std::string id = "pendulum");
  const std::string& id() const override { return id_; }
  const std::string& family() const override;
  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  ActionSpace action_space() const override { return {false, 0, params_.max_torque}; }
  std::size_t observation_size() const override { return 3; }
  std::map<std::string, double> parameters() const override;

  const PendulumParams& params() const { return params_; }
  const PendulumState& state() const { return state_; }

 private:
  PendulumParams params_;
  std::string id_;
  PendulumState state_;
  int steps_ = 0;
  bool done_ = true;
};

class MiniPong final : public Environment {
 public:
  explicit MiniPong(MiniPongParams params = {},
                    std::optional<corruptions::CorruptionSpec> corruption = std::nullopt,
                    std::string id = "minipong");
  const std::string& id() const override { return id_; }
  const std::string& family() const override;
  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  ActionSpace action_space() const override { return {true, 3, 0.0}; }
  std::size_t observation_size() const override;
  std::map<std::string, double> parameters() const override;

  const MiniPongParams& params() const { return params_; }
  const MiniPongState& state() const { return state_; }
  const std::optional<corruptions::CorruptionSpec>& corruption() const { return corruption_; }

 private:
  Frame observe_frame();
  Observation stacked() const;

  MiniPongParams params_;
  std::optional<corruptions::CorruptionSpec> corruption_;
  std::string id_;
  MiniPongState state_;
  Rng dynamics_rng_{0};
  Rng corruption_rng_{0};
  std::deque<Frame> frames_;
  int steps_ = 0;
  bool done_ = true;
};

// ---- Registry ---------------------------------------------------------------

using Overrides = std::map<std::string, double>;

struct VariantPreset {
  std::string id;         // e.g. "cartpole/gravity/78.4"
  std::string env;        // "cartpole"
  std::string parameter;  // preset key, e.g. "gravity"
  std::string value_label;
  Overrides overrides;    // what the preset changes
};

std::vector<std::string> env_ids();

// Preset grid of OOD variants for an environment family.
std::vector<VariantPreset> variant_presets(const std::string& env);

// Looks up a preset by id; throws ConfigError when it is not part of the grid.
VariantPreset find_preset(const std::string& variant_id);

// Defaults except `overrides`. Unknown parameter names throw ConfigError.
std::unique_ptr<Environment> make_variant(const std::string& env, const Overrides& overrides,
                                          std::string id = {});

// "cartpole" -> default instance; "cartpole/gravity/78.4" -> preset variant.
// `base` overrides are applied first (e.g. shorter MiniPong games for both sides).
std::unique_ptr<Environment> make_env(const std::string& id, const Overrides& base = {});

}  // namespace oodrl::envs
