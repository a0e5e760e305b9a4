#include "oodrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oodrl/error.hpp"
#include "oodrl/io.hpp"

namespace oodrl::envs {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
}

const std::string kCartpole = "cartpole";
const std::string kPendulum = "pendulum";
const std::string kMiniPong = "minipong";

bool overlaps(double a0, double a1, double b0, double b1) { return a0 < b1 && b0 < a1; }

void serve(MiniPongState& s, const MiniPongParams& p, Rng& rng, int direction) {
  const double centre = static_cast<double>(p.frame_size - kBallSize) / 2.0;
  s.ball_x = centre;
  s.ball_y = centre;
  s.ball_vx = direction * p.ball_speed;
  s.ball_vy = rng.uniform(-0.5, 0.5) * p.ball_speed;
}

// Vertical speed after a paddle hit, from the hit offset in [-1, 1].
double bounce_vy(double ball_y, int paddle_y, const MiniPongParams& p) {
  const double ball_c = ball_y + kBallSize / 2.0;
  const double paddle_c = paddle_y + p.paddle_len / 2.0;
  const double half_span = (p.paddle_len + kBallSize) / 2.0;
  const double offset = std::clamp((ball_c - paddle_c) / half_span, -1.0, 1.0);
  return offset * p.ball_speed;
}

int move_paddle(int y, int delta, const MiniPongParams& p) {
  return std::clamp(y + delta, 0, p.frame_size - p.paddle_len);
}

}  // namespace

// ---- Cartpole ---------------------------------------------------------------

void CartpoleParams::validate() const {
  require_positive(gravity, "gravity");
  require_positive(mass_cart, "mass_cart");
  require_positive(pole_half_length, "pole_half_length");
  require_positive(mass_pole, "mass_pole");
  require_positive(force_magnitude, "force_magnitude");
  require_positive(dt, "dt");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
}

CartpoleState cartpole_reset(const CartpoleParams&, Rng& rng) {
  CartpoleState s;
  s.x = rng.uniform(-0.05, 0.05);
  s.x_dot = rng.uniform(-0.05, 0.05);
  s.theta = rng.uniform(-0.05, 0.05);
  s.theta_dot = rng.uniform(-0.05, 0.05);
  return s;
}

CartpoleTransition cartpole_step(const CartpoleState& s, CartpoleAction action,
                                 const CartpoleParams& p) {
  const double force = action == CartpoleAction::right ? p.force_magnitude : -p.force_magnitude;
  const double total_mass = p.mass_cart + p.mass_pole;
  const double polemass_length = p.mass_pole * p.pole_half_length;
  const double cos_t = std::cos(s.theta);
  const double sin_t = std::sin(s.theta);
  const double temp = (force + polemass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (p.gravity * sin_t - cos_t * temp) /
      (p.pole_half_length * (4.0 / 3.0 - p.mass_pole * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

  CartpoleTransition t;
  t.state.x = s.x + p.dt * s.x_dot;
  t.state.x_dot = s.x_dot + p.dt * x_acc;
  t.state.theta = s.theta + p.dt * s.theta_dot;
  t.state.theta_dot = s.theta_dot + p.dt * theta_acc;
  t.reward = 1.0;
  t.terminated = std::abs(t.state.x) > kCartpoleXLimit ||
                 std::abs(t.state.theta) > kCartpoleThetaLimit;
  return t;
}

Cartpole::Cartpole(CartpoleParams params, std::string id)
    : params_(params), id_(std::move(id)) {
  params_.validate();
}

const std::string& Cartpole::family() const { return kCartpole; }

Observation Cartpole::reset(std::uint64_t seed) {
  Rng rng(seed);
  state_ = cartpole_reset(params_, rng);
  steps_ = 0;
  done_ = false;
  return {{state_.x, state_.x_dot, state_.theta, state_.theta_dot}, 0, 0};
}

StepResult Cartpole::step(const Action& action) {
  if (done_) throw UsageError("cartpole: step called on a finished episode; call reset");
  const int* a = std::get_if<int>(&action);
  if (!a || (*a != 0 && *a != 1)) throw UsageError("cartpole: action must be 0 (left) or 1 (right)");
  const auto t = cartpole_step(state_, static_cast<CartpoleAction>(*a), params_);
  state_ = t.state;
  ++steps_;
  StepResult r;
  r.obs = {{state_.x, state_.x_dot, state_.theta, state_.theta_dot}, 0, 0};
  r.reward = t.reward;
  r.terminated = t.terminated;
  r.truncated = !t.terminated && steps_ >= params_.max_steps;
  done_ = r.terminated || r.truncated;
  return r;
}

std::map<std::string, double> Cartpole::parameters() const {
  return {{"gravity", params_.gravity},
          {"mass_cart", params_.mass_cart},
          {"pole_half_length", params_.pole_half_length},
          {"mass_pole", params_.mass_pole},
          {"force_magnitude", params_.force_magnitude},
          {"dt", params_.dt},
          {"max_steps", params_.max_steps}};
}

// ---- Pendulum ---------------------------------------------------------------

void PendulumParams::validate() const {
  require_positive(gravity, "gravity");
  require_positive(mass, "mass");
  require_positive(length, "length");
  require_positive(max_speed, "max_speed");
  require_positive(max_torque, "max_torque");
  require_positive(dt, "dt");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
}

PendulumState pendulum_reset(const PendulumParams&, Rng& rng) {
  PendulumState s;
  s.theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
  s.theta_dot = rng.uniform(-1.0, 1.0);
  return s;
}

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(theta + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  return r - std::numbers::pi;
}

PendulumTransition pendulum_step(const PendulumState& s, double torque, const PendulumParams& p) {
  PendulumTransition t;
  const double u = std::isnan(torque) ? 0.0 : std::clamp(torque, -p.max_torque, p.max_torque);
  const double wrapped = wrap_angle(s.theta);
  t.reward = -(wrapped * wrapped + 0.1 * s.theta_dot * s.theta_dot + 0.001 * u * u);
  const double acc = 3.0 * p.gravity / (2.0 * p.length) * std::sin(s.theta) +
                     3.0 * u / (p.mass * p.length * p.length);
  t.state.theta_dot = std::clamp(s.theta_dot + acc * p.dt, -p.max_speed, p.max_speed);
  t.state.theta = s.theta + t.state.theta_dot * p.dt;
  t.applied_torque = u;
  return t;
}

Pendulum::Pendulum(PendulumParams params, std::string id) : params_(params), id_(std::move(id)) {
  params_.validate();
}

const std::string& Pendulum::family() const { return kPendulum; }

Observation Pendulum::reset(std::uint64_t seed) {
  Rng rng(seed);
  state_ = pendulum_reset(params_, rng);
  steps_ = 0;
  done_ = false;
  return {{std::cos(state_.theta), std::sin(state_.theta), state_.theta_dot}, 0, 0};
}

StepResult Pendulum::step(const Action& action) {
  if (done_) throw UsageError("pendulum: step called on a finished episode; call reset");
  const double* u = std::get_if<double>(&action);
  if (!u) throw UsageError("pendulum: action must be a continuous torque");
  const auto t = pendulum_step(state_, *u, params_);
  state_ = t.state;
  ++steps_;
  StepResult r;
  r.obs = {{std::cos(state_.theta), std::sin(state_.theta), state_.theta_dot}, 0, 0};
  r.reward = t.reward;
  r.terminated = false;
  r.truncated = steps_ >= params_.max_steps;
  done_ = r.truncated;
  return r;
}

std::map<std::string, double> Pendulum::parameters() const {
  return {{"gravity", params_.gravity},     {"mass", params_.mass},
          {"length", params_.length},       {"max_speed", params_.max_speed},
          {"max_torque", params_.max_torque}, {"dt", params_.dt},
          {"max_steps", params_.max_steps}};
}

// ---- MiniPong ---------------------------------------------------------------

void MiniPongParams::validate() const {
  if (frame_size < 16) throw ConfigError("minipong: frame_size must be >= 16");
  if (frame_stack < 1) throw ConfigError("minipong: frame_stack must be >= 1");
  if (paddle_len < 1 || paddle_len > frame_size) throw ConfigError("minipong: bad paddle_len");
  if (!(ball_speed > 0.0) || ball_speed > frame_size / 4.0)
    throw ConfigError("minipong: ball_speed must lie in (0, frame_size/4]");
  if (paddle_speed < 1) throw ConfigError("minipong: paddle_speed must be >= 1");
  if (!(opponent_skill >= 0.0 && opponent_skill <= 1.0))
    throw ConfigError("minipong: opponent_skill must lie in [0, 1]");
  if (max_score < 1) throw ConfigError("minipong: max_score must be >= 1");
  if (max_steps < 1) throw ConfigError("minipong: max_steps must be >= 1");
}

MiniPongState minipong_reset(const MiniPongParams& p, Rng& rng) {
  MiniPongState s;
  s.agent_y = (p.frame_size - p.paddle_len) / 2;
  s.opponent_y = (p.frame_size - p.paddle_len) / 2;
  serve(s, p, rng, rng.bernoulli(0.5) ? 1 : -1);
  return s;
}

MiniPongTransition minipong_step(const MiniPongState& state, MiniPongAction action,
                                 const MiniPongParams& p, Rng& rng) {
  MiniPongTransition t;
  MiniPongState& s = t.state;
  s = state;
  const double fs = p.frame_size;

  if (action == MiniPongAction::up) s.agent_y = move_paddle(s.agent_y, -p.paddle_speed, p);
  if (action == MiniPongAction::down) s.agent_y = move_paddle(s.agent_y, p.paddle_speed, p);

  if (rng.uniform() < p.opponent_skill) {
    const double target = s.ball_y + kBallSize / 2.0 - p.paddle_len / 2.0;
    const double diff = target - s.opponent_y;
    const int step = static_cast<int>(std::min<double>(p.paddle_speed, std::floor(std::abs(diff))));
    s.opponent_y = move_paddle(s.opponent_y, diff < 0 ? -step : step, p);
  }

  const double prev_x = s.ball_x;
  s.ball_x += s.ball_vx;
  s.ball_y += s.ball_vy;
  const double y_max = fs - kBallSize;
  if (s.ball_y < 0.0) {
    s.ball_y = -s.ball_y;
    s.ball_vy = -s.ball_vy;
  } else if (s.ball_y > y_max) {
    s.ball_y = 2.0 * y_max - s.ball_y;
    s.ball_vy = -s.ball_vy;
  }

  const double opp_face = kPaddleInset + kPaddleWidth;
  const double agent_face = fs - kPaddleInset - kPaddleWidth;
  if (s.ball_vx < 0.0 && prev_x >= opp_face && s.ball_x < opp_face &&
      overlaps(s.ball_y, s.ball_y + kBallSize, s.opponent_y, s.opponent_y + p.paddle_len)) {
    s.ball_x = 2.0 * opp_face - s.ball_x;
    s.ball_vx = -s.ball_vx;
    s.ball_vy = bounce_vy(s.ball_y, s.opponent_y, p);
  } else if (s.ball_vx > 0.0 && prev_x + kBallSize <= agent_face &&
             s.ball_x + kBallSize > agent_face &&
             overlaps(s.ball_y, s.ball_y + kBallSize, s.agent_y, s.agent_y + p.paddle_len)) {
    s.ball_x = 2.0 * (agent_face - kBallSize) - s.ball_x;
    s.ball_vx = -s.ball_vx;
    s.ball_vy = bounce_vy(s.ball_y, s.agent_y, p);
  }

  if (s.ball_x + kBallSize < 0.0) {
    ++s.agent_score;
    t.reward = 1.0;
    serve(s, p, rng, -1);
  } else if (s.ball_x > fs) {
    ++s.opponent_score;
    t.reward = -1.0;
    serve(s, p, rng, 1);
  }
  t.terminated = s.agent_score >= p.max_score || s.opponent_score >= p.max_score;
  return t;
}

Frame minipong_render(const MiniPongState& s, const MiniPongParams& p) {
  const auto fs = static_cast<std::size_t>(p.frame_size);
  Frame f(fs, fs, 0.0);
  auto fill = [&](long x0, long y0, long w, long h) {
    for (long y = std::max(0L, y0); y < std::min<long>(static_cast<long>(fs), y0 + h); ++y)
      for (long x = std::max(0L, x0); x < std::min<long>(static_cast<long>(fs), x0 + w); ++x)
        f.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1.0;
  };
  fill(kPaddleInset, s.opponent_y, kPaddleWidth, p.paddle_len);
  fill(p.frame_size - kPaddleInset - kPaddleWidth, s.agent_y, kPaddleWidth, p.paddle_len);
  fill(std::lround(s.ball_x), std::lround(s.ball_y), kBallSize, kBallSize);
  return f;
}

MiniPong::MiniPong(MiniPongParams params, std::optional<corruptions::CorruptionSpec> corruption,
                   std::string id)
    : params_(params), corruption_(std::move(corruption)), id_(std::move(id)) {
  params_.validate();
  if (corruption_) corruption_->validate();
}

const std::string& MiniPong::family() const { return kMiniPong; }

std::size_t MiniPong::observation_size() const {
  return static_cast<std::size_t>(params_.frame_stack) *
         static_cast<std::size_t>(params_.frame_size * params_.frame_size);
}

Frame MiniPong::observe_frame() {
  Frame f = minipong_render(state_, params_);
  if (corruption_) f = corruptions::corrupt(f, *corruption_, corruption_rng_);
  return f;
}

Observation MiniPong::stacked() const {
  Observation o;
  o.frame_count = frames_.size();
  o.frame_size = static_cast<std::size_t>(params_.frame_size);
  o.values.reserve(observation_size());
  for (const auto& f : frames_) o.values.insert(o.values.end(), f.pixels.begin(), f.pixels.end());
  return o;
}

Observation MiniPong::reset(std::uint64_t seed) {
  dynamics_rng_ = Rng(derive_seed(seed, {0}));
  corruption_rng_ = Rng(derive_seed(seed, {1}));
  state_ = minipong_reset(params_, dynamics_rng_);
  steps_ = 0;
  done_ = false;
  frames_.clear();
  const Frame first = observe_frame();
  frames_.assign(static_cast<std::size_t>(params_.frame_stack), first);
  return stacked();
}

StepResult MiniPong::step(const Action& action) {
  if (done_) throw UsageError("minipong: step called on a finished episode; call reset");
  const int* a = std::get_if<int>(&action);
  if (!a || *a < 0 || *a > 2) throw UsageError("minipong: action must be 0 (noop), 1 (up) or 2 (down)");
  const auto t = minipong_step(state_, static_cast<MiniPongAction>(*a), params_, dynamics_rng_);
  state_ = t.state;
  ++steps_;
  frames_.pop_front();
  frames_.push_back(observe_frame());
  StepResult r;
  r.obs = stacked();
  r.reward = t.reward;
  r.terminated = t.terminated;
  r.truncated = !t.terminated && steps_ >= params_.max_steps;
  done_ = r.terminated || r.truncated;
  return r;
}

std::map<std::string, double> MiniPong::parameters() const {
  std::map<std::string, double> m = {{"frame_size", params_.frame_size},
                                     {"paddle_len", params_.paddle_len},
                                     {"ball_speed", params_.ball_speed},
                                     {"paddle_speed", params_.paddle_speed},
                                     {"opponent_skill", params_.opponent_skill},
                                     {"max_score", params_.max_score},
                                     {"frame_stack", params_.frame_stack},
                                     {"max_steps", params_.max_steps}};
  if (corruption_) {
    switch (corruption_->kind) {
      case corruptions::Kind::gaussian:
        m["gaussian_sigma"] = corruption_->sigma;
        break;
      case corruptions::Kind::impulse:
        m["impulse_p"] = corruption_->p;
        break;
      case corruptions::Kind::motion_blur:
        m["motion_blur_rho"] = corruption_->rho;
        m["motion_blur_sigma"] = corruption_->sigma;
        break;
      case corruptions::Kind::pixelate:
        m["pixelate_f"] = corruption_->f;
        break;
    }
  }
  return m;
}

// ---- Registry ---------------------------------------------------------------

namespace {

struct GridRow {
  const char* key;        // preset key used in variant ids
  const char* parameter;  // override name
  std::vector<double> values;
};

const std::vector<GridRow>& cartpole_grid() {
  static const std::vector<GridRow> grid = {
      {"gravity", "gravity",
       {0.98, 1.09, 1.23, 1.4, 1.63, 1.96, 2.45, 3.27, 4.9, 19.6, 29.4, 39.2, 49.0, 58.8, 68.6,
        78.4, 88.2, 98.0}},
      {"mass_cart", "mass_cart",
       {0.1, 0.1111, 0.125, 0.1429, 0.1667, 0.2, 0.25, 0.3333, 0.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0,
        8.0, 9.0, 10.0}},
      {"length", "pole_half_length",
       {0.05, 0.0556, 0.0625, 0.0714, 0.0833, 0.1, 0.125, 0.1667, 0.25, 1.0, 1.5, 2.0, 2.5, 3.0,
        3.5, 4.0, 4.5, 5.0}},
      {"mass_pole", "mass_pole",
       {0.01, 0.0111, 0.0125, 0.0143, 0.0167, 0.02, 0.025, 0.0333, 0.05, 0.2, 0.3, 0.4, 0.5, 0.6,
        0.7, 0.8, 0.9, 1.0}},
      {"force", "force_magnitude",
       {1.0, 1.1111, 1.25, 1.4286, 1.6667, 2.0, 2.5, 3.3333, 5.0, 20.0, 30.0, 40.0, 50.0, 60.0,
        70.0, 80.0, 90.0, 100.0}},
  };
  return grid;
}

const std::vector<GridRow>& pendulum_grid() {
  static const std::vector<GridRow> grid = {
      {"gravity", "gravity", {0.5, 1.0, 2.0, 5.0, 20.0, 50.0, 100.0, 200.0}},
      {"mass", "mass", {0.05, 0.1, 0.2, 0.5, 2.0, 5.0, 10.0, 20.0}},
      {"length", "length", {0.05, 0.1, 0.2, 0.5, 2.0, 5.0, 10.0, 20.0}},
      {"max_speed", "max_speed", {0.4, 0.8, 1.6, 4.0, 16.0, 40.0, 80.0, 160.0}},
      {"max_torque", "max_torque", {0.1, 0.2, 0.4, 1.0, 4.0, 10.0, 20.0, 40.0}},
  };
  return grid;
}

Overrides corruption_overrides(const corruptions::CorruptionSpec& c) {
  switch (c.kind) {
    case corruptions::Kind::gaussian:
      return {{"gaussian_sigma", c.sigma}};
    case corruptions::Kind::impulse:
      return {{"impulse_p", c.p}};
    case corruptions::Kind::motion_blur:
      return {{"motion_blur_rho", c.rho}, {"motion_blur_sigma", c.sigma}};
    case corruptions::Kind::pixelate:
      return {{"pixelate_f", c.f}};
  }
  return {};
}

template <typename Params>
void assign_param(Params& p, const std::string& env, const std::string& name, double value,
                  const std::map<std::string, double Params::*>& reals,
                  const std::map<std::string, int Params::*>& ints) {
  if (auto it = reals.find(name); it != reals.end()) {
    p.*(it->second) = value;
    return;
  }
  if (auto it = ints.find(name); it != ints.end()) {
    if (value != std::floor(value)) throw ConfigError(env + "." + name + " must be an integer");
    p.*(it->second) = static_cast<int>(value);
    return;
  }
  throw ConfigError("unknown parameter '" + name + "' for environment '" + env + "'");
}

}  // namespace

std::vector<std::string> env_ids() { return {kCartpole, kPendulum, kMiniPong}; }

std::vector<VariantPreset> variant_presets(const std::string& env) {
  std::vector<VariantPreset> out;
  auto from_grid = [&](const std::vector<GridRow>& grid) {
    for (const auto& row : grid)
      for (double v : row.values) {
        const auto label = io::format_double(v);
        out.push_back({env + "/" + row.key + "/" + label, env, row.key, label,
                       {{row.parameter, v}}});
      }
  };
  if (env == kCartpole) {
    from_grid(cartpole_grid());
  } else if (env == kPendulum) {
    from_grid(pendulum_grid());
  } else if (env == kMiniPong) {
    for (auto kind : {corruptions::Kind::gaussian, corruptions::Kind::impulse,
                      corruptions::Kind::motion_blur, corruptions::Kind::pixelate})
      for (const auto& c : corruptions::severity_grid(kind)) {
        const auto key = corruptions::to_string(kind);
        out.push_back({env + "/" + key + "/" + c.parameter_label(), env, key, c.parameter_label(),
                       corruption_overrides(c)});
      }
  } else {
    throw ConfigError("unknown environment '" + env + "'");
  }
  return out;
}

VariantPreset find_preset(const std::string& variant_id) {
  const auto first = variant_id.find('/');
  const auto second = variant_id.find('/', first == std::string::npos ? 0 : first + 1);
  if (first == std::string::npos || second == std::string::npos)
    throw ConfigError("variant id '" + variant_id + "' must look like env/parameter/value");
  const std::string env = variant_id.substr(0, first);
  const std::string key = variant_id.substr(first + 1, second - first - 1);
  const std::string value = variant_id.substr(second + 1);
  for (auto& preset : variant_presets(env)) {
    if (preset.parameter != key) continue;
    if (preset.value_label == value) return preset;
    if (env != kMiniPong || key != "motion_blur") {
      // Accept equivalent spellings such as "2.0" for "2".
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used == value.size() && io::format_double(v) == preset.value_label) return preset;
      } catch (const std::logic_error&) {
      }
    }
  }
  throw ConfigError("unknown variant preset '" + variant_id + "'");
}

std::unique_ptr<Environment> make_variant(const std::string& env, const Overrides& overrides,
                                          std::string id) {
  if (id.empty()) id = env;
  if (env == kCartpole) {
    CartpoleParams p;
    for (const auto& [name, value] : overrides) {
      const std::string n = name == "length" ? "pole_half_length"
                            : name == "force" ? "force_magnitude"
                                              : name;
      assign_param(p, env, n, value,
                   {{"gravity", &CartpoleParams::gravity},
                    {"mass_cart", &CartpoleParams::mass_cart},
                    {"pole_half_length", &CartpoleParams::pole_half_length},
                    {"mass_pole", &CartpoleParams::mass_pole},
                    {"force_magnitude", &CartpoleParams::force_magnitude},
                    {"dt", &CartpoleParams::dt}},
                   {{"max_steps", &CartpoleParams::max_steps}});
    }
    return std::make_unique<Cartpole>(p, id);
  }
  if (env == kPendulum) {
    PendulumParams p;
    for (const auto& [name, value] : overrides)
      assign_param(p, env, name, value,
                   {{"gravity", &PendulumParams::gravity},
                    {"mass", &PendulumParams::mass},
                    {"length", &PendulumParams::length},
                    {"max_speed", &PendulumParams::max_speed},
                    {"max_torque", &PendulumParams::max_torque},
                    {"dt", &PendulumParams::dt}},
                   {{"max_steps", &PendulumParams::max_steps}});
    return std::make_unique<Pendulum>(p, id);
  }
  if (env == kMiniPong) {
    MiniPongParams p;
    std::optional<corruptions::CorruptionSpec> corruption;
    auto set_corruption = [&](corruptions::Kind kind) -> corruptions::CorruptionSpec& {
      if (corruption && corruption->kind != kind)
        throw ConfigError("minipong: only one corruption kind per variant");
      if (!corruption) {
        corruption = corruptions::CorruptionSpec{};
        corruption->kind = kind;
      }
      return *corruption;
    };
    for (const auto& [name, value] : overrides) {
      if (name == "gaussian_sigma") {
        set_corruption(corruptions::Kind::gaussian).sigma = value;
      } else if (name == "impulse_p") {
        set_corruption(corruptions::Kind::impulse).p = value;
      } else if (name == "motion_blur_rho") {
        if (value != std::floor(value)) throw ConfigError("motion_blur_rho must be an integer");
        set_corruption(corruptions::Kind::motion_blur).rho = static_cast<int>(value);
      } else if (name == "motion_blur_sigma") {
        set_corruption(corruptions::Kind::motion_blur).sigma = value;
      } else if (name == "pixelate_f") {
        set_corruption(corruptions::Kind::pixelate).f = value;
      } else {
        assign_param(p, env, name, value,
                     {{"ball_speed", &MiniPongParams::ball_speed},
                      {"opponent_skill", &MiniPongParams::opponent_skill}},
                     {{"frame_size", &MiniPongParams::frame_size},
                      {"paddle_len", &MiniPongParams::paddle_len},
                      {"paddle_speed", &MiniPongParams::paddle_speed},
                      {"max_score", &MiniPongParams::max_score},
                      {"frame_stack", &MiniPongParams::frame_stack},
                      {"max_steps", &MiniPongParams::max_steps}});
      }
    }
    if (corruption) {
      for (const auto& g : corruptions::severity_grid(corruption->kind))
        if (g.parameter_label() == corruption->parameter_label()) corruption->severity = g.severity;
    }
    return std::make_unique<MiniPong>(p, corruption, id);
  }
  throw ConfigError("unknown environment '" + env + "'");
}

std::unique_ptr<Environment> make_env(const std::string& id, const Overrides& base) {
  if (id.find('/') == std::string::npos) return make_variant(id, base, id);
  const VariantPreset preset = find_preset(id);
  Overrides merged = base;
  for (const auto& [k, v] : preset.overrides) merged[k] = v;
  return make_variant(preset.env, merged, preset.id);
}

}  // namespace oodrl::envs
