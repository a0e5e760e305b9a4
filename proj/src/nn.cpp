#include "oodrl/nn.hpp"

#include <atomic>
#include <cmath>

#include "oodrl/error.hpp"

namespace oodrl::nn {

namespace {

std::atomic<std::uint64_t> g_generation{1};

std::uint64_t next_generation() { return g_generation.fetch_add(1, std::memory_order_relaxed); }

Matrix apply_activation(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::tanh:
      return z.array().tanh().matrix();
    case Activation::identity:
      return z;
  }
  return z;
}

Matrix activation_derivative(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh:
      return (1.0 - z.array().tanh().square()).matrix();
    case Activation::identity:
      return Matrix::Ones(z.rows(), z.cols());
  }
  return Matrix::Ones(z.rows(), z.cols());
}

Matrix apply_output(const OutputActivation& o, const Matrix& z) {
  if (o.kind == OutputActivation::Kind::tanh_scaled) return (o.bound * z.array().tanh()).matrix();
  return z;
}

Matrix output_derivative(const OutputActivation& o, const Matrix& z) {
  if (o.kind == OutputActivation::Kind::tanh_scaled)
    return (o.bound * (1.0 - z.array().tanh().square())).matrix();
  return Matrix::Ones(z.rows(), z.cols());
}

Matrix bernoulli_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform() < keep ? scale : 0.0;
  return m;
}

// Shared forward implementation; the recording outputs may be null.
Matrix run_forward(const Network& net, const Matrix& inputs, const StochasticMode& mode,
                   MaskSet* masks_out, std::vector<Matrix>* layer_inputs,
                   std::vector<Matrix>* pre_acts) {
  const NetworkSpec& spec = net.spec();
  if (static_cast<std::size_t>(inputs.rows()) != spec.input_dim())
    throw ShapeError("forward: input has " + std::to_string(inputs.rows()) +
                     " rows, network expects " + std::to_string(spec.input_dim()));
  if (inputs.cols() == 0) throw ShapeError("forward: empty batch");

  const std::size_t layers = spec.num_layers();
  const auto batch = inputs.cols();
  const bool dropout = spec.stochastic.kind == StochasticKind::dropout;
  const bool dropconnect = spec.stochastic.kind == StochasticKind::dropconnect;
  const double rate = spec.stochastic.rate;

  Rng* rng = nullptr;
  const MaskSet* frozen = nullptr;
  if (auto* s = std::get_if<StochasticMode::Sampled>(&mode.get())) rng = s->rng;
  if (auto* f = std::get_if<StochasticMode::Frozen>(&mode.get())) frozen = f->masks;
  const bool stochastic = (rng != nullptr || frozen != nullptr) &&
                          spec.stochastic.kind != StochasticKind::none;

  if (frozen && stochastic) {
    if (dropout && frozen->activation.size() != layers - 1)
      throw ShapeError("forward: frozen dropout masks do not match network depth");
    if (dropconnect && frozen->weight.size() != layers - 1)
      throw ShapeError("forward: frozen dropconnect masks do not match network depth");
  }

  Matrix a = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    const bool hidden = l + 1 < layers;
    Matrix z;
    if (dropconnect && stochastic && hidden) {
      Matrix mask;
      if (frozen) {
        mask = frozen->weight[l];
        if (mask.rows() != net.weights()[l].rows() || mask.cols() != net.weights()[l].cols())
          throw ShapeError("forward: frozen weight mask shape mismatch");
      } else if (rate > 0.0) {
        mask = bernoulli_mask(net.weights()[l].rows(), net.weights()[l].cols(), rate, *rng);
      } else {
        mask = Matrix::Ones(net.weights()[l].rows(), net.weights()[l].cols());
      }
      z.noalias() = net.weights()[l].cwiseProduct(mask) * a;
      if (masks_out) masks_out->weight.push_back(std::move(mask));
    } else {
      z.noalias() = net.weights()[l] * a;
    }
    z.colwise() += net.biases()[l];
    if (layer_inputs) layer_inputs->push_back(std::move(a));

    if (hidden) {
      a = apply_activation(spec.activations[l], z);
      if (dropout && stochastic) {
        Matrix mask;
        if (frozen) {
          mask = frozen->activation[l];
          if (mask.rows() != a.rows() || mask.cols() != batch)
            throw ShapeError("forward: frozen dropout mask shape mismatch");
        } else if (rate > 0.0) {
          mask = bernoulli_mask(a.rows(), batch, rate, *rng);
        } else {
          mask = Matrix::Ones(a.rows(), batch);
        }
        a = a.cwiseProduct(mask);
        if (masks_out) masks_out->activation.push_back(std::move(mask));
      }
      if (pre_acts) pre_acts->push_back(std::move(z));
    } else {
      a = apply_output(spec.output, z);
      if (pre_acts) pre_acts->push_back(std::move(z));
    }
  }
  return a;
}

}  // namespace

struct TapeAccess {
  static std::vector<Matrix>& inputs(Tape& t) { return t.layer_inputs_; }
  static const std::vector<Matrix>& inputs(const Tape& t) { return t.layer_inputs_; }
  static std::vector<Matrix>& pre(Tape& t) { return t.pre_activations_; }
  static const std::vector<Matrix>& pre(const Tape& t) { return t.pre_activations_; }
  static MaskSet& masks(Tape& t) { return t.masks_; }
  static std::size_t& batch(Tape& t) { return t.batch_; }
  static std::uint64_t& generation(Tape& t) { return t.generation_; }
  static std::uint64_t generation(const Tape& t) { return t.generation_; }
  static NetworkSpec& spec(Tape& t) { return t.spec_; }
  static const NetworkSpec& spec(const Tape& t) { return t.spec_; }
};

NetworkSpec NetworkSpec::mlp(std::vector<std::size_t> dims, Activation hidden_activation,
                             OutputActivation output, Stochastic stochastic) {
  NetworkSpec s;
  s.layer_dims = std::move(dims);
  if (s.layer_dims.size() >= 2) s.activations.assign(s.layer_dims.size() - 2, hidden_activation);
  s.output = output;
  s.stochastic = stochastic;
  return s;
}

void NetworkSpec::validate() const {
  if (layer_dims.size() < 2) throw SpecError("network spec needs at least 2 layer dims");
  for (auto d : layer_dims)
    if (d == 0) throw SpecError("network spec has a zero-width layer");
  if (activations.size() != layer_dims.size() - 2)
    throw SpecError("network spec needs one activation per hidden layer");
  if (output.kind == OutputActivation::Kind::tanh_scaled && !(output.bound > 0.0))
    throw SpecError("tanh_scaled output bound must be > 0");
  if (stochastic.kind != StochasticKind::none &&
      !(stochastic.rate >= 0.0 && stochastic.rate < 1.0))
    throw SpecError("stochastic rate must lie in [0, 1)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw SpecError("unknown activation '" + s + "'");
}

std::string to_string(StochasticKind k) {
  switch (k) {
    case StochasticKind::none:
      return "none";
    case StochasticKind::dropout:
      return "dropout";
    case StochasticKind::dropconnect:
      return "dropconnect";
  }
  return "none";
}

StochasticKind stochastic_from_string(const std::string& s) {
  if (s == "none") return StochasticKind::none;
  if (s == "dropout") return StochasticKind::dropout;
  if (s == "dropconnect") return StochasticKind::dropconnect;
  throw SpecError("unknown stochastic layer kind '" + s + "'");
}

Network::Network(NetworkSpec spec, std::vector<Matrix> weights, std::vector<Vector> biases)
    : spec_(std::move(spec)),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      generation_(next_generation()) {
  spec_.validate();
  const std::size_t layers = spec_.num_layers();
  if (weights_.size() != layers || biases_.size() != layers)
    throw ShapeError("network: expected " + std::to_string(layers) + " weight/bias pairs");
  for (std::size_t l = 0; l < layers; ++l) {
    const auto rows = static_cast<Eigen::Index>(spec_.layer_dims[l + 1]);
    const auto cols = static_cast<Eigen::Index>(spec_.layer_dims[l]);
    if (weights_[l].rows() != rows || weights_[l].cols() != cols || biases_[l].size() != rows)
      throw ShapeError("network: layer " + std::to_string(l) + " shape does not match spec");
  }
}

Matrix& Network::weight(std::size_t layer) {
  touch();
  return weights_.at(layer);
}

Vector& Network::bias(std::size_t layer) {
  touch();
  return biases_.at(layer);
}

void Network::touch() { generation_ = next_generation(); }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  return n;
}

bool Network::all_finite() const {
  for (std::size_t l = 0; l < weights_.size(); ++l)
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  return true;
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(spec.layer_dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(spec.layer_dims[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    // Row-major fill order so the draw sequence matches the on-disk layout.
    for (Eigen::Index i = 0; i < fan_out; ++i)
      for (Eigen::Index j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-bound, bound);
    weights.push_back(std::move(w));
    biases.push_back(Vector::Zero(fan_out));
  }
  return Network(spec, std::move(weights), std::move(biases));
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    g.biases.push_back(Vector::Zero(net.biases()[l].size()));
  }
  return g;
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& w : weights) sq += w.squaredNorm();
  for (const auto& b : biases) sq += b.squaredNorm();
  return std::sqrt(sq);
}

void Gradients::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
}

bool Gradients::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

ForwardResult forward(const Network& net, const Matrix& inputs, StochasticMode mode) {
  ForwardResult r;
  Tape& t = r.tape;
  r.output = run_forward(net, inputs, mode, &TapeAccess::masks(t), &TapeAccess::inputs(t),
                         &TapeAccess::pre(t));
  TapeAccess::batch(t) = static_cast<std::size_t>(inputs.cols());
  TapeAccess::generation(t) = net.generation();
  TapeAccess::spec(t) = net.spec();
  return r;
}

Matrix predict(const Network& net, const Matrix& inputs, StochasticMode mode) {
  return run_forward(net, inputs, mode, nullptr, nullptr, nullptr);
}

Vector predict(const Network& net, std::span<const double> input, StochasticMode mode) {
  Matrix x = Eigen::Map<const Vector>(input.data(), static_cast<Eigen::Index>(input.size()));
  return run_forward(net, x, mode, nullptr, nullptr, nullptr).col(0);
}

Gradients backward(const Network& net, const Tape& tape, const Matrix& output_grad) {
  const auto& inputs = TapeAccess::inputs(tape);
  const auto& pre = TapeAccess::pre(tape);
  const NetworkSpec& spec = net.spec();
  if (inputs.empty() || TapeAccess::generation(tape) != net.generation() ||
      !(TapeAccess::spec(tape) == spec))
    throw UsageError("backward: tape does not belong to this network state (stale tape)");
  const std::size_t layers = spec.num_layers();
  if (static_cast<std::size_t>(output_grad.rows()) != spec.output_dim() ||
      static_cast<std::size_t>(output_grad.cols()) != tape.batch())
    throw ShapeError("backward: output_grad shape does not match forward output");

  const MaskSet& masks = tape.masks();
  const bool dropout = !masks.activation.empty();
  const bool dropconnect = !masks.weight.empty();

  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);

  Matrix delta = output_grad.cwiseProduct(output_derivative(spec.output, pre[layers - 1]));
  for (std::size_t l = layers; l-- > 0;) {
    const bool masked_weights = dropconnect && l + 1 < layers;
    g.weights[l].noalias() = delta * inputs[l].transpose();
    if (masked_weights) g.weights[l] = g.weights[l].cwiseProduct(masks.weight[l]);
    g.biases[l] = delta.rowwise().sum();

    Matrix upstream;
    if (masked_weights)
      upstream.noalias() = net.weights()[l].cwiseProduct(masks.weight[l]).transpose() * delta;
    else
      upstream.noalias() = net.weights()[l].transpose() * delta;

    if (l == 0) {
      g.input = std::move(upstream);
    } else {
      if (dropout) upstream = upstream.cwiseProduct(masks.activation[l - 1]);
      delta = upstream.cwiseProduct(activation_derivative(spec.activations[l - 1], pre[l - 1]));
    }
  }
  return g;
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

AdamState AdamState::for_network(const Network& net) {
  AdamState s;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    const auto& w = net.weights()[l];
    s.m_w.push_back(Matrix::Zero(w.rows(), w.cols()));
    s.v_w.push_back(Matrix::Zero(w.rows(), w.cols()));
    s.m_b.push_back(Vector::Zero(net.biases()[l].size()));
    s.v_b.push_back(Vector::Zero(net.biases()[l].size()));
  }
  return s;
}

StepOutcome adam_step(Network& net, const Gradients& grads, AdamState& state, double lr,
                      const AdamConfig& config) {
  const std::size_t layers = net.weights().size();
  if (grads.weights.size() != layers || grads.biases.size() != layers ||
      state.m_w.size() != layers)
    throw ShapeError("adam_step: gradient/state layer count mismatch");
  for (std::size_t l = 0; l < layers; ++l) {
    if (grads.weights[l].rows() != net.weights()[l].rows() ||
        grads.weights[l].cols() != net.weights()[l].cols() ||
        grads.biases[l].size() != net.biases()[l].size())
      throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
  }
  if (!grads.all_finite()) return StepOutcome::skipped_nonfinite;

  state.t += 1;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
  };
  for (std::size_t l = 0; l < layers; ++l) {
    update(net.weight(l), state.m_w[l], state.v_w[l], grads.weights[l]);
    update(net.bias(l), state.m_b[l], state.v_b[l], grads.biases[l]);
  }
  return StepOutcome::applied;
}

void soft_update(Network& target, const Network& online, double tau) {
  if (!(target.spec() == online.spec())) throw SpecError("soft_update: spec mismatch");
  if (tau == 1.0) {
    target = online;
    return;
  }
  if (tau == 0.0) return;
  for (std::size_t l = 0; l < online.weights().size(); ++l) {
    target.weight(l) = tau * online.weights()[l] + (1.0 - tau) * target.weights()[l];
    target.bias(l) = tau * online.biases()[l] + (1.0 - tau) * target.biases()[l];
  }
}

}  // namespace oodrl::nn
