#pragma once

// Small dense feed-forward network engine: exact reverse-mode gradients,
// Dropout / DropConnect with inverted scaling, and Adam.
//
// Batches are column-major: an input batch is a (input_dim x batch) matrix,
// one sample per column.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "oodrl/rng.hpp"

namespace oodrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh, identity };

struct OutputActivation {
  enum class Kind { identity, tanh_scaled };
  Kind kind = Kind::identity;
  double bound = 1.0;  // only used by tanh_scaled: y = bound * tanh(z)

  static OutputActivation identity() { return {}; }
  static OutputActivation tanh_scaled(double bound) { return {Kind::tanh_scaled, bound}; }
  bool operator==(const OutputActivation&) const = default;
};

enum class StochasticKind { none, dropout, dropconnect };

struct Stochastic {
  StochasticKind kind = StochasticKind::none;
  double rate = 0.0;

  static Stochastic none() { return {}; }
  static Stochastic dropout(double rate) { return {StochasticKind::dropout, rate}; }
  static Stochastic dropconnect(double rate) { return {StochasticKind::dropconnect, rate}; }
  bool operator==(const Stochastic&) const = default;
};

struct NetworkSpec {
  std::vector<std::size_t> layer_dims;  // input, hidden..., output
  std::vector<Activation> activations;  // one per hidden layer
  OutputActivation output;
  Stochastic stochastic;

  // Convenience: every hidden layer uses `hidden_activation`.
  static NetworkSpec mlp(std::vector<std::size_t> dims, Activation hidden_activation,
                         OutputActivation output = {}, Stochastic stochastic = {});

  std::size_t num_layers() const { return layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  // Throws SpecError when the spec is malformed.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(StochasticKind k);
StochasticKind stochastic_from_string(const std::string& s);

class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, std::vector<Matrix> weights, std::vector<Vector> biases);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }

  // Mutable parameter access bumps the generation so outstanding tapes go stale.
  Matrix& weight(std::size_t layer);
  Vector& bias(std::size_t layer);

  // Changes whenever parameters may have been modified.
  std::uint64_t generation() const { return generation_; }
  void touch();

  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  NetworkSpec spec_;
  std::vector<Matrix> weights_;  // layer l: (dims[l+1] x dims[l])
  std::vector<Vector> biases_;
  std::uint64_t generation_ = 0;
};

// Glorot-uniform weights, zero biases. Same (spec, seed) gives bit-identical nets.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

// Deep copy used for target networks and ensemble members.
inline Network clone(const Network& net) { return net; }

// Masks already include the 1/(1-rate) inverted scaling (entries are 0 or 1/(1-rate)).
struct MaskSet {
  std::vector<Matrix> activation;  // dropout: per hidden layer, (width x batch)
  std::vector<Matrix> weight;      // dropconnect: per non-output layer, weight-shaped
  bool empty() const { return activation.empty() && weight.empty(); }
};

// How stochastic layers behave during a forward pass.
class StochasticMode {
 public:
  struct Deterministic {};
  struct Sampled {
    Rng* rng;
  };
  struct Frozen {
    const MaskSet* masks;
  };

  static StochasticMode deterministic() { return StochasticMode(Deterministic{}); }
  static StochasticMode sampled(Rng& rng) { return StochasticMode(Sampled{&rng}); }
  static StochasticMode frozen(const MaskSet& masks) { return StochasticMode(Frozen{&masks}); }

  const std::variant<Deterministic, Sampled, Frozen>& get() const { return mode_; }

 private:
  explicit StochasticMode(std::variant<Deterministic, Sampled, Frozen> m) : mode_(m) {}
  std::variant<Deterministic, Sampled, Frozen> mode_;
};

// Everything backward needs, recorded by forward.
class Tape {
 public:
  const MaskSet& masks() const { return masks_; }
  std::size_t batch() const { return batch_; }

 private:
  friend struct TapeAccess;
  std::vector<Matrix> layer_inputs_;  // input to layer l (post-mask activations)
  std::vector<Matrix> pre_activations_;
  MaskSet masks_;
  std::size_t batch_ = 0;
  std::uint64_t generation_ = 0;
  NetworkSpec spec_;
};

struct ForwardResult {
  Matrix output;  // (output_dim x batch)
  Tape tape;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;  // d(loss)/d(input), (input_dim x batch)

  static Gradients zeros_like(const Network& net);
  double global_norm() const;
  void scale(double factor);
  bool all_finite() const;
};

ForwardResult forward(const Network& net, const Matrix& inputs, StochasticMode mode);

// Tape-free forward for inference loops.
Matrix predict(const Network& net, const Matrix& inputs, StochasticMode mode);
Vector predict(const Network& net, std::span<const double> input, StochasticMode mode);

// Exact gradients of sum_j output_grad(:, j) . output(:, j) under the masks on the tape.
Gradients backward(const Network& net, const Tape& tape, const Matrix& output_grad);

// Rescales gradients so the global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(Gradients& grads, double max_norm);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
  std::int64_t t = 0;

  static AdamState for_network(const Network& net);
};

enum class StepOutcome { applied, skipped_nonfinite };

// Bias-corrected Adam update, applied in place to `net` and `state`.
// Non-finite gradients leave both untouched and report skipped_nonfinite.
StepOutcome adam_step(Network& net, const Gradients& grads, AdamState& state, double lr,
                      const AdamConfig& config = {});

// target <- tau * online + (1 - tau) * target
void soft_update(Network& target, const Network& online, double tau);

}  // namespace oodrl::nn
