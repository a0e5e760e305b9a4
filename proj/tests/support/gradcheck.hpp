#pragma once

// Central finite-difference oracle for network gradients. It only calls
// forward (with frozen masks), never backward, so it stays independent of the
// code path it checks.

#include <algorithm>
#include <cmath>

#include "oodrl/nn.hpp"
#include "oodrl/rng.hpp"

namespace oodrl::testing {

// Scalar loss sum(coeff .* output) under frozen masks.
inline double probe_loss(const nn::Network& net, const nn::Matrix& x, const nn::MaskSet& masks,
                         const nn::Matrix& coeff) {
  const nn::Matrix out = nn::predict(net, x, nn::StochasticMode::frozen(masks));
  return out.cwiseProduct(coeff).sum();
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Compares `grads` against central differences of probe_loss for every
// weight, bias and input entry.
inline GradCheckReport finite_difference_check(const nn::Network& net, const nn::Matrix& x,
                                               const nn::MaskSet& masks, const nn::Matrix& coeff,
                                               const nn::Gradients& grads, double eps = 1e-5) {
  GradCheckReport rep;
  nn::Network probe = net;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    for (Eigen::Index i = 0; i < net.weights()[l].rows(); ++i)
      for (Eigen::Index j = 0; j < net.weights()[l].cols(); ++j) {
        const double orig = net.weights()[l](i, j);
        probe.weight(l)(i, j) = orig + eps;
        const double up = probe_loss(probe, x, masks, coeff);
        probe.weight(l)(i, j) = orig - eps;
        const double down = probe_loss(probe, x, masks, coeff);
        probe.weight(l)(i, j) = orig;
        rep.max_rel_error =
            std::max(rep.max_rel_error, rel_error(grads.weights[l](i, j), (up - down) / (2 * eps)));
        ++rep.checked;
      }
    for (Eigen::Index i = 0; i < net.biases()[l].size(); ++i) {
      const double orig = net.biases()[l](i);
      probe.bias(l)(i) = orig + eps;
      const double up = probe_loss(probe, x, masks, coeff);
      probe.bias(l)(i) = orig - eps;
      const double down = probe_loss(probe, x, masks, coeff);
      probe.bias(l)(i) = orig;
      rep.max_rel_error =
          std::max(rep.max_rel_error, rel_error(grads.biases[l](i), (up - down) / (2 * eps)));
      ++rep.checked;
    }
  }
  nn::Matrix xp = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      xp(i, j) = x(i, j) + eps;
      const double up = probe_loss(net, xp, masks, coeff);
      xp(i, j) = x(i, j) - eps;
      const double down = probe_loss(net, xp, masks, coeff);
      xp(i, j) = x(i, j);
      rep.max_rel_error =
          std::max(rep.max_rel_error, rel_error(grads.input(i, j), (up - down) / (2 * eps)));
      ++rep.checked;
    }
  return rep;
}

// Random small network spec (every dim <= 5) cycling through activations,
// output kinds and stochastic layers.
inline nn::NetworkSpec random_small_spec(Rng& rng, std::size_t index) {
  const std::size_t depth = 2 + rng.index(3);  // 2..4 layer dims
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < depth; ++i) dims.push_back(1 + rng.index(5));
  nn::NetworkSpec spec;
  spec.layer_dims = dims;
  const nn::Activation acts[] = {nn::Activation::relu, nn::Activation::tanh,
                                 nn::Activation::identity};
  for (std::size_t i = 0; i + 2 < depth; ++i) spec.activations.push_back(acts[rng.index(3)]);
  spec.output = index % 2 ? nn::OutputActivation::tanh_scaled(0.5 + 2.0 * rng.uniform())
                          : nn::OutputActivation::identity();
  switch (index % 3) {
    case 0:
      spec.stochastic = nn::Stochastic::none();
      break;
    case 1:
      spec.stochastic = nn::Stochastic::dropout(0.1 + 0.5 * rng.uniform());
      break;
    default:
      spec.stochastic = nn::Stochastic::dropconnect(0.1 + 0.5 * rng.uniform());
      break;
  }
  return spec;
}

// Draws a batch whose relu pre-activations stay away from the kink, so
// central differences are valid. Returns false if none was found.
inline bool draw_smooth_batch(const nn::Network& net, const nn::MaskSet* masks, Rng& rng,
                              std::size_t batch, nn::Matrix& x, nn::MaskSet& frozen) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    x.resize(static_cast<Eigen::Index>(net.spec().input_dim()), static_cast<Eigen::Index>(batch));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-1.5, 1.5);
    auto fwd = masks ? nn::forward(net, x, nn::StochasticMode::frozen(*masks))
                     : nn::forward(net, x, nn::StochasticMode::sampled(rng));
    frozen = fwd.tape.masks();
    // Recompute pre-activations layer by layer to test for kinks.
    bool smooth = true;
    nn::Matrix a = x;
    for (std::size_t l = 0; l + 1 < net.spec().num_layers(); ++l) {
      nn::Matrix w = net.weights()[l];
      if (!frozen.weight.empty()) w = w.cwiseProduct(frozen.weight[l]);
      nn::Matrix z = w * a;
      z.colwise() += net.biases()[l];
      if (net.spec().activations[l] == nn::Activation::relu && (z.array().abs() < 1e-3).any())
        smooth = false;
      switch (net.spec().activations[l]) {
        case nn::Activation::relu:
          a = z.cwiseMax(0.0);
          break;
        case nn::Activation::tanh:
          a = z.array().tanh().matrix();
          break;
        case nn::Activation::identity:
          a = z;
          break;
      }
      if (!frozen.activation.empty()) a = a.cwiseProduct(frozen.activation[l]);
    }
    if (smooth) return true;
  }
  return false;
}

}  // namespace oodrl::testing
