#include "oodrl/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "oodrl/error.hpp"

namespace oodrl::uncertainty {

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::mc_dropout: return "mc_dropout";
    case MethodKind::mc_dropconnect: return "mc_dropconnect";
    case MethodKind::ensemble: return "ensemble";
  }
  return "?";
}

MethodKind method_from_string(const std::string& s) {
  if (s == "mc_dropout") return MethodKind::mc_dropout;
  if (s == "mc_dropconnect") return MethodKind::mc_dropconnect;
  if (s == "ensemble") return MethodKind::ensemble;
  throw ConfigError("unknown method '" + s + "' (expected mc_dropout, mc_dropconnect or ensemble)");
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::chosen_action_std: return "chosen_action_std";
    case Aggregation::max_action_std: return "max_action_std";
    case Aggregation::mean_action_std: return "mean_action_std";
  }
  return "?";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "chosen_action_std") return Aggregation::chosen_action_std;
  if (s == "max_action_std") return Aggregation::max_action_std;
  if (s == "mean_action_std") return Aggregation::mean_action_std;
  throw ConfigError("unknown aggregation '" + s + "'");
}

void Method::validate() const {
  if (samples < 2) throw ConfigError("method: samples (K or M) must be >= 2");
  if (kind != MethodKind::ensemble && !(rate > 0.0 && rate < 1.0))
    throw ConfigError("method: MC rate must lie in (0, 1)");
}

nn::Stochastic Method::stochastic() const {
  switch (kind) {
    case MethodKind::mc_dropout: return nn::Stochastic::dropout(rate);
    case MethodKind::mc_dropconnect: return nn::Stochastic::dropconnect(rate);
    case MethodKind::ensemble: break;
  }
  return nn::Stochastic::none();
}

MeanStd mean_std(const std::vector<nn::Vector>& samples) {
  if (samples.size() < 2) throw ConfigError("mean_std: need at least two samples");
  // Shifted by the first sample so coinciding samples give exactly zero spread.
  const nn::Vector& origin = samples.front();
  const auto dim = origin.size();
  nn::Vector sum = nn::Vector::Zero(dim), sq = nn::Vector::Zero(dim);
  for (const auto& s : samples) {
    if (s.size() != dim) throw SpecError("mean_std: output dimensions differ");
    const nn::Vector d = s - origin;
    sum += d;
    sq += d.cwiseAbs2();
  }
  const double n = static_cast<double>(samples.size());
  MeanStd r;
  r.mean = origin + sum / n;
  r.std = ((sq - sum.cwiseAbs2() / n) / (n - 1.0)).cwiseMax(0.0).cwiseSqrt();
  return r;
}

MeanStd mc_score(const nn::Network& net, std::span<const double> input, int samples, Rng& rng) {
  if (net.spec().stochastic.kind == nn::StochasticKind::none)
    throw MethodError("MC scoring needs a network with dropout or dropconnect layers");
  if (samples < 2) throw ConfigError("mc_score: K must be >= 2");
  std::vector<nn::Vector> outs;
  outs.reserve(static_cast<std::size_t>(samples));
  for (int k = 0; k < samples; ++k)
    outs.push_back(nn::predict(net, input, nn::StochasticMode::sampled(rng)));
  return mean_std(outs);
}

MeanStd ensemble_score(const std::vector<nn::Network>& members, std::span<const double> input) {
  if (members.size() < 2) throw ConfigError("ensemble_score: M must be >= 2");
  std::vector<nn::Vector> outs;
  outs.reserve(members.size());
  for (const auto& m : members) {
    if (m.spec().output_dim() != members.front().spec().output_dim())
      throw SpecError("ensemble_score: member output dimensions differ");
    outs.push_back(nn::predict(m, input, nn::StochasticMode::deterministic()));
  }
  return mean_std(outs);
}

double reduce(const MeanStd& ms, Aggregation aggregation, bool discrete) {
  if (!discrete) return ms.std(0);
  switch (aggregation) {
    case Aggregation::chosen_action_std: {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < ms.mean.size(); ++i)
        if (ms.mean(i) > ms.mean(best)) best = i;
      return ms.std(best);
    }
    case Aggregation::max_action_std: return ms.std.maxCoeff();
    case Aggregation::mean_action_std: return ms.std.mean();
  }
  return 0.0;
}

Scorer::Scorer(Method method, std::vector<nn::Network> members, bool discrete)
    : method_(method), members_(std::move(members)), discrete_(discrete) {
  method_.validate();
  if (members_.empty()) throw ConfigError("scorer: no networks");
  if (method_.kind == MethodKind::ensemble) {
    if (members_.size() != static_cast<std::size_t>(method_.samples))
      throw ConfigError("scorer: ensemble size does not match M");
  } else {
    if (members_.size() != 1) throw ConfigError("scorer: MC methods score a single network");
    const auto want = method_.kind == MethodKind::mc_dropout ? nn::StochasticKind::dropout
                                                              : nn::StochasticKind::dropconnect;
    const auto have = members_.front().spec().stochastic.kind;
    if (have == nn::StochasticKind::none)
      throw MethodError("scorer: " + to_string(method_.kind) + " needs a network trained with " +
                        nn::to_string(want) + " layers");
    if (have != want)
      throw MethodError("scorer: " + to_string(method_.kind) + " cannot score a network with " +
                        nn::to_string(have) + " layers");
  }
}

StepScore Scorer::score(std::span<const double> input, Rng& rng) const {
  StepScore s;
  s.stats = method_.kind == MethodKind::ensemble
                ? ensemble_score(members_, input)
                : mc_score(members_.front(), input, method_.samples, rng);
  s.score = reduce(s.stats, method_.aggregation, discrete_);
  return s;
}

}  // namespace oodrl::uncertainty
