#pragma once

// Per-step epistemic uncertainty: MC Dropout, MC DropConnect and ensembles.

#include <span>
#include <string>
#include <vector>

#include "oodrl/nn.hpp"
#include "oodrl/rng.hpp"

namespace oodrl::uncertainty {

enum class MethodKind { mc_dropout, mc_dropconnect, ensemble };
enum class Aggregation { chosen_action_std, max_action_std, mean_action_std };

std::string to_string(MethodKind k);
MethodKind method_from_string(const std::string& s);
std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

struct Method {
  MethodKind kind = MethodKind::ensemble;
  int samples = 5;  // K passes, or M members
  Aggregation aggregation = Aggregation::chosen_action_std;
  double rate = 0.1;  // training-time drop rate for the MC methods

  void validate() const;
  // Stochastic layer the trained network needs for this method.
  nn::Stochastic stochastic() const;
  // Networks trained per trial: M for ensembles, 1 otherwise.
  int members() const { return kind == MethodKind::ensemble ? samples : 1; }
  bool operator==(const Method&) const = default;
};

struct MeanStd {
  nn::Vector mean;
  nn::Vector std;  // sample std, divisor n - 1
};

// Column statistics over n >= 2 output vectors.
MeanStd mean_std(const std::vector<nn::Vector>& samples);

// K forward passes, each with fresh masks from `rng`.
MeanStd mc_score(const nn::Network& net, std::span<const double> input, int samples, Rng& rng);

// One deterministic pass per member.
MeanStd ensemble_score(const std::vector<nn::Network>& members, std::span<const double> input);

// Scalar score: discrete outputs reduce the per-action std vector, continuous
// outputs use the std of the (first) actor output.
double reduce(const MeanStd& ms, Aggregation aggregation, bool discrete);

struct StepScore {
  MeanStd stats;
  double score = 0.0;
};

// Binds a method to the networks it scores.
class Scorer {
 public:
  Scorer(Method method, std::vector<nn::Network> members, bool discrete);

  StepScore score(std::span<const double> input, Rng& rng) const;
  const Method& method() const { return method_; }
  const std::vector<nn::Network>& members() const { return members_; }
  bool discrete() const { return discrete_; }

 private:
  Method method_;
  std::vector<nn::Network> members_;
  bool discrete_;
};

}  // namespace oodrl::uncertainty
