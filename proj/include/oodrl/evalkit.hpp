#pragma once

// ID/OOD score collection, ROC/AUC, threshold selection and trial aggregation.
// OOD is the positive class: a step is flagged OOD when score >= threshold.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodrl/agents.hpp"
#include "oodrl/envs.hpp"
#include "oodrl/uncertainty.hpp"

namespace oodrl::evalkit {

enum class ThresholdRule { youden, f1 };

std::string to_string(ThresholdRule r);
ThresholdRule threshold_rule_from_string(const std::string& s);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
};

struct RocResult {
  double auc = 0.5;
  std::vector<RocPoint> points;  // from (0, 0, +inf) to (1, 1, min score)
  double best_threshold = 0.0;
  double youden_j = 0.0;  // J at best_threshold
};

// Mann-Whitney AUC with midranks, plus the ROC sweep over unique thresholds.
RocResult auc(std::span<const double> id_scores, std::span<const double> ood_scores,
              ThresholdRule rule = ThresholdRule::youden);

// Area under the piecewise-linear curve through `points`.
double trapezoid_area(const std::vector<RocPoint>& points);

struct AggregateResult {
  double mean = 0.0;
  double std = 0.0;  // divisor n - 1; 0 for a single trial
  std::size_t n = 0;
  bool single_trial = false;
  std::vector<double> values;
};

AggregateResult aggregate(std::span<const double> values);

// ---- Score collection ----------------------------------------------------------

struct ScoreSample {
  bool ood = false;
  int episode = 0;
  int step = 0;
  double score = 0.0;
};

struct TraceRow {
  int step = 0;
  nn::Vector mean;
  nn::Vector std;
  double score = 0.0;
};

struct ScoredEpisode {
  std::vector<TraceRow> rows;
  double ret = 0.0;
};

// One greedy episode: the policy acts, the scorer scores every visited input.
ScoredEpisode score_episode(const uncertainty::Scorer& scorer, const agents::Policy& policy,
                            envs::Environment& env, std::uint64_t env_seed,
                            std::uint64_t score_seed, const agents::Behaviour& behaviour = {});

struct CollectedScores {
  std::vector<ScoreSample> samples;
  std::vector<TraceRow> id_trace;   // first ID episode
  std::vector<TraceRow> ood_trace;  // first OOD episode

  std::vector<double> scores(bool ood) const;
  // Mean step score per episode, for episode-level detection.
  std::vector<double> episode_scores(bool ood) const;
};

struct SideScores {
  std::vector<ScoreSample> samples;
  std::vector<TraceRow> trace;  // first episode
};

// One side of collect_scores; `side` is 0 for ID, 1 for OOD.
SideScores collect_side(const uncertainty::Scorer& scorer, const agents::Policy& policy,
                        envs::Environment& env, int side, int episodes, std::uint64_t seed,
                        const agents::Behaviour& behaviour = {});

// Both sides joined, ID first.
CollectedScores join_sides(const SideScores& id, const SideScores& ood);

// `episodes` greedy episodes per side. Episode e on side s (0 = ID, 1 = OOD)
// resets with derive_seed(seed, {s, e, 0}) and scores with derive_seed(seed, {s, e, 1}).
CollectedScores collect_scores(const uncertainty::Scorer& scorer, const agents::Policy& policy,
                               envs::Environment& id_env, envs::Environment& ood_env,
                               int episodes, std::uint64_t seed,
                               const agents::Behaviour& behaviour = {});

// ---- Trials --------------------------------------------------------------------

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double auc = 0.0;
  double best_threshold = 0.0;
  double youden_j = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

// Runs `body` for trial indices [0, n) on up to `jobs` threads. Results come
// back in trial order; a body that throws TrainingError yields a failed trial.
std::vector<TrialResult> run_trials(int n, int jobs, const std::function<TrialResult(int)>& body);

// Generic work pool: calls fn(i) for i in [0, n) on up to `jobs` threads and
// rethrows the first exception (lowest index) after all workers finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// Aggregate over the trials that did not fail.
AggregateResult aggregate_trials(const std::vector<TrialResult>& trials);

// ---- Exports --------------------------------------------------------------------

struct ResultRow {
  std::string env, variant, method, aggregation;
  TrialResult trial;
};

std::string results_csv(const std::vector<ResultRow>& rows);

// Columns: side, step, mean_0.., std_0.., score, threshold.
std::string trace_csv(const std::vector<TraceRow>& id_rows, const std::vector<TraceRow>& ood_rows,
                      double threshold);

}  // namespace oodrl::evalkit
