#include "oodrl/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "oodrl/error.hpp"
#include "oodrl/io.hpp"

namespace oodrl::evalkit {

std::string to_string(ThresholdRule r) { return r == ThresholdRule::youden ? "youden" : "f1"; }

ThresholdRule threshold_rule_from_string(const std::string& s) {
  if (s == "youden") return ThresholdRule::youden;
  if (s == "f1") return ThresholdRule::f1;
  throw ConfigError("unknown threshold rule '" + s + "' (expected youden or f1)");
}

RocResult auc(std::span<const double> id_scores, std::span<const double> ood_scores,
              ThresholdRule rule) {
  if (id_scores.empty() || ood_scores.empty()) throw DataError("auc: both score sets must be non-empty");
  const std::size_t n_id = id_scores.size(), n_ood = ood_scores.size();
  struct Item {
    double score;
    bool ood;
  };
  std::vector<Item> items;
  items.reserve(n_id + n_ood);
  for (double s : id_scores) items.push_back({s, false});
  for (double s : ood_scores) items.push_back({s, true});
  for (const auto& it : items)
    if (std::isnan(it.score)) throw DataError("auc: NaN score");
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Doubled midranks are integers, so the statistic is an exact integer count.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    std::size_t ood_in_group = 0;
    while (j < items.size() && items[j].score == items[i].score) ood_in_group += items[j++].ood;
    const std::uint64_t twice_midrank = (i + 1) + j;  // ranks i+1 .. j
    twice_rank_sum += twice_midrank * ood_in_group;
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - n_ood * (n_ood + 1);
  RocResult r;
  r.auc = static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_id) * static_cast<double>(n_ood));

  // Sweep thresholds from the highest score down.
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t fp = 0, tp = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = items.size(); i > 0;) {
    std::size_t j = i;
    const double t = items[i - 1].score;
    while (j > 0 && items[j - 1].score == t) {
      (items[j - 1].ood ? tp : fp) += 1;
      --j;
    }
    i = j;
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_id);
    const double tpr = static_cast<double>(tp) / static_cast<double>(n_ood);
    r.points.push_back({fpr, tpr, t});
    const double j_stat = tpr - fpr;
    double value = j_stat;
    if (rule == ThresholdRule::f1) {
      const double fn = static_cast<double>(n_ood - tp);
      value = 2.0 * static_cast<double>(tp) / (2.0 * static_cast<double>(tp) + static_cast<double>(fp) + fn);
    }
    // Strict comparison keeps the first (highest) threshold on ties.
    if (value > best) {
      best = value;
      r.best_threshold = t;
      r.youden_j = j_stat;
    }
  }
  return r;
}

double trapezoid_area(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  return area;
}

AggregateResult aggregate(std::span<const double> values) {
  if (values.empty()) throw DataError("aggregate: no values");
  AggregateResult a;
  a.values.assign(values.begin(), values.end());
  a.n = values.size();
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(a.n);
  a.single_trial = a.n == 1;
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

// ---- Score collection ----------------------------------------------------------

ScoredEpisode score_episode(const uncertainty::Scorer& scorer, const agents::Policy& policy,
                            envs::Environment& env, std::uint64_t env_seed,
                            std::uint64_t score_seed, const agents::Behaviour& behaviour) {
  ScoredEpisode ep;
  Rng rng(score_seed);
  Rng explore(derive_seed(score_seed, {1}));
  const auto summary = agents::run_episode(
      policy, env, env_seed,
      [&](const agents::StepRecord& s) {
        const auto sc = scorer.score(*s.input, rng);
        if (!std::isfinite(sc.score)) throw TrainingError("non-finite uncertainty score");
        ep.rows.push_back({s.t, sc.stats.mean, sc.stats.std, sc.score});
      },
      behaviour, &explore);
  ep.ret = summary.ret;
  return ep;
}

std::vector<double> CollectedScores::scores(bool ood) const {
  std::vector<double> out;
  for (const auto& s : samples)
    if (s.ood == ood) out.push_back(s.score);
  return out;
}

std::vector<double> CollectedScores::episode_scores(bool ood) const {
  std::vector<double> sums, counts;
  for (const auto& s : samples) {
    if (s.ood != ood) continue;
    const auto e = static_cast<std::size_t>(s.episode);
    if (e >= sums.size()) {
      sums.resize(e + 1, 0.0);
      counts.resize(e + 1, 0.0);
    }
    sums[e] += s.score;
    counts[e] += 1.0;
  }
  for (std::size_t e = 0; e < sums.size(); ++e) sums[e] /= counts[e];
  return sums;
}

SideScores collect_side(const uncertainty::Scorer& scorer, const agents::Policy& policy,
                        envs::Environment& env, int side, int episodes, std::uint64_t seed,
                        const agents::Behaviour& behaviour) {
  if (episodes < 1) throw ConfigError("collect_scores: need at least one episode per side");
  SideScores out;
  const auto s = static_cast<std::uint64_t>(side);
  for (int e = 0; e < episodes; ++e) {
    const auto ue = static_cast<std::uint64_t>(e);
    auto ep = score_episode(scorer, policy, env, derive_seed(seed, {s, ue, 0}),
                            derive_seed(seed, {s, ue, 1}), behaviour);
    for (const auto& row : ep.rows) out.samples.push_back({side == 1, e, row.step, row.score});
    if (e == 0) out.trace = std::move(ep.rows);
  }
  return out;
}

CollectedScores join_sides(const SideScores& id, const SideScores& ood) {
  CollectedScores out;
  out.samples = id.samples;
  out.samples.insert(out.samples.end(), ood.samples.begin(), ood.samples.end());
  out.id_trace = id.trace;
  out.ood_trace = ood.trace;
  return out;
}

CollectedScores collect_scores(const uncertainty::Scorer& scorer, const agents::Policy& policy,
                               envs::Environment& id_env, envs::Environment& ood_env,
                               int episodes, std::uint64_t seed,
                               const agents::Behaviour& behaviour) {
  return join_sides(collect_side(scorer, policy, id_env, 0, episodes, seed, behaviour),
                    collect_side(scorer, policy, ood_env, 1, episodes, seed, behaviour));
}

// ---- Trials --------------------------------------------------------------------

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::clamp(jobs, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<TrialResult> run_trials(int n, int jobs, const std::function<TrialResult(int)>& body) {
  if (n < 1) throw ConfigError("run_trials: need at least one trial");
  std::vector<TrialResult> results(static_cast<std::size_t>(n));
  parallel_for(n, jobs, [&](int i) {
    try {
      results[static_cast<std::size_t>(i)] = body(i);
    } catch (const TrainingError& e) {
      TrialResult r;
      r.trial = i;
      r.failed = true;
      r.error = e.what();
      results[static_cast<std::size_t>(i)] = r;
    }
  });
  return results;
}

AggregateResult aggregate_trials(const std::vector<TrialResult>& trials) {
  std::vector<double> aucs;
  for (const auto& t : trials)
    if (!t.failed) aucs.push_back(t.auc);
  if (aucs.empty()) throw TrainingError("every trial failed");
  return aggregate(aucs);
}

// ---- Exports --------------------------------------------------------------------

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "env,variant,method,aggregation,trial,auc,best_threshold,youden_j,n_id,n_ood,seed\n";
  for (const auto& r : rows) {
    const auto& t = r.trial;
    out << r.env << ',' << r.variant << ',' << r.method << ',' << r.aggregation << ',' << t.trial
        << ',' << (t.failed ? "failed" : io::format_double(t.auc)) << ','
        << (t.failed ? "" : io::format_double(t.best_threshold)) << ','
        << (t.failed ? "" : io::format_double(t.youden_j)) << ',' << t.n_id << ',' << t.n_ood
        << ',' << t.seed << '\n';
  }
  return out.str();
}

std::string trace_csv(const std::vector<TraceRow>& id_rows, const std::vector<TraceRow>& ood_rows,
                      double threshold) {
  Eigen::Index dim = 0;
  if (!id_rows.empty()) dim = id_rows.front().mean.size();
  else if (!ood_rows.empty()) dim = ood_rows.front().mean.size();
  std::ostringstream out;
  out << "side,step";
  for (Eigen::Index i = 0; i < dim; ++i) out << ",mean_" << i;
  for (Eigen::Index i = 0; i < dim; ++i) out << ",std_" << i;
  out << ",score,threshold\n";
  const std::string th = io::format_double(threshold);
  auto emit = [&](const char* side, const std::vector<TraceRow>& rows) {
    for (const auto& r : rows) {
      out << side << ',' << r.step;
      for (Eigen::Index i = 0; i < dim; ++i) out << ',' << io::format_double(r.mean(i));
      for (Eigen::Index i = 0; i < dim; ++i) out << ',' << io::format_double(r.std(i));
      out << ',' << io::format_double(r.score) << ',' << th << '\n';
    }
  };
  emit("id", id_rows);
  emit("ood", ood_rows);
  return out.str();
}

}  // namespace oodrl::evalkit
