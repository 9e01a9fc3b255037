// SPDX-License-Identifier: Apache-2.0
#include "quantlaw/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "quantlaw/digest.hpp"
#include "quantlaw/errors.hpp"
#include "quantlaw/rng.hpp"

namespace quantlaw {

void DiscreteDelta::validate() const {
  if (support.empty() || support.size() != probs.size())
    throw InvalidInput("distribution needs matching nonempty support/probs");
  double sum = 0.0;
  for (size_t i = 0; i < support.size(); ++i) {
    if (i > 0 && !(support[i] > support[i - 1]))
      throw InvalidInput("support must be strictly increasing");
    if (probs[i] < 0.0) throw InvalidInput("probabilities must be >= 0");
    sum += probs[i];
  }
  if (std::fabs(sum - 1.0) > 1e-12)
    throw InvalidInput("probabilities must sum to 1");
}

double DiscreteDelta::mean() const {
  validate();
  double m = 0.0;
  for (size_t i = 0; i < support.size(); ++i) m += support[i] * probs[i];
  return m;
}

double DiscreteDelta::stddev() const {
  const double m = mean();
  double v = 0.0;
  for (size_t i = 0; i < support.size(); ++i)
    v += probs[i] * (support[i] - m) * (support[i] - m);
  return std::sqrt(v);
}

DiscreteDelta DiscreteDelta::uniform(std::vector<double> support) {
  DiscreteDelta d;
  d.probs.assign(support.size(),
                 1.0 / static_cast<double>(support.size()));
  d.support = std::move(support);
  d.validate();
  return d;
}

std::vector<std::pair<ExperimentPoint, double>> gen_dataset(
    const LawParams& p, const std::vector<ExperimentPoint>& grid,
    double noise_sigma, uint64_t seed) {
  if (noise_sigma < 0.0) throw InvalidInput("noise_sigma must be >= 0");
  GaussianGen gen(seed);
  std::vector<std::pair<ExperimentPoint, double>> out;
  out.reserve(grid.size());
  for (const ExperimentPoint& pt : grid) {
    const double eps = noise_sigma * gen.next();
    out.emplace_back(pt, eval_law(p, pt) * std::exp(eps));
  }
  return out;
}

EstimatorReport estimator_sim(const DiscreteDelta& dist, int64_t n_draws,
                              int64_t repetitions, uint64_t seed) {
  dist.validate();
  if (n_draws < 1 || repetitions < 1)
    throw InvalidInput("n_draws and repetitions must be >= 1");

  std::vector<double> cmf(dist.probs.size());
  double acc = 0.0;
  for (size_t i = 0; i < dist.probs.size(); ++i) {
    acc += dist.probs[i];
    cmf[i] = acc;
  }
  cmf.back() = 1.0;  // guard the final bucket against rounding

  std::mt19937_64 eng(seed);
  // compensated sums: aggregates must not depend on summation luck
  double sum_means = 0.0, comp_means = 0.0;
  double sum_mins = 0.0, comp_mins = 0.0;
  auto kahan_add = [](double& sum, double& comp, double x) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  };
  int64_t hits = 0;
  const double true_min = dist.support.front();
  for (int64_t r = 0; r < repetitions; ++r) {
    double rep_sum = 0.0;
    double rep_min = dist.support.back();
    for (int64_t i = 0; i < n_draws; ++i) {
      const double u = uniform01(eng);
      const size_t idx = static_cast<size_t>(
          std::upper_bound(cmf.begin(), cmf.end(), u) - cmf.begin());
      const double x = dist.support[std::min(idx, dist.support.size() - 1)];
      rep_sum += x;
      rep_min = std::min(rep_min, x);
    }
    kahan_add(sum_means, comp_means,
              rep_sum / static_cast<double>(n_draws));
    kahan_add(sum_mins, comp_mins, rep_min);
    if (rep_min == true_min) ++hits;
  }

  EstimatorReport rep;
  rep.n_draws = n_draws;
  rep.repetitions = repetitions;
  rep.mean_of_means = sum_means / static_cast<double>(repetitions);
  rep.mean_of_mins = sum_mins / static_cast<double>(repetitions);
  rep.prob_min_hit =
      static_cast<double>(hits) / static_cast<double>(repetitions);
  return rep;
}

double prob_min_hit_exact(const DiscreteDelta& dist, int64_t n_draws) {
  dist.validate();
  if (n_draws < 1) throw InvalidInput("n_draws must be >= 1");
  const double p_min = dist.probs.front();
  return 1.0 - std::pow(1.0 - p_min, static_cast<double>(n_draws));
}

std::vector<TrialSet> package_synthetic(
    const std::vector<std::pair<ExperimentPoint, double>>& dataset,
    uint64_t seed) {
  std::vector<TrialSet> runs;
  runs.reserve(dataset.size());
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto& [pt, delta] = dataset[i];
    BlockFormat method{FormatKind::mxint, 4, static_cast<int>(pt.q_b)};
    try {
      method.validate();
    } catch (const InvalidFormat&) {
      throw InvalidInput(
          "synthetic q_b " + std::to_string(pt.q_b) +
          " is not a valid kernel block size (power of two in [1, 4096])");
    }
    const uint64_t run_seed = derive_seed(seed, static_cast<uint64_t>(i));
    TrialSet set;
    set.run_id = "synth-" + to_hex16(run_seed);
    set.model_digest = "synthetic";
    set.token_digest = "synthetic";
    set.n_params = pt.n_params;
    set.spec.qr_target = pt.q_r;
    set.spec.qb = static_cast<int>(pt.q_b);
    set.spec.granularity = Granularity::matmul;
    set.spec.method = method;
    set.spec.weight_and_activation = true;
    set.spec.trials = 1;
    set.spec.seed = run_seed;
    set.spec.ratio_tolerance = 0.02;
    set.baseline_loss = 0.0;
    set.source = "synthetic";
    TrialRecord rec;
    rec.trial_index = 0;
    rec.seed = run_seed;
    rec.qr_achieved = pt.q_r;
    rec.plan_digest = to_hex16(run_seed);
    rec.loss = delta;  // relative to a zero baseline
    rec.delta = delta;
    set.records.push_back(std::move(rec));
    runs.push_back(std::move(set));
  }
  return runs;
}

}  // namespace quantlaw
