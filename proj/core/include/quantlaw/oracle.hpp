// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "quantlaw/laws.hpp"
#include "quantlaw/search.hpp"

namespace quantlaw {

// A discrete loss-degeneration distribution: the random variable takes
// support[i] with probability probs[i].
struct DiscreteDelta {
  std::vector<double> support;  // strictly increasing
  std::vector<double> probs;    // nonnegative, sums to 1 within 1e-12

  void validate() const;
  double mean() const;
  double stddev() const;
  static DiscreteDelta uniform(std::vector<double> support);
};

// Monte-Carlo behaviour of the mean and min estimators over n_draws i.i.d.
// samples, aggregated across repetitions.
struct EstimatorReport {
  int64_t n_draws = 0;
  int64_t repetitions = 0;
  double mean_of_means = 0.0;
  double mean_of_mins = 0.0;
  double prob_min_hit = 0.0;  // fraction of repetitions whose min is exact
};

// Synthetic observations delta = eval_law(p, point) * exp(eps) with
// eps ~ Normal(0, sigma^2); sigma = 0 reproduces the law exactly.
// Multiplicative log-normal noise keeps deltas positive, matching the
// log-space fitter's domain.
std::vector<std::pair<ExperimentPoint, double>> gen_dataset(
    const LawParams& p, const std::vector<ExperimentPoint>& grid,
    double noise_sigma, uint64_t seed);

// Draw n i.i.d. samples per repetition, record their mean and min, and
// aggregate. mean_of_means checks unbiasedness of the mean estimator;
// mean_of_mins exhibits the min estimator's one-sided, asymptotically
// vanishing bias.
EstimatorReport estimator_sim(const DiscreteDelta& dist, int64_t n_draws,
                              int64_t repetitions, uint64_t seed);

// Closed form for the chance the min estimator hits the true minimum:
// 1 - (1 - p_min)^n.
double prob_min_hit_exact(const DiscreteDelta& dist, int64_t n_draws);

// Package a synthetic dataset as single-record runs in the search module's
// schema (source = "synthetic"), so the fitter cannot tell measured from
// synthetic data.
// Grid block sizes must be valid kernel block sizes (powers of two).
std::vector<TrialSet> package_synthetic(
    const std::vector<std::pair<ExperimentPoint, double>>& dataset,
    uint64_t seed);

}  // namespace quantlaw
