// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "quantlaw/formats.hpp"
#include "quantlaw/model.hpp"

namespace quantlaw {

// One random-search run's knobs. method.block_size must equal qb (the
// experiment-level and kernel-level block sizes agree by construction).
struct SearchSpec {
  double qr_target = 0.5;
  int qb = 32;
  Granularity granularity = Granularity::matmul;
  BlockFormat method;
  bool weight_and_activation = true;
  int64_t trials = 100;
  uint64_t seed = 0;
  double ratio_tolerance = 0.02;

  void validate() const;
  bool operator==(const SearchSpec&) const = default;
};

struct TrialRecord {
  int64_t trial_index = 0;
  uint64_t seed = 0;
  double qr_achieved = 0.0;
  std::string plan_digest;  // 16 hex chars
  double loss = 0.0;
  double delta = 0.0;  // loss - baseline_loss of the run
  // unknown sidecar fields preserved by the log reader (serialized object,
  // empty when none)
  std::string extra_json;

  bool operator==(const TrialRecord&) const = default;
};

// A run: header metadata plus the successful trials, ordered by
// trial_index. Failed trials are excluded from records and counted.
struct TrialSet {
  std::string run_id;
  std::string model_digest;  // checkpoint payload digest, hex
  std::string token_digest;  // evaluation corpus digest, hex
  double n_params = 0.0;     // billions of non-embedding parameters
  SearchSpec spec;
  double baseline_loss = 0.0;
  int64_t failed_trials = 0;
  std::string source = "search";  // "search" or "synthetic"
  std::string header_extra_json;
  std::vector<TrialRecord> records;

  bool operator==(const TrialSet&) const = default;
};

struct Estimates {
  double delta_opt = 0.0;  // min over recorded deltas
  double delta_mu = 0.0;   // arithmetic mean
  int64_t n = 0;
};

// Draw a random site subset whose parameter-mass ratio lands within
// `tolerance` of qr_target: shuffle, greedily add while under the target
// mass, then apply the single extra addition that most reduces the error;
// retry with fresh shuffles up to 64 times before giving up. Deterministic
// given rng_seed. Throws RatioInfeasible (with the closest achievable ratio)
// when no attempt lands inside the tolerance.
QuantPlan sample_plan(const std::vector<std::pair<SiteId, int64_t>>& sites,
                      double qr_target, uint64_t rng_seed, double tolerance);

// Evaluate `spec.trials` independently sampled plans. The evaluator maps a
// plan to its loss and must tolerate concurrent calls when jobs > 1. Trial
// seeds derive from (spec.seed, trial_index), so results are identical for
// any jobs value. Evaluator exceptions mark the trial failed; more than 10%
// failures aborts with RunFailed. Identity fields (run_id, digests,
// n_params, source) are left for the caller to fill.
TrialSet run_search(const std::function<double(const QuantPlan&)>& evaluator,
                    const std::vector<std::pair<SiteId, int64_t>>& sites,
                    const SearchSpec& spec, double baseline_loss,
                    int jobs = 1);

// delta_mu = mean, delta_opt = min over the run's successful records.
// Throws EmptyRun when there are none.
Estimates estimate(const TrialSet& set);

}  // namespace quantlaw
