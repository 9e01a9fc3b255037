// SPDX-License-Identifier: Apache-2.0
#include "quantlaw/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "quantlaw/digest.hpp"
#include "quantlaw/errors.hpp"

namespace quantlaw {

namespace {

// Fisher-Yates with raw engine draws; std::shuffle's mapping is not pinned
// by the standard, this one reproduces bit-for-bit everywhere.
template <typename T>
void shuffle_stable(std::vector<T>& v, std::mt19937_64& eng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[eng() % i]);
}

constexpr int kMaxSampleAttempts = 64;

}  // namespace

void SearchSpec::validate() const {
  if (qr_target < 0.0 || qr_target > 1.0)
    throw InvalidInput("qr_target must lie in [0, 1]");
  if (trials < 1) throw InvalidInput("trials must be >= 1");
  if (!(ratio_tolerance > 0.0) || ratio_tolerance > 0.1)
    throw InvalidInput("ratio_tolerance must lie in (0, 0.1]");
  method.validate();
  if (method.block_size != qb)
    throw InvalidInput("method block size " +
                       std::to_string(method.block_size) +
                       " must equal qb " + std::to_string(qb));
}

QuantPlan sample_plan(const std::vector<std::pair<SiteId, int64_t>>& sites,
                      double qr_target, uint64_t rng_seed, double tolerance) {
  if (sites.empty()) throw InvalidInput("sample_plan: no sites");
  if (qr_target < 0.0 || qr_target > 1.0)
    throw InvalidInput("qr_target must lie in [0, 1]");

  int64_t total = 0;
  for (const auto& [site, count] : sites) {
    if (count <= 0) throw InvalidInput("site with nonpositive param count");
    total += count;
  }
  const double target_mass = qr_target * static_cast<double>(total);

  std::mt19937_64 eng(rng_seed);
  std::vector<size_t> order(sites.size());
  double closest = 2.0;  // worst possible |achieved - target| is 1
  for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_stable(order, eng);

    std::vector<bool> chosen(sites.size(), false);
    int64_t mass = 0;
    for (size_t i : order) {
      const int64_t c = sites[i].second;
      if (static_cast<double>(mass + c) <= target_mass) {
        chosen[i] = true;
        mass += c;
      }
    }
    // one corrective addition if it tightens the ratio
    double best_err = std::fabs(static_cast<double>(mass) /
                                    static_cast<double>(total) -
                                qr_target);
    size_t best_add = sites.size();
    for (size_t i = 0; i < sites.size(); ++i) {
      if (chosen[i]) continue;
      const double err =
          std::fabs(static_cast<double>(mass + sites[i].second) /
                        static_cast<double>(total) -
                    qr_target);
      if (err < best_err) {
        best_err = err;
        best_add = i;
      }
    }
    if (best_add < sites.size()) {
      chosen[best_add] = true;
      mass += sites[best_add].second;
    }

    const double achieved =
        static_cast<double>(mass) / static_cast<double>(total);
    const double err = std::fabs(achieved - qr_target);
    if (err < std::fabs(closest - qr_target)) closest = achieved;
    if (err <= tolerance) {
      QuantPlan plan;
      for (size_t i = 0; i < sites.size(); ++i) {
        plan.site_param_counts[sites[i].first] = sites[i].second;
        if (chosen[i]) plan.low_precision_sites.insert(sites[i].first);
      }
      return plan;
    }
  }
  throw RatioInfeasible("no site subset within " + std::to_string(tolerance) +
                            " of ratio " + std::to_string(qr_target),
                        closest);
}

TrialSet run_search(const std::function<double(const QuantPlan&)>& evaluator,
                    const std::vector<std::pair<SiteId, int64_t>>& sites,
                    const SearchSpec& spec, double baseline_loss, int jobs) {
  spec.validate();
  if (jobs < 1) throw InvalidInput("jobs must be >= 1");

  TrialSet set;
  set.spec = spec;
  set.baseline_loss = baseline_loss;

  struct Slot {
    TrialRecord record;
    bool ok = false;
  };
  std::vector<Slot> slots(spec.trials);
  std::atomic<int64_t> next{0};
  std::atomic<int64_t> failures{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  auto worker = [&] {
    for (;;) {
      const int64_t i = next.fetch_add(1);
      if (i >= spec.trials) return;
      {
        std::lock_guard<std::mutex> lk(fatal_mu);
        if (fatal) return;
      }
      const uint64_t trial_seed =
          derive_seed(spec.seed, static_cast<uint64_t>(i));
      QuantPlan plan;
      try {
        plan = sample_plan(sites, spec.qr_target, trial_seed,
                           spec.ratio_tolerance);
      } catch (...) {
        // sampling infeasibility is deterministic, not a flaky trial
        std::lock_guard<std::mutex> lk(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        return;
      }
      plan.method = spec.method;
      plan.weight_and_activation = spec.weight_and_activation;
      Slot& slot = slots[i];
      slot.record.trial_index = i;
      slot.record.seed = trial_seed;
      slot.record.qr_achieved = plan.achieved_ratio();
      slot.record.plan_digest = to_hex16(plan.digest());
      try {
        slot.record.loss = evaluator(plan);
        slot.record.delta = slot.record.loss - baseline_loss;
        slot.ok = true;
      } catch (...) {
        failures.fetch_add(1);
      }
    }
  };

  const int n_workers =
      static_cast<int>(std::min<int64_t>(jobs, spec.trials));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  set.failed_trials = failures.load();
  if (set.failed_trials * 10 > spec.trials)
    throw RunFailed(std::to_string(set.failed_trials) + " of " +
                    std::to_string(spec.trials) + " trials failed");
  set.records.reserve(spec.trials - set.failed_trials);
  for (Slot& slot : slots)
    if (slot.ok) set.records.push_back(std::move(slot.record));
  return set;
}

Estimates estimate(const TrialSet& set) {
  if (set.records.empty())
    throw EmptyRun("no successful trials to estimate from");
  Estimates est;
  est.n = static_cast<int64_t>(set.records.size());
  est.delta_opt = set.records.front().delta;
  double sum = 0.0;
  for (const TrialRecord& r : set.records) {
    est.delta_opt = std::min(est.delta_opt, r.delta);
    sum += r.delta;
  }
  est.delta_mu = sum / static_cast<double>(est.n);
  return est;
}

}  // namespace quantlaw
