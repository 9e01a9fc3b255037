// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "quantlaw/errors.hpp"
#include "quantlaw/search.hpp"

using namespace quantlaw;

namespace {

// n sites of equal mass; granular enough for exact mid ratios
std::vector<std::pair<SiteId, int64_t>> equal_sites(int n, int64_t mass) {
  std::vector<std::pair<SiteId, int64_t>> sites;
  for (int i = 0; i < n; ++i)
    sites.push_back({SiteId{i, MatmulName::q, Granularity::matmul}, mass});
  return sites;
}

SearchSpec base_spec() {
  SearchSpec spec;
  spec.qr_target = 0.5;
  spec.qb = 32;
  spec.method = BlockFormat::parse("mxint4:32");
  spec.trials = 40;
  spec.seed = 7;
  spec.ratio_tolerance = 0.02;
  return spec;
}

// deterministic pseudo-loss: depends only on the chosen subset
double toy_loss(const QuantPlan& plan, double baseline) {
  return baseline + plan.achieved_ratio() +
         1e-3 * static_cast<double>(plan.low_precision_sites.size());
}

}  // namespace

TEST_CASE("SearchSpec validation pins every knob") {
  SearchSpec s = base_spec();
  CHECK_NOTHROW(s.validate());
  s.trials = 0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = base_spec();
  s.ratio_tolerance = 0.0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = base_spec();
  s.ratio_tolerance = 0.11;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = base_spec();
  s.qr_target = 1.1;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = base_spec();
  s.qb = 64;  // disagrees with method block size
  CHECK_THROWS_AS(s.validate(), InvalidInput);
}

TEST_CASE("plan sampling hits trivial and exact targets") {
  const auto sites = equal_sites(10, 100);

  const QuantPlan none = sample_plan(sites, 0.0, 1, 0.02);
  CHECK(none.low_precision_sites.empty());
  CHECK(none.achieved_ratio() == 0.0);

  const QuantPlan all = sample_plan(sites, 1.0, 1, 0.02);
  CHECK(all.low_precision_sites.size() == 10);
  CHECK(all.achieved_ratio() == 1.0);

  // ten equal sites at 0.5: every draw takes exactly five
  for (uint64_t seed = 0; seed < 25; ++seed) {
    const QuantPlan p = sample_plan(sites, 0.5, seed, 0.02);
    CHECK(p.low_precision_sites.size() == 5);
    CHECK(p.achieved_ratio() == 0.5);
  }
}

TEST_CASE("plan sampling is deterministic yet explores") {
  const auto sites = equal_sites(12, 50);
  const QuantPlan a = sample_plan(sites, 0.5, 3, 0.02);
  const QuantPlan b = sample_plan(sites, 0.5, 3, 0.02);
  CHECK(a.low_precision_sites == b.low_precision_sites);
  CHECK(a.digest() == b.digest());

  std::set<uint64_t> digests;
  for (uint64_t seed = 0; seed < 20; ++seed)
    digests.insert(sample_plan(sites, 0.5, seed, 0.02).digest());
  CHECK(digests.size() > 1);  // different seeds pick different subsets
}

TEST_CASE("unreachable ratios raise RatioInfeasible with the nearest miss") {
  const std::vector<std::pair<SiteId, int64_t>> sites = {
      {SiteId{0, MatmulName::q, Granularity::matmul}, 1},
      {SiteId{1, MatmulName::q, Granularity::matmul}, 1000000},
  };
  try {
    sample_plan(sites, 0.5, 9, 0.02);
    FAIL("expected RatioInfeasible");
  } catch (const RatioInfeasible& e) {
    // achievable ratios: 0, ~1e-6, ~0.999999, 1 — none within 0.02 of 0.5
    const double c = e.closest_achievable;
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    CHECK(std::fabs(c - 0.5) > 0.02);
  }
  CHECK_THROWS_AS(sample_plan({}, 0.5, 1, 0.02), InvalidInput);
}

TEST_CASE("search runs are reproducible and jobs-invariant") {
  const auto sites = equal_sites(10, 100);
  const SearchSpec spec = base_spec();
  const double baseline = 2.0;
  const auto ev = [&](const QuantPlan& p) { return toy_loss(p, baseline); };

  const TrialSet t1 = run_search(ev, sites, spec, baseline, 1);
  const TrialSet t4 = run_search(ev, sites, spec, baseline, 4);
  CHECK(t1 == t4);

  REQUIRE(t1.records.size() == 40);
  CHECK(t1.failed_trials == 0);
  CHECK(t1.spec == spec);
  CHECK(t1.baseline_loss == baseline);
  for (size_t i = 0; i < t1.records.size(); ++i) {
    const TrialRecord& r = t1.records[i];
    CHECK(r.trial_index == static_cast<int64_t>(i));
    CHECK(std::fabs(r.qr_achieved - 0.5) <= 0.02);
    CHECK(r.delta == r.loss - baseline);
    CHECK(r.plan_digest.size() == 16);
  }
  // different search seeds draw different plan sequences
  SearchSpec other = spec;
  other.seed = 8;
  CHECK(run_search(ev, sites, other, baseline, 1) != t1);
}

TEST_CASE("estimates reduce the recorded deltas") {
  TrialSet set;
  set.spec = base_spec();
  for (int i = 0; i < 3; ++i) {
    TrialRecord r;
    r.trial_index = i;
    r.delta = 0.3 - 0.1 * i;  // 0.3, 0.2, 0.1
    r.loss = 2.0 + r.delta;
    set.records.push_back(r);
  }
  const Estimates est = estimate(set);
  CHECK(est.delta_opt == doctest::Approx(0.1));
  CHECK(est.delta_mu == doctest::Approx(0.2));
  CHECK(est.n == 3);

  set.records.clear();
  CHECK_THROWS_AS(estimate(set), EmptyRun);
}

TEST_CASE("sporadic evaluator failures are excluded, not fatal") {
  const auto sites = equal_sites(10, 100);
  SearchSpec spec = base_spec();
  spec.trials = 50;
  const auto flaky = [&](const QuantPlan& p) {
    if (p.digest() % 29 == 0) throw std::runtime_error("transient");
    return toy_loss(p, 2.0);
  };
  const TrialSet t = run_search(flaky, sites, spec, 2.0, 1);
  CHECK(t.failed_trials >= 0);
  CHECK(t.failed_trials * 10 <= spec.trials);
  CHECK(static_cast<int64_t>(t.records.size()) ==
        spec.trials - t.failed_trials);
  // records stay sorted and unique by trial_index
  for (size_t i = 1; i < t.records.size(); ++i)
    CHECK(t.records[i].trial_index > t.records[i - 1].trial_index);
  // and the surviving records equal a clean run's records at those indices
  const TrialSet clean =
      run_search([&](const QuantPlan& p) { return toy_loss(p, 2.0); }, sites,
                 spec, 2.0, 1);
  for (const TrialRecord& r : t.records)
    CHECK(r == clean.records[static_cast<size_t>(r.trial_index)]);
}

TEST_CASE("pervasive failures abort the run") {
  const auto sites = equal_sites(10, 100);
  const auto broken = [](const QuantPlan&) -> double {
    throw std::runtime_error("always");
  };
  CHECK_THROWS_AS(run_search(broken, sites, base_spec(), 2.0, 1), RunFailed);
  CHECK_THROWS_AS(run_search(broken, sites, base_spec(), 2.0, 4), RunFailed);
}

TEST_CASE("infeasible targets abort the run regardless of jobs") {
  const std::vector<std::pair<SiteId, int64_t>> sites = {
      {SiteId{0, MatmulName::q, Granularity::matmul}, 1},
      {SiteId{1, MatmulName::q, Granularity::matmul}, 1000000},
  };
  const auto ev = [](const QuantPlan&) { return 2.0; };
  CHECK_THROWS_AS(run_search(ev, sites, base_spec(), 2.0, 1),
                  RatioInfeasible);
  CHECK_THROWS_AS(run_search(ev, sites, base_spec(), 2.0, 4),
                  RatioInfeasible);
}
