// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "quantlaw/errors.hpp"
#include "quantlaw/oracle.hpp"

using namespace quantlaw;

namespace {

LawParams weak_ref() {
  LawParams p;
  p.c = 0.2187;
  p.a_ratio = 2.2312;
  p.gamma_n = 0.8405;
  return p;
}

std::vector<ExperimentPoint> small_grid() {
  std::vector<ExperimentPoint> grid;
  for (double n : {0.06, 0.2, 0.6})
    for (double qr : {0.25, 0.5, 0.75})
      grid.push_back({n, std::nullopt, qr, 32});
  return grid;
}

}  // namespace

TEST_CASE("discrete distributions validate and summarize") {
  const DiscreteDelta d = DiscreteDelta::uniform({0.1, 0.2, 0.3});
  CHECK(d.mean() == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(d.stddev() == doctest::Approx(std::sqrt(0.02 / 3.0)).epsilon(1e-12));

  DiscreteDelta bad;
  bad.support = {0.2, 0.1};
  bad.probs = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);  // not increasing
  bad.support = {0.1, 0.2};
  bad.probs = {0.6, 0.6};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);  // sums to 1.2
  bad.probs = {1.5, -0.5};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);  // negative mass
  bad.support = {};
  bad.probs = {};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("noiseless generation reproduces the law exactly") {
  const auto data = gen_dataset(weak_ref(), small_grid(), 0.0, 123);
  REQUIRE(data.size() == 9);
  for (const auto& [pt, delta] : data)
    CHECK(delta == eval_law(weak_ref(), pt));  // exact, sigma = 0
}

TEST_CASE("noisy generation is seeded and positive") {
  const auto a = gen_dataset(weak_ref(), small_grid(), 0.3, 7);
  const auto b = gen_dataset(weak_ref(), small_grid(), 0.3, 7);
  const auto c = gen_dataset(weak_ref(), small_grid(), 0.3, 8);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].second == b[i].second);
    CHECK(a[i].second > 0.0);  // log-normal noise keeps the domain
    any_diff |= a[i].second != c[i].second;
    // multiplicative noise: ratio to the clean value is the noise factor
    const double clean = eval_law(weak_ref(), a[i].first);
    CHECK(a[i].second / clean > 0.0);
  }
  CHECK(any_diff);
  CHECK_THROWS_AS(gen_dataset(weak_ref(), small_grid(), -0.1, 7),
                  InvalidInput);
}

TEST_CASE("estimator simulation: degenerate cases pin the semantics") {
  // single atom: every draw is 0.5, the min always hits
  const DiscreteDelta atom = DiscreteDelta::uniform({0.5});
  const EstimatorReport r = estimator_sim(atom, 10, 100, 1);
  CHECK(r.mean_of_means == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.mean_of_mins == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.prob_min_hit == 1.0);

  // n = 1: the min of one draw is that draw
  const DiscreteDelta d = DiscreteDelta::uniform({0.1, 0.2, 0.3});
  const EstimatorReport one = estimator_sim(d, 1, 4000, 2);
  CHECK(one.mean_of_means == doctest::Approx(one.mean_of_mins).epsilon(1e-15));

  CHECK_THROWS_AS(estimator_sim(d, 0, 10, 1), InvalidInput);
  CHECK_THROWS_AS(estimator_sim(d, 10, 0, 1), InvalidInput);
}

TEST_CASE("estimator simulation is reproducible and statistically sane") {
  const DiscreteDelta d = DiscreteDelta::uniform({0.1, 0.2, 0.3});
  const EstimatorReport a = estimator_sim(d, 100, 2000, 7);
  const EstimatorReport b = estimator_sim(d, 100, 2000, 7);
  CHECK(a.mean_of_means == b.mean_of_means);
  CHECK(a.mean_of_mins == b.mean_of_mins);
  CHECK(a.prob_min_hit == b.prob_min_hit);

  // the mean estimator is unbiased: 5-sigma band around 0.2
  const double se = d.stddev() / std::sqrt(100.0 * 2000.0);
  CHECK(std::fabs(a.mean_of_means - 0.2) < 5.0 * se);
  // the min estimator is biased upward but tiny at n = 100
  CHECK(a.mean_of_mins >= 0.1);
  CHECK(a.mean_of_mins < 0.105);
  // nearly every repetition sees at least one 0.1
  CHECK(a.prob_min_hit > 0.99);
}

TEST_CASE("closed-form hit probability") {
  const DiscreteDelta d = DiscreteDelta::uniform({0.1, 0.2, 0.3});
  CHECK(prob_min_hit_exact(d, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(prob_min_hit_exact(d, 100) ==
        doctest::Approx(1.0 - std::pow(2.0 / 3.0, 100.0)).epsilon(1e-12));
  CHECK(prob_min_hit_exact(DiscreteDelta::uniform({0.4}), 5) == 1.0);
  CHECK_THROWS_AS(prob_min_hit_exact(d, 0), InvalidInput);
}

TEST_CASE("synthetic datasets package as single-record runs") {
  const auto data = gen_dataset(weak_ref(), small_grid(), 0.1, 5);
  const std::vector<TrialSet> runs = package_synthetic(data, 99);
  REQUIRE(runs.size() == data.size());
  for (size_t i = 0; i < runs.size(); ++i) {
    const TrialSet& r = runs[i];
    CHECK(r.source == "synthetic");
    CHECK(r.n_params == data[i].first.n_params);
    CHECK(r.spec.qr_target == data[i].first.q_r);
    CHECK(r.spec.qb == data[i].first.q_b);
    CHECK(r.spec.method.block_size == r.spec.qb);
    CHECK(r.baseline_loss == 0.0);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].delta == data[i].second);
    CHECK(r.records[0].loss == data[i].second);
    CHECK(r.records[0].qr_achieved == data[i].first.q_r);
    CHECK_NOTHROW(r.spec.validate());
  }
  // distinct runs get distinct ids; the whole packaging is seed-stable
  CHECK(runs[0].run_id != runs[1].run_id);
  CHECK(package_synthetic(data, 99)[0].run_id == runs[0].run_id);
  CHECK(package_synthetic(data, 100)[0].run_id != runs[0].run_id);

  // a grid block size the kernels cannot express is rejected
  auto off_grid = data;
  off_grid[0].first.q_b = 48;
  CHECK_THROWS_AS(package_synthetic(off_grid, 99), InvalidInput);
}

TEST_CASE("packaged synthetics round-trip through the fitter") {
  const LawParams truth = weak_ref();
  std::vector<ExperimentPoint> grid;
  for (double n : {0.06, 0.2, 0.6, 1.1})
    for (double qr : {0.2, 0.4, 0.6, 0.8})
      grid.push_back({n, std::nullopt, qr, 32});
  const auto data = gen_dataset(truth, grid, 0.0, 11);
  const std::vector<TrialSet> runs = package_synthetic(data, 3);

  // re-extract (point, delta) pairs the way a fit pipeline would
  std::vector<std::pair<ExperimentPoint, double>> extracted;
  for (const TrialSet& r : runs)
    extracted.push_back({{r.n_params, std::nullopt, r.spec.qr_target,
                          r.spec.qb},
                         r.records[0].delta});
  const FitResult fit = fit_law(extracted, LawForm::weak);
  CHECK(fit.params.c == doctest::Approx(truth.c).epsilon(1e-9));
  CHECK(fit.params.a_ratio == doctest::Approx(truth.a_ratio).epsilon(1e-9));
  CHECK(fit.params.gamma_n == doctest::Approx(truth.gamma_n).epsilon(1e-9));
}
