// SPDX-License-Identifier: Apache-2.0
#include "quantlaw/laws.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "quantlaw/errors.hpp"

namespace quantlaw {

namespace {

void validate_point(const ExperimentPoint& pt) {
  if (!(pt.n_params > 0.0)) throw InvalidInput("n_params must be > 0");
  if (pt.q_r < 0.0 || pt.q_r > 1.0)
    throw InvalidInput("q_r must lie in [0, 1]");
  if (pt.q_b < 1) throw InvalidInput("q_b must be >= 1");
}

double require_tokens(const ExperimentPoint& pt) {
  if (!pt.d_tokens.has_value())
    throw InvalidInput("this law needs d_tokens on the experiment point");
  if (!(*pt.d_tokens > 0.0)) throw InvalidInput("d_tokens must be > 0");
  return *pt.d_tokens;
}

// Least squares min ||A x - y||, A row-major m x n, m >= n, via Householder
// QR. Overwrites its inputs; returns x and the residual sum of squares.
std::vector<double> least_squares(std::vector<double>& a, int64_t m,
                                  int64_t n, std::vector<double>& y,
                                  double* sse_out) {
  double max_colnorm = 0.0;
  for (int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += a[i * n + j] * a[i * n + j];
    max_colnorm = std::max(max_colnorm, std::sqrt(s));
  }
  std::vector<double> v(m);
  for (int64_t k = 0; k < n; ++k) {
    double sigma = 0.0;
    for (int64_t i = k; i < m; ++i) {
      v[i] = a[i * n + k];
      sigma += v[i] * v[i];
    }
    const double norm = std::sqrt(sigma);
    if (norm <= 1e-12 * max_colnorm)
      throw Underdetermined("design matrix is rank deficient (column " +
                            std::to_string(k) + ")");
    const double alpha = v[k] > 0.0 ? -norm : norm;
    v[k] -= alpha;
    double vtv = 0.0;
    for (int64_t i = k; i < m; ++i) vtv += v[i] * v[i];
    for (int64_t j = k; j < n; ++j) {
      double dot = 0.0;
      for (int64_t i = k; i < m; ++i) dot += v[i] * a[i * n + j];
      const double f = 2.0 * dot / vtv;
      for (int64_t i = k; i < m; ++i) a[i * n + j] -= f * v[i];
    }
    double dot_y = 0.0;
    for (int64_t i = k; i < m; ++i) dot_y += v[i] * y[i];
    const double fy = 2.0 * dot_y / vtv;
    for (int64_t i = k; i < m; ++i) y[i] -= fy * v[i];
  }
  std::vector<double> x(n);
  for (int64_t i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int64_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  if (sse_out) {
    double sse = 0.0;
    for (int64_t i = n; i < m; ++i) sse += y[i] * y[i];
    *sse_out = sse;
  }
  return x;
}

struct Obs {
  double q_r;
  double ln_n;
  int64_t q_b;
  double ln_delta;
  double delta;
};

// OLS for a fixed d: columns [1, q_r, ln N (, ln(q_b + d))].
std::vector<double> solve_at(const std::vector<Obs>& obs, bool strong,
                             double d, double* sse) {
  const int64_t m = static_cast<int64_t>(obs.size());
  const int64_t n = strong ? 4 : 3;
  std::vector<double> a(m * n), y(m);
  for (int64_t i = 0; i < m; ++i) {
    a[i * n + 0] = 1.0;
    a[i * n + 1] = obs[i].q_r;
    a[i * n + 2] = obs[i].ln_n;
    if (strong) a[i * n + 3] = std::log(static_cast<double>(obs[i].q_b) + d);
    y[i] = obs[i].ln_delta;
  }
  return least_squares(a, m, n, y, sse);
}

double golden_min(double lo, double hi, auto&& f, int iters) {
  constexpr double kInvPhi = 0.6180339887498948482;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void ChinchillaParams::validate() const {
  if (alpha < 0.0 || beta < 0.0)
    throw InvalidConfig("alpha and beta must be >= 0");
}

void PrecisionLawParams::validate() const {
  if (!(gamma_post > 0.0)) throw InvalidConfig("gamma_post must be > 0");
  if (!(p_w > 0.0) || !(p_a > 0.0) || !(p_kv > 0.0) || !(p_post > 0.0))
    throw InvalidConfig("bit-widths must be > 0");
}

std::string_view law_form_name(LawForm f) {
  return f == LawForm::weak ? "weak" : "strong";
}

LawForm parse_law_form(std::string_view name) {
  if (name == "weak") return LawForm::weak;
  if (name == "strong") return LawForm::strong;
  throw InvalidInput("law form must be 'weak' or 'strong', got '" +
                     std::string(name) + "'");
}

std::string_view law_target_name(LawTarget t) {
  return t == LawTarget::opt ? "opt" : "mean";
}

LawTarget parse_law_target(std::string_view name) {
  if (name == "opt") return LawTarget::opt;
  if (name == "mean") return LawTarget::mean;
  throw InvalidInput("law target must be 'opt' or 'mean', got '" +
                     std::string(name) + "'");
}

double eval_chinchilla(const ChinchillaParams& p, const ExperimentPoint& pt) {
  p.validate();
  validate_point(pt);
  const double d = require_tokens(pt);
  return p.a * std::pow(pt.n_params, -p.alpha) +
         p.b * std::pow(d, -p.beta) + p.e_irreducible;
}

double eval_precision_law(const PrecisionLawParams& p,
                          const ExperimentPoint& pt) {
  p.validate();
  validate_point(pt);
  const double d = require_tokens(pt);
  const double size_term = std::pow(d, p.gamma_d) /
                           std::pow(pt.n_params, p.gamma_n);
  const double post_term = std::exp(-p.p_post / p.gamma_post);
  double brackets = 1.0;
  const double cx[3] = {p.c_w, p.c_a, p.c_kv};
  const double px[3] = {p.p_w, p.p_a, p.p_kv};
  for (int i = 0; i < 3; ++i)
    brackets *= 1.0 - std::exp(-cx[i] * (px[i] - p.p_post));
  return p.c_t * post_term * size_term * brackets;
}

double eval_law(const LawParams& p, const ExperimentPoint& pt) {
  validate_point(pt);
  double v = p.c * std::exp(p.a_ratio * pt.q_r) *
             std::pow(pt.n_params, -p.gamma_n);
  if (p.form == LawForm::strong) {
    const double base = static_cast<double>(pt.q_b) + p.d_shift;
    if (!(base > 0.0))
      throw DomainError("q_b + d_shift must be > 0, got " +
                        std::to_string(base));
    v *= std::pow(base, p.gamma_c);
  }
  return v;
}

FitResult fit_law(const std::vector<std::pair<ExperimentPoint, double>>& data,
                  LawForm form, LawTarget target) {
  std::vector<Obs> obs;
  obs.reserve(data.size());
  int64_t dropped = 0;
  for (const auto& [pt, delta] : data) {
    validate_point(pt);
    if (!(delta > 0.0)) {
      ++dropped;
      continue;
    }
    obs.push_back({pt.q_r, std::log(pt.n_params), pt.q_b, std::log(delta),
                   delta});
  }
  if (obs.empty())
    throw NoFittableData("all " + std::to_string(dropped) +
                         " deltas are nonpositive");
  const bool strong = form == LawForm::strong;
  const size_t min_points = strong ? 6 : 4;
  if (obs.size() < min_points)
    throw Underdetermined("need at least " + std::to_string(min_points) +
                          " positive points, have " +
                          std::to_string(obs.size()));
  std::set<double> qr_vals, n_vals;
  std::set<int64_t> qb_vals;
  for (const Obs& o : obs) {
    qr_vals.insert(o.q_r);
    n_vals.insert(o.ln_n);
    qb_vals.insert(o.q_b);
  }
  if (qr_vals.size() < 2 || n_vals.size() < 2 ||
      (strong && qb_vals.size() < 2))
    throw Underdetermined("every fitted axis needs at least two distinct "
                          "values");

  FitResult res;
  res.params.form = form;
  res.params.target = target;
  res.n_points = static_cast<int64_t>(obs.size());
  res.n_dropped_nonpositive = dropped;

  std::vector<double> beta;
  if (strong) {
    const int64_t min_qb = *qb_vals.begin();
    const double d_lo = -static_cast<double>(min_qb) + 1e-3;
    const double d_hi = 1024.0;
    auto sse_at = [&](double d) {
      double sse = 0.0;
      solve_at(obs, true, d, &sse);
      return sse;
    };
    // coarse bracket first: the profiled objective is smooth but need not
    // be unimodal over four decades of d
    constexpr int kScan = 128;
    double best_d = d_hi, best_sse = sse_at(d_hi);
    for (int i = 0; i < kScan; ++i) {
      const double d =
          d_lo + (d_hi - d_lo) * (static_cast<double>(i) + 0.5) / kScan;
      const double s = sse_at(d);
      if (s < best_sse) {
        best_sse = s;
        best_d = d;
      }
    }
    const double step = (d_hi - d_lo) / kScan;
    const double lo = std::max(d_lo, best_d - step);
    const double hi = std::min(d_hi, best_d + step);
    const double d_star = golden_min(lo, hi, sse_at, 90);
    res.params.d_shift = d_star;
    beta = solve_at(obs, true, d_star, nullptr);
    res.params.gamma_c = beta[3];
  } else {
    beta = solve_at(obs, false, 0.0, nullptr);
  }
  res.params.c = std::exp(beta[0]);
  res.params.a_ratio = beta[1];
  res.params.gamma_n = -beta[2];

  // goodness of fit over the kept points, in both spaces
  double mean_log = 0.0, mean_lin = 0.0;
  for (const Obs& o : obs) {
    mean_log += o.ln_delta;
    mean_lin += o.delta;
  }
  mean_log /= static_cast<double>(obs.size());
  mean_lin /= static_cast<double>(obs.size());
  double sse_log = 0.0, sst_log = 0.0, sse_lin = 0.0, sst_lin = 0.0;
  for (const Obs& o : obs) {
    double pred_log = beta[0] + beta[1] * o.q_r + beta[2] * o.ln_n;
    if (strong)
      pred_log +=
          beta[3] * std::log(static_cast<double>(o.q_b) + res.params.d_shift);
    const double r = o.ln_delta - pred_log;
    sse_log += r * r;
    sst_log += (o.ln_delta - mean_log) * (o.ln_delta - mean_log);
    const double rl = o.delta - std::exp(pred_log);
    sse_lin += rl * rl;
    sst_lin += (o.delta - mean_lin) * (o.delta - mean_lin);
    res.residual_summary.max_abs_log =
        std::max(res.residual_summary.max_abs_log, std::fabs(r));
  }
  res.residual_summary.rms_log =
      std::sqrt(sse_log / static_cast<double>(obs.size()));
  res.r2_log = sst_log > 0.0 ? 1.0 - sse_log / sst_log
                             : (sse_log == 0.0 ? 1.0 : 0.0);
  res.r2_linear = sst_lin > 0.0 ? 1.0 - sse_lin / sst_lin
                                : (sse_lin == 0.0 ? 1.0 : 0.0);
  return res;
}

CompensationLine compensation_line(const LawParams& p, double budget_l) {
  if (p.form != LawForm::weak)
    throw InvalidInput("compensation line is defined for the weak form");
  if (!(budget_l > 0.0)) throw InvalidInput("loss budget must be > 0");
  if (p.gamma_n == 0.0)
    throw DomainError("gamma_n = 0 admits no compensation rate");
  CompensationLine line;
  line.budget_l = budget_l;
  line.a2 = p.a_ratio / p.gamma_n;
  line.c2 = (std::log(p.c) - std::log(budget_l)) / p.gamma_n;
  return line;
}

double max_ratio(const LawParams& p, double n_params, int64_t q_b,
                 double budget_l) {
  if (!(budget_l > 0.0)) throw InvalidInput("loss budget must be > 0");
  ExperimentPoint pt{n_params, std::nullopt, 0.0, q_b};
  const double at_zero = eval_law(p, pt);  // c * N^-g * (qb+d)^gc
  if (p.a_ratio == 0.0) return at_zero <= budget_l ? 1.0 : 0.0;
  // solve e^(a_ratio * qr) = budget / at_zero
  const double qr = std::log(budget_l / at_zero) / p.a_ratio;
  if (p.a_ratio > 0.0) return std::clamp(qr, 0.0, 1.0);
  // decreasing in q_r: budget holds for every q_r >= qr
  return qr <= 1.0 ? 1.0 : 0.0;
}

double min_model_size(const LawParams& p, double q_r, int64_t q_b,
                      double budget_l) {
  if (!(budget_l > 0.0)) throw InvalidInput("loss budget must be > 0");
  if (!(p.gamma_n > 0.0))
    throw DomainError("inverting in N requires gamma_n > 0");
  ExperimentPoint pt{1.0, std::nullopt, q_r, q_b};
  const double at_unit_n = eval_law(p, pt);  // value at N = 1
  return std::pow(at_unit_n / budget_l, 1.0 / p.gamma_n);
}

double combined_loss(const ChinchillaParams& ch, const LawParams& p,
                     const ExperimentPoint& pt) {
  return eval_chinchilla(ch, pt) + eval_law(p, pt);
}

}  // namespace quantlaw
