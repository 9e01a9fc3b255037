// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace quantlaw {

// loss = a * N^(-alpha) + b * D^(-beta) + e_irreducible
struct ChinchillaParams {
  double a = 0.0;
  double b = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double e_irreducible = 0.0;

  void validate() const;  // alpha, beta >= 0
};

// Prior post-training-quantization law, kept as a reference evaluator:
// c_t * e^(-p_post/gamma_post) * D^gamma_d / N^gamma_n
//     * prod over x in {w, a, kv} of [1 - e^(-c_x (p_x - p_post))].
struct PrecisionLawParams {
  double c_t = 0.0;
  double gamma_post = 1.0;
  double gamma_d = 0.0;
  double gamma_n = 0.0;
  double c_w = 0.0, c_a = 0.0, c_kv = 0.0;
  double p_w = 16.0, p_a = 16.0, p_kv = 16.0;  // training bit-widths
  double p_post = 4.0;

  void validate() const;  // gamma_post > 0; bit-widths > 0
};

enum class LawForm : uint8_t { weak, strong };
// Which degeneration statistic the coefficients describe: the per-run
// minimum or the per-run mean.
enum class LawTarget : uint8_t { opt, mean };

std::string_view law_form_name(LawForm f);
LawForm parse_law_form(std::string_view name);
std::string_view law_target_name(LawTarget t);
LawTarget parse_law_target(std::string_view name);

// weak:   delta = c * e^(a_ratio * Q_r) * N^(-gamma_n)
// strong: delta = c * e^(a_ratio * Q_r) * N^(-gamma_n) * (Q_b + d_shift)^gamma_c
struct LawParams {
  double c = 1.0;
  double a_ratio = 0.0;
  double gamma_n = 0.0;
  double d_shift = 0.0;  // strong only
  double gamma_c = 0.0;  // strong only
  LawForm form = LawForm::weak;
  LawTarget target = LawTarget::opt;
};

// Independent variables at which laws are evaluated or fitted. n_params is
// in billions of non-embedding parameters (the units are recorded in fit
// metadata; rescaling them moves only the fitted c).
struct ExperimentPoint {
  double n_params = 1.0;
  std::optional<double> d_tokens;
  double q_r = 0.0;
  int64_t q_b = 32;
};

struct ResidualSummary {
  double rms_log = 0.0;
  double max_abs_log = 0.0;
};

struct FitResult {
  LawParams params;
  double r2_log = 0.0;
  double r2_linear = 0.0;
  int64_t n_points = 0;
  int64_t n_dropped_nonpositive = 0;
  ResidualSummary residual_summary;
};

// Compensation rate at a fixed loss budget l: along
// Q_r = a2 * ln N + c2 the weak law stays exactly at l.
struct CompensationLine {
  double a2 = 0.0;
  double c2 = 0.0;
  double budget_l = 0.0;
};

double eval_chinchilla(const ChinchillaParams& p, const ExperimentPoint& pt);
double eval_precision_law(const PrecisionLawParams& p,
                          const ExperimentPoint& pt);
// Throws DomainError when a strong law sees q_b + d_shift <= 0.
double eval_law(const LawParams& p, const ExperimentPoint& pt);

// Log-space least squares: minimize the sum of squared
// ln(delta) - [ln c + a_ratio*Q_r - gamma_n*ln N + gamma_c*ln(Q_b + d)]
// residuals. Linear in everything but d, so: ordinary least squares via
// Householder QR, wrapped (strong form only) in a bracketed golden-section
// search over d in (-min(Q_b) + 1e-3, 1024]. Nonpositive deltas are dropped
// and counted. Throws NoFittableData when nothing positive remains and
// Underdetermined when an axis is constant or points are too few.
FitResult fit_law(const std::vector<std::pair<ExperimentPoint, double>>& data,
                  LawForm form, LawTarget target = LawTarget::opt);

// a2 = a_ratio / gamma_n, c2 = (ln c - ln l) / gamma_n (natural logs).
CompensationLine compensation_line(const LawParams& p, double budget_l);

// Largest Q_r in [0, 1] whose predicted degeneration stays within budget_l;
// closed-form inversion of the exponential, clamped to [0, 1].
double max_ratio(const LawParams& p, double n_params, int64_t q_b,
                 double budget_l);

// Smallest N (same units as fitting) meeting budget_l at fixed (Q_r, Q_b);
// requires gamma_n > 0.
double min_model_size(const LawParams& p, double q_r, int64_t q_b,
                      double budget_l);

// eval_chinchilla + eval_law: total loss of a quantized model.
double combined_loss(const ChinchillaParams& ch, const LawParams& p,
                     const ExperimentPoint& pt);

}  // namespace quantlaw
