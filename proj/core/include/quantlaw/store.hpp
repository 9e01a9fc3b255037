// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "quantlaw/laws.hpp"
#include "quantlaw/search.hpp"

namespace quantlaw {

// Trial logs are JSON-Lines: one header object (type = "run") followed by
// its trial objects (type = "trial"), append-only. Unknown fields on either
// line survive a read/write cycle.

void append_run(const std::string& path, const TrialSet& set);

// Parses a whole log. Malformed lines raise ParseError carrying the
// 1-based line number; an unsupported schema_version raises SchemaError.
std::vector<TrialSet> read_runs(const std::string& path);

struct ContourRow {
  double n_params = 0.0;
  double q_r = 0.0;
  int64_t q_b = 0;
  double delta_opt = 0.0;
  double delta_mu = 0.0;
  int64_t n_trials = 0;
};

// Rows sorted lexicographically by (n_params, q_r, q_b).
struct ContourTable {
  std::vector<ContourRow> rows;
};

// Group runs by (n_params, qr_target, qb) and pool their records. Pooling
// demands identical model and token digests per key — deltas are only
// comparable against one baseline — else ConflictError.
ContourTable build_contour(const std::vector<TrialSet>& runs);

// Header `n_params,q_r,q_b,delta_opt,delta_mu,n_trials`, 9 significant
// digits, LF line endings.
void export_csv(const ContourTable& table, const std::string& path);

// Fit documents: a JSON object carrying the law form/target, the N-units
// tag, the coefficients, and the fit statistics.
void save_fit(const FitResult& fit, const std::string& path);
FitResult load_fit(const std::string& path);

// Reads coefficients from either a fit document or a bare params object
// ({"form": ..., "c": ..., "a_ratio": ..., ...}).
LawParams load_law_params(const std::string& path);

}  // namespace quantlaw
