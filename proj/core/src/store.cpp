// SPDX-License-Identifier: Apache-2.0
#include "quantlaw/store.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include "json.hpp"
#include "quantlaw/errors.hpp"

namespace quantlaw {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int64_t kSchemaVersion = 1;

// Pull a typed field out of the object so whatever remains afterwards is
// the unknown-field remainder to be preserved verbatim.
template <typename T>
T take(ordered_json& j, const char* key, long line) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError("missing field '" + std::string(key) + "'", line);
  T v;
  try {
    v = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("field '" + std::string(key) + "': " + e.what(), line);
  }
  j.erase(it);
  return v;
}

void merge_extra(ordered_json& j, const std::string& extra, long line) {
  if (extra.empty()) return;
  ordered_json e;
  try {
    e = ordered_json::parse(extra);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("stored extra fields unparsable: ") +
                         ex.what(),
                     line);
  }
  for (auto& [k, v] : e.items()) j[k] = v;
}

ordered_json header_json(const TrialSet& set) {
  ordered_json j;
  j["type"] = "run";
  j["schema_version"] = kSchemaVersion;
  j["run_id"] = set.run_id;
  j["model_digest"] = set.model_digest;
  j["token_digest"] = set.token_digest;
  j["n_params"] = set.n_params;
  j["method"] = set.spec.method.to_string();
  j["granularity"] = std::string(granularity_name(set.spec.granularity));
  j["qr_target"] = set.spec.qr_target;
  j["qb"] = set.spec.qb;
  j["weight_and_activation"] = set.spec.weight_and_activation;
  j["trials"] = set.spec.trials;
  j["seed"] = set.spec.seed;
  j["ratio_tolerance"] = set.spec.ratio_tolerance;
  j["baseline_loss"] = set.baseline_loss;
  j["failed_trials"] = set.failed_trials;
  j["source"] = set.source;
  merge_extra(j, set.header_extra_json, 0);
  return j;
}

ordered_json trial_json(const TrialSet& set, const TrialRecord& rec) {
  ordered_json j;
  j["type"] = "trial";
  j["run_id"] = set.run_id;
  j["model_digest"] = set.model_digest;
  j["method"] = set.spec.method.to_string();
  j["granularity"] = std::string(granularity_name(set.spec.granularity));
  j["qr_target"] = set.spec.qr_target;
  j["qr_achieved"] = rec.qr_achieved;
  j["qb"] = set.spec.qb;
  j["trial_index"] = rec.trial_index;
  j["seed"] = rec.seed;
  j["plan_digest"] = rec.plan_digest;
  j["loss"] = rec.loss;
  j["delta"] = rec.delta;
  j["source"] = set.source;
  merge_extra(j, rec.extra_json, 0);
  return j;
}

TrialSet parse_header(ordered_json j, long line) {
  TrialSet set;
  if (take<int64_t>(j, "schema_version", line) != kSchemaVersion)
    throw SchemaError("unsupported log schema version (line " +
                      std::to_string(line) + ")");
  set.run_id = take<std::string>(j, "run_id", line);
  set.model_digest = take<std::string>(j, "model_digest", line);
  set.token_digest = take<std::string>(j, "token_digest", line);
  set.n_params = take<double>(j, "n_params", line);
  try {
    set.spec.method = BlockFormat::parse(take<std::string>(j, "method", line));
    set.spec.granularity =
        parse_granularity(take<std::string>(j, "granularity", line));
  } catch (const Error& e) {
    throw ParseError(e.what(), line);
  }
  set.spec.qr_target = take<double>(j, "qr_target", line);
  set.spec.qb = take<int>(j, "qb", line);
  set.spec.weight_and_activation = take<bool>(j, "weight_and_activation", line);
  set.spec.trials = take<int64_t>(j, "trials", line);
  set.spec.seed = take<uint64_t>(j, "seed", line);
  set.spec.ratio_tolerance = take<double>(j, "ratio_tolerance", line);
  set.baseline_loss = take<double>(j, "baseline_loss", line);
  set.failed_trials = take<int64_t>(j, "failed_trials", line);
  set.source = take<std::string>(j, "source", line);
  if (!j.empty()) set.header_extra_json = j.dump();
  return set;
}

TrialRecord parse_trial(ordered_json j, const TrialSet& owner, long line) {
  TrialRecord rec;
  if (take<std::string>(j, "run_id", line) != owner.run_id)
    throw ParseError("trial run_id does not match its run header", line);
  // run-level echoes: consumed so only genuinely unknown fields remain
  take<std::string>(j, "model_digest", line);
  take<std::string>(j, "method", line);
  take<std::string>(j, "granularity", line);
  take<double>(j, "qr_target", line);
  rec.qr_achieved = take<double>(j, "qr_achieved", line);
  take<int64_t>(j, "qb", line);
  rec.trial_index = take<int64_t>(j, "trial_index", line);
  rec.seed = take<uint64_t>(j, "seed", line);
  rec.plan_digest = take<std::string>(j, "plan_digest", line);
  rec.loss = take<double>(j, "loss", line);
  rec.delta = take<double>(j, "delta", line);
  take<std::string>(j, "source", line);
  if (!j.empty()) rec.extra_json = j.dump();
  return rec;
}

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void append_run(const std::string& path, const TrialSet& set) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for appending");
  out << header_json(set).dump() << '\n';
  for (const TrialRecord& rec : set.records)
    out << trial_json(set, rec).dump() << '\n';
  if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<TrialSet> read_runs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<TrialSet> runs;
  std::string line;
  long line_no = 0;
  int64_t last_trial_index = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty())
      throw ParseError("blank line in trial log", line_no);
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("unparsable record: ") + e.what(),
                       line_no);
    }
    if (!j.is_object())
      throw ParseError("record is not a JSON object", line_no);
    const std::string type = take<std::string>(j, "type", line_no);
    if (type == "run") {
      runs.push_back(parse_header(std::move(j), line_no));
      last_trial_index = -1;
    } else if (type == "trial") {
      if (runs.empty())
        throw ParseError("trial record before any run header", line_no);
      TrialRecord rec = parse_trial(std::move(j), runs.back(), line_no);
      if (rec.trial_index <= last_trial_index)
        throw ParseError("trial_index not strictly increasing", line_no);
      last_trial_index = rec.trial_index;
      runs.back().records.push_back(std::move(rec));
    } else {
      throw ParseError("unknown record type '" + type + "'", line_no);
    }
  }
  return runs;
}

ContourTable build_contour(const std::vector<TrialSet>& runs) {
  struct Group {
    const TrialSet* first;
    std::vector<double> deltas;
  };
  std::map<std::tuple<double, double, int64_t>, Group> groups;
  for (const TrialSet& run : runs) {
    const auto key = std::make_tuple(run.n_params, run.spec.qr_target,
                                     static_cast<int64_t>(run.spec.qb));
    auto [it, inserted] = groups.try_emplace(key, Group{&run, {}});
    if (!inserted) {
      const TrialSet& ref = *it->second.first;
      if (ref.model_digest != run.model_digest ||
          ref.token_digest != run.token_digest)
        throw ConflictError(
            "runs pooled at (n_params=" + format_g9(run.n_params) +
            ", q_r=" + format_g9(run.spec.qr_target) +
            ", q_b=" + std::to_string(run.spec.qb) +
            ") disagree on model or token digest");
    }
    for (const TrialRecord& rec : run.records)
      it->second.deltas.push_back(rec.delta);
  }

  ContourTable table;
  table.rows.reserve(groups.size());
  for (auto& [key, group] : groups) {
    if (group.deltas.empty()) continue;
    // Fixed summation order keeps the mean invariant to run file order.
    std::sort(group.deltas.begin(), group.deltas.end());
    ContourRow row;
    std::tie(row.n_params, row.q_r, row.q_b) = key;
    row.n_trials = static_cast<int64_t>(group.deltas.size());
    row.delta_opt = group.deltas.front();
    double sum = 0.0;
    for (double d : group.deltas) sum += d;
    row.delta_mu = sum / static_cast<double>(row.n_trials);
    table.rows.push_back(row);
  }
  return table;
}

void export_csv(const ContourTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "n_params,q_r,q_b,delta_opt,delta_mu,n_trials\n";
  for (const ContourRow& row : table.rows) {
    out << format_g9(row.n_params) << ',' << format_g9(row.q_r) << ','
        << row.q_b << ',' << format_g9(row.delta_opt) << ','
        << format_g9(row.delta_mu) << ',' << row.n_trials << '\n';
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

void save_fit(const FitResult& fit, const std::string& path) {
  ordered_json j;
  j["type"] = "fit";
  j["form"] = std::string(law_form_name(fit.params.form));
  j["target"] = std::string(law_target_name(fit.params.target));
  j["units"] = {{"n_params", "billions-non-embedding"}};
  ordered_json params;
  params["c"] = fit.params.c;
  params["a_ratio"] = fit.params.a_ratio;
  params["gamma_n"] = fit.params.gamma_n;
  if (fit.params.form == LawForm::strong) {
    params["d_shift"] = fit.params.d_shift;
    params["gamma_c"] = fit.params.gamma_c;
  }
  j["params"] = std::move(params);
  j["r2_log"] = fit.r2_log;
  j["r2_linear"] = fit.r2_linear;
  j["n_points"] = fit.n_points;
  j["n_dropped_nonpositive"] = fit.n_dropped_nonpositive;
  j["residuals"] = {{"rms_log", fit.residual_summary.rms_log},
                    {"max_abs_log", fit.residual_summary.max_abs_log}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to '" + path + "'");
}

namespace {

LawParams params_from_json(const ordered_json& doc) {
  LawParams p;
  const ordered_json& src = doc.contains("params") ? doc.at("params") : doc;
  try {
    p.form = parse_law_form(doc.at("form").get<std::string>());
    if (doc.contains("target"))
      p.target = parse_law_target(doc.at("target").get<std::string>());
    p.c = src.at("c").get<double>();
    p.a_ratio = src.at("a_ratio").get<double>();
    p.gamma_n = src.at("gamma_n").get<double>();
    if (p.form == LawForm::strong) {
      p.d_shift = src.at("d_shift").get<double>();
      p.gamma_c = src.at("gamma_c").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("law params document: ") + e.what());
  }
  return p;
}

ordered_json load_json_doc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path + "': " + e.what(), 0);
  }
}

}  // namespace

FitResult load_fit(const std::string& path) {
  const ordered_json j = load_json_doc(path);
  if (!j.is_object() || j.value("type", "") != "fit")
    throw SchemaError("'" + path + "' is not a fit document");
  FitResult fit;
  fit.params = params_from_json(j);
  try {
    fit.r2_log = j.at("r2_log").get<double>();
    fit.r2_linear = j.at("r2_linear").get<double>();
    fit.n_points = j.at("n_points").get<int64_t>();
    fit.n_dropped_nonpositive = j.at("n_dropped_nonpositive").get<int64_t>();
    fit.residual_summary.rms_log =
        j.at("residuals").at("rms_log").get<double>();
    fit.residual_summary.max_abs_log =
        j.at("residuals").at("max_abs_log").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("fit document '" + path + "': " + e.what());
  }
  return fit;
}

LawParams load_law_params(const std::string& path) {
  const ordered_json j = load_json_doc(path);
  if (!j.is_object())
    throw SchemaError("'" + path + "' is not a JSON object");
  return params_from_json(j);
}

}  // namespace quantlaw
