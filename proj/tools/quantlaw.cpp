// SPDX-License-Identifier: Apache-2.0
//
// quantlaw: emulate mixed-precision quantization of micro causal LMs, run
// random plan searches, and fit/invert the degeneration scaling laws.

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "quantlaw/digest.hpp"
#include "quantlaw/errors.hpp"
#include "quantlaw/laws.hpp"
#include "quantlaw/model.hpp"
#include "quantlaw/oracle.hpp"
#include "quantlaw/search.hpp"
#include "quantlaw/store.hpp"

namespace ql = quantlaw;

namespace {

enum class LogLevel : int { debug = 0, info, warn, error };
LogLevel g_log_level = LogLevel::warn;

LogLevel parse_log_level(const std::string& name) {
  if (name == "debug") return LogLevel::debug;
  if (name == "info") return LogLevel::info;
  if (name == "warn") return LogLevel::warn;
  if (name == "error") return LogLevel::error;
  throw ql::InvalidInput("log level must be debug|info|warn|error, got '" +
                         name + "'");
}

void log_msg(LogLevel lvl, const std::string& msg) {
  static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
  if (static_cast<int>(lvl) >= static_cast<int>(g_log_level))
    std::cerr << "[quantlaw:" << kNames[static_cast<int>(lvl)] << "] " << msg
              << '\n';
}

std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<double> parse_double_list(const std::string& csv,
                                      const char* what) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    const size_t comma = csv.find(',', pos);
    const std::string item =
        csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ql::InvalidInput("bad " + std::string(what) + " value '" + item +
                             "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ql::InvalidInput(std::string(what) + " list is empty");
  return out;
}

// ---------------------------------------------------------------- gen-tokens
struct GenTokensOpts {
  int64_t vocab = 256;
  int64_t count = 4096;
  uint64_t seed = 0;
  std::string out;
};

void run_gen_tokens(const GenTokensOpts& o) {
  const std::vector<uint32_t> tokens =
      ql::gen_random_tokens(o.vocab, o.count, o.seed);
  ql::save_tokens(tokens, o.out);
  std::cout << "wrote " << tokens.size() << " tokens to " << o.out
            << " digest " << ql::to_hex16(ql::token_digest(tokens)) << '\n';
}

// ----------------------------------------------------------------- make-ckpt
struct MakeCkptOpts {
  std::string model = "clm-micro";
  uint64_t seed = 1;
  std::string out;
};

void run_make_ckpt(const MakeCkptOpts& o) {
  const ql::ModelConfig cfg = ql::parse_model_config(o.model);
  const ql::Checkpoint ckpt = ql::init_random(cfg, o.seed);
  ql::save_checkpoint(ckpt, o.out);
  std::cout << "wrote checkpoint to " << o.out << " digest "
            << ql::to_hex16(ckpt.payload_digest()) << " non-embedding params "
            << ql::non_embedding_params(cfg) << '\n';
}

// -------------------------------------------------------------------- search
struct SearchOpts {
  std::string model = "clm-micro";
  std::string ckpt_path;
  std::optional<uint64_t> init_seed;
  std::string tokens_path;
  std::string method = "mxint4:32";
  bool weight_only = false;
  std::string granularity = "matmul";
  std::string qr_list = "0.5";
  int qb = 32;
  int64_t trials = 100;
  uint64_t seed = 0;
  double ratio_tolerance = 0.02;
  std::string out;
  int jobs = 1;
  bool deterministic = false;
};

void run_search_cmd(const SearchOpts& o) {
  ql::Checkpoint ckpt;
  if (!o.ckpt_path.empty()) {
    ckpt = ql::load_checkpoint(o.ckpt_path);
  } else {
    const ql::ModelConfig cfg = ql::parse_model_config(o.model);
    ckpt = ql::init_random(cfg, *o.init_seed);
  }
  const std::vector<uint32_t> tokens = ql::load_tokens(o.tokens_path);
  const ql::BlockFormat method = ql::BlockFormat::parse(o.method);
  const ql::Granularity gran = ql::parse_granularity(o.granularity);
  const std::vector<double> qr_values = parse_double_list(o.qr_list, "--qr");

  const ql::PlanEvaluator evaluator(ckpt, tokens, method, !o.weight_only);
  const auto sites = ql::enumerate_sites(ckpt.config, gran);
  const std::string model_digest = ql::to_hex16(ckpt.payload_digest());
  const std::string tok_digest = ql::to_hex16(ql::token_digest(tokens));
  const double n_params =
      static_cast<double>(ql::non_embedding_params(ckpt.config)) / 1e9;

  std::cout << "baseline_loss " << fmt_g9(evaluator.baseline()) << '\n';
  for (const double qr : qr_values) {
    ql::SearchSpec spec;
    spec.qr_target = qr;
    spec.qb = o.qb;
    spec.granularity = gran;
    spec.method = method;
    spec.weight_and_activation = !o.weight_only;
    spec.trials = o.trials;
    // decorrelated across the qr list yet independent of list order
    spec.seed = ql::derive_seed(o.seed, std::bit_cast<uint64_t>(qr));
    spec.ratio_tolerance = o.ratio_tolerance;

    ql::TrialSet set = ql::run_search(
        [&evaluator](const ql::QuantPlan& p) { return evaluator.loss(p); },
        sites, spec, evaluator.baseline(), o.jobs);
    set.model_digest = model_digest;
    set.token_digest = tok_digest;
    set.n_params = n_params;
    set.source = "search";
    if (o.deterministic) {
      ql::Fnv1a64 h;
      h.update_string(model_digest);
      h.update_string(tok_digest);
      h.update_string(method.to_string());
      h.update_u64(std::bit_cast<uint64_t>(qr));
      h.update_u64(static_cast<uint64_t>(o.qb));
      h.update_u64(static_cast<uint64_t>(o.trials));
      h.update_u64(o.seed);
      set.run_id = "run-" + ql::to_hex16(h.value());
    } else {
      const auto now = std::chrono::system_clock::now().time_since_epoch();
      const auto ns =
          std::chrono::duration_cast<std::chrono::nanoseconds>(now).count();
      set.run_id = "run-" + ql::to_hex16(static_cast<uint64_t>(ns));
    }
    ql::append_run(o.out, set);
    const ql::Estimates est = ql::estimate(set);
    std::cout << "qr " << fmt_g9(qr) << " delta_opt " << fmt_g9(est.delta_opt)
              << " delta_mu " << fmt_g9(est.delta_mu) << " trials " << est.n
              << " failed " << set.failed_trials << '\n';
    log_msg(LogLevel::info, "appended run " + set.run_id + " to " + o.out);
  }
}

// ----------------------------------------------------------------------- fit
struct FitOpts {
  std::vector<std::string> inputs;
  std::string law = "weak";
  std::string target = "opt";
  std::string out;
};

void run_fit(const FitOpts& o) {
  const ql::LawForm form = ql::parse_law_form(o.law);
  const ql::LawTarget target = ql::parse_law_target(o.target);
  std::vector<std::pair<ql::ExperimentPoint, double>> points;
  for (const std::string& path : o.inputs) {
    for (const ql::TrialSet& run : ql::read_runs(path)) {
      if (run.records.empty()) {
        log_msg(LogLevel::warn, "run " + run.run_id + " has no records");
        continue;
      }
      const ql::Estimates est = ql::estimate(run);
      ql::ExperimentPoint pt;
      pt.n_params = run.n_params;
      pt.q_r = run.spec.qr_target;
      pt.q_b = run.spec.qb;
      points.emplace_back(pt, target == ql::LawTarget::opt ? est.delta_opt
                                                           : est.delta_mu);
    }
  }
  log_msg(LogLevel::info,
          "fitting " + std::to_string(points.size()) + " run estimates");
  const ql::FitResult fit = ql::fit_law(points, form, target);
  ql::save_fit(fit, o.out);
  std::cout << "c " << fmt_g9(fit.params.c) << " a_ratio "
            << fmt_g9(fit.params.a_ratio) << " gamma_n "
            << fmt_g9(fit.params.gamma_n);
  if (form == ql::LawForm::strong)
    std::cout << " d_shift " << fmt_g9(fit.params.d_shift) << " gamma_c "
              << fmt_g9(fit.params.gamma_c);
  std::cout << " r2_log " << fmt_g9(fit.r2_log) << " r2_linear "
            << fmt_g9(fit.r2_linear) << " points " << fit.n_points
            << " dropped " << fit.n_dropped_nonpositive << '\n';
}

// ------------------------------------------------------------------- predict
struct PredictOpts {
  std::string fit_path;
  double n = 1.0;
  double qr = 0.5;
  int64_t qb = 32;
  bool json = false;
};

void run_predict(const PredictOpts& o) {
  const ql::LawParams p = ql::load_law_params(o.fit_path);
  ql::ExperimentPoint pt;
  pt.n_params = o.n;
  pt.q_r = o.qr;
  pt.q_b = o.qb;
  const double delta = ql::eval_law(p, pt);
  if (o.json) {
    nlohmann::ordered_json j{{"n_params", o.n},
                             {"q_r", o.qr},
                             {"q_b", o.qb},
                             {"delta", delta}};
    std::cout << j.dump() << '\n';
  } else {
    std::cout << fmt_g9(delta) << '\n';
  }
}

// ---------------------------------------------------------------------- plan
struct PlanOpts {
  std::string fit_path;
  double budget = 0.1;
  std::optional<double> n;
  std::optional<double> qr;
  int64_t qb = 32;
  bool json = false;
};

void run_plan(const PlanOpts& o) {
  const ql::LawParams p = ql::load_law_params(o.fit_path);
  nlohmann::ordered_json j{{"budget", o.budget}, {"q_b", o.qb}};
  double value = 0.0;
  if (o.n.has_value()) {
    value = ql::max_ratio(p, *o.n, o.qb, o.budget);
    j["n_params"] = *o.n;
    j["max_q_r"] = value;
  } else {
    value = ql::min_model_size(p, *o.qr, o.qb, o.budget);
    j["q_r"] = *o.qr;
    j["min_n_params"] = value;
  }
  if (o.json)
    std::cout << j.dump() << '\n';
  else
    std::cout << fmt_g9(value) << '\n';
}

// --------------------------------------------------------------------- synth
struct SynthOpts {
  std::string params_path;
  std::string grid_path;
  double sigma = 0.0;
  uint64_t seed = 0;
  std::string out;
};

std::vector<ql::ExperimentPoint> load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ql::IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ql::ParseError("'" + path + "': " + e.what(), 0);
  }
  std::vector<double> ns, qrs;
  std::vector<int64_t> qbs;
  try {
    ns = j.at("n_params").get<std::vector<double>>();
    qrs = j.at("q_r").get<std::vector<double>>();
    qbs = j.at("q_b").get<std::vector<int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ql::SchemaError("grid file '" + path + "': " + e.what());
  }
  if (ns.empty() || qrs.empty() || qbs.empty())
    throw ql::InvalidInput("grid axes must be nonempty");
  std::vector<ql::ExperimentPoint> grid;
  grid.reserve(ns.size() * qrs.size() * qbs.size());
  for (double n : ns)
    for (double qr : qrs)
      for (int64_t qb : qbs) {
        ql::ExperimentPoint pt;
        pt.n_params = n;
        pt.q_r = qr;
        pt.q_b = qb;
        grid.push_back(pt);
      }
  return grid;
}

void run_synth(const SynthOpts& o) {
  const ql::LawParams p = ql::load_law_params(o.params_path);
  const std::vector<ql::ExperimentPoint> grid = load_grid(o.grid_path);
  const auto dataset = ql::gen_dataset(p, grid, o.sigma, o.seed);
  const std::vector<ql::TrialSet> runs = ql::package_synthetic(dataset, o.seed);
  for (const ql::TrialSet& run : runs) ql::append_run(o.out, run);
  std::cout << "wrote " << runs.size() << " synthetic runs to " << o.out
            << '\n';
}

// ------------------------------------------------------------ export-contour
struct ExportOpts {
  std::vector<std::string> inputs;
  std::string out;
};

void run_export_contour(const ExportOpts& o) {
  std::vector<ql::TrialSet> runs;
  for (const std::string& path : o.inputs)
    for (ql::TrialSet& run : ql::read_runs(path))
      runs.push_back(std::move(run));
  const ql::ContourTable table = ql::build_contour(runs);
  ql::export_csv(table, o.out);
  std::cout << "wrote " << table.rows.size() << " contour rows to " << o.out
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("QUANTLAW_LOG")) {
    try {
      g_log_level = parse_log_level(env);
    } catch (const ql::Error&) {
      std::cerr << "[quantlaw:warn] ignoring bad QUANTLAW_LOG value\n";
    }
  }

  CLI::App app{
      "Mixed-precision quantization emulation, random plan search, and "
      "degeneration scaling-law fitting for micro causal LMs"};
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log-level", log_level,
                 "debug|info|warn|error (overrides QUANTLAW_LOG)");

  GenTokensOpts gt;
  CLI::App* c_gt = app.add_subcommand("gen-tokens",
                                      "Write a random token stream");
  c_gt->add_option("--vocab", gt.vocab, "vocabulary size")->capture_default_str();
  c_gt->add_option("--count", gt.count, "number of tokens")->capture_default_str();
  c_gt->add_option("--seed", gt.seed, "generator seed")->capture_default_str();
  c_gt->add_option("--out", gt.out, "output token file")->required();

  MakeCkptOpts mc;
  CLI::App* c_mc = app.add_subcommand("make-ckpt",
                                      "Write a randomly initialized checkpoint");
  c_mc->add_option("--model", mc.model, "built-in name or config JSON path")
      ->capture_default_str();
  c_mc->add_option("--seed", mc.seed, "weight init seed")->capture_default_str();
  c_mc->add_option("--out", mc.out, "output checkpoint file")->required();

  SearchOpts so;
  CLI::App* c_se = app.add_subcommand(
      "search", "Random-search quantization plans at target ratios");
  c_se->add_option("--model", so.model, "built-in name or config JSON path")
      ->capture_default_str();
  CLI::Option* opt_ckpt =
      c_se->add_option("--ckpt", so.ckpt_path, "checkpoint file");
  CLI::Option* opt_init =
      c_se->add_option("--init-seed", so.init_seed,
                       "random-init seed (alternative to --ckpt)");
  opt_ckpt->excludes(opt_init);
  c_se->add_option("--tokens", so.tokens_path, "token file")->required();
  c_se->add_option("--method", so.method,
                   "format descriptor, e.g. mxint4:32 or affine8:64")
      ->capture_default_str();
  c_se->add_flag("--weight-only", so.weight_only,
                 "quantize weights only (default quantizes activations too)");
  c_se->add_flag("--wa", [](int64_t) {},
                 "weight-and-activation quantization (the default)");
  c_se->add_option("--granularity", so.granularity, "layer|matmul")
      ->capture_default_str();
  c_se->add_option("--qr", so.qr_list, "comma-separated target ratios")
      ->capture_default_str();
  c_se->add_option("--qb", so.qb, "block size (must match --method)")
      ->capture_default_str();
  c_se->add_option("--trials", so.trials, "trials per ratio")
      ->capture_default_str();
  c_se->add_option("--seed", so.seed, "search seed")->capture_default_str();
  c_se->add_option("--ratio-tolerance", so.ratio_tolerance,
                   "|achieved - target| bound")
      ->capture_default_str();
  c_se->add_option("--out", so.out, "trial log (JSONL, appended)")->required();
  c_se->add_option("--jobs", so.jobs, "parallel trial workers")
      ->capture_default_str();
  c_se->add_flag("--deterministic", so.deterministic,
                 "derive run ids from seeds instead of the clock");

  FitOpts fo;
  CLI::App* c_fit = app.add_subcommand("fit", "Fit a degeneration law to runs");
  c_fit->add_option("--in", fo.inputs, "trial logs")->required()->expected(-1);
  c_fit->add_option("--law", fo.law, "weak|strong")->capture_default_str();
  c_fit->add_option("--target", fo.target, "opt|mean")->capture_default_str();
  c_fit->add_option("--out", fo.out, "fit document (JSON)")->required();

  PredictOpts po;
  CLI::App* c_pr = app.add_subcommand("predict",
                                      "Evaluate a fitted law at a point");
  c_pr->add_option("--fit", po.fit_path, "fit document or params JSON")
      ->required();
  c_pr->add_option("--n", po.n, "model size (billions, non-embedding)")
      ->required();
  c_pr->add_option("--qr", po.qr, "quantization ratio")->required();
  c_pr->add_option("--qb", po.qb, "block size")->capture_default_str();
  c_pr->add_flag("--json", po.json, "machine-readable output");

  PlanOpts plo;
  CLI::App* c_pl = app.add_subcommand(
      "plan", "Invert a fitted law under a loss budget");
  c_pl->add_option("--fit", plo.fit_path, "fit document or params JSON")
      ->required();
  c_pl->add_option("--budget", plo.budget, "loss degeneration budget")
      ->required();
  CLI::Option* opt_n = c_pl->add_option(
      "--n", plo.n, "model size: solve for the largest feasible ratio");
  CLI::Option* opt_qr = c_pl->add_option(
      "--qr", plo.qr, "ratio: solve for the smallest feasible model size");
  opt_n->excludes(opt_qr);
  c_pl->add_option("--qb", plo.qb, "block size")->capture_default_str();
  c_pl->add_flag("--json", plo.json, "machine-readable output");

  SynthOpts syo;
  CLI::App* c_sy = app.add_subcommand(
      "synth", "Generate law-driven synthetic runs over a grid");
  c_sy->add_option("--params", syo.params_path, "law params JSON")->required();
  c_sy->add_option("--grid", syo.grid_path,
                   "grid JSON with n_params/q_r/q_b arrays")
      ->required();
  c_sy->add_option("--sigma", syo.sigma, "log-normal noise level")
      ->capture_default_str();
  c_sy->add_option("--seed", syo.seed, "noise seed")->capture_default_str();
  c_sy->add_option("--out", syo.out, "trial log (JSONL, appended)")->required();

  ExportOpts eo;
  CLI::App* c_ex = app.add_subcommand("export-contour",
                                      "Pool runs into a contour CSV");
  c_ex->add_option("--in", eo.inputs, "trial logs")->required()->expected(-1);
  c_ex->add_option("--out", eo.out, "CSV path")->required();

  try {
    app.parse(argc, argv);
    if (!log_level.empty()) g_log_level = parse_log_level(log_level);
    if (c_se->parsed() && so.ckpt_path.empty() && !so.init_seed.has_value())
      throw CLI::RequiredError("--ckpt or --init-seed");

    if (c_gt->parsed()) run_gen_tokens(gt);
    if (c_mc->parsed()) run_make_ckpt(mc);
    if (c_se->parsed()) run_search_cmd(so);
    if (c_fit->parsed()) run_fit(fo);
    if (c_pr->parsed()) run_predict(po);
    if (c_pl->parsed()) {
      if (!plo.n.has_value() && !plo.qr.has_value())
        throw CLI::RequiredError("--n or --qr");
      run_plan(plo);
    }
    if (c_sy->parsed()) run_synth(syo);
    if (c_ex->parsed()) run_export_contour(eo);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit clean, usage errors as 2
  } catch (const ql::RatioInfeasible& e) {
    std::cerr << "error: " << e.what() << "; closest achievable ratio "
              << fmt_g9(e.closest_achievable) << '\n';
    return 4;
  } catch (const ql::RunFailed& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const ql::EmptyRun& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const ql::Underdetermined& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const ql::NoFittableData& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const ql::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const ql::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
