#include "sbm/cli.hpp"

#include "sbm/core.hpp"
#include "sbm/exact.hpp"
#include "sbm/harness.hpp"
#include "sbm/io.hpp"
#include "sbm/moments.hpp"
#include "sbm/variational.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace sbm::cli {

using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return kUsage;
    case ErrorKind::Validation:
    case ErrorKind::InvalidBound:
    case ErrorKind::Shape:
    case ErrorKind::Precondition:
    case ErrorKind::Io:
      return kValidation;
    case ErrorKind::DegenerateModel:
    case ErrorKind::DegenerateMoments:
    case ErrorKind::RootExtraction:
    case ErrorKind::OutOfBounds:
      return kNumeric;
    case ErrorKind::SizeLimit:
      return kSizeLimit;
  }
  return kValidation;
}

namespace {

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void report(std::ostream& err, const std::string& kind, const std::string& msg) {
  err << "error: kind=" << kind << " reason=" << one_line(msg) << '\n';
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SBM_LAB_SEED")) {
    try {
      std::size_t used = 0;
      const std::string s(env);
      const auto v = std::stoull(s, &used, 0);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Usage, "SBM_LAB_SEED is not an unsigned integer");
  }
  return 0;
}

void emit(std::ostream& out, const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    out << text;
  else
    io::write_file(path, text);
}

struct Options {
  int threads = 1;

  // sample / shared
  std::string params_path;
  int n = 0;
  std::optional<std::uint64_t> seed;
  std::string out_path;

  // fit
  std::string graph_path;
  int q = 0;
  std::string method = "vem";
  int restarts = 10;
  double tol = -1.0;
  int max_iter = 500;
  std::string init_path;
  std::string posterior_csv;

  // recover
  bool analytic = false;
  bool empirical = false;
  std::int64_t graphs = 0;
  bool q2n4 = false;
  std::string orientation = "row";
  int average_orderings = 0;

  // sweep
  std::string config_path;
  std::string fits_path;
  std::string summary_path;

  // concentrate
  int seeds = 1;

  // check
  std::string labels_path;
  double zeta = 0.0;
  double gamma = 0.0;
  int n0 = 1;

  // eval
  std::string fit_path;
  std::string truth_path;
};

int run_sample(const Options& o, std::ostream& out) {
  const SbmParams p = io::read_params(o.params_path);
  const LabeledGraph g = sample_graph(p, o.n, resolve_seed(o.seed));
  std::ostringstream os;
  io::write_graph(os, g);
  emit(out, o.out_path, os.str());
  return kOk;
}

int run_fit(const Options& o, std::ostream& out) {
  const LabeledGraph g = io::read_graph(o.graph_path);
  const std::uint64_t seed = resolve_seed(o.seed);
  if (o.q < 1) throw Error(ErrorKind::Validation, "--q must be >= 1");
  FitResult fit;
  std::optional<PosteriorTable> table;
  if (o.method == "vem") {
    VemOptions vo;
    vo.restarts = o.restarts;
    vo.max_iter = o.max_iter;
    if (o.tol > 0) vo.tol = o.tol;
    vo.seed = seed;
    vo.threads = o.threads;
    fit = vem_fit(g.adjacency, o.q, vo);
  } else if (o.method == "exact-em") {
    ExactEmOptions eo;
    eo.max_iter = o.max_iter;
    if (o.tol > 0) eo.tol = o.tol;
    eo.enumeration.threads = o.threads;
    enumeration_size(g.n(), o.q, eo.enumeration.cap);
    SbmParams init;
    if (!o.init_path.empty()) {
      init = io::read_params(o.init_path);
    } else {
      VemOptions vo;
      vo.restarts = o.restarts;
      vo.max_iter = o.max_iter;
      vo.seed = seed;
      init = vem_fit(g.adjacency, o.q, vo).params;
    }
    fit = exact_em_fit(g.adjacency, init, eo);
  } else {
    throw Error(ErrorKind::Usage, "--method must be vem or exact-em");
  }
  if (!o.posterior_csv.empty()) {
    std::ostringstream os;
    io::write_posterior_csv(os, posterior_table(g.adjacency, fit.params, {kDefaultEnumerationCap, o.threads}));
    io::write_file(o.posterior_csv, os.str());
  }
  emit(out, o.out_path, io::dump(io::fit_to_json(fit, o.method)) + "\n");
  return kOk;
}

int run_recover(const Options& o, std::ostream& out) {
  if (o.analytic == o.empirical) throw Error(ErrorKind::Usage, "exactly one of --analytic or --empirical is required");
  const SbmParams p = io::read_params(o.params_path);
  Orientation orient;
  if (o.orientation == "row")
    orient = Orientation::Row;
  else if (o.orientation == "column")
    orient = Orientation::Column;
  else
    throw Error(ErrorKind::Usage, "--orientation must be row or column");
  MomentSet m;
  if (o.analytic) {
    m = moments_analytic(p, orient);
  } else {
    EmpiricalMomentOptions eo;
    eo.orientation = orient;
    eo.average_orderings = o.average_orderings;
    eo.threads = o.threads;
    m = moments_empirical(p, o.graphs, o.n, resolve_seed(o.seed), eo);
  }
  const RecoveryResult r = o.q2n4 ? recover_q2_n4(m) : recover_from_moments(m);
  json j = io::recovery_to_json(r);
  const auto d = param_distance(r.params, p);
  j["err_pi"] = d.err_pi;
  j["err_alpha"] = d.err_alpha;
  emit(out, o.out_path, io::dump(j) + "\n");
  return kOk;
}

int run_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  json j;
  try {
    j = json::parse(io::read_file(o.config_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("config is not valid JSON: ") + e.what());
  }
  harness::SweepConfig cfg = harness::SweepConfig::from_json(j);
  if (o.threads > 1) cfg.threads = o.threads;
  const std::string csv_path = o.out_path.empty() ? cfg.output_path : o.out_path;
  const bool to_stdout = csv_path.empty() || csv_path == "-";

  std::ofstream csv_file, fits_file;
  std::ostream* csv = &out;
  if (!to_stdout) {
    csv_file.open(csv_path, std::ios::binary);
    if (!csv_file) throw Error(ErrorKind::Io, "cannot open " + csv_path);
    csv = &csv_file;
  }
  std::string fits_path = o.fits_path;
  if (fits_path.empty() && !to_stdout) fits_path = csv_path + ".fits.jsonl";
  std::ostream* fits = nullptr;
  if (!fits_path.empty()) {
    fits_file.open(fits_path, std::ios::binary);
    if (!fits_file) throw Error(ErrorKind::Io, "cannot open " + fits_path);
    fits = &fits_file;
  }

  const auto rows = harness::run_consistency_sweep(cfg, csv, fits);
  const auto cells = harness::summarize(rows);
  (to_stdout ? err : out) << harness::summary_table(cells);
  if (!o.summary_path.empty()) io::write_file(o.summary_path, io::dump(harness::summary_json(cells)) + "\n");
  return kOk;
}

int run_concentrate(const Options& o, std::ostream& out) {
  const SbmParams p = io::read_params(o.params_path);
  harness::ConcentrationOptions co;
  co.restarts = o.restarts;
  co.seed = resolve_seed(o.seed);
  const auto s = harness::run_concentration_experiment(p, o.n, o.seeds, co);
  out << s.table();
  if (!o.out_path.empty()) io::write_file(o.out_path, io::dump(s.to_json()) + "\n");
  return kOk;
}

int run_check(const Options& o, std::ostream& out, std::ostream& err) {
  const SbmParams p = io::read_params(o.params_path);
  std::optional<Labels> labels;
  if (!o.labels_path.empty()) labels = io::read_labels(o.labels_path);
  const auto r = check_assumptions(p, labels, o.zeta, o.gamma, o.n0);
  out << "A1 " << (r.a1_ok ? "ok" : "violated") << '\n';
  out << "A2 " << (r.a2_ok ? "ok" : "violated") << '\n';
  out << "A3 " << (r.a3_ok ? "ok" : "violated") << '\n';
  out << "A4 " << (!r.a4_ok ? "skipped" : *r.a4_ok ? "ok" : "violated") << '\n';
  for (const auto& v : r.violations) out << v.assumption << ": " << v.detail << '\n';
  if (r.all_ok()) return kOk;
  std::string names;
  for (const auto& v : r.violations) {
    if (names.find(v.assumption) != std::string::npos) continue;
    names += (names.empty() ? "" : ",") + v.assumption;
  }
  report(err, "assumption", "violated " + names + (r.violations.empty() ? "" : "; " + r.violations.front().detail));
  return kValidation;
}

int run_eval(const Options& o, std::ostream& out) {
  json fj;
  try {
    fj = json::parse(io::read_file(o.fit_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("fit file is not valid JSON: ") + e.what());
  }
  const SbmParams fitted = io::fit_params_from_json(fj);
  const SbmParams truth = io::read_params(o.truth_path);
  const auto d = param_distance(fitted, truth);
  json j = {{"err_pi", d.err_pi}, {"err_alpha", d.err_alpha}, {"best_permutation", d.best_perm.to_string()}};
  out << io::dump(j) << '\n';
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Directed stochastic block model toolkit", "sbm-lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);

  auto add_seed = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Seed (falls back to SBM_LAB_SEED, then 0)");
  };

  auto* sample = app.add_subcommand("sample", "Sample a graph from parameters");
  sample->add_option("--params", o.params_path)->required();
  sample->add_option("--n", o.n)->required()->check(CLI::NonNegativeNumber);
  add_seed(sample);
  sample->add_option("--out", o.out_path);

  auto* fit = app.add_subcommand("fit", "Fit parameters to a graph");
  fit->add_option("--graph", o.graph_path)->required();
  fit->add_option("--q", o.q)->required();
  fit->add_option("--method", o.method)->check(CLI::IsMember({"vem", "exact-em"}));
  fit->add_option("--restarts", o.restarts)->check(CLI::PositiveNumber);
  fit->add_option("--tol", o.tol)->check(CLI::PositiveNumber);
  fit->add_option("--max-iter", o.max_iter)->check(CLI::PositiveNumber);
  add_seed(fit);
  fit->add_option("--init", o.init_path, "Initial parameters for exact-em");
  fit->add_option("--posterior-csv", o.posterior_csv, "Export the exact posterior at the fit");
  fit->add_option("--out", o.out_path);

  auto* recover = app.add_subcommand("recover", "Recover parameters from edge-pattern moments");
  recover->add_option("--params", o.params_path)->required();
  recover->add_flag("--analytic", o.analytic);
  recover->add_flag("--empirical", o.empirical);
  recover->add_option("--graphs", o.graphs);
  recover->add_option("--n", o.n);
  add_seed(recover);
  recover->add_flag("--q2n4", o.q2n4);
  recover->add_option("--orientation", o.orientation)->check(CLI::IsMember({"row", "column"}));
  recover->add_option("--average-orderings", o.average_orderings)->check(CLI::NonNegativeNumber);
  recover->add_option("--out", o.out_path);

  auto* sweep = app.add_subcommand("sweep", "Run a consistency sweep");
  sweep->add_option("--config", o.config_path)->required();
  sweep->add_option("--out", o.out_path);
  sweep->add_option("--fits", o.fits_path);
  sweep->add_option("--summary-json", o.summary_path);

  auto* conc = app.add_subcommand("concentrate", "Posterior concentration experiment");
  conc->add_option("--params", o.params_path)->required();
  conc->add_option("--n", o.n)->required();
  conc->add_option("--seeds", o.seeds)->required()->check(CLI::PositiveNumber);
  conc->add_option("--restarts", o.restarts)->check(CLI::PositiveNumber);
  add_seed(conc);
  conc->add_option("--out", o.out_path, "JSON digest path");

  auto* check = app.add_subcommand("check", "Check model assumptions");
  check->add_option("--params", o.params_path)->required();
  check->add_option("--labels", o.labels_path);
  check->add_option("--zeta", o.zeta)->required();
  check->add_option("--gamma", o.gamma)->required();
  check->add_option("--n0", o.n0);

  auto* eval = app.add_subcommand("eval", "Compare a fit with the true parameters");
  eval->add_option("--fit", o.fit_path)->required();
  eval->add_option("--truth", o.truth_path)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    report(err, "usage", e.what());
    return kUsage;
  }

  try {
    if (*sample) return run_sample(o, out);
    if (*fit) return run_fit(o, out);
    if (*recover) return run_recover(o, out);
    if (*sweep) return run_sweep(o, out, err);
    if (*conc) return run_concentrate(o, out);
    if (*check) return run_check(o, out, err);
    if (*eval) return run_eval(o, out);
  } catch (const Error& e) {
    report(err, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report(err, "internal", e.what());
    return kValidation;
  }
  return kUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace sbm::cli
