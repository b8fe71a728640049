#pragma once

// Seeded experiment sweeps: consistency of the fitted parameters across a grid
// of graph sizes, posterior concentration at small n, and moment recovery
// against the number of sampled graphs.

#include "sbm/exact.hpp"
#include "sbm/model.hpp"
#include "sbm/moments.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sbm::harness {

enum class Method { Vem, ExactEm, Moments };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct SweepConfig {
  SbmParams truth;
  std::vector<int> n_grid;
  int seeds = 1;
  std::vector<Method> methods;
  int restarts = 10;
  double tol = 1e-8;
  int max_iter = 500;
  std::uint64_t seed = 0;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;  // exact-em cells
  std::uint64_t diagnostic_cap = std::uint64_t{1} << 16;   // kl_gap / ratio_stat cells
  std::int64_t moment_graphs = 100000;
  int threads = 1;
  // Wall-clock times make output machine dependent; off by default so that
  // identical configs give byte-identical CSV.
  bool record_timing = false;
  std::string output_path;

  void validate() const;
  static SweepConfig from_json(const nlohmann::json& j);
};

struct SweepRow {
  int n = 0;
  int seed = 0;  // seed index within the cell
  Method method = Method::Vem;
  std::optional<double> err_pi;
  std::optional<double> err_alpha;
  std::optional<double> label_err;
  std::optional<double> objective;
  std::optional<double> kl_gap;
  std::optional<double> ratio_stat;
  std::optional<double> wall_ms;
  std::vector<std::string> flags;
  std::optional<SbmParams> fitted;
  // Per-iteration objective of the fit, kept for ascent checks.
  std::vector<double> trace;
};

// Seed of the graph for cell (n, s).
std::uint64_t cell_seed(std::uint64_t base, int n, int s);

inline constexpr const char* kSweepHeader =
    "n,seed,method,err_pi,err_alpha,label_err,objective,kl_gap,ratio_stat,wall_ms,flags";

std::string csv_line(const SweepRow& row);
// One JSON object per line: {"n","seed","method","alpha","pi"} for rows with a fit.
std::string fit_line(const SweepRow& row);

// Rows come back ordered by (n, seed, method). When `csv` / `fits` are given,
// rows are written as soon as every earlier row is done.
std::vector<SweepRow> run_consistency_sweep(const SweepConfig& cfg, std::ostream* csv = nullptr,
                                            std::ostream* fits = nullptr);

struct CellSummary {
  int n = 0;
  Method method = Method::Vem;
  int rows = 0;
  int failures = 0;
  double median_err_pi = 0.0;
  double median_err_alpha = 0.0;
  double median_label_err = 0.0;
};

std::vector<CellSummary> summarize(const std::vector<SweepRow>& rows);
std::string summary_table(const std::vector<CellSummary>& cells);
nlohmann::json summary_json(const std::vector<CellSummary>& cells);

struct ConsistencyVerdict {
  bool monotone = false;       // median err_pi nonincreasing along the grid
  bool pi_ceiling_ok = false;  // median err_pi at the largest n <= ceiling
  bool alpha_ceiling_ok = false;
  std::vector<double> medians_pi;
  bool passed() const { return monotone && pi_ceiling_ok && alpha_ceiling_ok; }
};

ConsistencyVerdict assess_consistency(const std::vector<CellSummary>& cells, Method method,
                                      double pi_ceiling, double alpha_ceiling);

// Median with NaN-free inputs; +inf entries count as failures that sort last.
double median(std::vector<double> v);
double quantile(std::vector<double> v, double p);

struct ConcentrationOptions {
  int restarts = 10;
  std::uint64_t seed = 0;
  std::uint64_t cap = kDefaultEnumerationCap;
};

struct ConcentrationSample {
  int seed = 0;
  double ratio_stat = 0.0;
  double class_mass = 0.0;
  double min_kl = 0.0;  // min over restarts of K(D_tau, P^X) at the true parameters
  long double min_kl_extended = 0.0L;
  bool zero_mass = false;
};

struct Quantiles {
  double p10 = 0, p50 = 0, p90 = 0, max = 0;
};

struct ConcentrationSummary {
  int n = 0;
  std::vector<ConcentrationSample> samples;
  Quantiles ratio_stat, class_mass, min_kl;
  double fraction_mass_above_95 = 0.0;
  bool a1_ok = true;

  std::string table() const;
  nlohmann::json to_json() const;
};

ConcentrationSummary run_concentration_experiment(const SbmParams& truth, int n, int seeds,
                                                  const ConcentrationOptions& opts = {});

struct MomentExperimentOptions {
  std::uint64_t seed = 0;
  bool analytic = false;  // inject exact moments instead of sampling
  bool q2n4 = false;      // use the Q = 2 special-case recovery
  EmpiricalMomentOptions empirical;
  RecoveryOptions recovery;
};

struct MomentTrial {
  std::int64_t graphs = 0;
  int seed = 0;
  std::optional<double> err_pi;
  std::optional<double> err_alpha;
  std::string failure;  // error kind name when recovery failed
};

struct MomentRow {
  std::int64_t graphs = 0;
  double median_err_pi = 0.0;  // failures count as +inf
  int failures = 0;
  int degenerate = 0;          // DegenerateMoments / DegenerateModel failures
  int trials = 0;
};

struct MomentSummary {
  std::vector<MomentTrial> trials;
  std::vector<MomentRow> rows;

  std::string table() const;
  nlohmann::json to_json() const;
};

MomentSummary run_moment_experiment(const SbmParams& truth, const std::vector<std::int64_t>& g_grid,
                                    int n, int seeds, const MomentExperimentOptions& opts = {});

}  // namespace sbm::harness
