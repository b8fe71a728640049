#include "sbm/harness.hpp"

#include "sbm/core.hpp"
#include "sbm/io.hpp"
#include "sbm/rng.hpp"
#include "sbm/variational.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace sbm::harness {

using nlohmann::json;

const char* to_string(Method m) {
  switch (m) {
    case Method::Vem: return "vem";
    case Method::ExactEm: return "exact-em";
    case Method::Moments: return "moments";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "vem") return Method::Vem;
  if (s == "exact-em") return Method::ExactEm;
  if (s == "moments") return Method::Moments;
  throw Error(ErrorKind::Validation, "unknown method '" + s + "'");
}

void SweepConfig::validate() const {
  truth.validate();
  if (n_grid.empty() && !methods.empty()) throw Error(ErrorKind::Validation, "n_grid must be nonempty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 2) throw Error(ErrorKind::Validation, "n_grid entries must be >= 2");
    if (i && n_grid[i] <= n_grid[i - 1]) throw Error(ErrorKind::Validation, "n_grid must be ascending");
  }
  if (seeds < 1) throw Error(ErrorKind::Validation, "seeds must be >= 1");
  if (restarts < 1 || max_iter < 1) throw Error(ErrorKind::Validation, "restarts and max_iter must be >= 1");
}

SweepConfig SweepConfig::from_json(const json& j) {
  try {
    SweepConfig c;
    c.truth = io::params_from_json(j.at("truth"));
    c.n_grid = j.value("n_grid", std::vector<int>{});
    c.seeds = j.value("seeds", 1);
    for (const auto& m : j.value("methods", std::vector<std::string>{})) c.methods.push_back(method_from_string(m));
    c.restarts = j.value("restarts", c.restarts);
    c.tol = j.value("tol", c.tol);
    c.max_iter = j.value("max_iter", c.max_iter);
    c.seed = j.value("seed", c.seed);
    c.enumeration_cap = j.value("enumeration_cap", c.enumeration_cap);
    c.diagnostic_cap = j.value("diagnostic_cap", c.diagnostic_cap);
    c.moment_graphs = j.value("moment_graphs", c.moment_graphs);
    c.threads = j.value("threads", c.threads);
    c.record_timing = j.value("record_timing", c.record_timing);
    c.output_path = j.value("output_path", std::string{});
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed sweep config: ") + e.what());
  }
}

std::uint64_t cell_seed(std::uint64_t base, int n, int s) {
  return sub_seed(sub_seed(base, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(s));
}

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? io::format_double(*v) : ""; }

bool enumerable(int n, int q, std::uint64_t cap) {
  try {
    enumeration_size(n, q, cap);
    return true;
  } catch (const Error&) {
    return false;
  }
}

void score(SweepRow& row, const SbmParams& fitted, const SbmParams& truth) {
  const auto d = param_distance(fitted, truth);
  row.err_pi = d.err_pi;
  row.err_alpha = d.err_alpha;
  row.fitted = fitted;
}

// Fitted class sigma(q) plays true class q, so fitted label k becomes sigma^-1(k).
double aligned_label_error(const Labels& fitted, const Labels& truth_labels, const SbmParams& fitted_params,
                           const SbmParams& truth) {
  const auto d = param_distance(fitted_params, truth);
  return label_error(relabel(fitted, d.best_perm.inverse()), truth_labels, truth.pi);
}

std::vector<SweepRow> run_cell(const SweepConfig& cfg, int n, int s) {
  const std::uint64_t gseed = cell_seed(cfg.seed, n, s);
  const int q = cfg.truth.q();
  const LabeledGraph g = sample_graph(cfg.truth, n, gseed);
  const Adjacency& x = g.adjacency;
  const bool diag = enumerable(n, q, cfg.diagnostic_cap);

  std::optional<double> ratio;
  if (diag) {
    try {
      ratio = posterior_ratio_stat(posterior_table(x, cfg.truth), *g.labels, cfg.truth.pi).value;
    } catch (const Error&) {
    }
  }

  std::vector<SweepRow> out;
  std::optional<FitResult> vem;
  auto fit_vem = [&]() -> const FitResult& {
    if (!vem) {
      VemOptions o;
      o.restarts = cfg.restarts;
      o.max_iter = cfg.max_iter;
      o.tol = cfg.tol;
      o.seed = gseed;
      vem = vem_fit(x, q, o);
    }
    return *vem;
  };
  using clock = std::chrono::steady_clock;

  for (Method m : cfg.methods) {
    SweepRow row;
    row.n = n;
    row.seed = s;
    row.method = m;
    try {
      const auto start = clock::now();
      if (m == Method::Vem) {
        const bool cached = vem.has_value();
        const FitResult& fit = fit_vem();
        const auto stop = clock::now();
        if (cfg.record_timing && !cached)
          row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
        score(row, fit.params, cfg.truth);
        row.label_err = aligned_label_error(fit.tau.argmax(), *g.labels, fit.params, cfg.truth);
        row.objective = fit.objective_trace.back();
        row.trace = fit.objective_trace;
        row.flags = fit.flags;
        if (!fit.converged) row.flags.push_back("not-converged");
        if (diag) {
          try {
            row.kl_gap = marginal_loglik(x, fit.params) - fit.objective_trace.back();
          } catch (const Error& e) {
            row.flags.push_back(std::string("kl-gap-") + sbm::to_string(e.kind()));
          }
        }
        row.ratio_stat = ratio;
      } else if (m == Method::ExactEm) {
        if (!enumerable(n, q, cfg.enumeration_cap))
          throw Error(ErrorKind::SizeLimit, "cell exceeds the enumeration cap");
        // Started from the variational estimate: EM ascent then keeps L2 above J.
        const FitResult& init = fit_vem();
        const auto em_start = clock::now();
        ExactEmOptions o;
        o.max_iter = cfg.max_iter;
        o.tol = cfg.tol;
        o.enumeration.cap = cfg.enumeration_cap;
        init.params.validate();
        const FitResult fit = exact_em_fit(x, init.params, o);
        if (cfg.record_timing)
          row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - em_start).count();
        score(row, fit.params, cfg.truth);
        row.label_err = aligned_label_error(fit.tau.argmax(), *g.labels, fit.params, cfg.truth);
        row.objective = fit.objective_trace.back();
        row.trace = fit.objective_trace;
        row.flags = fit.flags;
        if (!fit.converged) row.flags.push_back("not-converged");
        if (diag) row.kl_gap = fit.objective_trace.back() - elbo(x, fit.tau, fit.params);
        row.ratio_stat = ratio;
      } else {
        const auto moments = moments_empirical(cfg.truth, cfg.moment_graphs, n, gseed);
        const auto rec = recover_from_moments(moments);
        if (cfg.record_timing)
          row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
        score(row, rec.params, cfg.truth);
        row.flags = rec.condition_flags;
      }
    } catch (const Error& e) {
      row.flags.push_back(std::string("error:") + sbm::to_string(e.kind()));
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

std::string csv_line(const SweepRow& r) {
  std::ostringstream os;
  os << r.n << ',' << r.seed << ',' << to_string(r.method) << ',' << opt_field(r.err_pi) << ','
     << opt_field(r.err_alpha) << ',' << opt_field(r.label_err) << ',' << opt_field(r.objective) << ','
     << opt_field(r.kl_gap) << ',' << opt_field(r.ratio_stat) << ',' << opt_field(r.wall_ms) << ',';
  for (std::size_t i = 0; i < r.flags.size(); ++i) {
    std::string f = r.flags[i];
    std::replace(f.begin(), f.end(), ',', '/');
    os << (i ? ";" : "") << f;
  }
  return os.str();
}

std::string fit_line(const SweepRow& r) {
  if (!r.fitted) return {};
  json j = io::params_to_json(*r.fitted);
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["method"] = to_string(r.method);
  return io::dump(j, 0);
}

std::vector<SweepRow> run_consistency_sweep(const SweepConfig& cfg, std::ostream* csv, std::ostream* fits) {
  cfg.validate();
  if (csv) *csv << kSweepHeader << '\n';
  std::vector<std::pair<int, int>> cells;
  for (int n : cfg.n_grid)
    for (int s = 0; s < cfg.seeds; ++s) cells.emplace_back(n, s);
  if (cfg.methods.empty()) cells.clear();

  std::vector<std::vector<SweepRow>> results(cells.size());
  std::vector<bool> done(cells.size(), false);
  std::size_t written = 0;
  std::mutex mu;
  auto commit = [&](std::size_t idx, std::vector<SweepRow> rows) {
    std::lock_guard lock(mu);
    results[idx] = std::move(rows);
    done[idx] = true;
    while (written < cells.size() && done[written]) {
      for (const auto& r : results[written]) {
        if (csv) *csv << csv_line(r) << '\n';
        if (fits && r.fitted) *fits << fit_line(r) << '\n';
      }
      if (csv) csv->flush();
      ++written;
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) commit(i, run_cell(cfg, cells[i].first, cells[i].second));
  };
  const int threads = std::clamp<int>(cfg.threads, 1, std::max<int>(1, static_cast<int>(cells.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<SweepRow> all;
  for (auto& rs : results)
    for (auto& r : rs) all.push_back(std::move(r));
  return all;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  // Linear interpolation between order statistics.
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || v[lo] == v[hi]) return v[lo];
  return v[lo] + frac * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

std::vector<CellSummary> summarize(const std::vector<SweepRow>& rows) {
  std::vector<CellSummary> out;
  std::vector<int> ns;
  std::vector<Method> methods;
  for (const auto& r : rows) {
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::sort(ns.begin(), ns.end());
  const double inf = std::numeric_limits<double>::infinity();
  for (Method m : methods)
    for (int n : ns) {
      CellSummary c;
      c.n = n;
      c.method = m;
      std::vector<double> pi_err, alpha_err, lab;
      for (const auto& r : rows) {
        if (r.n != n || r.method != m) continue;
        ++c.rows;
        if (!r.err_pi) ++c.failures;
        pi_err.push_back(r.err_pi.value_or(inf));
        alpha_err.push_back(r.err_alpha.value_or(inf));
        if (r.label_err) lab.push_back(*r.label_err);
      }
      if (!c.rows) continue;
      c.median_err_pi = median(pi_err);
      c.median_err_alpha = median(alpha_err);
      c.median_label_err = lab.empty() ? std::numeric_limits<double>::quiet_NaN() : median(lab);
      out.push_back(c);
    }
  return out;
}

std::string summary_table(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "method" << std::right << std::setw(7) << "n" << std::setw(7) << "rows"
     << std::setw(7) << "fail" << std::setw(14) << "med_err_pi" << std::setw(14) << "med_err_alpha"
     << std::setw(14) << "med_label_err" << '\n';
  os << std::setprecision(6);
  for (const auto& c : cells)
    os << std::left << std::setw(10) << to_string(c.method) << std::right << std::setw(7) << c.n << std::setw(7)
       << c.rows << std::setw(7) << c.failures << std::setw(14) << c.median_err_pi << std::setw(14)
       << c.median_err_alpha << std::setw(14) << c.median_label_err << '\n';
  return os.str();
}

json summary_json(const std::vector<CellSummary>& cells) {
  json a = json::array();
  for (const auto& c : cells)
    a.push_back({{"method", to_string(c.method)},
                 {"n", c.n},
                 {"rows", c.rows},
                 {"failures", c.failures},
                 {"median_err_pi", c.median_err_pi},
                 {"median_err_alpha", c.median_err_alpha},
                 {"median_label_err", c.median_label_err}});
  return a;
}

ConsistencyVerdict assess_consistency(const std::vector<CellSummary>& cells, Method method, double pi_ceiling,
                                      double alpha_ceiling) {
  ConsistencyVerdict v;
  const CellSummary* last = nullptr;
  for (const auto& c : cells) {
    if (c.method != method) continue;
    v.medians_pi.push_back(c.median_err_pi);
    last = &c;
  }
  if (!last) return v;
  v.monotone = std::is_sorted(v.medians_pi.rbegin(), v.medians_pi.rend());
  v.pi_ceiling_ok = last->median_err_pi <= pi_ceiling;
  v.alpha_ceiling_ok = last->median_err_alpha <= alpha_ceiling;
  return v;
}

namespace {

Quantiles quantiles_of(const std::vector<double>& v) {
  if (v.empty()) return {};
  return {quantile(v, 0.1), quantile(v, 0.5), quantile(v, 0.9), *std::max_element(v.begin(), v.end())};
}

json quantiles_json(const Quantiles& q) {
  return {{"p10", q.p10}, {"p50", q.p50}, {"p90", q.p90}, {"max", q.max}};
}

}  // namespace

ConcentrationSummary run_concentration_experiment(const SbmParams& truth, int n, int seeds,
                                                  const ConcentrationOptions& opts) {
  truth.validate();
  enumeration_size(n, truth.q(), opts.cap);
  ConcentrationSummary sum;
  sum.n = n;
  const auto a1 = check_assumptions(truth, std::nullopt, 0.5, 0.5 / truth.q());
  sum.a1_ok = a1.a1_ok;

  std::vector<double> ratios, masses, kls;
  int above = 0;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t gseed = sub_seed(opts.seed, static_cast<std::uint64_t>(s));
    const auto g = sample_graph(truth, n, gseed);
    const auto table = posterior_table(g.adjacency, truth, {opts.cap, 1});
    const auto rs = posterior_ratio_stat(table, *g.labels, truth.pi);
    ConcentrationSample cs;
    cs.seed = s;
    cs.ratio_stat = rs.value;
    cs.class_mass = rs.class_mass;
    cs.zero_mass = rs.zero_mass;
    long double best = n >= 2 ? std::numeric_limits<long double>::infinity() : 0.0L;
    if (n >= 2) {
      for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        const auto tau = converge_tau(g.adjacency, initial_tau(g.adjacency, truth.q(), r, gseed), truth);
        best = std::min(best, kl_divergence(tau.tau, table).extended);
      }
    }
    cs.min_kl = static_cast<double>(best);
    cs.min_kl_extended = best;
    above += cs.class_mass > 0.95;
    ratios.push_back(cs.ratio_stat);
    masses.push_back(cs.class_mass);
    kls.push_back(cs.min_kl);
    sum.samples.push_back(cs);
  }
  sum.ratio_stat = quantiles_of(ratios);
  sum.class_mass = quantiles_of(masses);
  sum.min_kl = quantiles_of(kls);
  sum.fraction_mass_above_95 = seeds ? static_cast<double>(above) / seeds : 0.0;
  return sum;
}

std::string ConcentrationSummary::table() const {
  std::ostringstream os;
  os << "n=" << n << " seeds=" << samples.size() << " A1=" << (a1_ok ? "ok" : "violated") << '\n';
  os << std::left << std::setw(12) << "statistic" << std::right << std::setw(14) << "p10" << std::setw(14) << "p50"
     << std::setw(14) << "p90" << std::setw(14) << "max" << '\n';
  os << std::setprecision(6);
  auto line = [&](const char* name, const Quantiles& q) {
    os << std::left << std::setw(12) << name << std::right << std::setw(14) << q.p10 << std::setw(14) << q.p50
       << std::setw(14) << q.p90 << std::setw(14) << q.max << '\n';
  };
  line("ratio_stat", ratio_stat);
  line("class_mass", class_mass);
  line("min_kl", min_kl);
  os << "fraction of seeds with class mass > 0.95: " << fraction_mass_above_95 << '\n';
  return os.str();
}

json ConcentrationSummary::to_json() const {
  return {{"n", n},
          {"seeds", samples.size()},
          {"a1_ok", a1_ok},
          {"ratio_stat", quantiles_json(ratio_stat)},
          {"class_mass", quantiles_json(class_mass)},
          {"min_kl", quantiles_json(min_kl)},
          {"fraction_mass_above_95", fraction_mass_above_95}};
}

MomentSummary run_moment_experiment(const SbmParams& truth, const std::vector<std::int64_t>& g_grid, int n,
                                    int seeds, const MomentExperimentOptions& opts) {
  truth.validate();
  if (n < 2 * truth.q()) throw Error(ErrorKind::Precondition, "moment patterns need n >= 2Q");
  MomentSummary sum;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::int64_t graphs : g_grid) {
    MomentRow row;
    row.graphs = graphs;
    std::vector<double> errs;
    for (int s = 0; s < seeds; ++s) {
      MomentTrial t;
      t.graphs = graphs;
      t.seed = s;
      try {
        const std::uint64_t seed = sub_seed(sub_seed(opts.seed, static_cast<std::uint64_t>(graphs)),
                                            static_cast<std::uint64_t>(s));
        const MomentSet m = opts.analytic ? moments_analytic(truth, opts.empirical.orientation)
                                          : moments_empirical(truth, graphs, n, seed, opts.empirical);
        const auto rec = opts.q2n4 ? recover_q2_n4(m, opts.recovery) : recover_from_moments(m, opts.recovery);
        const auto d = param_distance(rec.params, truth);
        t.err_pi = d.err_pi;
        t.err_alpha = d.err_alpha;
      } catch (const Error& e) {
        t.failure = sbm::to_string(e.kind());
        ++row.failures;
        if (e.kind() == ErrorKind::DegenerateMoments || e.kind() == ErrorKind::DegenerateModel) ++row.degenerate;
      }
      errs.push_back(t.err_pi.value_or(inf));
      ++row.trials;
      sum.trials.push_back(t);
    }
    row.median_err_pi = median(errs);
    sum.rows.push_back(row);
  }
  return sum;
}

std::string MomentSummary::table() const {
  std::ostringstream os;
  os << std::right << std::setw(12) << "graphs" << std::setw(8) << "trials" << std::setw(10) << "failures"
     << std::setw(12) << "degenerate" << std::setw(16) << "median_err_pi" << '\n';
  os << std::setprecision(6);
  for (const auto& r : rows)
    os << std::setw(12) << r.graphs << std::setw(8) << r.trials << std::setw(10) << r.failures << std::setw(12)
       << r.degenerate << std::setw(16) << r.median_err_pi << '\n';
  return os.str();
}

json MomentSummary::to_json() const {
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({{"graphs", r.graphs},
                 {"trials", r.trials},
                 {"failures", r.failures},
                 {"degenerate", r.degenerate},
                 {"median_err_pi", r.median_err_pi}});
  return a;
}

}  // namespace sbm::harness
