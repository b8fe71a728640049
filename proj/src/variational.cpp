#include "sbm/variational.hpp"

#include "sbm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace sbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kInitStream = 0x494e4954ULL;  // "INIT"

// a * log(p) with 0 * log(anything) = 0.
double xlogy(double a, double p) {
  if (a == 0.0) return 0.0;
  return p > 0.0 ? a * std::log(p) : kNegInf;
}

void check_shapes(const Adjacency& x, const TauMatrix& tau) {
  if (tau.n() != x.n()) throw Error(ErrorKind::Shape, "tau has " + std::to_string(tau.n()) +
                                                          " rows for " + std::to_string(x.n()) + " vertices");
}

// Edge and non-edge block weights:
//   edges(q,l)  = sum_{i!=j} X_ij tau_iq tau_jl
//   absent(q,l) = sum_{i!=j} (1 - X_ij) tau_iq tau_jl
struct BlockWeights {
  Eigen::MatrixXd edges;
  Eigen::MatrixXd absent;
};

BlockWeights block_weights(const Adjacency& x, const TauMatrix& tau) {
  const int n = x.n(), q = tau.q();
  const Eigen::MatrixXd t = tau.values;
  // Row-major copy for contiguous per-vertex access.
  std::vector<double> rows(static_cast<std::size_t>(n) * q);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < q; ++k) rows[static_cast<std::size_t>(i) * q + k] = t(i, k);

  BlockWeights w{Eigen::MatrixXd::Zero(q, q), Eigen::MatrixXd::Zero(q, q)};
  std::vector<double> out_edge(q), out_absent(q);
  for (int i = 0; i < n; ++i) {
    std::fill(out_edge.begin(), out_edge.end(), 0.0);
    std::fill(out_absent.begin(), out_absent.end(), 0.0);
    const auto xi = x.row(i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* tj = &rows[static_cast<std::size_t>(j) * q];
      auto& acc = xi[j] ? out_edge : out_absent;
      for (int l = 0; l < q; ++l) acc[l] += tj[l];
    }
    const double* ti = &rows[static_cast<std::size_t>(i) * q];
    for (int k = 0; k < q; ++k) {
      if (ti[k] == 0.0) continue;
      for (int l = 0; l < q; ++l) {
        w.edges(k, l) += ti[k] * out_edge[l];
        w.absent(k, l) += ti[k] * out_absent[l];
      }
    }
  }
  return w;
}

double entropy_term(const TauMatrix& tau, const Eigen::VectorXd& alpha) {
  double s = 0.0;
  for (int i = 0; i < tau.n(); ++i)
    for (int k = 0; k < tau.q(); ++k) {
      const double v = tau.values(i, k);
      if (v == 0.0) continue;
      if (!(alpha[k] > 0.0)) return -std::numeric_limits<double>::infinity();
      s -= v * (std::log(v) - std::log(alpha[k]));
    }
  return s;
}

// One Gauss-Seidel sweep of the row-wise fixed point; rows are updated in place.
void sweep(const Adjacency& x, const Adjacency& xt, const SbmParams& params,
           std::vector<double>& rows, int q) {
  const int n = x.n();
  std::vector<double> log_alpha(q);
  for (int k = 0; k < q; ++k) log_alpha[k] = params.alpha[k] > 0.0 ? std::log(params.alpha[k]) : kNegInf;
  Eigen::MatrixXd lp1(q, q), lp0(q, q);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      lp1(a, b) = params.pi(a, b) > 0.0 ? std::log(params.pi(a, b)) : kNegInf;
      lp0(a, b) = params.pi(a, b) < 1.0 ? std::log1p(-params.pi(a, b)) : kNegInf;
    }

  std::vector<double> out_edge(q), out_absent(q), in_edge(q), in_absent(q), field(q);
  auto weighted = [](double w, double lp) { return w == 0.0 ? 0.0 : (lp == kNegInf ? kNegInf : w * lp); };

  for (int i = 0; i < n; ++i) {
    std::fill(out_edge.begin(), out_edge.end(), 0.0);
    std::fill(out_absent.begin(), out_absent.end(), 0.0);
    std::fill(in_edge.begin(), in_edge.end(), 0.0);
    std::fill(in_absent.begin(), in_absent.end(), 0.0);
    const auto xo = x.row(i);
    const auto xin = xt.row(i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* tj = &rows[static_cast<std::size_t>(j) * q];
      auto& o = xo[j] ? out_edge : out_absent;
      auto& in = xin[j] ? in_edge : in_absent;
      for (int l = 0; l < q; ++l) {
        o[l] += tj[l];
        in[l] += tj[l];
      }
    }
    double top = kNegInf;
    for (int k = 0; k < q; ++k) {
      double f = log_alpha[k];
      for (int l = 0; l < q; ++l) {
        f += weighted(out_edge[l], lp1(k, l)) + weighted(out_absent[l], lp0(k, l));
        f += weighted(in_edge[l], lp1(l, k)) + weighted(in_absent[l], lp0(l, k));
      }
      field[k] = f;
      top = std::max(top, f);
    }
    if (top == kNegInf) continue;  // no admissible class; keep the row
    double norm = 0.0;
    for (int k = 0; k < q; ++k) {
      field[k] = field[k] == kNegInf ? 0.0 : std::exp(field[k] - top);
      norm += field[k];
    }
    double* ti = &rows[static_cast<std::size_t>(i) * q];
    for (int k = 0; k < q; ++k) ti[k] = field[k] / norm;
  }
}

std::vector<double> to_rows(const TauMatrix& tau) {
  std::vector<double> rows(static_cast<std::size_t>(tau.n()) * tau.q());
  for (int i = 0; i < tau.n(); ++i)
    for (int k = 0; k < tau.q(); ++k) rows[static_cast<std::size_t>(i) * tau.q() + k] = tau.values(i, k);
  return rows;
}

TauMatrix from_rows(const std::vector<double>& rows, int n, int q) {
  TauMatrix t{Eigen::MatrixXd(n, q)};
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < q; ++k) t.values(i, k) = rows[static_cast<std::size_t>(i) * q + k];
  return t;
}

TauUpdate update_tau_impl(const Adjacency& x, const Adjacency& xt, const TauMatrix& tau,
                          double j_old, const SbmParams& params, const TauUpdateOptions& opts) {
  const int n = x.n(), q = tau.q();
  std::vector<double> rows = to_rows(tau);
  for (int s = 0; s < std::max(1, opts.inner_iters); ++s) sweep(x, xt, params, rows, q);
  const TauMatrix target = from_rows(rows, n, q);

  double lambda = opts.damping;
  for (int attempt = 0; attempt <= 8; ++attempt) {
    TauUpdate up;
    up.tau = lambda == 0.0 ? target : TauMatrix{(1.0 - lambda) * target.values + lambda * tau.values};
    up.objective = elbo(x, up.tau, params);
    up.damping_used = lambda;
    if (up.objective >= j_old - 1e-9 || std::isnan(j_old)) return up;
    lambda = (1.0 + lambda) / 2.0;
  }
  return {tau, j_old, lambda, true};
}

}  // namespace

double elbo(const Adjacency& x, const TauMatrix& tau, const SbmParams& params) {
  check_shapes(x, tau);
  if (params.q() != tau.q()) throw Error(ErrorKind::Shape, "tau and params disagree on Q");
  const auto w = block_weights(x, tau);
  double s = 0.0;
  for (int a = 0; a < tau.q(); ++a)
    for (int b = 0; b < tau.q(); ++b)
      s += xlogy(w.edges(a, b), params.pi(a, b)) + xlogy(w.absent(a, b), 1.0 - params.pi(a, b));
  return s + entropy_term(tau, params.alpha);
}

TauUpdate update_tau(const Adjacency& x, const TauMatrix& tau, const SbmParams& params,
                     const TauUpdateOptions& opts) {
  check_shapes(x, tau);
  if (!(opts.damping >= 0.0 && opts.damping < 1.0))
    throw Error(ErrorKind::Validation, "damping must lie in [0,1)");
  return update_tau_impl(x, x.transposed(), tau, elbo(x, tau, params), params, opts);
}

TauUpdate converge_tau(const Adjacency& x, const TauMatrix& tau, const SbmParams& params,
                       int max_sweeps, double tol) {
  check_shapes(x, tau);
  const Adjacency xt = x.transposed();
  TauUpdate cur{tau, elbo(x, tau, params), 0.0, false};
  for (int s = 0; s < max_sweeps; ++s) {
    TauUpdate next = update_tau_impl(x, xt, cur.tau, cur.objective, params, {});
    const double moved = (next.tau.values - cur.tau.values).cwiseAbs().maxCoeff();
    cur = std::move(next);
    if (cur.stalled || moved <= tol) break;
  }
  return cur;
}

MStepResult m_step(const Adjacency& x, const TauMatrix& tau) {
  check_shapes(x, tau);
  const int n = x.n(), q = tau.q();
  if (n == 0) throw Error(ErrorKind::Precondition, "m_step needs at least one vertex");
  MStepResult r;
  r.params.alpha = tau.values.colwise().sum().transpose() / static_cast<double>(n);
  r.params.alpha /= r.params.alpha.sum();
  for (int k = 0; k < q; ++k)
    if (r.params.alpha[k] == 0.0) r.flags.push_back("empty-class " + std::to_string(k + 1));
  const auto w = block_weights(x, tau);
  r.params.pi.resize(q, q);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      const double den = w.edges(a, b) + w.absent(a, b);
      if (den > 0.0) {
        // A positive weight on either side keeps pi off the boundary; rounding
        // onto 0 or 1 would turn J into -inf.
        double v = w.edges(a, b) / den;
        if (w.absent(a, b) > 0.0) v = std::min(v, std::nextafter(1.0, 0.0));
        if (w.edges(a, b) > 0.0) v = std::max(v, std::nextafter(0.0, 1.0));
        r.params.pi(a, b) = v;
      } else {
        r.params.pi(a, b) = 0.5;
        r.flags.push_back("empty-block " + std::to_string(a + 1) + "," + std::to_string(b + 1));
      }
    }
  return r;
}

TauMatrix initial_tau(const Adjacency& x, int q, int restart, std::uint64_t seed) {
  const int n = x.n();
  TauMatrix t{Eigen::MatrixXd::Zero(n, q)};
  if (q == 1) {
    t.values.setOnes();
    return t;
  }
  if (restart == 0) {
    std::vector<std::int64_t> degree(n, 0);
    for (int i = 0; i < n; ++i) {
      const auto r = x.row(i);
      for (int j = 0; j < n; ++j)
        if (r[j]) {
          ++degree[i];
          ++degree[j];
        }
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return degree[a] < degree[b]; });
    // Soft one-hot on the quantile bin: 0.8 on the bin, the rest spread evenly.
    const double off = 0.2 / (q - 1);
    for (int rank = 0; rank < n; ++rank) {
      const int bin = static_cast<int>(static_cast<std::int64_t>(rank) * q / n);
      t.values.row(order[rank]).setConstant(off);
      t.values(order[rank], bin) = 0.8;
    }
    return t;
  }
  Stream rng(sub_seed(seed, static_cast<std::uint64_t>(restart)), kInitStream);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < q; ++k) s += t.values(i, k) = rng.exponential();
    t.values.row(i) /= s;
  }
  return t;
}

namespace {

FitResult run_restart(const Adjacency& x, const Adjacency& xt, TauMatrix tau, const VemOptions& opts) {
  FitResult fit;
  fit.restarts_used = 1;
  MStepResult ms = m_step(x, tau);
  double j = elbo(x, tau, ms.params);
  fit.objective_trace.push_back(j);
  for (int it = 1; it <= opts.max_iter; ++it) {
    TauUpdate up = update_tau_impl(x, xt, tau, j, ms.params, opts.tau);
    MStepResult next = m_step(x, up.tau);
    const double j_next = elbo(x, up.tau, next.params);
    tau = std::move(up.tau);
    ms = std::move(next);
    fit.objective_trace.push_back(j_next);
    fit.iterations = it;
    if (up.stalled) fit.flags.push_back("tau-stall");
    const double gain = j_next - j;
    j = j_next;
    if (gain < opts.tol) {
      fit.converged = true;
      break;
    }
  }
  for (auto& f : ms.flags) fit.flags.push_back(f);
  fit.params = std::move(ms.params);
  fit.tau = std::move(tau);
  return fit;
}

}  // namespace

FitResult vem_fit_from(const Adjacency& x, const TauMatrix& init, const VemOptions& opts) {
  check_shapes(x, init);
  if (x.n() < 2) throw Error(ErrorKind::Precondition, "variational EM needs n >= 2");
  init.validate();
  return run_restart(x, x.transposed(), init, opts);
}

FitResult vem_fit(const Adjacency& x, int q, const VemOptions& opts) {
  if (x.n() < 2) throw Error(ErrorKind::Precondition, "variational EM needs n >= 2");
  if (q < 1) throw Error(ErrorKind::Validation, "q must be at least 1");
  const int restarts = std::max(1, opts.restarts);
  const Adjacency xt = x.transposed();

  std::vector<FitResult> fits(restarts);
  auto run = [&](int r) { fits[r] = run_restart(x, xt, initial_tau(x, q, r, opts.seed), opts); };
  const int threads = std::clamp(opts.threads, 1, restarts);
  if (threads == 1) {
    for (int r = 0; r < restarts; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int r = t; r < restarts; r += threads) run(r);
      });
    for (auto& th : pool) th.join();
  }

  int best = 0;
  for (int r = 1; r < restarts; ++r)
    if (fits[r].objective_trace.back() > fits[best].objective_trace.back()) best = r;
  FitResult out = std::move(fits[best]);
  out.restarts_used = restarts;
  return out;
}

PinskerCheck tv_pinsker_check(const TauMatrix& tau, const PosteriorTable& table, const Labels& z_star) {
  if (tau.n() != table.n() || static_cast<int>(z_star.size()) != table.n())
    throw Error(ErrorKind::Shape, "tau, table and z* disagree on n");
  double d = 1.0;
  for (int i = 0; i < tau.n(); ++i) d *= tau.values(i, z_star[i]);
  const double p = table.probability(z_star);
  PinskerCheck c;
  c.lhs = std::abs(d - p);
  if (p == 0.0) {
    c.rhs = std::numeric_limits<double>::infinity();
    c.ok = true;
    return c;
  }
  c.rhs = std::sqrt(-0.5 * std::log(p));
  c.ok = c.lhs <= c.rhs + 1e-12;
  return c;
}

}  // namespace sbm
