#include "sbm/moments.hpp"

#include "sbm/core.hpp"
#include "sbm/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace sbm {

namespace {

using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

constexpr std::uint64_t kOrderingStream = 0x4f524452ULL;  // "ORDR"

MatL oriented_pi(const SbmParams& p, Orientation o) {
  MatL pi = p.pi.cast<long double>();
  if (o == Orientation::Column) pi.transposeInPlace();
  return pi;
}

void check_q(int q) {
  if (q < 1) throw Error(ErrorKind::Validation, "q must be at least 1");
  if (q > kMaxMomentQ)
    throw Error(ErrorKind::SizeLimit, "moment recovery is limited to Q <= " + std::to_string(kMaxMomentQ));
}

MatL hankel(const std::vector<double>& u, int rows, int cols, int skip_row = -1) {
  MatL m(skip_row >= 0 ? rows - 1 : rows, cols);
  int r = 0;
  for (int i = 0; i < rows; ++i) {
    if (i == skip_row) continue;
    for (int j = 0; j < cols; ++j) m(r, j) = u[i + j];
    ++r;
  }
  return m;
}

long double det(const MatL& m) { return m.rows() == 0 ? 1.0L : m.determinant(); }

long double minor_det(const MatL& m, int skip_r, int skip_c) {
  const auto n = m.rows();
  MatL s(n - 1, n - 1);
  for (Eigen::Index i = 0, si = 0; i < n; ++i) {
    if (i == skip_r) continue;
    for (Eigen::Index j = 0, sj = 0; j < n; ++j) {
      if (j == skip_c) continue;
      s(si, sj++) = m(i, j);
    }
    ++si;
  }
  return det(s);
}

// Covariance of the nested pattern frequencies: the event behind u_b is
// contained in the one behind u_a for a <= b, so E[I_a I_b] = u_max(a,b).
long double nested_cov(const std::vector<double>& u, int a, int b, double g) {
  if (a == 0 || b == 0) return 0.0L;
  const long double ua = u[a], ub = u[b];
  return (static_cast<long double>(u[std::max(a, b)]) - ua * ub) / g;
}

std::optional<double> clamp_unit(long double v, double tol) {
  if (v < -tol || v > 1.0L + tol) return std::nullopt;
  return static_cast<double>(std::clamp<long double>(v, 0.0L, 1.0L));
}

}  // namespace

MomentSet moments_analytic(const SbmParams& params, Orientation orientation) {
  params.validate();
  const int q = params.q();
  const MatL pi = oriented_pi(params, orientation);
  const VecL alpha = params.alpha.cast<long double>();
  const VecL r = pi * alpha;

  MomentSet m;
  m.q = q;
  m.orientation = orientation;
  m.source = MomentSource::Analytic;
  m.u.resize(2 * q);
  for (int i = 0; i < 2 * q; ++i) {
    long double s = 0;
    for (int k = 0; k < q; ++k) s += alpha[k] * std::pow(r[k], static_cast<long double>(i));
    m.u[i] = static_cast<double>(s);
  }
  m.u[0] = 1.0;
  m.big_u.resize(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) {
      long double s = 0;
      for (int k = 0; k < q; ++k)
        for (int l = 0; l < q; ++l)
          s += std::pow(r[k], static_cast<long double>(i)) * alpha[k] * pi(k, l) * alpha[l] *
               std::pow(r[l], static_cast<long double>(j));
      m.big_u(i, j) = static_cast<double>(s);
    }
  if (q == 2) {
    long double d = 0, c = 0;
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) {
        c += alpha[a] * alpha[b] * pi(a, b) * pi(b, a);
        for (int e = 0; e < q; ++e) d += alpha[a] * alpha[b] * alpha[e] * pi(a, b) * pi(b, e) * pi(e, a);
      }
    m.d = static_cast<double>(d);
    m.c = static_cast<double>(c);
  }
  return m;
}

MomentSet moments_empirical(const SbmParams& params, std::int64_t graphs, int n, std::uint64_t seed,
                            const EmpiricalMomentOptions& opts) {
  params.validate();
  const int q = params.q();
  check_q(q);
  if (graphs <= 0) throw Error(ErrorKind::Precondition, "need at least one sampled graph");
  if (n < 2 * q) throw Error(ErrorKind::Precondition, "patterns need n >= 2Q");
  const bool cycles = q == 2 && n >= 4;
  const int orderings = std::max(1, opts.average_orderings);

  struct Counts {
    std::vector<std::int64_t> u, big_u;
    std::int64_t d = 0, c = 0;
  };
  auto zero = [&] { return Counts{std::vector<std::int64_t>(2 * q, 0), std::vector<std::int64_t>(q * q, 0)}; };

  auto run = [&](std::int64_t begin, std::int64_t end, Counts& acc) {
    std::vector<int> perm(n);
    for (std::int64_t g = begin; g < end; ++g) {
      const std::uint64_t gs = sub_seed(seed, static_cast<std::uint64_t>(g));
      Stream order_rng(gs, kOrderingStream);
      for (int o = 0; o < orderings; ++o) {
        std::iota(perm.begin(), perm.end(), 0);
        if (opts.average_orderings > 0)
          for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[order_rng.below(i + 1)]);
        auto label = [&](int v) { return sample_label(params.alpha, gs, perm[v]); };
        // X(a, b) in the (possibly relabeled, possibly transposed) graph.
        auto x = [&](int a, int b) {
          if (opts.orientation == Orientation::Column) std::swap(a, b);
          return sample_edge(params.pi, gs, perm[a], perm[b], label(a), label(b));
        };
        // u_i: row 1 starts with i ones (columns 2..i+1).
        int run_len = 0;
        while (run_len < 2 * q - 1 && x(0, run_len + 1)) ++run_len;
        for (int i = 1; i <= run_len; ++i) ++acc.u[i];
        // U_ij: row 1 starts with i+1 ones, row 2 ends with j ones.
        const int head = std::min(run_len, q);  // ones in row 1 beyond the diagonal, capped at Q
        if (head >= 1) {
          int tail = 0;
          while (tail < q - 1 && x(1, n - 1 - tail)) ++tail;
          for (int i = 0; i + 1 <= head && i < q; ++i)
            for (int j = 0; j <= tail; ++j) ++acc.big_u[i * q + j];
        }
        if (cycles) {
          const bool e01 = x(0, 1);
          if (e01 && x(1, 2) && x(2, 0)) ++acc.d;
          if (e01 && x(1, 0)) ++acc.c;
        }
      }
    }
  };

  const int threads = static_cast<int>(std::clamp<std::int64_t>(opts.threads, 1, graphs));
  std::vector<Counts> parts(threads, zero());
  if (threads == 1) {
    run(0, graphs, parts[0]);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] { run(graphs * t / threads, graphs * (t + 1) / threads, parts[t]); });
    for (auto& th : pool) th.join();
  }
  Counts total = zero();
  for (const auto& p : parts) {
    for (int i = 0; i < 2 * q; ++i) total.u[i] += p.u[i];
    for (int i = 0; i < q * q; ++i) total.big_u[i] += p.big_u[i];
    total.d += p.d;
    total.c += p.c;
  }

  const double trials = static_cast<double>(graphs) * orderings;
  const double g = static_cast<double>(graphs);
  auto se = [&](double p) { return std::sqrt(std::max(0.0, p * (1.0 - p)) / g); };
  MomentSet m;
  m.q = q;
  m.source = MomentSource::Empirical;
  m.sample_count = graphs;
  m.orientation = opts.orientation;
  m.u.assign(2 * q, 0.0);
  m.u_se.assign(2 * q, 0.0);
  m.u[0] = 1.0;
  for (int i = 1; i < 2 * q; ++i) {
    m.u[i] = static_cast<double>(total.u[i]) / trials;
    m.u_se[i] = se(m.u[i]);
  }
  m.big_u.resize(q, q);
  m.big_u_se.resize(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) {
      m.big_u(i, j) = static_cast<double>(total.big_u[i * q + j]) / trials;
      m.big_u_se(i, j) = se(m.big_u(i, j));
    }
  if (cycles) {
    m.d = static_cast<double>(total.d) / trials;
    m.c = static_cast<double>(total.c) / trials;
    m.d_se = se(*m.d);
    m.c_se = se(*m.c);
  }
  return m;
}

namespace {

void check_shape(const MomentSet& m) {
  check_q(m.q);
  if (static_cast<int>(m.u.size()) != 2 * m.q)
    throw Error(ErrorKind::Shape, "moment set needs u_0..u_{2Q-1}");
  if (m.big_u.rows() != m.q || m.big_u.cols() != m.q)
    throw Error(ErrorKind::Shape, "moment set needs a QxQ U matrix");
}

}  // namespace

HankelDiagnostics hankel_diagnostics(const MomentSet& m, const RecoveryOptions& opts) {
  check_shape(m);
  const int q = m.q;
  const MatL mq = hankel(m.u, q, q);
  HankelDiagnostics h;
  const long double d = det(mq);
  long double scale = 1;
  for (int i = 0; i < q; ++i) scale *= mq.row(i).norm();
  long double threshold = opts.singularity_tol * scale;

  if (m.source == MomentSource::Empirical && m.sample_count > 0) {
    // d det / d u_k = sum over Hankel positions i + j = k of the cofactors.
    VecL grad = VecL::Zero(2 * q);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) grad[i + j] += ((i + j) % 2 ? -1.0L : 1.0L) * minor_det(mq, i, j);
    long double var = 0;
    for (int a = 1; a < 2 * q; ++a)
      for (int b = 1; b < 2 * q; ++b)
        var += grad[a] * grad[b] * nested_cov(m.u, a, b, static_cast<double>(m.sample_count));
    h.std_error = static_cast<double>(std::sqrt(std::max<long double>(0, var)));
    threshold = std::max<long double>(threshold, opts.z_crit * h.std_error);
  }
  h.det_mq = static_cast<double>(d);
  h.threshold = static_cast<double>(threshold);
  h.degenerate = !(std::abs(d) > threshold);
  return h;
}

RecoveryResult recover_from_moments(const MomentSet& m, const RecoveryOptions& opts) {
  check_shape(m);
  const int q = m.q;
  const auto diag = hankel_diagnostics(m, opts);
  if (diag.degenerate)
    throw Error(ErrorKind::DegenerateMoments,
                "det(M_Q) = " + std::to_string(diag.det_mq) +
                    " is indistinguishable from 0: coordinates of r are not distinct");

  VecL dk(q + 1);
  for (int k = 0; k <= q; ++k) dk[k] = det(hankel(m.u, q + 1, q, k));
  const long double lead = dk[q];
  // Monic coefficients of B: coef[k] multiplies x^k.
  VecL coef(q + 1);
  for (int k = 0; k <= q; ++k) coef[k] = (((k + q) % 2) ? -1.0L : 1.0L) * dk[k] / lead;

  auto eval = [&](long double x) {
    long double v = 0;
    for (int k = q; k >= 0; --k) v = v * x + coef[k];
    return v;
  };
  auto deriv = [&](long double x) {
    long double v = 0;
    for (int k = q; k >= 1; --k) v = v * x + k * coef[k];
    return v;
  };

  std::vector<long double> roots;
  if (q == 1) {
    roots.push_back(-coef[0]);
  } else {
    MatL companion = MatL::Zero(q, q);
    for (int i = 1; i < q; ++i) companion(i, i - 1) = 1.0L;
    for (int i = 0; i < q; ++i) companion(i, q - 1) = -coef[i];
    Eigen::EigenSolver<MatL> es(companion, false);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::RootExtraction, "companion eigensolver failed");
    for (int i = 0; i < q; ++i) {
      const auto ev = es.eigenvalues()[i];
      if (std::abs(ev.imag()) > opts.root_imag_tol)
        throw Error(ErrorKind::RootExtraction, "B has a complex root");
      roots.push_back(ev.real());
    }
  }
  for (auto& r : roots) {
    const long double slope = deriv(r);
    if (slope != 0) r -= eval(r) / slope;
  }
  std::sort(roots.begin(), roots.end());

  RecoveryResult res;
  for (auto r : roots) {
    if (r < -opts.clamp_tol || r > 1.0L + opts.clamp_tol)
      throw Error(ErrorKind::RootExtraction, "root of B outside [0,1]");
    res.r_roots.push_back(static_cast<double>(r));
    res.residuals.push_back(static_cast<double>(std::abs(eval(r))));  // monic: already / |D_Q|
  }
  for (int i = 1; i < q; ++i)
    if (!(roots[i] > roots[i - 1])) throw Error(ErrorKind::RootExtraction, "roots of B are not distinct");

  MatL vander(q, q);
  for (int i = 0; i < q; ++i)
    for (int k = 0; k < q; ++k) vander(i, k) = std::pow(roots[k], static_cast<long double>(i));
  const auto lu = vander.fullPivLu();
  const MatL mq = hankel(m.u, q, q);
  // R^-1 X R^-t = R^-1 (R^-1 X^t)^t
  auto sandwich = [&](const MatL& x) -> MatL {
    const MatL left = lu.solve(x);
    return lu.solve(left.transpose()).transpose();
  };
  const MatL a = sandwich(mq);
  const MatL inner = sandwich(m.big_u.cast<long double>());

  bool clamped = false;
  res.params.alpha.resize(q);
  long double sum = 0;
  for (int k = 0; k < q; ++k) {
    const long double v = a(k, k);
    if (!(v > 0))
      throw Error(ErrorKind::OutOfBounds, "recovered alpha_" + std::to_string(k + 1) + " is not positive");
    const auto c = clamp_unit(v, opts.clamp_tol);
    if (!c) throw Error(ErrorKind::OutOfBounds, "recovered alpha outside [0,1]");
    clamped |= *c != static_cast<double>(v);
    res.params.alpha[k] = *c;
    sum += *c;
  }
  res.params.alpha /= static_cast<double>(sum);
  res.params.pi.resize(q, q);
  for (int k = 0; k < q; ++k)
    for (int l = 0; l < q; ++l) {
      const long double v = inner(k, l) / (a(k, k) * a(l, l));
      const auto c = clamp_unit(v, opts.clamp_tol);
      if (!c)
        throw Error(ErrorKind::OutOfBounds, "recovered pi_" + std::to_string(k + 1) + std::to_string(l + 1) +
                                                " = " + std::to_string(static_cast<double>(v)) + " outside [0,1]");
      clamped |= *c != static_cast<double>(v);
      res.params.pi(k, l) = *c;
    }
  if (m.orientation == Orientation::Column) {
    res.params.pi.transposeInPlace();
    res.condition_flags.push_back("column-orientation");
  }
  if (clamped) res.condition_flags.push_back("clamped");
  return res;
}

RecoveryResult recover_q2_n4(const MomentSet& m, const RecoveryOptions& opts) {
  check_shape(m);
  if (m.q != 2) throw Error(ErrorKind::Precondition, "the n = 4 special case needs Q = 2");
  if (!m.d) throw Error(ErrorKind::Precondition, "the n = 4 special case needs the 3-cycle moment d");
  if (!hankel_diagnostics(m, opts).degenerate) return recover_from_moments(m, opts);
  if (!m.c) throw Error(ErrorKind::Precondition, "coinciding r coordinates need the 2-cycle moment c");

  const long double a = m.u[1];
  const long double c = *m.c;
  const long double d = *m.d;
  const long double spread = c - a * a;  // alpha_1 alpha_2 (pi_11 - pi_12)^2
  long double tol = opts.singularity_tol * std::max<long double>(c, a * a);
  if (m.source == MomentSource::Empirical && m.c_se && m.u_se.size() > 1) {
    const long double se = std::sqrt(static_cast<long double>(*m.c_se) * *m.c_se +
                                     4 * a * a * static_cast<long double>(m.u_se[1]) * m.u_se[1]);
    tol = std::max<long double>(tol, opts.z_crit * se);
  }
  if (std::abs(spread) <= tol)
    throw Error(ErrorKind::DegenerateModel, "c = a^2: all pi entries equal, alpha cannot be found");

  const long double e = std::cbrt(d - a * a * a);
  RecoveryResult res;
  res.condition_flags.push_back("equal-r-path");
  if (std::abs(spread - e * e) > std::max<long double>(tol, 1e-9))
    res.condition_flags.push_back("inconsistent-c");
  res.params.alpha = Eigen::Vector2d(0.5, 0.5);
  res.params.pi.resize(2, 2);
  const auto within = clamp_unit(a + e, opts.clamp_tol);
  const auto between = clamp_unit(a - e, opts.clamp_tol);
  if (!within || !between) throw Error(ErrorKind::OutOfBounds, "recovered pi outside [0,1]");
  res.params.pi << *within, *between, *between, *within;
  res.r_roots = {static_cast<double>(a), static_cast<double>(a)};
  return res;
}

}  // namespace sbm
