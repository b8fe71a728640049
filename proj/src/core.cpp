#include "sbm/core.hpp"

#include "sbm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sbm {

int sample_label(const Eigen::VectorXd& alpha, std::uint64_t seed, int i) {
  const double u = to_unit(derive(seed, kLabelStream, static_cast<std::uint64_t>(i)));
  double cdf = 0.0;
  const int q = static_cast<int>(alpha.size());
  for (int k = 0; k + 1 < q; ++k) {
    cdf += alpha[k];
    if (u < cdf) return k;
  }
  return q - 1;
}

bool sample_edge(const Eigen::MatrixXd& pi, std::uint64_t seed, int i, int j, int zi, int zj) {
  const double u = to_unit(derive(seed, kEdgeStream, static_cast<std::uint64_t>(i),
                                  static_cast<std::uint64_t>(j)));
  return u < pi(zi, zj);
}

LabeledGraph sample_graph(const SbmParams& params, int n, std::uint64_t seed) {
  params.validate();
  if (n < 0) throw Error(ErrorKind::Validation, "n must be nonnegative");
  LabeledGraph g;
  g.q = params.q();
  g.adjacency = Adjacency(n);
  Labels z(n);
  for (int i = 0; i < n; ++i) z[i] = sample_label(params.alpha, seed, i);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && sample_edge(params.pi, seed, i, j, z[i], z[j])) g.adjacency.set(i, j, true);
  g.labels = std::move(z);
  return g;
}

std::vector<int> class_counts(const Labels& z, int q) {
  std::vector<int> counts(q, 0);
  for (int v : z) {
    if (v < 0 || v >= q) throw Error(ErrorKind::Validation, "label outside 1..Q");
    ++counts[v];
  }
  return counts;
}

AssumptionReport check_assumptions(const SbmParams& params, const std::optional<Labels>& labels,
                                   double zeta, double gamma, int n0) {
  params.validate();
  const int q = params.q();
  if (!(gamma > 0.0 && gamma < 1.0 / q))
    throw Error(ErrorKind::InvalidBound, "gamma must satisfy 0 < gamma < 1/Q");
  if (!(zeta > 0.0 && zeta <= 0.5))
    throw Error(ErrorKind::InvalidBound, "zeta must satisfy 0 < zeta <= 1/2");

  AssumptionReport rep;
  rep.zeta = zeta;
  rep.gamma = gamma;
  rep.n0 = n0;
  const auto& pi = params.pi;

  for (int a = 0; a < q; ++a)
    for (int b = a + 1; b < q; ++b) {
      bool same = true;
      for (int l = 0; l < q && same; ++l)
        same = pi(a, l) == pi(b, l) && pi(l, a) == pi(l, b);
      if (same) {
        rep.a1_ok = false;
        std::ostringstream os;
        os << "classes " << a + 1 << " and " << b + 1 << " have equal rows and columns in pi";
        rep.violations.push_back({"A1", os.str()});
      }
    }

  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      const double p = pi(a, b);
      if (p > 0.0 && p < 1.0 && (p < zeta || p > 1.0 - zeta)) {
        rep.a2_ok = false;
        std::ostringstream os;
        os.precision(17);
        os << "pi[" << a + 1 << "][" << b + 1 << "]=" << p << " outside [zeta, 1-zeta]";
        rep.violations.push_back({"A2", os.str()});
      }
    }

  for (int a = 0; a < q; ++a) {
    const double p = params.alpha[a];
    if (p < gamma || p > 1.0 - gamma) {
      rep.a3_ok = false;
      std::ostringstream os;
      os.precision(17);
      os << "alpha[" << a + 1 << "]=" << p << " outside [gamma, 1-gamma]";
      rep.violations.push_back({"A3", os.str()});
    }
  }

  if (labels) {
    const int n = static_cast<int>(labels->size());
    bool ok = true;
    if (n >= n0 && n > 0) {
      const auto counts = class_counts(*labels, q);
      for (int a = 0; a < q; ++a)
        if (static_cast<double>(counts[a]) / n < gamma) {
          ok = false;
          std::ostringstream os;
          os << "class " << a + 1 << " has " << counts[a] << " of " << n << " vertices";
          rep.violations.push_back({"A4", os.str()});
        }
    }
    rep.a4_ok = ok;
  }
  return rep;
}

namespace {

void check_enumerable(int q) {
  if (q > kMaxEnumeratedQ)
    throw Error(ErrorKind::SizeLimit,
                "permutation enumeration limited to Q <= " + std::to_string(kMaxEnumeratedQ));
}

double permuted_sup(const Eigen::MatrixXd& a, const std::vector<int>& s, const Eigen::MatrixXd& b) {
  double worst = 0.0;
  const int q = static_cast<int>(s.size());
  for (int k = 0; k < q; ++k)
    for (int l = 0; l < q; ++l) worst = std::max(worst, std::abs(a(s[k], s[l]) - b(k, l)));
  return worst;
}

}  // namespace

std::vector<Permutation> symmetry_group(const Eigen::MatrixXd& pi, double tol) {
  const int q = static_cast<int>(pi.rows());
  check_enumerable(q);
  std::vector<int> s(q);
  std::iota(s.begin(), s.end(), 0);
  std::vector<Permutation> group;
  do {
    if (permuted_sup(pi, s, pi) <= tol) group.emplace_back(s);
  } while (std::next_permutation(s.begin(), s.end()));
  return group;
}

ParamDistance param_distance(const SbmParams& a, const SbmParams& b) {
  const int q = a.q();
  if (b.q() != q || a.pi.rows() != q || b.pi.rows() != q)
    throw Error(ErrorKind::Shape, "parameter sets have different Q");
  check_enumerable(q);
  std::vector<int> s(q);
  std::iota(s.begin(), s.end(), 0);
  ParamDistance best;
  bool have = false;
  do {
    const double e_pi = permuted_sup(a.pi, s, b.pi);
    double e_alpha = 0.0;
    for (int k = 0; k < q; ++k) e_alpha = std::max(e_alpha, std::abs(a.alpha[s[k]] - b.alpha[k]));
    // Lexicographic enumeration order makes "first seen" the lexicographic tie-break.
    if (!have || e_pi < best.err_pi || (e_pi == best.err_pi && e_alpha < best.err_alpha)) {
      best = {e_pi, e_alpha, Permutation(s)};
      have = true;
    }
  } while (std::next_permutation(s.begin(), s.end()));
  return best;
}

double label_error(const Labels& z, const Labels& z_star, const Eigen::MatrixXd& pi, double tol) {
  if (z.size() != z_star.size()) throw Error(ErrorKind::Shape, "label vectors differ in length");
  if (z.empty()) return 0.0;
  const auto n = static_cast<double>(z.size());
  double best = 1.0;
  for (const auto& sigma : symmetry_group(pi, tol)) {
    std::size_t miss = 0;
    for (std::size_t i = 0; i < z.size(); ++i) miss += sigma(z[i]) != z_star[i];
    best = std::min(best, static_cast<double>(miss) / n);
  }
  return best;
}

}  // namespace sbm
