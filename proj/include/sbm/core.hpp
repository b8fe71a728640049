#pragma once

#include "sbm/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sbm {

inline constexpr double kSymmetryTol = 1e-9;
inline constexpr int kMaxEnumeratedQ = 8;

// Draws z_i ~ Mult(alpha) i.i.d., then X_ij ~ Bernoulli(pi[z_i][z_j]) for i != j.
// Each label and each ordered pair owns its own counter stream (see rng.hpp),
// so any single entry can be regenerated without building the whole graph.
LabeledGraph sample_graph(const SbmParams& params, int n, std::uint64_t seed);

int sample_label(const Eigen::VectorXd& alpha, std::uint64_t seed, int i);
bool sample_edge(const Eigen::MatrixXd& pi, std::uint64_t seed, int i, int j, int zi, int zj);

struct Violation {
  std::string assumption;  // "A1".."A4"
  std::string detail;
};

struct AssumptionReport {
  bool a1_ok = true;
  bool a2_ok = true;
  bool a3_ok = true;
  std::optional<bool> a4_ok;  // only evaluated when labels are supplied
  double zeta = 0.0;
  double gamma = 0.0;
  int n0 = 1;
  std::vector<Violation> violations;

  bool all_ok() const { return a1_ok && a2_ok && a3_ok && a4_ok.value_or(true); }
};

// A4 is only enforced when labels.size() >= n0.
AssumptionReport check_assumptions(const SbmParams& params, const std::optional<Labels>& labels,
                                   double zeta, double gamma, int n0 = 1);

// All sigma with max |pi[sigma(q)][sigma(l)] - pi[q][l]| <= tol, in lexicographic order.
std::vector<Permutation> symmetry_group(const Eigen::MatrixXd& pi, double tol = kSymmetryTol);

struct ParamDistance {
  double err_pi = 0.0;
  double err_alpha = 0.0;
  // Class sigma(q) of `a` is matched with class q of `b`.
  Permutation best_perm;
};

// Sup-norm distance on pi after the best simultaneous relabeling of `a`.
ParamDistance param_distance(const SbmParams& a, const SbmParams& b);

// Mismatch fraction, quotiented by the symmetry group of pi.
double label_error(const Labels& z, const Labels& z_star, const Eigen::MatrixXd& pi,
                   double tol = kSymmetryTol);

// Per-class counts N_q(z).
std::vector<int> class_counts(const Labels& z, int q);

}  // namespace sbm
