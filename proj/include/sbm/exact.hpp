#pragma once

// Exact likelihoods and posteriors by enumerating all Q^n label vectors.
// Only meant for small graphs: every routine here is O(Q^n n^2).

#include "sbm/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sbm {

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 24;

struct EnumerationOptions {
  std::uint64_t cap = kDefaultEnumerationCap;
  // Work is split in fixed chunks and reduced in index order, so results do
  // not depend on the thread count.
  int threads = 1;
};

// Q^n, or throws Error(SizeLimit) when it exceeds `cap`.
std::uint64_t enumeration_size(int n, int q, std::uint64_t cap);

// L1: sum over ordered pairs i != j of X log pi + (1-X) log(1-pi), with
// 0 log 0 = 0. -inf when an observed pair contradicts a 0/1 entry of pi.
double complete_loglik(const Adjacency& x, const Labels& z, const Eigen::MatrixXd& pi);

double prior_loglik(const Labels& z, const Eigen::VectorXd& alpha);

// L2 = log sum_z exp(L1(z) + prior(z)), max-shifted.
double marginal_loglik(const Adjacency& x, const SbmParams& params,
                       const EnumerationOptions& opts = {});

// Exact posterior P(Z = . | X). Vector z maps to index sum_i z_i Q^(n-1-i),
// so index order is lexicographic order on label vectors.
class PosteriorTable {
 public:
  PosteriorTable(int n, int q, std::vector<long double> log_probs, long double log_evidence);

  int n() const { return n_; }
  int q() const { return q_; }
  std::uint64_t size() const { return log_probs_.size(); }

  double log_evidence() const { return static_cast<double>(log_evidence_); }
  long double log_evidence_extended() const { return log_evidence_; }

  double probability(std::uint64_t index) const;
  double probability(const Labels& z) const { return probability(index_of(z)); }
  long double log_probability(std::uint64_t index) const { return log_probs_[index]; }

  std::uint64_t index_of(const Labels& z) const;
  Labels labels_at(std::uint64_t index) const;

  // P(Z_i = q | X) as an n x Q matrix.
  TauMatrix marginals() const;

  // Posterior mass of the class [z] = { sigma(z) : sigma in symmetry_group(pi) }.
  double class_mass(const Labels& z, const Eigen::MatrixXd& pi, double tol = 1e-9) const;
  // Distinct members of [z].
  std::vector<std::uint64_t> class_members(const Labels& z, const Eigen::MatrixXd& pi,
                                           double tol = 1e-9) const;

  // Label vector as digit string, 1-based ("1221"); dash separated when Q > 9.
  std::string label_string(std::uint64_t index) const;

 private:
  int n_;
  int q_;
  std::vector<long double> log_probs_;
  long double log_evidence_;
};

PosteriorTable posterior_table(const Adjacency& x, const SbmParams& params,
                               const EnumerationOptions& opts = {});

struct RatioStat {
  double value = 0.0;      // sum_{[z] != [z*]} P([z]|X) / P([z*]|X)
  double class_mass = 0.0; // P([z*]|X)
  bool zero_mass = false;  // z* has no posterior mass; value is +inf
};

RatioStat posterior_ratio_stat(const PosteriorTable& table, const Labels& z_star,
                               const Eigen::MatrixXd& pi, double tol = 1e-9);

struct KlResult {
  double value = 0.0;
  long double extended = 0.0L;     // same sum before rounding to double
  bool support_violation = false;  // value is +inf
};

// K(D_tau, P). Each tau row is renormalized through the complement of its
// largest entry so near one-hot rows keep their small off-class mass.
KlResult kl_divergence(const TauMatrix& tau, const PosteriorTable& p);
KlResult kl_divergence(const PosteriorTable& d, const PosteriorTable& p);

struct FitResult {
  SbmParams params;
  std::vector<double> objective_trace;
  int iterations = 0;
  int restarts_used = 0;
  bool converged = false;
  // Per-vertex class probabilities at the returned parameters.
  TauMatrix tau;
  // e.g. "empty-block q,l" when an M-step denominator vanished.
  std::vector<std::string> flags;
};

struct ExactEmOptions {
  int max_iter = 500;
  double tol = 1e-10;
  EnumerationOptions enumeration;
};

// EM with an exact E-step. Trace holds L2 at each parameter iterate.
FitResult exact_em_fit(const Adjacency& x, const SbmParams& init, const ExactEmOptions& opts = {});

}  // namespace sbm
