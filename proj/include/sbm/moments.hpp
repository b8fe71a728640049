#pragma once

// Parameter recovery from edge-pattern probabilities.
//
// With r = pi . alpha sorted increasingly and
//   u_i     = sum_k alpha_k r_k^i                      (i = 0..2Q-1)
//   U_{i,j} = sum_{k,l} r_k^i alpha_k pi_kl alpha_l r_l^j   (0 <= i,j < Q)
// the Hankel matrix M_Q = [u_{i+j}] factors as R A R^t with R the Vandermonde
// matrix of r and A = diag(alpha). The r_q are the roots of
//   B(x) = sum_{k=0}^{Q} (-1)^{k+Q} D_k x^k,   D_k = det(M without row k),
// after which alpha = diag(R^-1 M_Q R^-t) and pi = A^-1 R^-1 U R^-t A^-1.

#include "sbm/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sbm {

inline constexpr int kMaxMomentQ = 6;

enum class MomentSource { Analytic, Empirical };

// Row: moments of r = pi . alpha. Column: moments of r' = pi^t . alpha, i.e.
// the same patterns read down columns; recovery transposes pi back.
enum class Orientation { Row, Column };

struct MomentSet {
  int q = 0;
  std::vector<double> u;  // u_0..u_{2Q-1}, u_0 = 1
  Eigen::MatrixXd big_u;  // U_{i,j}, 0 <= i,j < Q
  // Q = 2 only: probability of the 3-cycle X_12 = X_23 = X_31 = 1 ...
  std::optional<double> d;
  // ... and of the 2-cycle X_12 = X_21 = 1 (the r'' moment).
  std::optional<double> c;
  MomentSource source = MomentSource::Analytic;
  std::int64_t sample_count = 0;
  Orientation orientation = Orientation::Row;

  // Binomial standard errors sqrt(p(1-p)/G); empty / unset for analytic sets.
  std::vector<double> u_se;
  Eigen::MatrixXd big_u_se;
  std::optional<double> d_se;
  std::optional<double> c_se;
};

MomentSet moments_analytic(const SbmParams& params, Orientation orientation = Orientation::Row);

struct EmpiricalMomentOptions {
  // 0 reads the literal row-1/row-2 patterns. K > 0 averages each graph over
  // K uniformly random vertex relabelings (variance reduction).
  int average_orderings = 0;
  Orientation orientation = Orientation::Row;
  int threads = 1;
};

// Pattern frequencies over `graphs` independent graphs of n vertices. Graph g
// uses seed sub_seed(seed, g); entries are drawn lazily from the same streams
// sample_graph uses, so they match the corresponding full graphs exactly.
MomentSet moments_empirical(const SbmParams& params, std::int64_t graphs, int n, std::uint64_t seed,
                            const EmpiricalMomentOptions& opts = {});

struct RecoveryOptions {
  // |D_Q| below singularity_tol * prod_i ||row_i(M_Q)|| is treated as zero.
  double singularity_tol = 1e-13;
  // Empirical sets: |D_Q| below z_crit standard errors is treated as zero.
  double z_crit = 4.0;
  double root_imag_tol = 1e-8;
  double clamp_tol = 1e-6;
};

struct RecoveryResult {
  SbmParams params;
  std::vector<double> r_roots;    // increasing
  std::vector<double> residuals;  // |B(r_q)| / |D_Q|
  std::vector<std::string> condition_flags;
};

RecoveryResult recover_from_moments(const MomentSet& m, const RecoveryOptions& opts = {});

// Q = 2 recovery that also handles coinciding r coordinates when the 3-cycle
// moment d is available: alpha = (1/2, 1/2), pi_11 = pi_22 = a + e,
// pi_12 = pi_21 = a - e with a = u_1 and e = cbrt(d - a^3).
RecoveryResult recover_q2_n4(const MomentSet& m, const RecoveryOptions& opts = {});

// Determinant of M_Q and its degeneracy threshold, exposed for diagnostics.
struct HankelDiagnostics {
  double det_mq = 0.0;
  double threshold = 0.0;
  double std_error = 0.0;  // delta-method s.e. of det(M_Q); 0 for analytic sets
  bool degenerate = false;
};

HankelDiagnostics hankel_diagnostics(const MomentSet& m, const RecoveryOptions& opts = {});

}  // namespace sbm
