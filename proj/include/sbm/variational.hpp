#pragma once

// Mean-field variational EM over row-wise multinomial label distributions.

#include "sbm/exact.hpp"
#include "sbm/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sbm {

// J(X; tau, alpha, pi) =
//   sum_{i!=j} sum_{q,l} b_ij(q,l) tau_iq tau_jl - sum_{i,q} tau_iq (log tau_iq - log alpha_q)
// with b_ij(q,l) = X_ij log pi_ql + (1 - X_ij) log(1 - pi_ql) and 0 log 0 = 0.
double elbo(const Adjacency& x, const TauMatrix& tau, const SbmParams& params);

struct TauUpdateOptions {
  int inner_iters = 1;   // fixed-point sweeps per call
  double damping = 0.0;  // in [0,1)
};

struct TauUpdate {
  TauMatrix tau;
  double objective = 0.0;  // J at the returned tau
  double damping_used = 0.0;
  bool stalled = false;    // no acceptable step; tau is the input
};

// Coordinate ascent on tau at fixed (alpha, pi). Each sweep visits rows in
// order and sets tau_i proportional to
//   alpha_q exp( sum_{j!=i} sum_l tau_jl [b_ij(q,l) + b_ji(l,q)] ),
// which maximizes J over row i exactly. A damped step that loses more than
// 1e-9 in J is retried with damping (1 + damping) / 2, at most 8 times.
TauUpdate update_tau(const Adjacency& x, const TauMatrix& tau, const SbmParams& params,
                     const TauUpdateOptions& opts = {});

// Repeats update_tau until no entry moves by more than `tol`.
TauUpdate converge_tau(const Adjacency& x, const TauMatrix& tau, const SbmParams& params,
                       int max_sweeps = 1000, double tol = 1e-12);

struct MStepResult {
  SbmParams params;
  std::vector<std::string> flags;
};

// Closed-form maximizer of J in (alpha, pi) at fixed tau.
MStepResult m_step(const Adjacency& x, const TauMatrix& tau);

struct VemOptions {
  int restarts = 10;
  int max_iter = 500;
  double tol = 1e-8;  // absolute J gain
  std::uint64_t seed = 0;
  int threads = 1;
  TauUpdateOptions tau;
};

// Restart 0 bins vertices by in+out degree quantile; restart k >= 1 draws
// Dirichlet(1) rows from its own sub-stream of `seed`.
TauMatrix initial_tau(const Adjacency& x, int q, int restart, std::uint64_t seed);

// Runs every restart to convergence and keeps the largest final J
// (lowest restart index on ties).
FitResult vem_fit(const Adjacency& x, int q, const VemOptions& opts = {});

// Single restart from a caller-supplied tau.
FitResult vem_fit_from(const Adjacency& x, const TauMatrix& init, const VemOptions& opts = {});

struct PinskerCheck {
  double lhs = 0.0;  // |prod_i tau_{i,z*_i} - P(z*|X)|
  double rhs = 0.0;  // sqrt(-log(P(z*|X)) / 2)
  bool ok = true;
};

PinskerCheck tv_pinsker_check(const TauMatrix& tau, const PosteriorTable& table, const Labels& z_star);

}  // namespace sbm
