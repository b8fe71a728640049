#include "oracles.hpp"

#include "sbm/core.hpp"
#include "sbm/exact.hpp"
#include "sbm/variational.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sbm;

namespace {

// Right-hand side of the row-wise fixed point, evaluated directly.
Eigen::RowVectorXd fixed_point_row(const Adjacency& x, const TauMatrix& tau, const SbmParams& p, int i) {
  const int q = p.q();
  Eigen::RowVectorXd f(q);
  for (int k = 0; k < q; ++k) {
    double s = std::log(p.alpha[k]);
    for (int j = 0; j < x.n(); ++j) {
      if (j == i) continue;
      for (int l = 0; l < q; ++l) {
        const double out = x(i, j) ? std::log(p.pi(k, l)) : std::log(1 - p.pi(k, l));
        const double in = x(j, i) ? std::log(p.pi(l, k)) : std::log(1 - p.pi(l, k));
        s += tau.values(j, l) * (out + in);
      }
    }
    f[k] = s;
  }
  f = (f.array() - f.maxCoeff()).exp();
  return f / f.sum();
}

bool nondecreasing(const std::vector<double>& t, double tol = 1e-9) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] < t[i - 1] - tol) return false;
  return true;
}

}  // namespace

TEST_SUITE("variational") {

TEST_CASE("elbo: examples") {
  const auto p = SbmParams::make({0.5, 0.5}, {{0.5, 0.5}, {0.5, 0.5}});
  const TauMatrix t = TauMatrix::one_hot({0, 1}, 2);
  CHECK(elbo(Adjacency(2), t, p) == doctest::Approx(-2.772589).epsilon(1e-6));

  std::mt19937_64 rng(1);
  for (int s = 0; s < 20; ++s) {
    const auto q = oracle::random_params(rng, 3);
    const auto x = oracle::random_graph(rng, 6);
    const auto z = oracle::random_labels(rng, 6, 3);
    CHECK(elbo(x, TauMatrix::one_hot(z, 3), q) ==
          doctest::Approx(complete_loglik(x, z, q.pi) + prior_loglik(z, q.alpha)).epsilon(1e-12));
  }
}

TEST_CASE("elbo matches the direct double sum") {
  std::mt19937_64 rng(2);
  for (int s = 0; s < 50; ++s) {
    const int n = 2 + s % 6, q = 1 + s % 3;
    const auto p = oracle::random_params(rng, q);
    const auto x = oracle::random_graph(rng, n);
    const auto tau = oracle::random_tau(rng, n, q);
    CHECK(elbo(x, tau, p) == doctest::Approx(oracle::elbo(x, tau, p)).epsilon(1e-12));
  }
}

TEST_CASE("elbo: shapes and zero entries") {
  const auto p = SbmParams::make({0.5, 0.5}, {{0.0, 0.5}, {0.5, 1.0}});
  CHECK_THROWS_AS(elbo(Adjacency(3), TauMatrix::uniform(2, 2), p), Error);
  Adjacency x(2);
  x.set(0, 1, true);
  // Class 1 never links to itself; a vertex pair both in class 1 with an edge is impossible.
  CHECK(elbo(x, TauMatrix::one_hot({0, 0}, 2), p) == -INFINITY);
  CHECK(std::isfinite(elbo(x, TauMatrix::one_hot({0, 1}, 2), p)));
}

TEST_CASE("property: sandwich J <= L2 <= L1(z_hat)") {
  std::mt19937_64 rng(3);
  for (int s = 0; s < 200; ++s) {
    const int n = 1 + s % 4;
    const auto p = oracle::random_params(rng, 2);
    const auto x = oracle::random_graph(rng, n);
    const auto tau = oracle::random_tau(rng, n, 2);
    const double j = elbo(x, tau, p), l2 = marginal_loglik(x, p);
    const double l1 = oracle::complete_loglik(x, oracle::best_labels(x, p.pi), p.pi);
    CHECK(j <= l2 + 1e-9);
    CHECK(l2 <= l1 + 1e-9);
  }
}

TEST_CASE("update_tau: symmetric point is fixed") {
  const auto p = SbmParams::make({0.5, 0.5}, {{0.3, 0.3}, {0.3, 0.3}});
  std::mt19937_64 rng(4);
  const auto x = oracle::random_graph(rng, 7);
  const auto up = update_tau(x, TauMatrix::uniform(7, 2), p);
  CHECK((up.tau.values.array() - 0.5).abs().maxCoeff() <= 1e-12);
  CHECK_FALSE(up.stalled);
}

TEST_CASE("update_tau: rows satisfy the fixed-point equation") {
  std::mt19937_64 rng(5);
  for (int s = 0; s < 20; ++s) {
    const int n = 3 + s % 6, q = 2 + s % 2;
    const auto p = oracle::random_params(rng, q);
    const auto x = oracle::random_graph(rng, n);
    const auto up = converge_tau(x, oracle::random_tau(rng, n, q), p, 5000, 1e-14);
    REQUIRE_FALSE(up.stalled);
    up.tau.validate();
    for (int i = 0; i < n; ++i)
      CHECK((up.tau.values.row(i) - fixed_point_row(x, up.tau, p, i)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("update_tau: repeated calls ascend") {
  std::mt19937_64 rng(6);
  const auto p = oracle::random_params(rng, 2);
  const auto x = oracle::random_graph(rng, 6);
  TauMatrix tau = oracle::random_tau(rng, 6, 2);
  double j = elbo(x, tau, p);
  for (int s = 0; s < 20; ++s) {
    const auto up = update_tau(x, tau, p, {1, 0.3});
    CHECK(up.objective >= j - 1e-9);
    CHECK(up.objective == doctest::Approx(elbo(x, up.tau, p)));
    tau = up.tau;
    j = up.objective;
  }
  CHECK_THROWS_AS(update_tau(x, tau, p, {1, 1.0}), Error);
  CHECK_THROWS_AS(update_tau(x, tau, p, {1, -0.1}), Error);
}

TEST_CASE("m_step: closed forms") {
  const auto truth = SbmParams::make({0.4, 0.6}, {{0.7, 0.2}, {0.3, 0.9}});
  const auto g = sample_graph(truth, 40, 8);
  const auto& z = *g.labels;
  const auto ms = m_step(g.adjacency, TauMatrix::one_hot(z, 2));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      double e = 0, pairs = 0;
      for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j)
          if (i != j && z[i] == a && z[j] == b) {
            ++pairs;
            e += g.adjacency(i, j);
          }
      CHECK(ms.params.pi(a, b) == doctest::Approx(e / pairs).epsilon(1e-13));
    }
  const auto uni = m_step(g.adjacency, TauMatrix::uniform(40, 3));
  const double density = g.adjacency.edge_count() / (40.0 * 39.0);
  CHECK((uni.params.pi.array() - density).abs().maxCoeff() <= 1e-13);
  CHECK(uni.params.alpha.sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("m_step keeps pi off the boundary when both weights are positive") {
  // Block (1,1) carries edge weight ~2 and absent weight 1e-20, so the ratio rounds to 1.
  Adjacency x(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) x.set(i, j, true);
  x.set(2, 0, false);
  TauMatrix tau{Eigen::MatrixXd(3, 2)};
  tau.values << 1.0, 0.0, 1.0, 0.0, 1e-20, 1.0;
  const auto ms = m_step(x, tau);
  CHECK(ms.params.pi(0, 0) < 1.0);
  CHECK(std::isfinite(elbo(x, tau, ms.params)));
}

TEST_CASE("m_step beats random parameter probes") {
  std::mt19937_64 rng(9);
  for (int s = 0; s < 10; ++s) {
    const auto x = oracle::random_graph(rng, 5);
    const auto tau = oracle::random_tau(rng, 5, 2);
    const auto ms = m_step(x, tau);
    CHECK((ms.params.pi.array() >= 0.0).all());
    CHECK((ms.params.pi.array() <= 1.0).all());
    CHECK(std::abs(ms.params.alpha.sum() - 1.0) <= 1e-12);
    const double best = elbo(x, tau, ms.params);
    for (int t = 0; t < 100; ++t) CHECK(best >= elbo(x, tau, oracle::random_params(rng, 2, 0.01, 0.99)) - 1e-12);
    // Coordinate perturbations do not help either.
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (double h : {-1e-4, 1e-4}) {
          auto pert = ms.params;
          pert.pi(a, b) = std::clamp(pert.pi(a, b) + h, 0.0, 1.0);
          CHECK(best >= elbo(x, tau, pert) - 1e-12);
        }
  }
}

TEST_CASE("m_step flags empty classes and blocks") {
  TauMatrix t = TauMatrix::one_hot({0, 0, 0}, 2);
  const auto ms = m_step(Adjacency(3), t);
  CHECK(ms.params.alpha[1] == 0.0);
  CHECK(ms.params.pi(1, 1) == 0.5);
  CHECK(ms.flags.size() == 4);  // empty class 2 and three empty blocks
}

TEST_CASE("vem_fit: trivial and invalid inputs") {
  const auto g = sample_graph(SbmParams::make({1.0}, {{0.3}}), 20, 1);
  const auto fit = vem_fit(g.adjacency, 1);
  CHECK(fit.params.alpha[0] == 1.0);
  CHECK(fit.params.pi(0, 0) == doctest::Approx(g.adjacency.edge_count() / 380.0).epsilon(1e-14));
  CHECK(fit.iterations == 1);
  try {
    vem_fit(Adjacency(1), 2);
    FAIL("expected Precondition");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Precondition);
  }
  CHECK_THROWS_AS(vem_fit(g.adjacency, 0), Error);
}

TEST_CASE("vem_fit: deterministic, monotone, thread independent") {
  const auto truth = SbmParams::make({0.3, 0.7}, {{0.7, 0.1}, {0.2, 0.5}});
  const auto g = sample_graph(truth, 60, 12);
  VemOptions o;
  o.seed = 77;
  const auto a = vem_fit(g.adjacency, 2, o);
  const auto b = vem_fit(g.adjacency, 2, o);
  o.threads = 3;
  const auto c = vem_fit(g.adjacency, 2, o);
  CHECK(a.objective_trace == b.objective_trace);
  CHECK(a.objective_trace == c.objective_trace);
  CHECK(a.params.pi == c.params.pi);
  CHECK(nondecreasing(a.objective_trace));
  CHECK(a.restarts_used == 10);
  // The best restart has the largest final J of all restarts.
  for (int r = 0; r < 10; ++r) {
    VemOptions one = o;
    one.restarts = 1;
    const auto f = vem_fit_from(g.adjacency, initial_tau(g.adjacency, 2, r, 77), one);
    CHECK(nondecreasing(f.objective_trace));
    CHECK(f.objective_trace.back() <= a.objective_trace.back());
  }
}

TEST_CASE("vem_fit: started at the truth it ascends") {
  const auto truth = SbmParams::make({0.5, 0.5}, {{0.8, 0.2}, {0.2, 0.8}});
  const auto g = sample_graph(truth, 80, 3);
  const auto init = TauMatrix::one_hot(*g.labels, 2);
  VemOptions o;
  o.restarts = 1;
  const auto f = vem_fit_from(g.adjacency, init, o);
  CHECK(f.objective_trace.back() >= elbo(g.adjacency, init, m_step(g.adjacency, init).params) - 1e-9);
}

TEST_CASE("vem_fit: recovers a well-separated model at n=300") {
  const auto truth = SbmParams::make({0.5, 0.5}, {{0.8, 0.2}, {0.2, 0.8}});
  int good = 0;
  for (int s = 0; s < 50; ++s) {
    const auto g = sample_graph(truth, 300, 1000 + s);
    VemOptions o;
    o.restarts = 5;
    o.seed = s;
    good += param_distance(vem_fit(g.adjacency, 2, o).params, truth).err_pi < 0.1;
  }
  CHECK(good >= 45);
}

TEST_CASE("initial_tau: layout") {
  const auto g = sample_graph(SbmParams::make({0.5, 0.5}, {{0.9, 0.1}, {0.1, 0.2}}), 12, 2);
  const auto t0 = initial_tau(g.adjacency, 2, 0, 5);
  t0.validate();
  for (int i = 0; i < 12; ++i) CHECK(t0.values.row(i).maxCoeff() == 0.8);
  const auto t1 = initial_tau(g.adjacency, 2, 1, 5);
  t1.validate();
  CHECK(t1.values == initial_tau(g.adjacency, 2, 1, 5).values);
  CHECK(t1.values != initial_tau(g.adjacency, 2, 2, 5).values);
}

TEST_CASE("tv_pinsker_check: examples") {
  // Only class 1 has self-links, so two linked vertices must both be in it.
  const auto q = SbmParams::make({0.9, 0.1}, {{1.0, 0.0}, {0.0, 0.0}});
  Adjacency x(2);
  x.set(0, 1, true);
  x.set(1, 0, true);
  const auto table = posterior_table(x, q);
  const Labels z{0, 0};
  REQUIRE(table.probability(z) == doctest::Approx(1.0));
  const auto c = tv_pinsker_check(TauMatrix::one_hot(z, 2), table, z);
  CHECK(c.lhs == doctest::Approx(0.0));
  CHECK(c.rhs == doctest::Approx(0.0));
  CHECK(c.ok);

  const PosteriorTable quarter(2, 2, std::vector<long double>(4, std::log(0.25L)), 0.0L);
  const auto d = tv_pinsker_check(TauMatrix::uniform(2, 2), quarter, {0, 1});
  CHECK(d.rhs == doctest::Approx(0.8325546).epsilon(1e-6));
  CHECK(d.lhs == doctest::Approx(0.0));
  CHECK(d.ok);
}

TEST_CASE("property: Pinsker bound holds at a tau dominating the point mass") {
  std::mt19937_64 rng(10);
  for (int s = 0; s < 100; ++s) {
    const auto p = oracle::random_params(rng, 2);
    const auto x = oracle::random_graph(rng, 4);
    const auto z = oracle::random_labels(rng, 4, 2);
    // Ascent from the one-hot start gives J(tau) >= J(delta_z), hence K <= -log P(z|X).
    const auto tau = converge_tau(x, TauMatrix::one_hot(z, 2), p).tau;
    const auto c = tv_pinsker_check(tau, posterior_table(x, p), z);
    CHECK(c.ok);
    CHECK(c.lhs <= c.rhs + 1e-12);
  }
}

}  // TEST_SUITE
