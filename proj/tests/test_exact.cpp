#include "oracles.hpp"

#include "sbm/core.hpp"
#include "sbm/exact.hpp"
#include "sbm/variational.hpp"

#include <doctest.h>

#include <cmath>

using namespace sbm;

namespace {

Adjacency from_edges(int n, std::initializer_list<std::pair<int, int>> edges) {
  Adjacency x(n);
  for (auto [i, j] : edges) x.set(i, j, true);
  return x;
}

bool nondecreasing(const std::vector<double>& t, double tol = 1e-9) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] < t[i - 1] - tol) return false;
  return true;
}

}  // namespace

TEST_SUITE("exact") {

TEST_CASE("complete_loglik: examples") {
  const Adjacency empty(2);
  const Eigen::MatrixXd half = Eigen::MatrixXd::Constant(1, 1, 0.5);
  CHECK(complete_loglik(empty, {0, 0}, half) == doctest::Approx(-1.386294361).epsilon(1e-9));

  Eigen::MatrixXd sure(2, 2);
  sure << 0.5, 1.0, 0.5, 0.5;
  CHECK(complete_loglik(empty, {0, 1}, sure) == -INFINITY);
  // 0 log 0: pi = 1 with the edge present contributes nothing.
  CHECK(complete_loglik(from_edges(2, {{0, 1}}), {0, 1}, sure) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("complete_loglik matches the term-by-term oracle") {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 50; ++t) {
    const auto p = oracle::random_params(rng, 2);
    const auto x = oracle::random_graph(rng, 4);
    const auto z = oracle::random_labels(rng, 4, 2);
    CHECK(complete_loglik(x, z, p.pi) == doctest::Approx(oracle::complete_loglik(x, z, p.pi)).epsilon(1e-13));
  }
}

TEST_CASE("prior_loglik: examples") {
  CHECK(prior_loglik({0, 0, 0}, Eigen::VectorXd::Ones(1)) == 0.0);
  CHECK(prior_loglik({0, 1}, Eigen::Vector2d(0.5, 0.5)) == doctest::Approx(2 * std::log(0.5)));
  CHECK(prior_loglik({0, 1, 1}, Eigen::Vector2d(0.3, 0.7)) ==
        doctest::Approx(std::log(0.3) + 2 * std::log(0.7)));
}

TEST_CASE("marginal_loglik: trivial sizes") {
  const auto p = SbmParams::make({0.3, 0.7}, {{0.8, 0.2}, {0.4, 0.6}});
  CHECK(std::abs(marginal_loglik(Adjacency(1), p)) <= 1e-15);
  CHECK(marginal_loglik(Adjacency(0), p) == 0.0);

  const auto one = SbmParams::make({1.0}, {{0.3}});
  const auto x = from_edges(3, {{0, 1}, {2, 0}});
  CHECK(marginal_loglik(x, one) == doctest::Approx(complete_loglik(x, {0, 0, 0}, one.pi)).epsilon(1e-14));
}

TEST_CASE("marginal_loglik matches linear-scale enumeration") {
  std::mt19937_64 rng(202);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + t % 4;
    const auto p = oracle::random_params(rng, 2);
    const auto x = oracle::random_graph(rng, n, oracle::uniform(rng));
    CHECK(std::abs(marginal_loglik(x, p) - oracle::marginal_loglik(x, p)) <= 1e-10);
  }
  const auto p3 = oracle::random_params(rng, 3);
  const auto x3 = oracle::random_graph(rng, 3);
  CHECK(std::abs(marginal_loglik(x3, p3) - oracle::marginal_loglik(x3, p3)) <= 1e-10);
}

TEST_CASE("marginal_loglik: enumeration cap and thread independence") {
  const auto p = SbmParams::make({0.5, 0.5}, {{0.8, 0.2}, {0.2, 0.8}});
  const auto g = sample_graph(p, 30, 1);
  try {
    marginal_loglik(g.adjacency, p);
    FAIL("expected SizeLimit");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SizeLimit);
  }
  CHECK(enumeration_size(10, 2, kDefaultEnumerationCap) == 1024);
  CHECK_THROWS_AS(enumeration_size(5, 2, 31), Error);

  const auto small = sample_graph(p, 12, 4);
  const double one = marginal_loglik(small.adjacency, p, {kDefaultEnumerationCap, 1});
  const double three = marginal_loglik(small.adjacency, p, {kDefaultEnumerationCap, 3});
  CHECK(one == three);
}

TEST_CASE("posterior_table: Bayes consistency and normalization") {
  std::mt19937_64 rng(303);
  for (int t = 0; t < 30; ++t) {
    const int n = 1 + t % 5;
    const int q = 1 + t % 3;
    const auto p = oracle::random_params(rng, q);
    const auto x = oracle::random_graph(rng, n);
    const auto table = posterior_table(x, p);
    const double l2 = marginal_loglik(x, p);
    double total = 0.0;
    for (std::uint64_t idx = 0; idx < table.size(); ++idx) {
      const Labels z = table.labels_at(idx);
      CHECK(table.index_of(z) == idx);
      const double direct = std::exp(complete_loglik(x, z, p.pi) + prior_loglik(z, p.alpha) - l2);
      CHECK(std::abs(direct - table.probability(idx)) <= 1e-12);
      total += table.probability(idx);
    }
    CHECK(std::abs(total - 1.0) <= 1e-10);
    const auto m = table.marginals();
    for (int i = 0; i < n; ++i) CHECK(m.values.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("posterior_table: uninformative model is uniform") {
  const auto p = SbmParams::make({1.0 / 3, 1.0 / 3, 1.0 / 3}, {{0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}});
  const auto x = from_edges(4, {{0, 1}, {1, 2}, {3, 0}});
  const auto table = posterior_table(x, p);
  REQUIRE(table.size() == 81);
  for (std::uint64_t i = 0; i < table.size(); ++i) CHECK(table.probability(i) == doctest::Approx(1.0 / 81));
}

TEST_CASE("posterior_table: impossible graph is a degenerate model") {
  const auto p = SbmParams::make({1.0}, {{1.0}});
  try {
    posterior_table(Adjacency(3), p);
    FAIL("expected DegenerateModel");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateModel);
  }
}

TEST_CASE("posterior_table: label strings") {
  const auto table = posterior_table(Adjacency(3), SbmParams::make({0.5, 0.5}, {{0.5, 0.5}, {0.5, 0.5}}));
  CHECK(table.label_string(0) == "111");
  CHECK(table.label_string(6) == "221");
}

TEST_CASE("posterior_ratio_stat: examples") {
  const auto one = SbmParams::make({1.0}, {{0.3}});
  const auto x = from_edges(3, {{0, 1}});
  const auto t1 = posterior_table(x, one);
  CHECK(posterior_ratio_stat(t1, {0, 0, 0}, one.pi).value == 0.0);

  // Uniform table over 4 vectors, identity-only group.
  const PosteriorTable uniform(2, 2, std::vector<long double>(4, std::log(0.25L)), 0.0L);
  const Eigen::MatrixXd asym = (Eigen::MatrixXd(2, 2) << 0.8, 0.2, 0.2, 0.6).finished();
  const auto rs = posterior_ratio_stat(uniform, {0, 1}, asym);
  CHECK(rs.value == doctest::Approx(3.0));
  CHECK(rs.class_mass == doctest::Approx(0.25));
  // Under the swap symmetry [z] has two members.
  const Eigen::MatrixXd affil = (Eigen::MatrixXd(2, 2) << 0.8, 0.2, 0.2, 0.8).finished();
  CHECK(posterior_ratio_stat(uniform, {0, 1}, affil).value == doctest::Approx(1.0));
  CHECK(uniform.class_members({0, 1}, affil).size() == 2);
  CHECK(uniform.class_members({0, 0}, affil).size() == 2);

  std::vector<long double> lp(4, std::log(1.0L / 3));
  lp[1] = -INFINITY;
  const PosteriorTable holes(2, 2, lp, 0.0L);
  const auto zero = posterior_ratio_stat(holes, {0, 1}, asym);
  CHECK(zero.zero_mass);
  CHECK(zero.value == INFINITY);
}

TEST_CASE("kl_divergence: examples") {
  std::mt19937_64 rng(404);
  const auto p = oracle::random_params(rng, 2);
  const auto x = oracle::random_graph(rng, 4);
  const auto table = posterior_table(x, p);
  CHECK(std::abs(kl_divergence(table, table).value) <= 1e-15);

  const Labels z{0, 1, 1, 0};
  const auto point = kl_divergence(TauMatrix::one_hot(z, 2), table);
  CHECK(point.value == doctest::Approx(-std::log(table.probability(z))).epsilon(1e-12));

  std::vector<long double> lp(16, std::log(1.0L / 15));
  lp[table.index_of(z)] = -INFINITY;
  const PosteriorTable holes(4, 2, lp, 0.0L);
  const auto bad = kl_divergence(TauMatrix::one_hot(z, 2), holes);
  CHECK(bad.support_violation);
  CHECK(bad.value == INFINITY);
  CHECK_THROWS_AS(kl_divergence(TauMatrix::uniform(3, 2), table), Error);
}

TEST_CASE("kl_divergence equals L2 - J and the explicit sum") {
  std::mt19937_64 rng(505);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + t % 4;
    const auto p = oracle::random_params(rng, 2);
    const auto x = oracle::random_graph(rng, n);
    const auto tau = oracle::random_tau(rng, n, 2);
    const double k = kl_divergence(tau, posterior_table(x, p)).value;
    CHECK(k >= -1e-15);
    CHECK(std::abs(k - (oracle::marginal_loglik(x, p) - oracle::elbo(x, tau, p))) <= 1e-9);
    CHECK(std::abs(k - oracle::kl_tau_posterior(x, tau, p)) <= 1e-9);
  }
}

TEST_CASE("exact_em_fit: ascent and MLE dominance") {
  const auto truth = SbmParams::make({0.5, 0.5}, {{0.9, 0.1}, {0.1, 0.9}});
  for (int s = 0; s < 10; ++s) {
    const auto g = sample_graph(truth, 10, s);
    std::mt19937_64 rng(s);
    const auto fit = exact_em_fit(g.adjacency, oracle::random_params(rng, 2, 0.2, 0.8, 0.5));
    CHECK(nondecreasing(fit.objective_trace));
    CHECK(fit.objective_trace.back() == doctest::Approx(marginal_loglik(g.adjacency, fit.params)).epsilon(1e-12));
    // EM finds a local maximum; started at the truth it must end above it.
    const auto from_truth = exact_em_fit(g.adjacency, truth);
    CHECK(from_truth.objective_trace.back() >= marginal_loglik(g.adjacency, truth) - 1e-9);
  }
}

TEST_CASE("exact_em_fit: monotone on random instances") {
  std::mt19937_64 rng(606);
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + t % 5;
    const auto x = oracle::random_graph(rng, n, oracle::uniform(rng, 0.2, 0.8));
    const auto fit = exact_em_fit(x, oracle::random_params(rng, 2, 0.05, 0.95, 0.5), {100, 1e-12, {}});
    CHECK(nondecreasing(fit.objective_trace));
    CHECK(fit.iterations >= 1);
  }
}

TEST_CASE("exact_em_fit: alpha is the mean posterior marginal at convergence") {
  const auto truth = SbmParams::make({0.35, 0.65}, {{0.85, 0.3}, {0.1, 0.7}});
  for (int s = 0; s < 5; ++s) {
    const auto g = sample_graph(truth, 9, 40 + s);
    const auto fit = exact_em_fit(g.adjacency, truth, {2000, 1e-14, {}});
    if (!fit.flags.empty()) continue;
    const auto m = posterior_table(g.adjacency, fit.params).marginals();
    const Eigen::VectorXd mean = m.values.colwise().mean().transpose();
    CHECK((mean - fit.params.alpha).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("exact_em_fit: a fixed point stays put") {
  const auto truth = SbmParams::make({0.4, 0.6}, {{0.9, 0.2}, {0.1, 0.8}});
  const auto g = sample_graph(truth, 8, 3);
  const auto first = exact_em_fit(g.adjacency, truth, {5000, 1e-15, {}});
  const auto again = exact_em_fit(g.adjacency, first.params, {5000, 1e-10, {}});
  CHECK(again.iterations == 1);
  CHECK(again.converged);
  CHECK(std::abs(again.objective_trace.back() - again.objective_trace.front()) <= 1e-10);
}

TEST_CASE("exact_em_fit: empty blocks are reset and flagged") {
  // Q = 2 on a single vertex: no pairs at all, every block is empty.
  const auto fit = exact_em_fit(Adjacency(1), SbmParams::make({0.5, 0.5}, {{0.3, 0.3}, {0.3, 0.3}}));
  CHECK_FALSE(fit.flags.empty());
  CHECK((fit.params.pi.array() == 0.5).all());
  CHECK_THROWS_AS(exact_em_fit(sample_graph(SbmParams::make({1.0}, {{0.5}}), 30, 0).adjacency,
                               SbmParams::make({0.5, 0.5}, {{0.3, 0.3}, {0.3, 0.3}})),
                  Error);
}

}  // TEST_SUITE
