#include "sbm/exact.hpp"

#include "sbm/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace sbm {

namespace {

constexpr long double kNegInf = -std::numeric_limits<long double>::infinity();
constexpr std::uint64_t kChunk = 4096;

// log pi and log(1 - pi), indexed [edge][q][l].
struct LogTables {
  int q;
  std::vector<long double> v;

  LogTables(const Eigen::MatrixXd& pi) : q(static_cast<int>(pi.rows())), v(2 * q * q) {
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) {
        const long double p = pi(a, b);
        v[at(1, a, b)] = p > 0 ? std::log(p) : kNegInf;
        v[at(0, a, b)] = p < 1 ? std::log1p(-p) : kNegInf;
      }
  }
  std::size_t at(int edge, int a, int b) const {
    return static_cast<std::size_t>(edge) * q * q + static_cast<std::size_t>(a) * q + b;
  }
  long double operator()(bool edge, int a, int b) const { return v[at(edge ? 1 : 0, a, b)]; }
};

void decode(std::uint64_t index, int q, Labels& z) {
  for (int i = static_cast<int>(z.size()) - 1; i >= 0; --i) {
    z[i] = static_cast<int>(index % q);
    index /= q;
  }
}

// Odometer increment in lexicographic order.
void advance(Labels& z, int q) {
  for (int i = static_cast<int>(z.size()) - 1; i >= 0; --i) {
    if (++z[i] < q) return;
    z[i] = 0;
  }
}

long double joint_loglik(const Adjacency& x, const Labels& z, const LogTables& lt,
                         const std::vector<long double>& log_alpha) {
  const int n = x.n();
  long double s = 0;
  for (int i = 0; i < n; ++i) s += log_alpha[z[i]];
  for (int i = 0; i < n; ++i) {
    const int zi = z[i];
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      s += lt(x(i, j), zi, z[j]);
    }
    if (s == kNegInf) return s;
  }
  return s;
}

// log(L1 + prior) for every label vector, chunk-parallel.
std::vector<long double> enumerate_joint(const Adjacency& x, const SbmParams& params,
                                         const EnumerationOptions& opts) {
  const int q = params.q();
  const std::uint64_t total = enumeration_size(x.n(), q, opts.cap);
  const LogTables lt(params.pi);
  std::vector<long double> log_alpha(q);
  for (int k = 0; k < q; ++k)
    log_alpha[k] = params.alpha[k] > 0 ? std::log(static_cast<long double>(params.alpha[k])) : kNegInf;

  std::vector<long double> ll(total);
  const std::uint64_t chunks = (total + kChunk - 1) / kChunk;
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    Labels z(x.n());
    for (std::uint64_t c = next++; c < chunks; c = next++) {
      const std::uint64_t begin = c * kChunk;
      const std::uint64_t end = std::min(total, begin + kChunk);
      decode(begin, q, z);
      for (std::uint64_t idx = begin; idx < end; ++idx) {
        ll[idx] = joint_loglik(x, z, lt, log_alpha);
        advance(z, q);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(chunks)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return ll;
}

long double log_sum_exp(const std::vector<long double>& v) {
  long double m = kNegInf;
  for (long double a : v) m = std::max(m, a);
  if (m == kNegInf) return kNegInf;
  long double s = 0;
  for (long double a : v) s += std::exp(a - m);
  return m + std::log(s);
}

}  // namespace

std::uint64_t enumeration_size(int n, int q, std::uint64_t cap) {
  std::uint64_t total = 1;
  for (int i = 0; i < n; ++i) {
    if (total > cap / static_cast<std::uint64_t>(q))
      throw Error(ErrorKind::SizeLimit, "Q^n = " + std::to_string(q) + "^" + std::to_string(n) +
                                            " exceeds the enumeration cap of " + std::to_string(cap));
    total *= static_cast<std::uint64_t>(q);
  }
  if (total > cap) throw Error(ErrorKind::SizeLimit, "Q^n exceeds the enumeration cap");
  return total;
}

double complete_loglik(const Adjacency& x, const Labels& z, const Eigen::MatrixXd& pi) {
  const int n = x.n();
  if (static_cast<int>(z.size()) != n) throw Error(ErrorKind::Shape, "label vector length != n");
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = pi(z[i], z[j]);
      // Only the observed outcome's log is taken, which is the 0 log 0 = 0 rule.
      s += x(i, j) ? std::log(p) : std::log1p(-p);
    }
  return s;
}

double prior_loglik(const Labels& z, const Eigen::VectorXd& alpha) {
  double s = 0.0;
  for (int v : z) s += std::log(alpha[v]);
  return s;
}

double marginal_loglik(const Adjacency& x, const SbmParams& params, const EnumerationOptions& opts) {
  params.validate();
  return static_cast<double>(log_sum_exp(enumerate_joint(x, params, opts)));
}

PosteriorTable::PosteriorTable(int n, int q, std::vector<long double> log_probs,
                               long double log_evidence)
    : n_(n), q_(q), log_probs_(std::move(log_probs)), log_evidence_(log_evidence) {}

double PosteriorTable::probability(std::uint64_t index) const {
  return static_cast<double>(std::exp(log_probs_[index]));
}

std::uint64_t PosteriorTable::index_of(const Labels& z) const {
  if (static_cast<int>(z.size()) != n_) throw Error(ErrorKind::Shape, "label vector length != n");
  std::uint64_t idx = 0;
  for (int v : z) {
    if (v < 0 || v >= q_) throw Error(ErrorKind::Validation, "label outside 1..Q");
    idx = idx * q_ + static_cast<std::uint64_t>(v);
  }
  return idx;
}

Labels PosteriorTable::labels_at(std::uint64_t index) const {
  Labels z(n_);
  decode(index, q_, z);
  return z;
}

TauMatrix PosteriorTable::marginals() const {
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> acc =
      Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_, q_);
  Labels z(n_, 0);
  for (std::uint64_t idx = 0; idx < size(); ++idx, advance(z, q_)) {
    const long double p = std::exp(log_probs_[idx]);
    if (p == 0) continue;
    for (int i = 0; i < n_; ++i) acc(i, z[i]) += p;
  }
  TauMatrix t{Eigen::MatrixXd(n_, q_)};
  for (int i = 0; i < n_; ++i) {
    const long double row = acc.row(i).sum();
    for (int k = 0; k < q_; ++k) t.values(i, k) = static_cast<double>(acc(i, k) / row);
  }
  return t;
}

std::vector<std::uint64_t> PosteriorTable::class_members(const Labels& z, const Eigen::MatrixXd& pi,
                                                         double tol) const {
  std::set<std::uint64_t> members;
  for (const auto& sigma : symmetry_group(pi, tol)) members.insert(index_of(relabel(z, sigma)));
  return {members.begin(), members.end()};
}

double PosteriorTable::class_mass(const Labels& z, const Eigen::MatrixXd& pi, double tol) const {
  long double m = 0;
  for (auto idx : class_members(z, pi, tol)) m += std::exp(log_probs_[idx]);
  return static_cast<double>(m);
}

std::string PosteriorTable::label_string(std::uint64_t index) const {
  const Labels z = labels_at(index);
  std::ostringstream os;
  for (int i = 0; i < n_; ++i) {
    if (q_ > 9 && i) os << '-';
    os << z[i] + 1;
  }
  return os.str();
}

PosteriorTable posterior_table(const Adjacency& x, const SbmParams& params,
                               const EnumerationOptions& opts) {
  params.validate();
  auto ll = enumerate_joint(x, params, opts);
  const long double evidence = log_sum_exp(ll);
  if (evidence == kNegInf)
    throw Error(ErrorKind::DegenerateModel, "every label vector has zero probability under pi");
  for (auto& v : ll) v -= evidence;
  return PosteriorTable(x.n(), params.q(), std::move(ll), evidence);
}

RatioStat posterior_ratio_stat(const PosteriorTable& table, const Labels& z_star,
                               const Eigen::MatrixXd& pi, double tol) {
  const auto members = table.class_members(z_star, pi, tol);
  long double mass = 0;
  for (auto idx : members) mass += std::exp(table.log_probability(idx));
  long double others = 0;
  auto it = members.begin();
  for (std::uint64_t idx = 0; idx < table.size(); ++idx) {
    if (it != members.end() && *it == idx) {
      ++it;
      continue;
    }
    others += std::exp(table.log_probability(idx));
  }
  RatioStat r;
  r.class_mass = static_cast<double>(mass);
  if (mass == 0) {
    r.zero_mass = true;
    r.value = std::numeric_limits<double>::infinity();
  } else {
    r.value = static_cast<double>(others / mass);
  }
  return r;
}

KlResult kl_divergence(const TauMatrix& tau, const PosteriorTable& p) {
  const int n = p.n(), q = p.q();
  if (tau.n() != n || tau.q() != q) throw Error(ErrorKind::Shape, "tau shape does not match table");
  std::vector<long double> log_tau(static_cast<std::size_t>(n) * q);
  for (int i = 0; i < n; ++i) {
    int top = 0;
    for (int k = 1; k < q; ++k)
      if (tau.values(i, k) > tau.values(i, top)) top = k;
    long double rest = 0;
    for (int k = 0; k < q; ++k) {
      const long double v = tau.values(i, k);
      if (k != top) rest += v;
      log_tau[static_cast<std::size_t>(i) * q + k] = v > 0 ? std::log(v) : kNegInf;
    }
    log_tau[static_cast<std::size_t>(i) * q + top] = std::log1p(-rest);
  }

  KlResult r;
  long double k = 0;
  Labels z(n, 0);
  for (std::uint64_t idx = 0; idx < p.size(); ++idx, advance(z, q)) {
    long double ld = 0;
    for (int i = 0; i < n && ld != kNegInf; ++i) ld += log_tau[static_cast<std::size_t>(i) * q + z[i]];
    if (ld == kNegInf) continue;
    const long double lp = p.log_probability(idx);
    if (lp == kNegInf) {
      r.support_violation = true;
      r.value = std::numeric_limits<double>::infinity();
      r.extended = std::numeric_limits<long double>::infinity();
      return r;
    }
    k += std::exp(ld) * (ld - lp);
  }
  r.extended = k;
  r.value = static_cast<double>(k);
  return r;
}

KlResult kl_divergence(const PosteriorTable& d, const PosteriorTable& p) {
  if (d.n() != p.n() || d.q() != p.q()) throw Error(ErrorKind::Shape, "table shapes differ");
  KlResult r;
  long double k = 0;
  for (std::uint64_t idx = 0; idx < d.size(); ++idx) {
    const long double ld = d.log_probability(idx);
    if (ld == kNegInf) continue;
    const long double lp = p.log_probability(idx);
    if (lp == kNegInf) {
      r.support_violation = true;
      r.value = std::numeric_limits<double>::infinity();
      r.extended = std::numeric_limits<long double>::infinity();
      return r;
    }
    k += std::exp(ld) * (ld - lp);
  }
  r.extended = k;
  r.value = static_cast<double>(k);
  return r;
}

namespace {

// Closed-form M-step under the exact posterior.
SbmParams exact_m_step(const Adjacency& x, const PosteriorTable& table,
                       std::vector<std::string>& flags) {
  const int n = table.n(), q = table.q();
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  MatL num = MatL::Zero(q, q), den = MatL::Zero(q, q);
  std::vector<long double> occupancy(q, 0);
  std::vector<int> counts(q);
  std::vector<int> edges(static_cast<std::size_t>(q) * q);
  Labels z(n, 0);
  for (std::uint64_t idx = 0; idx < table.size(); ++idx, advance(z, q)) {
    const long double p = std::exp(table.log_probability(idx));
    if (p == 0) continue;
    std::fill(counts.begin(), counts.end(), 0);
    std::fill(edges.begin(), edges.end(), 0);
    for (int i = 0; i < n; ++i) {
      ++counts[z[i]];
      for (int j = 0; j < n; ++j)
        if (j != i && x(i, j)) ++edges[static_cast<std::size_t>(z[i]) * q + z[j]];
    }
    for (int a = 0; a < q; ++a) {
      occupancy[a] += p * counts[a];
      for (int b = 0; b < q; ++b) {
        const long double pairs = static_cast<long double>(counts[a]) * counts[b] - (a == b ? counts[a] : 0);
        num(a, b) += p * edges[static_cast<std::size_t>(a) * q + b];
        den(a, b) += p * pairs;
      }
    }
  }
  SbmParams out;
  out.alpha.resize(q);
  out.pi.resize(q, q);
  long double total = 0;
  for (int a = 0; a < q; ++a) total += occupancy[a];
  for (int a = 0; a < q; ++a) {
    out.alpha[a] = static_cast<double>(occupancy[a] / total);
    if (out.alpha[a] == 0.0) flags.push_back("empty-class " + std::to_string(a + 1));
  }
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      if (den(a, b) > 0) {
        out.pi(a, b) = std::clamp(static_cast<double>(num(a, b) / den(a, b)), 0.0, 1.0);
      } else {
        out.pi(a, b) = 0.5;
        flags.push_back("empty-block " + std::to_string(a + 1) + "," + std::to_string(b + 1));
      }
    }
  return out;
}

}  // namespace

FitResult exact_em_fit(const Adjacency& x, const SbmParams& init, const ExactEmOptions& opts) {
  init.validate();
  if (x.n() < 1) throw Error(ErrorKind::Precondition, "exact EM needs at least one vertex");
  enumeration_size(x.n(), init.q(), opts.enumeration.cap);

  FitResult fit;
  fit.params = init;
  fit.restarts_used = 1;
  PosteriorTable table = posterior_table(x, fit.params, opts.enumeration);
  fit.objective_trace.push_back(table.log_evidence());

  for (int it = 1; it <= opts.max_iter; ++it) {
    std::vector<std::string> step_flags;
    SbmParams next = exact_m_step(x, table, step_flags);
    for (auto& f : step_flags)
      if (std::find(fit.flags.begin(), fit.flags.end(), f) == fit.flags.end()) fit.flags.push_back(f);
    // An empty block carries no posterior weight, so resetting it keeps EM
    // going; a vanished class cannot come back and ends the run.
    const bool class_lost = std::any_of(step_flags.begin(), step_flags.end(), [](const auto& f) {
      return f.rfind("empty-class", 0) == 0;
    });
    if (class_lost) {
      fit.iterations = it;
      break;
    }
    PosteriorTable next_table = posterior_table(x, next, opts.enumeration);
    const double gain = next_table.log_evidence() - fit.objective_trace.back();
    fit.params = std::move(next);
    table = std::move(next_table);
    fit.objective_trace.push_back(table.log_evidence());
    fit.iterations = it;
    if (gain < opts.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.tau = table.marginals();
  return fit;
}

}  // namespace sbm
