#include "sbm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sbm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::InvalidBound: return "invalid-bound";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::SizeLimit: return "size-limit";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::DegenerateModel: return "degenerate-model";
    case ErrorKind::DegenerateMoments: return "degenerate-moments";
    case ErrorKind::RootExtraction: return "root-extraction";
    case ErrorKind::OutOfBounds: return "out-of-bounds";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

void SbmParams::validate() const {
  const auto q = alpha.size();
  if (q < 1) throw Error(ErrorKind::Validation, "q must be at least 1");
  if (pi.rows() != q || pi.cols() != q)
    throw Error(ErrorKind::Shape, "pi must be " + std::to_string(q) + "x" + std::to_string(q));
  double sum = 0.0;
  for (Eigen::Index k = 0; k < q; ++k) {
    if (!(alpha[k] > 0.0)) throw Error(ErrorKind::Validation, "alpha entries must be positive");
    sum += alpha[k];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorKind::Validation, "alpha must sum to 1");
  for (Eigen::Index a = 0; a < q; ++a)
    for (Eigen::Index b = 0; b < q; ++b)
      if (!(pi(a, b) >= 0.0 && pi(a, b) <= 1.0))
        throw Error(ErrorKind::Validation, "pi entries must lie in [0,1]");
}

SbmParams SbmParams::make(std::vector<double> alpha, std::vector<std::vector<double>> pi) {
  SbmParams p;
  const auto q = static_cast<Eigen::Index>(alpha.size());
  p.alpha = Eigen::Map<Eigen::VectorXd>(alpha.data(), q);
  if (static_cast<Eigen::Index>(pi.size()) != q) throw Error(ErrorKind::Shape, "pi row count != q");
  p.pi.resize(q, q);
  for (Eigen::Index a = 0; a < q; ++a) {
    if (static_cast<Eigen::Index>(pi[a].size()) != q)
      throw Error(ErrorKind::Shape, "pi column count != q");
    for (Eigen::Index b = 0; b < q; ++b) p.pi(a, b) = pi[a][b];
  }
  p.validate();
  return p;
}

void Adjacency::set(int i, int j, bool v) {
  if (i == j && v) throw Error(ErrorKind::Validation, "self-loops are not allowed");
  bits_[index(i, j)] = v ? 1 : 0;
}

std::int64_t Adjacency::edge_count() const {
  return std::count(bits_.begin(), bits_.end(), std::uint8_t{1});
}

Adjacency Adjacency::transposed() const {
  Adjacency t(n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) t.bits_[t.index(j, i)] = bits_[index(i, j)];
  return t;
}

Permutation::Permutation(std::vector<int> map) : map_(std::move(map)) {
  std::vector<bool> seen(map_.size(), false);
  for (int v : map_) {
    if (v < 0 || v >= size() || seen[v]) throw Error(ErrorKind::Validation, "not a bijection");
    seen[v] = true;
  }
}

Permutation Permutation::identity(int q) {
  std::vector<int> m(q);
  std::iota(m.begin(), m.end(), 0);
  return Permutation(std::move(m));
}

bool Permutation::is_identity() const {
  for (int k = 0; k < size(); ++k)
    if (map_[k] != k) return false;
  return true;
}

Permutation Permutation::inverse() const {
  std::vector<int> inv(map_.size());
  for (int k = 0; k < size(); ++k) inv[map_[k]] = k;
  return Permutation(std::move(inv));
}

Permutation operator*(const Permutation& a, const Permutation& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::Shape, "permutation sizes differ");
  std::vector<int> m(a.size());
  for (int k = 0; k < a.size(); ++k) m[k] = a(b(k));
  return Permutation(std::move(m));
}

std::string Permutation::to_string() const {
  std::ostringstream os;
  for (int k = 0; k < size(); ++k) os << (k ? " " : "") << map_[k] + 1;
  return os.str();
}

Labels relabel(const Labels& z, const Permutation& sigma) {
  Labels out(z.size());
  std::transform(z.begin(), z.end(), out.begin(), [&](int v) { return sigma(v); });
  return out;
}

}  // namespace sbm

namespace sbm {

void TauMatrix::validate() const {
  for (int i = 0; i < n(); ++i) {
    double sum = 0.0;
    for (int k = 0; k < q(); ++k) {
      const double v = values(i, k);
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::Validation, "tau entry outside [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorKind::Validation, "tau row does not sum to 1");
  }
}

Labels TauMatrix::argmax() const {
  Labels z(n());
  for (int i = 0; i < n(); ++i) {
    int best = 0;
    for (int k = 1; k < q(); ++k)
      if (values(i, k) > values(i, best)) best = k;
    z[i] = best;
  }
  return z;
}

TauMatrix TauMatrix::uniform(int n, int q) {
  return {Eigen::MatrixXd::Constant(n, q, 1.0 / q)};
}

TauMatrix TauMatrix::one_hot(const Labels& z, int q) {
  TauMatrix t{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(z.size()), q)};
  for (std::size_t i = 0; i < z.size(); ++i) t.values(static_cast<Eigen::Index>(i), z[i]) = 1.0;
  return t;
}

}  // namespace sbm
