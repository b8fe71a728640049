#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbm {

// Failure classes. The CLI maps each onto a fixed exit code.
enum class ErrorKind {
  Usage,
  Validation,         // malformed parameters or inputs
  InvalidBound,       // zeta/gamma outside their admissible range
  Shape,              // mismatched dimensions
  SizeLimit,          // enumeration cap or Q limit exceeded
  Precondition,       // documented precondition violated (e.g. n < 2Q)
  DegenerateModel,    // posterior undefined, or Q=2 special case unidentifiable
  DegenerateMoments,  // det(M_Q) vanishes: r coordinates not distinct
  RootExtraction,     // complex or out-of-range roots
  OutOfBounds,        // recovered value outside [0,1] beyond clamp tolerance
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Class labels are 0-based in memory and 1-based in every file format.
using Labels = std::vector<int>;

struct SbmParams {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd pi;

  int q() const { return static_cast<int>(alpha.size()); }

  // alpha strictly positive summing to 1 within 1e-12, pi entries in [0,1],
  // dims consistent. Throws Error(Validation) / Error(Shape).
  void validate() const;

  static SbmParams make(std::vector<double> alpha, std::vector<std::vector<double>> pi);
};

// Dense directed adjacency matrix with zero diagonal.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(int n) : n_(n), bits_(static_cast<std::size_t>(n) * n, 0) {}

  int n() const { return n_; }
  bool operator()(int i, int j) const { return bits_[index(i, j)] != 0; }
  void set(int i, int j, bool v);
  std::int64_t edge_count() const;
  // Row i as 0/1 bytes.
  std::span<const std::uint8_t> row(int i) const {
    return {bits_.data() + index(i, 0), static_cast<std::size_t>(n_)};
  }
  Adjacency transposed() const;

  bool operator==(const Adjacency&) const = default;

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }
  int n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct LabeledGraph {
  Adjacency adjacency;
  std::optional<Labels> labels;  // hidden truth z*, when known
  int q = 0;                     // class count the graph was drawn with (0 if unknown)

  int n() const { return adjacency.n(); }
};

// Bijection on {0..Q-1}; map[q] is the image of q.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<int> map);
  static Permutation identity(int q);

  int size() const { return static_cast<int>(map_.size()); }
  int operator()(int q) const { return map_[q]; }
  const std::vector<int>& map() const { return map_; }

  bool is_identity() const;
  Permutation inverse() const;
  // (a * b)(q) = a(b(q))
  friend Permutation operator*(const Permutation& a, const Permutation& b);
  bool operator==(const Permutation&) const = default;
  auto operator<=>(const Permutation&) const = default;

  // "1 2" style, 1-based images.
  std::string to_string() const;

 private:
  std::vector<int> map_;
};

// Row-stochastic n x Q matrix of per-vertex class probabilities.
struct TauMatrix {
  Eigen::MatrixXd values;

  int n() const { return static_cast<int>(values.rows()); }
  int q() const { return static_cast<int>(values.cols()); }

  // Entries in [0,1], rows summing to 1 within 1e-12.
  void validate() const;
  // Most probable class per row (lowest index on ties).
  Labels argmax() const;

  static TauMatrix uniform(int n, int q);
  static TauMatrix one_hot(const Labels& z, int q);
};

// Applies the permutation to a label vector: z'_i = sigma(z_i).
Labels relabel(const Labels& z, const Permutation& sigma);

}  // namespace sbm
