#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace chasedpo {

/// Raised when a computation produces NaN/Inf where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  /// Throws std::invalid_argument on size mismatch or non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& lhs, const Matrix& rhs);
/// y = m * x
std::vector<double> matvec(const Matrix& m, std::span<const double> x);
double frobenius_norm(const Matrix& m);
double squared_distance(const Matrix& lhs, const Matrix& rhs);

double logsumexp(std::span<const double> v);
double sigmoid(double x);
/// log(sigmoid(x)) without cancellation for large |x|.
double log_sigmoid(double x);
/// Writes log-softmax of `logits` into `out` (same length).
void log_softmax(std::span<const double> logits, std::span<double> out);
std::vector<double> softmax(std::span<const double> logits);

/// splitmix64 generator. State is a plain value; copying forks the stream.
struct Rng {
  std::uint64_t state = 0;

  std::uint64_t next();
  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform();
  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double gaussian();
  /// Index drawn from softmax(logits).
  std::size_t categorical(std::span<const double> logits);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
};

/// Pure form of the generator step: returns the advanced state and the output.
std::pair<std::uint64_t, std::uint64_t> rng_next(std::uint64_t state);

/// Independent substream seed for item `index` of a stream seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace chasedpo
