#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnctl {

/// Raised when operand extents do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an input lies outside an operation's domain (empty input,
/// out-of-range index, degenerate geometry).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when optimisation produces a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 1 is a vector, rank 2 a matrix
/// with shape {rows, cols}.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape, double fill = 0.0);
  DenseArray(Shape shape, std::vector<double> data);

  static DenseArray vector(std::initializer_list<double> values);
  static DenseArray matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  void fill(double value);
  bool same_shape(const DenseArray& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---- linear algebra -------------------------------------------------------

/// a (m x k) times b (k x n).
DenseArray matmul(const DenseArray& a, const DenseArray& b);
/// aᵀ (k x m)ᵀ times b (k x n) -> m x n.
DenseArray matmul_tn(const DenseArray& a, const DenseArray& b);
/// a (m x k) times bᵀ where b is n x k -> m x n.
DenseArray matmul_nt(const DenseArray& a, const DenseArray& b);
DenseArray transpose(const DenseArray& a);

/// W (m x n) times x (n) -> m.
DenseArray matvec(const DenseArray& w, const DenseArray& x);
/// Wᵀ y: W is m x n, y has m entries -> n.
DenseArray matvec_t(const DenseArray& w, const DenseArray& y);
/// g += a bᵀ for vectors a (m), b (n) and g (m x n).
void add_outer(DenseArray& g, std::span<const double> a, std::span<const double> b);
/// y += alpha * x, shapes must match in size.
void axpy(double alpha, const DenseArray& x, DenseArray& y);

DenseArray concat(const DenseArray& a, const DenseArray& b);
double dot(std::span<const double> a, std::span<const double> b);

// ---- activations and losses ----------------------------------------------

/// Numerically stable softmax over a rank-1 array.
DenseArray softmax(const DenseArray& v);
/// Softmax over the first `active` entries; the remainder are exactly 0.
DenseArray masked_softmax(const DenseArray& v, std::size_t active);
/// Backward pass of softmax given its output and dL/dy.
DenseArray softmax_backward(const DenseArray& y, const DenseArray& grad_y);

double sigmoid(double x);
DenseArray tanh(const DenseArray& v);
DenseArray sigmoid(const DenseArray& v);
DenseArray relu(const DenseArray& v);

/// -log(dist[target]) with dist[target] clamped at 1e-12.
double cross_entropy(const DenseArray& dist, std::size_t target);

/// Index of the largest entry in [first, size); ties go to the lowest index.
std::size_t argmax(const DenseArray& v, std::size_t first = 0);

/// True when every entry lies in (0,1) (or [0,1) when `strict` is false) and
/// the sum is within `tol` of one.
bool is_simplex(const DenseArray& v, double tol = 1e-9, bool strict = true);

}  // namespace attnctl
