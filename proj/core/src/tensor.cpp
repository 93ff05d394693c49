#include "attnctl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace attnctl {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

void require_rank(const DenseArray& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(a.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const DenseArray& a, const DenseArray& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) +
                       " and " + shape_to_string(b.shape()));
}

}  // namespace

DenseArray::DenseArray(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto extent : shape_) {
    if (extent == 0) throw DimensionError("DenseArray: zero extent in " + shape_to_string(shape_));
  }
  data_.assign(product(shape_), fill);
}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto extent : shape_) {
    if (extent == 0) throw DimensionError("DenseArray: zero extent in " + shape_to_string(shape_));
  }
  if (data_.size() != product(shape_)) {
    throw DimensionError("DenseArray: " + std::to_string(data_.size()) +
                         " values do not fill shape " + shape_to_string(shape_));
  }
}

DenseArray DenseArray::vector(std::initializer_list<double> values) {
  return DenseArray({values.size()}, std::vector<double>(values));
}

DenseArray DenseArray::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("DenseArray::matrix: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseArray({r, c}, std::move(data));
}

std::size_t DenseArray::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t DenseArray::cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

std::span<double> DenseArray::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> DenseArray::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

void DenseArray::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool DenseArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  DenseArray out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

DenseArray matmul_tn(const DenseArray& a, const DenseArray& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  if (a.rows() != b.rows()) mismatch("matmul_tn", a, b);
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  DenseArray out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * m;
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += api * brow[j];
    }
  }
  return out;
}

DenseArray matmul_nt(const DenseArray& a, const DenseArray& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  DenseArray out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = dot(arow, b.row(j));
  }
  (void)k;
  return out;
}

DenseArray transpose(const DenseArray& a) {
  require_rank(a, 2, "transpose");
  DenseArray out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

DenseArray matvec(const DenseArray& w, const DenseArray& x) {
  require_rank(w, 2, "matvec");
  if (w.cols() != x.size()) mismatch("matvec", w, x);
  DenseArray out({w.rows()});
  for (std::size_t i = 0; i < w.rows(); ++i) out[i] = dot(w.row(i), x.data());
  return out;
}

DenseArray matvec_t(const DenseArray& w, const DenseArray& y) {
  require_rank(w, 2, "matvec_t");
  if (w.rows() != y.size()) mismatch("matvec_t", w, y);
  DenseArray out({w.cols()});
  double* po = out.data().data();
  const std::size_t n = w.cols();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    const double* wrow = w.row(i).data();
    for (std::size_t j = 0; j < n; ++j) po[j] += yi * wrow[j];
  }
  return out;
}

void add_outer(DenseArray& g, std::span<const double> a, std::span<const double> b) {
  if (g.rank() != 2 || g.rows() != a.size() || g.cols() != b.size()) {
    throw DimensionError("add_outer: target " + shape_to_string(g.shape()) + " vs " +
                         std::to_string(a.size()) + "x" + std::to_string(b.size()));
  }
  const std::size_t n = b.size();
  double* pg = g.data().data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    double* grow = pg + i * n;
    for (std::size_t j = 0; j < n; ++j) grow[j] += ai * b[j];
  }
}

void axpy(double alpha, const DenseArray& x, DenseArray& y) {
  if (x.size() != y.size()) mismatch("axpy", x, y);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

DenseArray concat(const DenseArray& a, const DenseArray& b) {
  std::vector<double> data(a.storage());
  data.insert(data.end(), b.storage().begin(), b.storage().end());
  const std::size_t n = data.size();
  return DenseArray({n}, std::move(data));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

DenseArray softmax(const DenseArray& v) {
  if (v.empty()) throw DomainError("softmax: empty input");
  return masked_softmax(v, v.size());
}

DenseArray masked_softmax(const DenseArray& v, std::size_t active) {
  if (v.empty() || active == 0) throw DomainError("softmax: empty input");
  if (active > v.size()) throw DimensionError("masked_softmax: active count exceeds length");
  DenseArray out({v.size()});
  const double mx = *std::max_element(v.storage().begin(), v.storage().begin() + active);
  double total = 0.0;
  for (std::size_t i = 0; i < active; ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (std::size_t i = 0; i < active; ++i) out[i] /= total;
  return out;
}

DenseArray softmax_backward(const DenseArray& y, const DenseArray& grad_y) {
  const double inner = dot(y.data(), grad_y.data());
  DenseArray out({y.size()});
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * (grad_y[i] - inner);
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DenseArray tanh(const DenseArray& v) {
  DenseArray out(v);
  for (auto& x : out.storage()) x = std::tanh(x);
  return out;
}

DenseArray sigmoid(const DenseArray& v) {
  DenseArray out(v);
  for (auto& x : out.storage()) x = sigmoid(x);
  return out;
}

DenseArray relu(const DenseArray& v) {
  DenseArray out(v);
  for (auto& x : out.storage()) x = x > 0.0 ? x : 0.0;
  return out;
}

double cross_entropy(const DenseArray& dist, std::size_t target) {
  if (target >= dist.size()) {
    throw DomainError("cross_entropy: target " + std::to_string(target) + " outside [0," +
                      std::to_string(dist.size()) + ")");
  }
  return -std::log(std::max(dist[target], 1e-12));
}

std::size_t argmax(const DenseArray& v, std::size_t first) {
  if (first >= v.size()) throw DomainError("argmax: empty range");
  std::size_t best = first;
  for (std::size_t i = first + 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

bool is_simplex(const DenseArray& v, double tol, bool strict) {
  if (v.empty()) return false;
  double total = 0.0;
  for (double x : v.storage()) {
    if (!std::isfinite(x)) return false;
    if (strict ? !(x > 0.0 && x < 1.0) : !(x >= 0.0 && x <= 1.0)) {
      if (!(v.size() == 1 && x == 1.0)) return false;
    }
    total += x;
  }
  return std::abs(total - 1.0) <= tol;
}

}  // namespace attnctl
