#include "msdn/ndmath.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "msdn/errors.h"

namespace msdn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "matrix data length " << data_.size() << " does not match shape " << rows_ << "x"
        << cols_;
    throw ShapeError(msg.str());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer list for Matrix");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_mismatch("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) acc += a(p, i) * b(p, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) {
    throw ShapeError("matvec: matrix " + m.shape_string() + " vs vector of length " +
                     std::to_string(x.size()));
  }
  std::vector<double> y(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) y[i] = dot(m.row(i), x);
  return y;
}

std::vector<double> vecmat(std::span<const double> x, const Matrix& m) {
  if (m.rows() != x.size()) {
    throw ShapeError("vecmat: vector of length " + std::to_string(x.size()) + " vs matrix " +
                     m.shape_string());
  }
  std::vector<double> y(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) acc += x[i] * m(i, j);
    y[j] = acc;
  }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double scale, const Matrix& b, Matrix& a) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("axpy", a, b);
  auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += scale * bd[i];
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw ArgumentError("log_sum_exp of an empty slice");
  const double m = *std::max_element(x.begin(), x.end());
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - m);
  return m + std::log(acc);
}

std::vector<double> softmax_stable(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Matrix softmax_stable(const Matrix& logits, Axis axis) {
  if (axis == Axis::kRow) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      auto s = softmax_stable(logits.row(i));
      std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
  }
  return transpose(softmax_stable(transpose(logits), Axis::kRow));
}

Matrix softmax_backward(const Matrix& y, const Matrix& dy, Axis axis) {
  if (y.rows() != dy.rows() || y.cols() != dy.cols()) shape_mismatch("softmax_backward", y, dy);
  Matrix dx(y.rows(), y.cols());
  if (axis == Axis::kRow) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double inner = dot(y.row(i), dy.row(i));
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (dy(i, j) - inner);
    }
  } else {
    for (std::size_t j = 0; j < y.cols(); ++j) {
      double inner = 0.0;
      for (std::size_t i = 0; i < y.rows(); ++i) inner += y(i, j) * dy(i, j);
      for (std::size_t i = 0; i < y.rows(); ++i) dx(i, j) = y(i, j) * (dy(i, j) - inner);
    }
  }
  return dx;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : state_(splitmix64(seed)) {
  if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t Rng::next_u64() {
  state_ ^= state_ >> 12;
  state_ ^= state_ << 25;
  state_ ^= state_ >> 27;
  return state_ * 0x2545F4914F6CDD1DULL;
}

double Rng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::next_index(std::size_t n) {
  if (n == 0) throw ArgumentError("next_index: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t bound = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = next_double();
  } while (u1 <= 0.0);
  const double u2 = next_double();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Matrix rng_uniform(Rng& rng, double lo, double hi, std::size_t rows, std::size_t cols) {
  if (!(lo < hi)) {
    throw ArgumentError("rng_uniform: require lo < hi, got lo=" + std::to_string(lo) +
                        " hi=" + std::to_string(hi));
  }
  Matrix out(rows, cols);
  for (double& v : out.data()) {
    v = lo + (hi - lo) * rng.next_double();
    // Rounding can land exactly on hi when the interval is tiny.
    if (v >= hi) v = std::nextafter(hi, lo);
  }
  return out;
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> point, std::span<const double> analytic,
                           double step) {
  if (!(step > 0.0)) throw ArgumentError("grad_check: step must be positive");
  if (point.size() != analytic.size()) {
    throw ShapeError("grad_check: point has " + std::to_string(point.size()) +
                     " coordinates but analytic gradient has " + std::to_string(analytic.size()));
  }
  std::vector<double> probe(point.begin(), point.end());
  GradCheckResult result;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double plus = f(probe);
    probe[i] = saved - step;
    const double minus = f(probe);
    probe[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("grad_check: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    const double numeric = (plus - minus) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
    const double err = std::abs(a - numeric) / denom;
    if (i == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace msdn
