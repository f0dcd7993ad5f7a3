#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace msdn {

// Dense row-major matrix of doubles. Vectors are represented either as
// std::vector<double> or as 1×n / n×1 matrices where a matrix is needed.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Axis {
  kRow,     // normalize each row
  kColumn,  // normalize each column
};

// a · b with left-to-right accumulation over the inner index.
Matrix matmul(const Matrix& a, const Matrix& b);
// a · bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// aᵀ · b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// y = m · x.
std::vector<double> matvec(const Matrix& m, std::span<const double> x);
// y = mᵀ · x.
std::vector<double> vecmat(std::span<const double> x, const Matrix& m);

double dot(std::span<const double> a, std::span<const double> b);

// In-place a += scale * b.
void axpy(double scale, const Matrix& b, Matrix& a);

Matrix softmax_stable(const Matrix& logits, Axis axis);
std::vector<double> softmax_stable(std::span<const double> logits);
double log_sum_exp(std::span<const double> x);

// Given y = softmax(x) along `axis` and dL/dy, returns dL/dx.
Matrix softmax_backward(const Matrix& y, const Matrix& dy, Axis axis);

bool all_finite(std::span<const double> values);
inline bool all_finite(const Matrix& m) { return all_finite(m.data()); }

// xorshift64* generator (shifts 12/25/27, multiplier 0x2545F4914F6CDD1D)
// whose state is seeded through one splitmix64 step so that every seed,
// including 0, maps to a non-zero state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double next_double();
  // Uniform integer in [0, n).
  std::size_t next_index(std::size_t n);
  // Standard normal by Box–Muller; the second variate of each pair is cached.
  double next_normal();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix rng_uniform(Rng& rng, double lo, double hi, std::size_t rows, std::size_t cols);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline constexpr double kDefaultGradCheckStep = 1e-5;

// Compares `analytic` against central differences of `f` around `point`.
// Error per coordinate is |a - n| / max(1, |a|, |n|). Throws NumericError
// when f is non-finite at any probe.
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> point, std::span<const double> analytic,
                           double step = kDefaultGradCheckStep);

}  // namespace msdn
