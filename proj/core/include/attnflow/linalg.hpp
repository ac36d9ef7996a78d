#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace attnflow {

using Vector = std::vector<double>;

// Dense row-major matrix. Storage is double; the model keeps values
// representable in float32 so that checkpoints round-trip exactly.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b
void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out);
// out (1 x m) = x (1 x k) * b
void vecmat(std::span<const double> x, const Matrix& b, std::span<double> out);

double dot(std::span<const double> a, std::span<const double> b);

// In-place softmax over a row. Entries flagged in `masked` are excluded and
// set to 0. A row with nothing left unmasked becomes all zeros.
void masked_softmax(std::span<double> row, std::span<const unsigned char> masked);
void softmax(std::span<double> row);

struct LayerNormStats {
  double mean = 0.0;
  double rstd = 0.0;
};

// out = (x - mean) * rstd * gain + bias; returns the statistics used.
LayerNormStats layer_norm(std::span<const double> x, std::span<const double> gain,
                          std::span<const double> bias, double epsilon,
                          std::span<double> out);

// Tanh-approximated GELU and its derivative.
double gelu(double u);
double gelu_grad(double u);

bool all_finite(std::span<const double> v);

}  // namespace attnflow
