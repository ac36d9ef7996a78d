#include "attnflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace attnflow {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace {

// c[i][j] += sum_p a(i, p) * b[p][j] with a(i, p) = a[i * a_row + p * a_col].
// Each output accumulates its terms in increasing p, so results match a
// plain triple loop bit for bit.
void gemm_acc(std::size_t n, std::size_t k, std::size_t m, const double* a, std::size_t a_row,
              std::size_t a_col, const double* __restrict b, double* __restrict c) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    double* __restrict c0 = c + i * m;
    double* __restrict c1 = c0 + m;
    double* __restrict c2 = c1 + m;
    double* __restrict c3 = c2 + m;
    const double* a0 = a + i * a_row;
    const double* a1 = a0 + a_row;
    const double* a2 = a1 + a_row;
    const double* a3 = a2 + a_row;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      double x[4][4];
      for (std::size_t r = 0; r < 4; ++r) {
        const double* ar = a + (i + r) * a_row;
        for (std::size_t t = 0; t < 4; ++t) x[r][t] = ar[(p + t) * a_col];
      }
      const double* __restrict b0 = b + p * m;
      const double* __restrict b1 = b0 + m;
      const double* __restrict b2 = b1 + m;
      const double* __restrict b3 = b2 + m;
      for (std::size_t j = 0; j < m; ++j) {
        const double u0 = b0[j], u1 = b1[j], u2 = b2[j], u3 = b3[j];
        c0[j] = (((c0[j] + x[0][0] * u0) + x[0][1] * u1) + x[0][2] * u2) + x[0][3] * u3;
        c1[j] = (((c1[j] + x[1][0] * u0) + x[1][1] * u1) + x[1][2] * u2) + x[1][3] * u3;
        c2[j] = (((c2[j] + x[2][0] * u0) + x[2][1] * u1) + x[2][2] * u2) + x[2][3] * u3;
        c3[j] = (((c3[j] + x[3][0] * u0) + x[3][1] * u1) + x[3][2] * u2) + x[3][3] * u3;
      }
    }
    for (; p < k; ++p) {
      const double x0 = a0[p * a_col], x1 = a1[p * a_col], x2 = a2[p * a_col], x3 = a3[p * a_col];
      const double* __restrict bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) {
        const double u = bp[j];
        c0[j] += x0 * u;
        c1[j] += x1 * u;
        c2[j] += x2 * u;
        c3[j] += x3 * u;
      }
    }
  }
  for (; i < n; ++i) {
    double* __restrict ci = c + i * m;
    const double* ai = a + i * a_row;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = ai[p * a_col];
      const double* __restrict bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += x * bp[j];
    }
  }
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols() == b.rows());
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
  else out.fill(0.0);
  gemm_acc(a.rows(), a.cols(), b.cols(), a.data(), a.cols(), 1, b.data(), out.data());
}

void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols());
  gemm_acc(a.cols(), a.rows(), b.cols(), a.data(), 1, a.cols(), b.data(), out.data());
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols() == b.cols());
  Matrix bt(b.cols(), b.rows());
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) bt(c, r) = b(r, c);
  matmul(a, bt, out);
}

void vecmat(std::span<const double> x, const Matrix& b, std::span<double> out) {
  assert(x.size() == b.rows() && out.size() == b.cols());
  std::fill(out.begin(), out.end(), 0.0);
  gemm_acc(1, x.size(), b.cols(), x.data(), x.size(), 1, b.data(), out.data());
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void masked_softmax(std::span<double> row, std::span<const unsigned char> masked) {
  assert(masked.empty() || masked.size() == row.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!masked.empty() && masked[i]) continue;
    mx = std::max(mx, row[i]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    std::fill(row.begin(), row.end(), 0.0);
    return;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!masked.empty() && masked[i]) {
      row[i] = 0.0;
    } else {
      row[i] = std::exp(row[i] - mx);
      total += row[i];
    }
  }
  for (double& v : row) v /= total;
}

void softmax(std::span<double> row) { masked_softmax(row, {}); }

LayerNormStats layer_norm(std::span<const double> x, std::span<const double> gain,
                          std::span<const double> bias, double epsilon,
                          std::span<double> out) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double rstd = 1.0 / std::sqrt(var + epsilon);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
  }
  return {mean, rstd};
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u)));
}

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace attnflow
