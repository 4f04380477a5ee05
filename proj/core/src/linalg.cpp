#include "spectral/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace spectral::linalg {

namespace {

using Complex = std::complex<double>;

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_square(const Matrix& m, const char* who) {
  if (!m.is_square()) {
    throw std::invalid_argument(std::string(who) + ": matrix must be square, got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

// Row-major dense copy of any matrix.
std::vector<double> dense_values(const Matrix& m) {
  if (!m.is_diagonal()) return {m.values().begin(), m.values().end()};
  std::vector<double> out(m.rows() * m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) out[i * m.cols() + i] = m.values()[i];
  return out;
}

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t n, std::size_t inner, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a[i * inner + k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) c[i * m + j] += aik * b[k * m + j];
    }
  }
  return c;
}

double norm_1_dense(const std::vector<double>& a, std::size_t n) {
  double best = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += std::abs(a[i * n + j]);
    best = std::max(best, col);
  }
  return best;
}

std::vector<double> seeded_unit_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  double norm = 0.0;
  while (norm == 0.0) {
    for (auto& x : v) x = normal(rng);
    norm = vector_norm(v);
  }
  for (auto& x : v) x /= norm;
  return v;
}

// Householder reduction to upper Hessenberg form, in place.
void to_hessenberg(std::vector<double>& a, std::size_t n) {
  if (n < 3) return;
  std::vector<double> v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += a[i * n + k] * a[i * n + k];
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a[(k + 1) * n + k] > 0) alpha = -alpha;
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t i = k + 1; i < n; ++i) v[i] = a[i * n + k];
    v[k + 1] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    // A <- (I - 2vv^T/v^Tv) A
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) dot += v[i] * a[i * n + j];
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = k + 1; i < n; ++i) a[i * n + j] -= f * v[i];
    }
    // A <- A (I - 2vv^T/v^Tv)
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) dot += a[i * n + j] * v[j];
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t j = k + 1; j < n; ++j) a[i * n + j] -= f * v[j];
    }
    for (std::size_t i = k + 2; i < n; ++i) a[i * n + k] = 0.0;
  }
}

double sign_of(double magnitude, double sign_source) {
  return sign_source >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

// Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr lineage).
std::vector<Complex> hessenberg_qr(std::vector<double>& h, std::size_t n_u) {
  const int n = static_cast<int>(n_u);
  auto a = [&](int r, int c) -> double& { return h[static_cast<std::size_t>(r) * n_u + c]; };
  std::vector<Complex> w(n_u);
  const long budget = 100L * n;
  long total_its = 0;

  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

  int nn = n - 1;
  int l = 0;
  double t = 0.0;
  double x = 0.0, y = 0.0, z = 0.0, p = 0.0, q = 0.0, r = 0.0, s = 0.0, u = 0.0, v = 0.0,
         ww = 0.0;
  while (nn >= 0) {
    int its = 0;
    do {
      for (l = nn; l > 0; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= kEps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        w[nn--] = x + t;
      } else {
        y = a(nn - 1, nn - 1);
        ww = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + ww;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            w[nn - 1] = w[nn] = x + z;
            if (z != 0.0) w[nn] = x - ww / z;
          } else {
            w[nn] = Complex(x + p, z);
            w[nn - 1] = std::conj(w[nn]);
          }
          nn -= 2;
        } else {
          if (++total_its > budget) {
            throw std::runtime_error("eigenvalues: QR iteration did not converge within " +
                                     std::to_string(budget) + " sweeps");
          }
          if (its > 0 && its % 10 == 0) {
            // exceptional shift
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            ww = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - ww) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u <= kEps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return w;
}

// Solves (A - mu I) x = b by Gaussian elimination with partial pivoting.
// Exactly singular pivots are nudged so inverse iteration can proceed.
std::vector<Complex> solve_shifted(const std::vector<double>& a, std::size_t n, Complex mu,
                                   std::vector<Complex> b, double scale) {
  std::vector<Complex> m(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] = a[i * n + j] - (i == j ? mu : 0.0);
  const double tiny = std::max(scale, 1.0) * kEps;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t i = col + 1; i < n; ++i)
      if (std::abs(m[i * n + col]) > std::abs(m[piv * n + col])) piv = i;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m[col * n + j], m[piv * n + j]);
      std::swap(b[col], b[piv]);
    }
    if (std::abs(m[col * n + col]) < tiny) m[col * n + col] = tiny;
    for (std::size_t i = col + 1; i < n; ++i) {
      const Complex f = m[i * n + col] / m[col * n + col];
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) m[i * n + j] -= f * m[col * n + j];
      b[i] -= f * b[col];
    }
  }
  std::vector<Complex> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    Complex acc = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) acc -= m[ii * n + j] * x[j];
    x[ii] = acc / m[ii * n + ii];
  }
  return x;
}

double complex_norm(const std::vector<Complex>& v) {
  double s = 0.0;
  for (const auto& c : v) s += std::norm(c);
  return std::sqrt(s);
}

double eigen_residual(const std::vector<double>& a, std::size_t n, Complex lambda,
                      const std::vector<Complex>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Complex acc = -lambda * v[i];
    for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * v[j];
    s += std::norm(acc);
  }
  return std::sqrt(s);
}

}  // namespace

// --- Matrix -----------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values, MatrixKind kind)
    : rows_(rows), cols_(cols), values_(std::move(values)), kind_(kind) {
  for (double x : values_) {
    if (!std::isfinite(x)) throw std::invalid_argument("Matrix: non-finite entry");
  }
}

Matrix Matrix::dense(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw std::invalid_argument("Matrix::dense: expected " + std::to_string(rows * cols) +
                                " entries, got " + std::to_string(values.size()));
  }
  return Matrix(rows, cols, std::move(values), MatrixKind::dense);
}

Matrix Matrix::diagonal(std::vector<double> diag) {
  const std::size_t n = diag.size();
  return Matrix(n, n, std::move(diag), MatrixKind::diagonal);
}

Matrix Matrix::identity(std::size_t n) { return diagonal(std::vector<double>(n, 1.0)); }

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) {
  return dense(rows, cols, std::vector<double>(rows * cols, 0.0));
}

double Matrix::operator()(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= cols_) throw std::out_of_range("Matrix: index out of range");
  if (kind_ == MatrixKind::diagonal) return r == c ? values_[r] : 0.0;
  return values_[r * cols_ + c];
}

Matrix Matrix::to_dense() const {
  if (kind_ == MatrixKind::dense) return *this;
  return dense(rows_, cols_, dense_values(*this));
}

Matrix Matrix::transpose() const {
  if (kind_ == MatrixKind::diagonal) return *this;
  std::vector<double> t(values_.size());
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t[j * rows_ + i] = values_[i * cols_ + j];
  return dense(cols_, rows_, std::move(t));
}

Matrix Matrix::scaled(double factor) const {
  std::vector<double> v = values_;
  for (auto& x : v) x *= factor;
  return Matrix(rows_, cols_, std::move(v), kind_);
}

bool Matrix::is_symmetric(double rel_tol) const {
  if (!is_square()) return false;
  if (kind_ == MatrixKind::diagonal) return true;
  double scale = 0.0;
  for (double x : values_) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      if (std::abs(values_[i * cols_ + j] - values_[j * cols_ + i]) > rel_tol * scale) return false;
  return true;
}

Matrix operator*(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.cols() != rhs.rows()) throw std::invalid_argument("Matrix product: shape mismatch");
  if (lhs.is_diagonal() && rhs.is_diagonal()) {
    std::vector<double> d(lhs.rows());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = lhs.values()[i] * rhs.values()[i];
    return Matrix::diagonal(std::move(d));
  }
  return Matrix::dense(lhs.rows(), rhs.cols(),
                       matmul(dense_values(lhs), dense_values(rhs), lhs.rows(), lhs.cols(),
                              rhs.cols()));
}

namespace {
Matrix elementwise(const Matrix& lhs, const Matrix& rhs, double sign) {
  if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols())
    throw std::invalid_argument("Matrix sum: shape mismatch");
  if (lhs.is_diagonal() && rhs.is_diagonal()) {
    std::vector<double> d(lhs.rows());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = lhs.values()[i] + sign * rhs.values()[i];
    return Matrix::diagonal(std::move(d));
  }
  auto a = dense_values(lhs);
  const auto b = dense_values(rhs);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += sign * b[i];
  return Matrix::dense(lhs.rows(), lhs.cols(), std::move(a));
}
}  // namespace

Matrix operator+(const Matrix& lhs, const Matrix& rhs) { return elementwise(lhs, rhs, 1.0); }
Matrix operator-(const Matrix& lhs, const Matrix& rhs) { return elementwise(lhs, rhs, -1.0); }

std::vector<double> multiply(const Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) throw std::invalid_argument("multiply: dimension mismatch");
  std::vector<double> out(m.rows(), 0.0);
  if (m.is_diagonal()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.values()[i] * v[i];
    return out;
  }
  const auto vals = m.values();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += vals[i * m.cols() + j] * v[j];
    out[i] = acc;
  }
  return out;
}

double frobenius_norm(const Matrix& m) { return vector_norm(m.values()); }

double norm_1(const Matrix& m) {
  if (m.is_diagonal()) {
    double best = 0.0;
    for (double x : m.values()) best = std::max(best, std::abs(x));
    return best;
  }
  double best = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) col += std::abs(m(i, j));
    best = std::max(best, col);
  }
  return best;
}

double vector_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// --- matrix exponential -------------------------------------------------------

Matrix mat_exp(const Matrix& m, double dt) {
  require_square(m, "mat_exp");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("mat_exp: dt must be > 0");
  if (m.is_diagonal()) {
    std::vector<double> d(m.rows());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::exp(dt * m.values()[i]);
    return Matrix::diagonal(std::move(d));
  }
  const std::size_t n = m.rows();
  std::vector<double> x(m.values().begin(), m.values().end());
  for (auto& e : x) e *= dt;

  // Scale so ||X/2^s||_1 <= 1/2; Taylor terms then fall below 1e-20 by order 18.
  const double norm = norm_1_dense(x, n);
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const double scale = std::ldexp(1.0, -squarings);
  for (auto& e : x) e *= scale;

  std::vector<double> result(n * n, 0.0);
  std::vector<double> term(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) result[i * n + i] = term[i * n + i] = 1.0;
  for (int order = 1; order <= 30; ++order) {
    term = matmul(term, x, n, n, n);
    for (auto& e : term) e /= order;
    for (std::size_t i = 0; i < term.size(); ++i) result[i] += term[i];
    if (norm_1_dense(term, n) <= kEps * kEps * norm_1_dense(result, n)) break;
  }
  for (int s = 0; s < squarings; ++s) result = matmul(result, result, n, n, n);
  return Matrix::dense(n, n, std::move(result));
}

// --- spectral radius ------------------------------------------------------------

namespace {

SpectralEstimate power_iterate(const Matrix& m, std::size_t k, std::uint64_t seed, bool force_dense) {
  require_square(m, "power_method");
  if (k == 0) throw std::invalid_argument("power_method: k must be >= 1");
  const std::size_t n = m.rows();
  SpectralEstimate est;
  est.method = EstimateMethod::power;
  if (std::all_of(m.values().begin(), m.values().end(), [](double x) { return x == 0.0; })) {
    est.zero_matrix = true;
    return est;
  }
  const bool diagonal_path = m.is_diagonal() && !force_dense;
  const std::vector<double> dense = diagonal_path ? std::vector<double>{} : dense_values(m);
  const std::uint64_t cost = diagonal_path ? n : n * n;

  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> w(n, 0.0);
    if (diagonal_path) {
      for (std::size_t i = 0; i < n; ++i) w[i] = m.values()[i] * v[i];
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += dense[i * n + j] * v[j];
        w[i] = acc;
      }
    }
    est.multiply_adds += cost;
    return w;
  };

  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> v = seeded_unit_vector(n, seed + static_cast<std::uint64_t>(attempt));
    bool underflow = false;
    for (std::size_t it = 0; it < k; ++it) {
      auto w = apply(v);
      const double norm = vector_norm(w);
      if (!(norm >= std::numeric_limits<double>::min()) || !std::isfinite(norm)) {
        underflow = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
    }
    if (underflow) continue;
    // Rayleigh quotient on the final unit iterate (not counted as an iteration).
    double rq = 0.0;
    if (diagonal_path) {
      for (std::size_t i = 0; i < n; ++i) rq += m.values()[i] * v[i] * v[i];
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += dense[i * n + j] * v[j];
        rq += v[i] * acc;
      }
    }
    est.rho_hat = std::abs(rq);
    est.iterations_used = k;
    return est;
  }
  throw std::runtime_error("power_method: iterate norm underflow after restart");
}

}  // namespace

SpectralEstimate power_method(const Matrix& m, std::size_t k, std::uint64_t seed) {
  return power_iterate(m, k, seed, false);
}

SpectralEstimate power_method_dense(const Matrix& m, std::size_t k, std::uint64_t seed) {
  return power_iterate(m, k, seed, true);
}

std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
  require_square(m, "eigenvalues");
  const std::size_t n = m.rows();
  if (n > kMaxExactDimension) {
    throw std::invalid_argument("eigenvalues: dimension " + std::to_string(n) +
                                " exceeds the validation limit of 64");
  }
  if (m.is_diagonal()) return {m.values().begin(), m.values().end()};
  auto h = dense_values(m);
  to_hessenberg(h, n);
  return hessenberg_qr(h, n);
}

SpectralEstimate eig_radius_exact(const Matrix& m) {
  require_square(m, "eig_radius_exact");
  SpectralEstimate est;
  if (m.is_diagonal()) {
    est.method = EstimateMethod::diagonal_closed_form;
    for (double x : m.values()) est.rho_hat = std::max(est.rho_hat, std::abs(x));
    return est;
  }
  est.method = EstimateMethod::exact_eig;
  for (const auto& lambda : eigenvalues(m)) est.rho_hat = std::max(est.rho_hat, std::abs(lambda));
  return est;
}

std::vector<double> symmetric_eigenvalues(const Matrix& m) {
  require_square(m, "symmetric_eigenvalues");
  const std::size_t n = m.rows();
  if (m.is_diagonal()) {
    std::vector<double> d(m.values().begin(), m.values().end());
    std::sort(d.begin(), d.end());
    return d;
  }
  auto a = dense_values(m);
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };
  double total = 0.0;
  for (double x : a) total += x * x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off <= 1e-32 * total || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = at(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

std::vector<double> singular_values(const Matrix& m) {
  const Matrix work = m.rows() >= m.cols() ? m.to_dense() : m.transpose().to_dense();
  const std::size_t rows = work.rows(), cols = work.cols();
  // Column-major copy so each Hestenes rotation touches contiguous data.
  std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) col[j][i] = work(i, j);

  for (int sweep = 0; sweep < 100; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = i + 1; j < cols; ++j) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < rows; ++k) {
          alpha += col[i][k] * col[i][k];
          beta += col[j][k] * col[j][k];
          gamma += col[i][k] * col[j][k];
        }
        if (std::abs(gamma) <= kEps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < rows; ++k) {
          const double xi = col[i][k], xj = col[j][k];
          col[i][k] = c * xi - s * xj;
          col[j][k] = s * xi + c * xj;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(cols);
  for (std::size_t j = 0; j < cols; ++j) sv[j] = vector_norm(col[j]);
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

double spectral_gap(const Matrix& diag) {
  if (!diag.is_diagonal()) throw std::invalid_argument("spectral_gap: diagonal operator required");
  double first = 0.0, second = 0.0;
  for (double x : diag.values()) {
    const double a = std::abs(x);
    if (a > first) {
      second = first;
      first = a;
    } else if (a > second) {
      second = a;
    }
  }
  return diag.rows() < 2 ? 0.0 : first - second;
}

// --- Gramian ------------------------------------------------------------------

Matrix solve_discrete_lyapunov(const Matrix& abar, const Matrix& bbar) {
  require_square(abar, "solve_discrete_lyapunov");
  if (bbar.rows() != abar.rows())
    throw std::invalid_argument("solve_discrete_lyapunov: B rows must match A");
  const std::size_t n = abar.rows();
  if (n <= kMaxExactDimension && eig_radius_exact(abar).rho_hat >= 1.0) {
    throw std::domain_error("Gramian diverges: spectral radius of A is >= 1");
  }
  const auto b = dense_values(bbar);
  std::vector<double> w = matmul(b, dense_values(bbar.transpose()), n, bbar.cols(), n);
  std::vector<double> a = dense_values(abar);

  for (int iter = 0; iter < 64; ++iter) {
    // W <- W + A W A^T
    const auto aw = matmul(a, w, n, n, n);
    std::vector<double> awat(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += aw[i * n + k] * a[j * n + k];
        awat[i * n + j] = acc;
      }
    double inc = 0.0, tot = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] += awat[i];
      inc += awat[i] * awat[i];
      tot += w[i] * w[i];
    }
    if (!std::isfinite(tot)) break;
    if (inc <= kEps * kEps * tot) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const double avg = 0.5 * (w[i * n + j] + w[j * n + i]);
          w[i * n + j] = w[j * n + i] = avg;
        }
      return Matrix::dense(n, n, std::move(w));
    }
    a = matmul(a, a, n, n, n);
  }
  throw std::domain_error("Gramian diverges: doubling iteration did not converge");
}

double lyapunov_residual(const Matrix& w, const Matrix& abar, const Matrix& bbar) {
  const Matrix r = w - abar * w * abar.transpose() - bbar * bbar.transpose();
  return frobenius_norm(r);
}

// --- condition number ----------------------------------------------------------

ConditionNumber condition_number(const Matrix& m) {
  require_square(m, "condition_number");
  if (m.is_diagonal() || m.is_symmetric()) return {1.0, false};
  const std::size_t n = m.rows();
  const auto lambdas = eigenvalues(m);
  const auto a = dense_values(m);
  const double scale = norm_1_dense(a, n);
  const double accept = 1e-8 * std::max(scale, 1.0);

  std::vector<std::vector<Complex>> vecs;
  vecs.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Complex lambda = lambdas[j];
    const Complex mu = lambda + Complex(kEps * std::max(scale, 1.0), 0.0);
    const auto start = seeded_unit_vector(n, 7919u + j);
    std::vector<Complex> x(start.begin(), start.end());
    for (int it = 0; it < 3; ++it) {
      x = solve_shifted(a, n, mu, x, scale);
      const double nx = complex_norm(x);
      for (auto& c : x) c /= nx;
    }
    // Clustered eigenvalues: try to pick a fresh direction inside the eigenspace.
    std::vector<Complex> orth = x;
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      if (std::abs(lambdas[i] - lambda) > 1e-8 * (1.0 + std::abs(lambda))) continue;
      Complex dot = 0.0;
      for (std::size_t k = 0; k < n; ++k) dot += std::conj(vecs[i][k]) * orth[k];
      for (std::size_t k = 0; k < n; ++k) orth[k] -= dot * vecs[i][k];
    }
    const double no = complex_norm(orth);
    if (no > 1e-6) {
      for (auto& c : orth) c /= no;
      if (eigen_residual(a, n, lambda, orth) <= accept) x = std::move(orth);
    }
    vecs.push_back(std::move(x));
  }

  // Singular values of complex V from its real embedding [[X, -Y], [Y, X]].
  std::vector<double> emb(4 * n * n, 0.0);
  const std::size_t w = 2 * n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double re = vecs[j][i].real(), im = vecs[j][i].imag();
      emb[i * w + j] = re;
      emb[i * w + j + n] = -im;
      emb[(i + n) * w + j] = im;
      emb[(i + n) * w + j + n] = re;
    }
  const auto sv = singular_values(Matrix::dense(w, w, std::move(emb)));
  const double smax = sv.front(), smin = sv.back();
  if (smin < 1e-10 * smax) {
    throw std::runtime_error("condition_number: matrix is numerically defective (sigma_min/sigma_max = " +
                             std::to_string(smin / smax) + ")");
  }
  return {smax / smin, true};
}

}  // namespace spectral::linalg
