#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spectral::linalg {

enum class MatrixKind { dense, diagonal };

/// Real matrix stored row-major. Diagonal matrices keep only the diagonal.
///
/// All entries are checked for finiteness on construction; the factory
/// functions throw std::invalid_argument on shape or value errors.
class Matrix {
 public:
  Matrix() = default;

  static Matrix dense(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Matrix diagonal(std::vector<double> diag);
  static Matrix identity(std::size_t n);
  static Matrix zeros(std::size_t rows, std::size_t cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  MatrixKind kind() const noexcept { return kind_; }
  bool is_square() const noexcept { return rows_ == cols_; }
  bool is_diagonal() const noexcept { return kind_ == MatrixKind::diagonal; }

  /// Element access; off-diagonal entries of a diagonal matrix read as 0.
  double operator()(std::size_t r, std::size_t c) const;

  /// Raw storage: row-major entries (dense) or the diagonal (diagonal).
  std::span<const double> values() const noexcept { return values_; }

  Matrix to_dense() const;
  Matrix transpose() const;
  Matrix scaled(double factor) const;
  bool is_symmetric(double rel_tol = 1e-12) const;

 private:
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values, MatrixKind kind);

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  MatrixKind kind_ = MatrixKind::dense;
};

Matrix operator*(const Matrix& lhs, const Matrix& rhs);
Matrix operator+(const Matrix& lhs, const Matrix& rhs);
Matrix operator-(const Matrix& lhs, const Matrix& rhs);
std::vector<double> multiply(const Matrix& m, std::span<const double> v);

double frobenius_norm(const Matrix& m);
double norm_1(const Matrix& m);
double vector_norm(std::span<const double> v);

enum class EstimateMethod { power, exact_eig, diagonal_closed_form };

struct SpectralEstimate {
  double rho_hat = 0.0;
  std::size_t iterations_used = 0;
  EstimateMethod method = EstimateMethod::power;
  /// Set when the input was the zero matrix (rho_hat is then exactly 0).
  bool zero_matrix = false;
  /// Multiply-adds spent in the matrix-vector products (k*d diagonal, k*d^2 dense).
  std::uint64_t multiply_adds = 0;
};

/// exp(dt * m). Diagonal inputs use the element-wise closed form; dense
/// inputs use scaling-and-squaring around a truncated Taylor series.
Matrix mat_exp(const Matrix& m, double dt);

/// k normalized power iterations from a seeded Gaussian start vector, then
/// the Rayleigh quotient magnitude |v^T M v|.
///
/// If an iterate underflows the run restarts once with seed + 1; a second
/// underflow throws std::runtime_error.
SpectralEstimate power_method(const Matrix& m, std::size_t k, std::uint64_t seed);

/// Same as power_method but always uses the dense d x d product, so the
/// multiply-add count is k*d^2 even for diagonal operators.
SpectralEstimate power_method_dense(const Matrix& m, std::size_t k, std::uint64_t seed);

/// Maximum eigenvalue magnitude. Diagonal matrices read it off directly;
/// dense matrices (d <= 64) go through Hessenberg reduction and shifted QR.
SpectralEstimate eig_radius_exact(const Matrix& m);

inline constexpr std::size_t kMaxExactDimension = 64;

/// All eigenvalues of a dense square matrix (d <= 64) via Francis QR.
/// Throws std::runtime_error once the 100*d iteration budget is spent.
std::vector<std::complex<double>> eigenvalues(const Matrix& m);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
std::vector<double> symmetric_eigenvalues(const Matrix& m);

/// Singular values by one-sided (Hestenes) Jacobi, descending.
std::vector<double> singular_values(const Matrix& m);

/// Gap between the two largest entry magnitudes of a diagonal matrix
/// (0 for a 1x1 matrix).
double spectral_gap(const Matrix& diag);

/// Solves W = A W A^T + B B^T by the doubling iteration
///   W <- W + A W A^T,  A <- A^2.
/// Throws std::domain_error("Gramian diverges ...") when rho(A) >= 1.
Matrix solve_discrete_lyapunov(const Matrix& abar, const Matrix& bbar);

/// ||W - A W A^T - B B^T||_F
double lyapunov_residual(const Matrix& w, const Matrix& abar, const Matrix& bbar);

struct ConditionNumber {
  double value = 1.0;
  /// True when computed from a numerically estimated eigenvector matrix.
  bool approximate = false;
};

/// kappa(M) = ||V||_2 ||V^-1||_2 for the eigenvector matrix V (unit columns).
/// Throws std::runtime_error for numerically defective matrices
/// (sigma_min(V) < 1e-10 sigma_max(V)).
ConditionNumber condition_number(const Matrix& m);

}  // namespace spectral::linalg
