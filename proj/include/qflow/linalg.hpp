#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace qflow {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using Index = Eigen::Index;

using namespace std::complex_literals;

inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kPositivityTol = 1e-10;
inline constexpr double kLogEps = 1e-12;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw DimensionError(std::string(what) + ": matrix must be square and non-empty");
}

inline void require_same_dim(const Matrix& a, const Matrix& b, const char* what) {
  require_square(a, what);
  require_square(b, what);
  if (a.rows() != b.rows())
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.rows()) +
                         " vs " + std::to_string(b.rows()) + ")");
}

}  // namespace detail

namespace pauli {

inline Matrix identity() { return Matrix::Identity(2, 2); }

inline Matrix x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline Matrix y() {
  Matrix m(2, 2);
  m << 0, -1i, 1i, 0;
  return m;
}

inline Matrix z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

}  // namespace pauli

/// Kronecker product with the convention (a⊗b)(i·db + j, k·db + l) = a(i,k)·b(j,l).
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k)
      out.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
  return out;
}

inline Matrix commutator(const Matrix& a, const Matrix& b) {
  detail::require_same_dim(a, b, "commutator");
  return a * b - b * a;
}

inline Matrix anticommutator(const Matrix& a, const Matrix& b) {
  detail::require_same_dim(a, b, "anticommutator");
  return a * b + b * a;
}

inline Complex trace(const Matrix& m) {
  detail::require_square(m, "trace");
  return m.trace();
}

/// ‖m‖²_F = Tr(m†m).
inline double frobenius_norm_sq(const Matrix& m) { return m.squaredNorm(); }

inline bool is_finite(const Matrix& m) { return m.allFinite(); }

inline double hermiticity_defect(const Matrix& m) { return (m - m.adjoint()).norm(); }

inline bool is_hermitian(const Matrix& m, double tol = kHermitianTol) {
  return m.rows() == m.cols() && hermiticity_defect(m) <= tol;
}

/// Eigen-decomposition of the Hermitian part of `m`; eigenvalues ascending.
inline Eigen::SelfAdjointEigenSolver<Matrix> hermitian_eigen(const Matrix& m) {
  const Matrix h = 0.5 * (m + m.adjoint());
  return Eigen::SelfAdjointEigenSolver<Matrix>(h);
}

struct BipartiteDims {
  Index system = 1;
  Index environment = 1;

  Index total() const { return system * environment; }
  friend bool operator==(const BipartiteDims&, const BipartiteDims&) = default;
};

enum class Subsystem { system, environment };

inline Matrix partial_trace(const Matrix& m, BipartiteDims dims, Subsystem keep) {
  detail::require_square(m, "partial_trace");
  if (dims.system <= 0 || dims.environment <= 0 || dims.total() != m.rows())
    throw DimensionError("partial_trace: dims " + std::to_string(dims.system) + "x" +
                         std::to_string(dims.environment) + " do not factor dimension " +
                         std::to_string(m.rows()));
  const Index ds = dims.system;
  const Index de = dims.environment;
  if (keep == Subsystem::system) {
    Matrix out = Matrix::Zero(ds, ds);
    for (Index i = 0; i < ds; ++i)
      for (Index k = 0; k < ds; ++k) out(i, k) = m.block(i * de, k * de, de, de).trace();
    return out;
  }
  Matrix out = Matrix::Zero(de, de);
  for (Index i = 0; i < ds; ++i) out += m.block(i * de, i * de, de, de);
  return out;
}

/// Matrix exponential. Hermitian and anti-Hermitian inputs go through the
/// Hermitian eigensolver; everything else uses scaling-and-squaring Padé.
inline Matrix matrix_exp(const Matrix& m) {
  detail::require_square(m, "matrix_exp");
  const double scale = std::max(1.0, m.norm());
  if (hermiticity_defect(m) <= 1e-14 * scale) {
    const auto es = hermitian_eigen(m);
    const Eigen::VectorXcd d = es.eigenvalues().array().exp().cast<Complex>();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
  }
  if ((m + m.adjoint()).norm() <= 1e-14 * scale) {
    // m = iH with H Hermitian
    const auto es = hermitian_eigen(Matrix(-1i * m));
    const Eigen::VectorXcd d = (1i * es.eigenvalues().cast<Complex>()).array().exp();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
  }
  return m.exp();
}

/// log of a Hermitian positive semidefinite matrix; eigenvalues are clamped
/// below at `eps` before taking the logarithm.
inline Matrix matrix_log_hermitian(const Matrix& m, double eps = kLogEps) {
  detail::require_square(m, "matrix_log_hermitian");
  if (!is_hermitian(m, kHermitianTol * std::max(1.0, m.norm())))
    throw ValidationError("matrix_log_hermitian: input is not Hermitian");
  const auto es = hermitian_eigen(m);
  const Eigen::VectorXd logs = es.eigenvalues().array().max(eps).log();
  return es.eigenvectors() * logs.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

/// Result of re-checking an object's invariants.
struct Validation {
  bool ok = true;
  std::string reason;

  explicit operator bool() const { return ok; }
};

inline Validation validate_hermitian(const Matrix& m, double tol = kHermitianTol) {
  if (m.rows() != m.cols() || m.rows() == 0) return {false, "not square"};
  if (!m.allFinite()) return {false, "non-finite entry"};
  if (const double d = hermiticity_defect(m); d > tol)
    return {false, "not Hermitian (defect " + std::to_string(d) + ")"};
  return {};
}

inline Validation validate_state(const Matrix& rho, double tol = kHermitianTol) {
  if (auto v = validate_hermitian(rho, tol); !v) return v;
  if (const double dt = std::abs(rho.trace() - 1.0); dt > kTraceTol)
    return {false, "trace deviates from 1 by " + std::to_string(dt)};
  if (const double lo = hermitian_eigen(rho).eigenvalues()(0); lo < -kPositivityTol)
    return {false, "negative eigenvalue " + std::to_string(lo)};
  return {};
}

/// Observable with a checked Hermiticity invariant.
class HermitianOperator {
 public:
  HermitianOperator() = default;

  explicit HermitianOperator(Matrix m, std::string units = {}, double tol = kHermitianTol)
      : matrix_(std::move(m)), units_(std::move(units)) {
    const double scale = std::max(1.0, matrix_.norm());
    if (auto v = validate_hermitian(matrix_, tol * scale); !v)
      throw ValidationError("HermitianOperator: " + v.reason);
  }

  const Matrix& matrix() const { return matrix_; }
  const std::string& units() const { return units_; }
  Index dim() const { return matrix_.rows(); }

 private:
  Matrix matrix_;
  std::string units_;
};

/// Density matrix: Hermitian, unit trace, positive semidefinite.
class QuantumState {
 public:
  QuantumState() = default;

  explicit QuantumState(Matrix rho, double tol = kHermitianTol) : rho_(std::move(rho)) {
    if (auto v = validate_state(rho_, tol); !v) throw ValidationError("QuantumState: " + v.reason);
  }

  static QuantumState from_pure(const Vector& psi) {
    const double n = psi.norm();
    if (n == 0.0) throw ValidationError("QuantumState: zero vector");
    const Vector u = psi / n;
    return QuantumState(u * u.adjoint());
  }

  static QuantumState maximally_mixed(Index dim) {
    return QuantumState(Matrix::Identity(dim, dim) / static_cast<double>(dim));
  }

  /// Skips validation; for states produced by trusted propagators that are
  /// re-checked separately.
  static QuantumState unchecked(Matrix rho) {
    QuantumState s;
    s.rho_ = std::move(rho);
    return s;
  }

  const Matrix& rho() const { return rho_; }
  Index dim() const { return rho_.rows(); }
  double purity() const { return (rho_ * rho_).trace().real(); }
  Validation validate() const { return validate_state(rho_); }

 private:
  Matrix rho_;
};

/// Normalised state vector.
class PureState {
 public:
  PureState() = default;

  explicit PureState(Vector psi) : psi_(std::move(psi)) {
    const double n = psi_.norm();
    if (!(n > 0.0) || !psi_.allFinite()) throw ValidationError("PureState: invalid vector");
    psi_ /= n;
  }

  static PureState unchecked(Vector psi) {
    PureState s;
    s.psi_ = std::move(psi);
    return s;
  }

  const Vector& vector() const { return psi_; }
  Index dim() const { return psi_.size(); }
  QuantumState density() const { return QuantumState::from_pure(psi_); }

 private:
  Vector psi_;
};

/// Tr(ρA) with the imaginary part checked against `tol` and discarded.
inline double expectation(const Matrix& a, const Matrix& rho, double tol = kHermitianTol) {
  detail::require_same_dim(a, rho, "expectation");
  const Complex v = (rho * a).trace();
  if (std::abs(v.imag()) > tol * std::max(1.0, a.norm()))
    throw ValidationError("expectation: imaginary part " + std::to_string(v.imag()) +
                          " above tolerance");
  return v.real();
}

inline double expectation(const HermitianOperator& a, const QuantumState& s) {
  return expectation(a.matrix(), s.rho());
}

inline double expectation(const Matrix& a, const PureState& s) {
  if (a.rows() != s.dim()) throw DimensionError("expectation: dimension mismatch");
  return s.vector().dot(a * s.vector()).real();
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
/// diag(R) absorbed into Q.
template <class Rng>
Matrix haar_random_unitary(Index dim, Rng& rng) {
  if (dim < 1) throw DimensionError("haar_random_unitary: dim must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < dim; ++i) z(i, j) = Complex(normal(rng), normal(rng)) / std::sqrt(2.0);
  Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < dim; ++j) {
    const Complex d = r(j, j);
    const double ad = std::abs(d);
    q.col(j) *= (ad > 0.0 ? d / ad : Complex(1.0));
  }
  return q;
}

inline Matrix haar_random_unitary(Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return haar_random_unitary(dim, rng);
}

/// ρ = (I + β·σ)/2.
inline Matrix bloch_density(double b1, double b2, double b3) {
  return 0.5 * (pauli::identity() + b1 * pauli::x() + b2 * pauli::y() + b3 * pauli::z());
}

}  // namespace qflow
