#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <boost/numeric/odeint.hpp>

#include "qflow/dynamics.hpp"
#include "qflow/linalg.hpp"
#include "test_support.hpp"

using namespace qflow;
using namespace std::complex_literals;
using qflow::testing::random_hermitian;
using qflow::testing::random_matrix;
using qflow::testing::random_state;

TEST(Kron, IdentityTimesIdentity) {
  EXPECT_LE((kron(pauli::identity(), pauli::identity()) - Matrix::Identity(4, 4)).norm(), 0.0);
}

TEST(Kron, ZZIsDiagonalSignPattern) {
  Matrix expected = Matrix::Zero(4, 4);
  expected.diagonal() << 1.0, -1.0, -1.0, 1.0;
  EXPECT_EQ(kron(pauli::z(), pauli::z()), expected);
}

TEST(Kron, YZMatchesIndexExpansion) {
  const Matrix a = pauli::y();
  const Matrix b = pauli::z();
  const Matrix k = kron(a, b);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j)
      for (Index r = 0; r < 2; ++r)
        for (Index c = 0; c < 2; ++c) EXPECT_EQ(k(2 * i + r, 2 * j + c), a(i, j) * b(r, c));
  // diagonal blocks vanish, off-diagonal blocks are ∓i σᶻ
  EXPECT_EQ(k.block(0, 0, 2, 2).norm(), 0.0);
  EXPECT_EQ(k(0, 2), Complex(0.0, -1.0));
  EXPECT_EQ(k(1, 3), Complex(0.0, 1.0));
  EXPECT_EQ(k(2, 0), Complex(0.0, 1.0));
  EXPECT_EQ(k(3, 1), Complex(0.0, -1.0));
}

TEST(Kron, Associativity) {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 20; ++n) {
    const Matrix a = random_matrix(2, rng), b = random_matrix(3, rng), c = random_matrix(2, rng);
    EXPECT_LE((kron(kron(a, b), c) - kron(a, kron(b, c))).norm(), 1e-12);
  }
}

TEST(Commutator, PauliAlgebra) {
  EXPECT_LE((commutator(pauli::z(), pauli::x()) - 2.0i * pauli::y()).norm(), 1e-15);
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(3, rng);
  EXPECT_EQ(commutator(a, a).norm(), 0.0);
  EXPECT_LE((anticommutator(pauli::x(), pauli::x()) - 2.0 * pauli::identity()).norm(), 1e-15);
}

TEST(Commutator, RejectsMismatchedDimensions) {
  EXPECT_THROW(commutator(pauli::x(), Matrix::Identity(3, 3)), DimensionError);
}

TEST(PartialTrace, ProductState) {
  std::mt19937_64 rng(3);
  const Matrix rs = random_state(2, rng), re = random_state(3, rng);
  EXPECT_LE((partial_trace(kron(rs, re), {2, 3}, Subsystem::system) - rs).norm(), 1e-14);
  EXPECT_LE((partial_trace(kron(rs, re), {2, 3}, Subsystem::environment) - re).norm(), 1e-14);
}

TEST(PartialTrace, BellStateGivesMaximallyMixed) {
  Vector phi = Vector::Zero(4);
  phi(0) = phi(3) = 1.0 / std::sqrt(2.0);
  const Matrix rho = phi * phi.adjoint();
  EXPECT_LE((partial_trace(rho, {2, 2}, Subsystem::system) - 0.5 * pauli::identity()).norm(), 1e-15);
}

TEST(PartialTrace, MatchesIndexSum) {
  std::mt19937_64 rng(4);
  const Matrix rho = random_state(6, rng);
  const Matrix got = partial_trace(rho, {2, 3}, Subsystem::system);
  for (Index i = 0; i < 2; ++i)
    for (Index k = 0; k < 2; ++k) {
      Complex s = 0.0;
      for (Index j = 0; j < 3; ++j) s += rho(i * 3 + j, k * 3 + j);
      EXPECT_LE(std::abs(got(i, k) - s), 1e-15);
    }
  const Matrix env = partial_trace(rho, {2, 3}, Subsystem::environment);
  for (Index j = 0; j < 3; ++j)
    for (Index l = 0; l < 3; ++l) {
      Complex s = 0.0;
      for (Index i = 0; i < 2; ++i) s += rho(i * 3 + j, i * 3 + l);
      EXPECT_LE(std::abs(env(j, l) - s), 1e-15);
    }
}

TEST(PartialTrace, KronWithTraceFactor) {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 10; ++n) {
    const Matrix a = random_matrix(3, rng), b = random_matrix(4, rng);
    EXPECT_LE((partial_trace(kron(a, b), {3, 4}, Subsystem::system) - a * b.trace()).norm(), 1e-12);
  }
}

TEST(PartialTrace, RejectsBadDims) {
  EXPECT_THROW(partial_trace(Matrix::Identity(6, 6), {2, 2}, Subsystem::system), DimensionError);
}

TEST(MatrixExp, ZeroIsIdentity) { EXPECT_LE((matrix_exp(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm(), 0.0); }

TEST(MatrixExp, DiagonalPhase) {
  const Matrix u = matrix_exp(-1i * (std::numbers::pi / 2.0) * pauli::z());
  EXPECT_LE(std::abs(u(0, 0) - std::exp(-1i * std::numbers::pi / 2.0)), 1e-15);
  EXPECT_LE(std::abs(u(1, 1) - std::exp(1i * std::numbers::pi / 2.0)), 1e-15);
  EXPECT_LE(std::abs(u(0, 1)) + std::abs(u(1, 0)), 1e-15);
}

TEST(MatrixExp, AntiHermitianIsUnitary) {
  std::mt19937_64 rng(6);
  for (int n = 0; n < 10; ++n) {
    const Matrix u = matrix_exp(-1i * random_hermitian(5, rng));
    const Vector v = qflow::testing::random_pure(5, rng);
    EXPECT_NEAR((u * v).norm(), v.norm(), 1e-10);
  }
}

TEST(MatrixExp, GeneralInputMatchesOdeOracle) {
  // β̇ = −Γβ integrated independently of the exponential
  Eigen::Matrix3d gamma;
  gamma << 0.25, 1.0, 0.0, -1.0, 0.25, 1.0, 0.0, -1.0, 0.0;
  const double t = 3.0;
  const Matrix e = matrix_exp(Matrix(-t * gamma.cast<Complex>()));
  std::vector<double> b{0.3, -0.2, 0.6};
  const std::vector<double> b0 = b;
  namespace ode = boost::numeric::odeint;
  ode::integrate_adaptive(ode::make_controlled(1e-13, 1e-13, ode::runge_kutta_dopri5<std::vector<double>>()),
                          [&](const std::vector<double>& x, std::vector<double>& dx, double) {
                            for (int i = 0; i < 3; ++i) {
                              dx[i] = 0.0;
                              for (int j = 0; j < 3; ++j) dx[i] -= gamma(i, j) * x[j];
                            }
                          },
                          b, 0.0, t, 1e-3);
  for (int i = 0; i < 3; ++i) {
    Complex s = 0.0;
    for (int j = 0; j < 3; ++j) s += e(i, j) * b0[j];
    EXPECT_LE(std::abs(s - b[i]), 1e-8);
  }
}

TEST(MatrixLog, IdentityAndHalf) {
  EXPECT_LE(matrix_log_hermitian(Matrix::Identity(3, 3)).norm(), 1e-15);
  const Matrix l = matrix_log_hermitian(0.5 * pauli::identity());
  EXPECT_LE((l + std::log(2.0) * pauli::identity()).norm(), 1e-15);
}

TEST(MatrixLog, BlochStateEigenOracle) {
  const double b[3] = {0.3, -0.4, 0.5};
  const double r = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  const Matrix rho = bloch_density(b[0], b[1], b[2]);
  // log ρ = ½ln((1−r²)/4) I + ½ln((1+r)/(1−r)) (β̂·σ)
  const Matrix n = (b[0] * pauli::x() + b[1] * pauli::y() + b[2] * pauli::z()) / r;
  const Matrix expected =
      0.5 * std::log((1.0 - r * r) / 4.0) * pauli::identity() + 0.5 * std::log((1.0 + r) / (1.0 - r)) * n;
  EXPECT_LE((matrix_log_hermitian(rho) - expected).norm(), 1e-13);
  EXPECT_LE((matrix_exp(matrix_log_hermitian(rho)) - rho).norm(), 1e-13);
}

TEST(MatrixLog, RejectsNonHermitian) {
  Matrix m = pauli::identity();
  m(0, 1) = 1.0;
  EXPECT_THROW(matrix_log_hermitian(m), ValidationError);
}

TEST(Norms, FrobeniusAndExpectation) {
  EXPECT_DOUBLE_EQ(frobenius_norm_sq(pauli::x()), 2.0);
  Vector up = Vector::Zero(2);
  up(0) = 1.0;
  EXPECT_DOUBLE_EQ(expectation(HermitianOperator(pauli::z()), QuantumState::from_pure(up)), 1.0);
  EXPECT_EQ(trace(pauli::identity()), Complex(2.0));
}

TEST(Norms, BatteryEnergyOnBlochState) {
  const double h0 = 1.2, h3 = 0.2;
  const Matrix H0 = h0 * pauli::identity() + h3 * pauli::z();
  const double b3 = -0.35;
  EXPECT_NEAR(expectation(H0, bloch_density(0.1, 0.2, b3)), h0 + h3 * b3, 1e-15);
}

TEST(Norms, ExpectationIsLinear) {
  std::mt19937_64 rng(7);
  const Matrix a = random_hermitian(4, rng), b = random_hermitian(4, rng), rho = random_state(4, rng);
  const double al = 0.7, be = -1.3;
  EXPECT_NEAR(expectation(Matrix(al * a + be * b), rho), al * expectation(a, rho) + be * expectation(b, rho), 1e-12);
}

TEST(Validation, StateChecks) {
  EXPECT_TRUE(validate_state(0.5 * pauli::identity()));
  EXPECT_FALSE(validate_state(pauli::identity()));                      // trace 2
  EXPECT_FALSE(validate_state(Matrix(pauli::z() + pauli::identity() * 0.5)));  // negative eigenvalue
  Matrix nh = 0.5 * pauli::identity();
  nh(0, 1) = 0.1;
  EXPECT_FALSE(validate_state(nh));
  Matrix nan = 0.5 * pauli::identity();
  nan(0, 0) = std::nan("");
  EXPECT_FALSE(validate_state(nan));
  EXPECT_THROW(QuantumState(pauli::identity()), ValidationError);
  EXPECT_THROW(HermitianOperator(pauli::y() * 1i), ValidationError);
  EXPECT_NO_THROW(HermitianOperator(pauli::y()));
}

TEST(Haar, UnitaryAndDeterministic) {
  const Matrix u = haar_random_unitary(4, 42);
  EXPECT_LE((u * u.adjoint() - Matrix::Identity(4, 4)).norm(), 1e-10);
  EXPECT_EQ(u, haar_random_unitary(4, 42));
}

TEST(Haar, FirstMomentIsTraceOverDimension) {
  std::mt19937_64 rng(8);
  const Index d = 3;
  const Matrix a = random_hermitian(d, rng);
  const int n = 10000;
  Matrix sum = Matrix::Zero(d, d), sum_sq = Matrix::Zero(d, d);
  for (int k = 0; k < n; ++k) {
    const Matrix u = haar_random_unitary(d, rng);
    const Matrix x = u * a * u.adjoint();
    sum += x;
    sum_sq += x.cwiseAbs2().cast<Complex>();
  }
  const Matrix mean = sum / double(n);
  const Matrix expected = (a.trace() / double(d)) * Matrix::Identity(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      const double var = sum_sq(i, j).real() / n - std::norm(mean(i, j));
      const double se = std::sqrt(var / n);
      EXPECT_LE(std::abs(mean(i, j) - expected(i, j)), 3.0 * se + 1e-12) << i << "," << j;
    }
}

TEST(Haar, SecondMomentProjectsOntoSymmetricSubspaces) {
  std::mt19937_64 rng(9);
  const Index d = 2;
  const Matrix a = random_state(d, rng), b = random_state(d, rng);
  const Matrix g = kron(a, b);
  // swap operator and symmetric/antisymmetric projectors
  Matrix swap = Matrix::Zero(d * d, d * d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) swap(i * d + j, j * d + i) = 1.0;
  const Matrix id = Matrix::Identity(d * d, d * d);
  const Matrix p_plus = 0.5 * (id + swap), p_minus = 0.5 * (id - swap);
  const double lp = (g * p_plus).trace().real() / (d * (d + 1) / 2.0);
  const double lm = (g * p_minus).trace().real() / (d * (d - 1) / 2.0);
  const Matrix expected = lp * p_plus + lm * p_minus;
  const int n = 10000;
  Matrix sum = Matrix::Zero(d * d, d * d), sum_sq = Matrix::Zero(d * d, d * d);
  for (int k = 0; k < n; ++k) {
    const Matrix u = haar_random_unitary(d, rng);
    const Matrix uu = kron(u, u);
    const Matrix x = uu * g * uu.adjoint();
    sum += x;
    sum_sq += x.cwiseAbs2().cast<Complex>();
  }
  const Matrix mean = sum / double(n);
  for (Index i = 0; i < d * d; ++i)
    for (Index j = 0; j < d * d; ++j) {
      const double se = std::sqrt(std::max(0.0, sum_sq(i, j).real() / n - std::norm(mean(i, j))) / n);
      EXPECT_LE(std::abs(mean(i, j) - expected(i, j)), 3.0 * se + 1e-12) << i << "," << j;
    }
}
