#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "qflow/dynamics.hpp"
#include "qflow/flows.hpp"
#include "qflow/models.hpp"
#include "test_support.hpp"

using namespace qflow;
using namespace std::complex_literals;
using qflow::testing::trace_distance;

namespace {

HamiltonianParts constant_qubit_pair() {
  // two spins with a constant drive: time-independent total Hamiltonian
  return build_two_spins(TimeFunction::constant(0.8), 0.6, 1.0);
}

Eigen::VectorXd spectrum(const Matrix& rho) { return hermitian_eigen(rho).eigenvalues(); }

}  // namespace

TEST(TimeGrid, PointsIncludeBothEnds) {
  const TimeGrid g{0.0, 10.0, 999};
  const auto p = g.points();
  ASSERT_EQ(p.size(), 1000u);
  EXPECT_EQ(p.front(), 0.0);
  EXPECT_EQ(p.back(), 10.0);
  EXPECT_THROW((TimeGrid{1.0, 1.0, 5}).validate(), std::invalid_argument);
  EXPECT_THROW((TimeGrid{0.0, 1.0, 0}).validate(), std::invalid_argument);
}

TEST(VonNeumann, MatchesMatrixExponential) {
  const auto p = constant_qubit_pair();
  std::mt19937_64 rng(11);
  const QuantumState rho0(qflow::testing::random_state(4, rng));
  const TimeGrid grid{0.0, 5.0, 50};
  const auto traj = evolve_von_neumann(p, rho0, grid);
  const Matrix h = total_hamiltonian_dense(p, 0.0);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const Matrix u = matrix_exp(Matrix(-1i * h * traj.times[k]));
    EXPECT_LE(trace_distance(traj.states[k].rho(), u * rho0.rho() * u.adjoint()), 1e-8) << traj.times[k];
  }
}

TEST(VonNeumann, ZeroHamiltonianIsStatic) {
  HamiltonianParts p;
  p.dims = {3, 1};
  p.h_s = [](double) { return Matrix(Matrix::Zero(3, 3)); };
  p.h_s_dot = p.h_s;
  std::mt19937_64 rng(12);
  const QuantumState rho0(qflow::testing::random_state(3, rng));
  const auto traj = evolve_von_neumann(p, rho0, TimeGrid{0.0, 2.0, 4});
  for (const auto& s : traj.states) EXPECT_LE((s.rho() - rho0.rho()).norm(), 1e-15);
}

TEST(VonNeumann, PreservesTraceHermiticityPuritySpectrum) {
  const auto p = build_two_spins(TimeFunction::sinusoid(1.0, 1.0, 2.0), 1.0);
  std::mt19937_64 rng(13);
  const QuantumState rho0(qflow::testing::random_state(4, rng));
  const auto traj = evolve_von_neumann(p, rho0, TimeGrid{0.0, 10.0, 200});
  const Eigen::VectorXd s0 = spectrum(rho0.rho());
  for (const auto& s : traj.states) {
    EXPECT_LE(std::abs(s.rho().trace() - 1.0), 1e-8);
    EXPECT_LE(hermiticity_defect(s.rho()), 1e-8);
    EXPECT_NEAR(s.purity(), rho0.purity(), 1e-8);
    EXPECT_LE((spectrum(s.rho()) - s0).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Schrodinger, AgreesWithVonNeumann) {
  const auto p = build_two_spins(TimeFunction::exp_decay(2.0, 0.5), 1.0);
  Vector psi0 = Vector::Zero(4);
  psi0(0) = 1.0;
  const TimeGrid grid{0.0, 10.0, 100};
  const auto pure = evolve_schrodinger(p, psi0, grid);
  const auto mixed = evolve_von_neumann(p, QuantumState::from_pure(psi0), grid);
  for (std::size_t k = 0; k < pure.times.size(); ++k)
    EXPECT_LE(trace_distance(pure.states[k] * pure.states[k].adjoint(), mixed.states[k].rho()), 1e-8);
}

TEST(Lindblad, ZeroRateReducesToUnitary) {
  const auto sb = build_spin_boson(1.0, 1.0, 0.0);
  const QuantumState rho0(bloch_density(0.3, 0.1, 0.6));
  const TimeGrid grid{0.0, 5.0, 50};
  const auto l = evolve_lindblad(sb.parts, rho0, grid);
  const auto u = evolve_von_neumann(sb.parts, rho0, grid);
  for (std::size_t k = 0; k < l.times.size(); ++k) EXPECT_LE(trace_distance(l.states[k].rho(), u.states[k].rho()), 1e-8);
}

TEST(Lindblad, SpinBosonRelaxesToMaximallyMixed) {
  const auto sb = build_spin_boson(1.0, 1.0, 0.25);
  const double s = 1.0 / std::sqrt(3.0);
  const BlochVector b0{{s, s, s}};
  const auto traj = evolve_lindblad(sb.parts, b0.state(), TimeGrid{0.0, 50.0, 500});
  EXPECT_LT(BlochVector::from_density(traj.states.back().rho()).norm(), 1e-3);
  for (const auto& st : traj.states) {
    EXPECT_LE(std::abs(st.rho().trace() - 1.0), 1e-8);
    EXPECT_LE(hermiticity_defect(st.rho()), 1e-8);
  }
}

TEST(Lindblad, MatchesBlochEquations) {
  const auto sb = build_spin_boson(1.0, 1.0, 0.25);
  const double s = 1.0 / std::sqrt(3.0);
  const BlochVector b0{{s, s, s}};
  const TimeGrid grid{0.0, 50.0, 500};
  const auto traj = evolve_lindblad(sb.parts, b0.state(), grid);
  const auto bloch = evolve_bloch_spin_boson(1.0, 1.0, 0.25, 1.0, b0, grid, BlochConvention::master_equation);
  ASSERT_EQ(bloch.size(), traj.states.size());
  for (std::size_t k = 0; k < bloch.size(); ++k) {
    const auto b = BlochVector::from_density(traj.states[k].rho());
    for (int i = 0; i < 3; ++i) EXPECT_LE(std::abs(b.beta[i] - bloch[k].beta[i]), 1e-7) << traj.times[k];
  }
}

TEST(Bloch, OriginIsFixed) {
  const auto out = evolve_bloch_spin_boson(1.0, 1.0, 0.25, 1.0, BlochVector{}, TimeGrid{0.0, 20.0, 20});
  for (const auto& b : out) EXPECT_EQ(b.norm(), 0.0);
}

TEST(Bloch, GammaEigenvalues) {
  Eigen::EigenSolver<Eigen::Matrix3d> es(spin_boson_gamma_matrix(1.0, 1.0, 0.25, 1.0));
  std::vector<Complex> ev(es.eigenvalues().data(), es.eigenvalues().data() + 3);
  std::sort(ev.begin(), ev.end(), [](Complex a, Complex b) { return a.imag() < b.imag(); });
  EXPECT_NEAR(ev[1].real(), 0.124, 1e-3);
  EXPECT_NEAR(ev[1].imag(), 0.0, 1e-12);
  EXPECT_NEAR(ev[0].real(), 0.188, 1e-3);
  EXPECT_NEAR(ev[0].imag(), -1.407, 1e-3);
  EXPECT_NEAR(ev[2].real(), 0.188, 1e-3);
  EXPECT_NEAR(ev[2].imag(), 1.407, 1e-3);
}

TEST(Bloch, ExponentialMatchesMatrixExp) {
  const double s = 1.0 / std::sqrt(3.0);
  const BlochVector b0{{s, s, s}};
  const std::vector<double> ts{0.0, 0.7, 3.0, 11.0};
  const auto out = evolve_bloch_spin_boson(1.0, 1.0, 0.25, 1.0, b0, ts);
  const Eigen::Matrix3d g = spin_boson_gamma_matrix(1.0, 1.0, 0.25, 1.0);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Matrix e = matrix_exp(Matrix(-ts[k] * g.cast<Complex>()));
    for (int i = 0; i < 3; ++i) {
      double x = 0.0;
      for (int j = 0; j < 3; ++j) x += e(i, j).real() * b0.beta[j];
      EXPECT_NEAR(out[k].beta[i], x, 1e-12);
    }
  }
}

TEST(QubitExact, InitialTimeAndPeriod) {
  const auto q = build_qubit_battery(1.2, 0.2, 0.0, {0.5, 0.6, 0.0});
  const BlochVector b0{{0.0, 0.0, 0.5}};
  EXPECT_LE((evolve_qubit_exact(q, b0, 0.0).rho() - b0.density()).norm(), 1e-15);
  // ρ is invariant under the global phase, so |α|t/ħ = π is already a full period of ρ
  const double period = 2.0 * std::numbers::pi / q.alpha_norm();
  EXPECT_LE(trace_distance(evolve_qubit_exact(q, b0, period).rho(), b0.density()), 1e-10);
}

TEST(QubitExact, MatchesIntegrator) {
  const auto q = build_qubit_battery(1.2, 0.2, 0.0, {0.5, 0.6, 0.0});
  const BlochVector b0{{0.0, 0.0, 0.5}};
  const TimeGrid grid{0.0, 10.0, 40};
  const auto traj = evolve_von_neumann(q.parts, b0.state(), grid);
  for (std::size_t k = 0; k < traj.times.size(); ++k)
    EXPECT_LE(trace_distance(traj.states[k].rho(), evolve_qubit_exact(q, b0, traj.times[k]).rho()), 1e-8);
}

TEST(FiniteDifference, PolynomialIsExact) {
  std::vector<double> t, f;
  for (int i = 0; i <= 20; ++i) {
    t.push_back(0.1 * i);
    f.push_back(std::pow(t.back(), 5) - 2.0 * t.back());
  }
  const auto d = finite_difference(t, f, 8);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(d[i], 5.0 * std::pow(t[i], 4) - 2.0, 1e-9);
  const auto d2 = finite_difference(t, f, 2);
  EXPECT_GT(std::abs(d2[10] - (5.0 * std::pow(t[10], 4) - 2.0)), 1e-4);
  EXPECT_THROW(finite_difference(t, f, 3), std::invalid_argument);
}

TEST(FirstLaw, TwoSpinsInternalEnergyRate) {
  const auto drive = TimeFunction::sinusoid(1.0, 1.0, 2.0);
  const auto p = build_two_spins(drive, 1.0);
  Vector psi0 = Vector::Zero(4);
  psi0(0) = 1.0;
  const TimeGrid grid{0.0, 10.0, 999};
  const auto traj = evolve_schrodinger(p, psi0, grid);
  std::vector<double> u, ud;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const auto f = flow_ops(p, traj.times[k]);
    u.push_back(expectation_complex(f.u, traj.states[k]).real());
    ud.push_back(expectation_complex(f.u_dot, traj.states[k]).real());
  }
  const auto d = finite_difference(traj.times, u, 8);
  double worst = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) worst = std::max(worst, std::abs(d[k] - ud[k]));
  EXPECT_LE(worst, 1e-5);
}

TEST(Integration, NonFiniteHamiltonianFails) {
  HamiltonianParts p;
  p.dims = {2, 1};
  p.h_s = [](double t) { return Matrix(t > 0.5 ? std::nan("") * pauli::x() : pauli::x()); };
  p.h_s_dot = [](double) { return Matrix(Matrix::Zero(2, 2)); };
  EXPECT_THROW(evolve_von_neumann(p, QuantumState::maximally_mixed(2), TimeGrid{0.0, 1.0, 4}), IntegrationError);
}
