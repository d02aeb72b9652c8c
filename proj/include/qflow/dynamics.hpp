#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "qflow/kron_operator.hpp"
#include "qflow/linalg.hpp"
#include "qflow/models.hpp"

namespace qflow {

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform grid with n_steps intervals, i.e. n_steps + 1 points.
struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  Index n_steps = 1;

  void validate() const {
    if (!std::isfinite(t_start) || !std::isfinite(t_end) || !(t_end > t_start))
      throw std::invalid_argument("TimeGrid: need finite t_end > t_start");
    if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
  }

  double dt() const { return (t_end - t_start) / static_cast<double>(n_steps); }

  std::vector<double> points() const {
    validate();
    std::vector<double> out(static_cast<std::size_t>(n_steps) + 1);
    for (Index k = 0; k <= n_steps; ++k)
      out[static_cast<std::size_t>(k)] = (k == n_steps) ? t_end : t_start + static_cast<double>(k) * dt();
    return out;
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

struct IntegratorOptions {
  double rtol = 1e-9;
  double atol = 1e-11;
  int max_steps = 1'000'000;           ///< between two consecutive output times
  double trace_tol = 1e-8;
  double hermitian_tol = 1e-8;
  double positivity_threshold = -1e-6;  ///< Lindblad abort threshold
  double unitary_positivity_tol = 1e-8;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<QuantumState> states;
  /// Indices of post-measurement entries; the entry before each is the pre-measurement state.
  std::vector<std::size_t> measurement_indices;

  std::size_t size() const { return times.size(); }
};

struct PureTrajectory {
  std::vector<double> times;
  std::vector<Vector> states;

  std::size_t size() const { return times.size(); }
};

struct BlochVector {
  std::array<double, 3> beta{};

  double norm() const { return std::sqrt(beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2]); }

  Validation validate() const {
    for (double b : beta)
      if (!std::isfinite(b)) return {false, "non-finite Bloch component"};
    if (norm() > 1.0 + 1e-9) return {false, "Bloch vector longer than 1"};
    return {};
  }

  Matrix density() const { return bloch_density(beta[0], beta[1], beta[2]); }

  QuantumState state() const {
    if (auto v = validate(); !v) throw ValidationError("BlochVector: " + v.reason);
    return QuantumState::unchecked(density());
  }

  static BlochVector from_density(const Matrix& rho) {
    if (rho.rows() != 2 || rho.cols() != 2) throw DimensionError("BlochVector: need a 2x2 matrix");
    return {{(rho * pauli::x()).trace().real(), (rho * pauli::y()).trace().real(),
             (rho * pauli::z()).trace().real()}};
  }
};

namespace detail {

using OdeState = std::vector<double>;

inline Eigen::Map<const Matrix> as_matrix(const OdeState& x, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(reinterpret_cast<const Complex*>(x.data()), rows, cols);
}

inline Eigen::Map<Matrix> as_matrix(OdeState& x, Index rows, Index cols) {
  return Eigen::Map<Matrix>(reinterpret_cast<Complex*>(x.data()), rows, cols);
}

inline OdeState pack(const Matrix& m) {
  OdeState x(static_cast<std::size_t>(2 * m.size()));
  as_matrix(x, m.rows(), m.cols()) = m;
  return x;
}

inline void require_sorted_times(const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("evolve: empty time list");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw std::invalid_argument("evolve: times must increase strictly");
}

/// Adaptive Dormand–Prince 5(4) stepping exactly onto every requested time.
template <class Rhs, class Observer>
void integrate_on_times(Rhs rhs, OdeState& x, const std::vector<double>& times,
                        const IntegratorOptions& opt, Observer obs) {
  namespace ode = boost::numeric::odeint;
  require_sorted_times(times);
  if (times.size() == 1) {
    obs(x, times.front());
    return;
  }
  auto stepper = ode::make_controlled(opt.atol, opt.rtol, ode::runge_kutta_dopri5<OdeState>());
  const double dt0 = std::min(1e-3, 0.1 * (times[1] - times[0]));
  try {
    ode::integrate_times(stepper, rhs, x, times.begin(), times.end(), dt0, obs,
                         ode::max_step_checker(opt.max_steps));
  } catch (const ode::odeint_error& e) {
    throw IntegrationError(std::string("integrator failed: ") + e.what());
  }
}

/// Lindblad channels embedded on S ⊗ E with precomputed L†L.
struct EmbeddedChannel {
  TimeFunction rate;
  Matrix l, l_dag, l_dag_l;
};

inline std::vector<EmbeddedChannel> embed_channels(const HamiltonianParts& p) {
  std::vector<EmbeddedChannel> out;
  const Matrix ie = Matrix::Identity(p.dims.environment, p.dims.environment);
  for (const auto& ch : p.lindblad) {
    if (ch.op.rows() != p.dims.system) throw DimensionError("Lindblad operator must act on S");
    Matrix l = p.dims.environment == 1 ? ch.op : kron(ch.op, ie);
    Matrix ld = l.adjoint();
    Matrix ldl = ld * l;
    out.push_back({ch.rate, std::move(l), std::move(ld), std::move(ldl)});
  }
  return out;
}

inline void check_output_state(const Matrix& rho, double t, const IntegratorOptions& opt,
                               double positivity_floor) {
  if (!rho.allFinite()) throw IntegrationError("non-finite state at t=" + std::to_string(t));
  if (const double dt = std::abs(rho.trace() - 1.0); dt > opt.trace_tol)
    throw IntegrationError("trace drift " + std::to_string(dt) + " at t=" + std::to_string(t));
  if (const double h = hermiticity_defect(rho); h > opt.hermitian_tol)
    throw IntegrationError("Hermiticity drift " + std::to_string(h) + " at t=" + std::to_string(t));
  if (const double lo = hermitian_eigen(rho).eigenvalues()(0); lo < positivity_floor)
    throw IntegrationError("negative eigenvalue " + std::to_string(lo) + " at t=" + std::to_string(t));
}

inline Trajectory evolve_density(const HamiltonianParts& p, const QuantumState& rho0,
                                 const std::vector<double>& times, const IntegratorOptions& opt,
                                 bool dissipative) {
  const Index d = p.dims.total();
  if (rho0.dim() != d) throw DimensionError("evolve: initial state dimension mismatch");
  const double hbar = p.hbar;

  Matrix h_const = Matrix::Zero(d, d);
  if (p.h_e) h_const += kron(Matrix::Identity(p.dims.system, p.dims.system), *p.h_e);
  if (p.v_se) h_const += p.v_se->to_dense();
  const Matrix ie = Matrix::Identity(p.dims.environment, p.dims.environment);
  const auto channels = dissipative ? embed_channels(p) : std::vector<EmbeddedChannel>{};

  auto rhs = [&](const OdeState& x, OdeState& dxdt, double t) {
    dxdt.resize(x.size());
    const auto rho = as_matrix(x, d, d);
    auto out = as_matrix(dxdt, d, d);
    const Matrix h = h_const + (p.dims.environment == 1 ? p.h_s(t) : kron(p.h_s(t), ie));
    const Matrix hr = h * rho;
    out = (-1i / hbar) * (hr - hr.adjoint());
    for (const auto& ch : channels) {
      const double g = ch.rate.value(t);
      if (g == 0.0) continue;
      const Matrix ar = ch.l_dag_l * rho;
      out += g * (ch.l * rho * ch.l_dag - 0.5 * (ar + ar.adjoint()));
    }
  };

  Trajectory traj;
  traj.times.reserve(times.size());
  traj.states.reserve(times.size());
  const double floor = dissipative ? opt.positivity_threshold : -opt.unitary_positivity_tol;
  auto obs = [&](const OdeState& x, double t) {
    Matrix rho = as_matrix(x, d, d);
    check_output_state(rho, t, opt, floor);
    traj.times.push_back(t);
    traj.states.push_back(QuantumState::unchecked(std::move(rho)));
  };
  OdeState x = pack(rho0.rho());
  integrate_on_times(rhs, x, times, opt, obs);
  return traj;
}

}  // namespace detail

/// Liouville–von Neumann evolution of the joint state under H_tot(t).
inline Trajectory evolve_von_neumann(const HamiltonianParts& p, const QuantumState& rho0,
                                     const std::vector<double>& times,
                                     const IntegratorOptions& opt = {}) {
  return detail::evolve_density(p, rho0, times, opt, false);
}

inline Trajectory evolve_von_neumann(const HamiltonianParts& p, const QuantumState& rho0,
                                     const TimeGrid& grid, const IntegratorOptions& opt = {}) {
  return evolve_von_neumann(p, rho0, grid.points(), opt);
}

/// Lindblad master equation; aborts when an eigenvalue drops below the positivity threshold.
inline Trajectory evolve_lindblad(const HamiltonianParts& p, const QuantumState& rho0,
                                  const std::vector<double>& times,
                                  const IntegratorOptions& opt = {}) {
  if (!p.has_lindblad()) throw std::invalid_argument("evolve_lindblad: model has no Lindblad operators");
  return detail::evolve_density(p, rho0, times, opt, true);
}

inline Trajectory evolve_lindblad(const HamiltonianParts& p, const QuantumState& rho0,
                                  const TimeGrid& grid, const IntegratorOptions& opt = {}) {
  return evolve_lindblad(p, rho0, grid.points(), opt);
}

/// Schrödinger evolution of a pure joint state using the structured Hamiltonian.
inline PureTrajectory evolve_schrodinger(const HamiltonianParts& p, const Vector& psi0,
                                         const std::vector<double>& times,
                                         const IntegratorOptions& opt = {}) {
  const Index d = p.dims.total();
  if (psi0.size() != d) throw DimensionError("evolve_schrodinger: dimension mismatch");
  KronOperator h_const = KronOperator::zero(p.dims);
  if (p.h_e) h_const += KronOperator::on_environment(p.dims.system, *p.h_e);
  if (p.v_se) h_const += *p.v_se;
  const double hbar = p.hbar;

  auto rhs = [&](const detail::OdeState& x, detail::OdeState& dxdt, double t) {
    dxdt.resize(x.size());
    const auto psi = detail::as_matrix(x, d, 1);
    auto out = detail::as_matrix(dxdt, d, 1);
    const KronOperator h = h_const + KronOperator::on_system(p.h_s(t), p.dims.environment);
    out = (-1i / hbar) * h.apply(psi);
  };

  PureTrajectory traj;
  auto obs = [&](const detail::OdeState& x, double t) {
    Vector psi = detail::as_matrix(x, d, 1);
    if (!psi.allFinite()) throw IntegrationError("non-finite state at t=" + std::to_string(t));
    if (const double dn = std::abs(psi.squaredNorm() - 1.0); dn > opt.trace_tol)
      throw IntegrationError("norm drift " + std::to_string(dn) + " at t=" + std::to_string(t));
    traj.times.push_back(t);
    traj.states.push_back(std::move(psi));
  };
  detail::OdeState x = detail::pack(psi0);
  detail::integrate_on_times(rhs, x, times, opt, obs);
  return traj;
}

inline PureTrajectory evolve_schrodinger(const HamiltonianParts& p, const Vector& psi0,
                                         const TimeGrid& grid, const IntegratorOptions& opt = {}) {
  return evolve_schrodinger(p, psi0, grid.points(), opt);
}

// --- exact single-qubit propagator --------------------------------------------

/// U(0→t) = e^{−iα₀t/ħ}(cos(|α|t/ħ) I − i sin(|α|t/ħ) (α̂·σ)).
inline Matrix qubit_propagator(const QubitBattery& q, double t) {
  const double hbar = q.parts.hbar;
  const double a = q.alpha_norm();
  const Complex phase = std::exp(Complex(0.0, -q.alpha0 * t / hbar));
  if (a == 0.0) return phase * pauli::identity();
  const Matrix n_sigma =
      (q.alpha[0] * pauli::x() + q.alpha[1] * pauli::y() + q.alpha[2] * pauli::z()) / a;
  return phase * (std::cos(a * t / hbar) * pauli::identity() - 1i * std::sin(a * t / hbar) * n_sigma);
}

inline QuantumState evolve_qubit_exact(const QubitBattery& q, const BlochVector& beta0, double t) {
  const Matrix u = qubit_propagator(q, t);
  const Matrix rho0 = beta0.state().rho();
  return QuantumState::unchecked(u * rho0 * u.adjoint());
}

// --- spin-boson Bloch equations -------------------------------------------------

/// Which generator to use for β̇ = −Γβ.
///
/// `printed`: Γ = [[γ, α₃/ħ, 0], [−α₃/ħ, γ, α₁/ħ], [0, −α₁/ħ, 0]].
/// `master_equation`: 2Γ, the generator obtained from the Lindblad equation
/// with Pauli matrices (precession 2h×β/ħ, dephasing rate 2γ).
enum class BlochConvention { printed, master_equation };

inline Eigen::Matrix3d spin_boson_gamma_matrix(double alpha1, double alpha3, double gamma,
                                               double hbar = 1.0) {
  Eigen::Matrix3d g;
  g << gamma, alpha3 / hbar, 0.0,
       -alpha3 / hbar, gamma, alpha1 / hbar,
       0.0, -alpha1 / hbar, 0.0;
  return g;
}

inline Eigen::Matrix3d spin_boson_generator(double alpha1, double alpha3, double gamma, double hbar,
                                            BlochConvention conv) {
  const Eigen::Matrix3d g = spin_boson_gamma_matrix(alpha1, alpha3, gamma, hbar);
  return conv == BlochConvention::printed ? g : Eigen::Matrix3d(2.0 * g);
}

/// β(t) = exp(−Γt) β(0) through Γ = S Λ S⁻¹; an ill-conditioned S (defective Γ)
/// falls back to adaptive integration.
inline std::vector<BlochVector> evolve_bloch_spin_boson(double alpha1, double alpha3, double gamma,
                                                        double hbar, const BlochVector& beta0,
                                                        const std::vector<double>& times,
                                                        BlochConvention conv = BlochConvention::printed,
                                                        const IntegratorOptions& opt = {}) {
  if (auto v = beta0.validate(); !v) throw ValidationError("evolve_bloch_spin_boson: " + v.reason);
  detail::require_sorted_times(times);
  const Eigen::Matrix3d gm = spin_boson_generator(alpha1, alpha3, gamma, hbar, conv);
  const Eigen::Vector3d b0(beta0.beta[0], beta0.beta[1], beta0.beta[2]);
  const double t0 = times.front();
  std::vector<BlochVector> out;
  out.reserve(times.size());

  Eigen::EigenSolver<Eigen::Matrix3d> es(gm);
  const Eigen::Matrix3cd s = es.eigenvectors();
  const Eigen::JacobiSVD<Eigen::Matrix3cd> svd(s);
  const double cond = svd.singularValues()(0) / svd.singularValues()(2);
  if (es.info() == Eigen::Success && std::isfinite(cond) && cond < 1e8) {
    const Eigen::Vector3cd lambda = es.eigenvalues();
    const Eigen::Vector3cd c = s.lu().solve(b0.cast<Complex>());
    for (double t : times) {
      const Eigen::Vector3cd e = (-(t - t0) * lambda).array().exp();
      const Eigen::Vector3d b = (s * e.cwiseProduct(c)).real();
      out.push_back({{b(0), b(1), b(2)}});
    }
    return out;
  }

  detail::OdeState x{b0(0), b0(1), b0(2)};
  auto rhs = [&](const detail::OdeState& y, detail::OdeState& dy, double) {
    dy.resize(3);
    const Eigen::Vector3d r = -gm * Eigen::Vector3d(y[0], y[1], y[2]);
    for (int i = 0; i < 3; ++i) dy[static_cast<std::size_t>(i)] = r(i);
  };
  auto obs = [&](const detail::OdeState& y, double) { out.push_back({{y[0], y[1], y[2]}}); };
  detail::integrate_on_times(rhs, x, times, opt, obs);
  return out;
}

inline std::vector<BlochVector> evolve_bloch_spin_boson(double alpha1, double alpha3, double gamma,
                                                        double hbar, const BlochVector& beta0,
                                                        const TimeGrid& grid,
                                                        BlochConvention conv = BlochConvention::printed) {
  return evolve_bloch_spin_boson(alpha1, alpha3, gamma, hbar, beta0, grid.points(), conv);
}

// --- finite differences ----------------------------------------------------------

/// Fornberg weights for the m-th derivative at z from the nodes x.
inline std::vector<double> fornberg_weights(double z, const std::vector<double>& x, int m) {
  const int n = static_cast<int>(x.size()) - 1;
  if (n < m) throw std::invalid_argument("fornberg_weights: too few nodes");
  std::vector<std::vector<double>> c(static_cast<std::size_t>(n + 1),
                                     std::vector<double>(static_cast<std::size_t>(m + 1), 0.0));
  double c1 = 1.0;
  double c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[static_cast<std::size_t>(i)] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(static_cast<std::size_t>(n + 1));
  for (int i = 0; i <= n; ++i) w[static_cast<std::size_t>(i)] = c[i][m];
  return w;
}

/// First derivative of samples on a strictly increasing grid, accuracy order
/// `order` (even). Centred stencils in the interior, shifted one-sided stencils
/// of the same width near the ends.
inline std::vector<double> finite_difference(const std::vector<double>& t,
                                             const std::vector<double>& f, int order = 8) {
  if (t.size() != f.size()) throw std::invalid_argument("finite_difference: size mismatch");
  if (order < 2 || order % 2 != 0) throw std::invalid_argument("finite_difference: order must be even >= 2");
  const std::size_t width = static_cast<std::size_t>(order) + 1;
  if (t.size() < width) throw std::invalid_argument("finite_difference: grid too short");
  detail::require_sorted_times(t);
  const std::size_t half = width / 2;
  std::vector<double> out(t.size());
  std::vector<double> nodes(width);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::size_t lo = i >= half ? i - half : 0;
    lo = std::min(lo, t.size() - width);
    for (std::size_t k = 0; k < width; ++k) nodes[k] = t[lo + k];
    const auto w = fornberg_weights(t[i], nodes, 1);
    double acc = 0.0;
    for (std::size_t k = 0; k < width; ++k) acc += w[k] * f[lo + k];
    out[i] = acc;
  }
  return out;
}

}  // namespace qflow
