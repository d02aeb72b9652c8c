#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qflow/kron_operator.hpp"
#include "qflow/linalg.hpp"

namespace qflow {

/// Scalar drive f(t) with an analytic derivative.
///
///   exp_decay        offset + amplitude·exp(−rate·t)
///   sinusoid_offset  offset + amplitude·sin(rate·t)
///   step             offset + amplitude·θ(t), θ(0) = 1
///   constant         offset + amplitude
struct TimeFunction {
  enum class Kind { exp_decay, sinusoid_offset, step, constant };

  Kind kind = Kind::constant;
  double amplitude = 0.0;
  double rate = 0.0;
  double offset = 0.0;

  static TimeFunction constant(double value) { return {Kind::constant, value, 0.0, 0.0}; }
  static TimeFunction exp_decay(double amplitude, double rate, double offset = 0.0) {
    return {Kind::exp_decay, amplitude, rate, offset};
  }
  static TimeFunction sinusoid(double amplitude, double frequency, double offset) {
    return {Kind::sinusoid_offset, amplitude, frequency, offset};
  }
  static TimeFunction step(double amplitude) { return {Kind::step, amplitude, 0.0, 0.0}; }

  double value(double t) const {
    switch (kind) {
      case Kind::exp_decay: return offset + amplitude * std::exp(-rate * t);
      case Kind::sinusoid_offset: return offset + amplitude * std::sin(rate * t);
      case Kind::step: return offset + (t >= 0.0 ? amplitude : 0.0);
      case Kind::constant: return offset + amplitude;
    }
    return 0.0;
  }

  /// The step's delta at t = 0 is not represented.
  double derivative(double t) const {
    switch (kind) {
      case Kind::exp_decay: return -rate * amplitude * std::exp(-rate * t);
      case Kind::sinusoid_offset: return rate * amplitude * std::cos(rate * t);
      case Kind::step:
      case Kind::constant: return 0.0;
    }
    return 0.0;
  }

  bool is_constant() const {
    return kind == Kind::constant || kind == Kind::step || amplitude == 0.0 ||
           (kind != Kind::step && rate == 0.0);
  }

  friend bool operator==(const TimeFunction&, const TimeFunction&) = default;
};

inline std::string_view to_string(TimeFunction::Kind k) {
  switch (k) {
    case TimeFunction::Kind::exp_decay: return "exp_decay";
    case TimeFunction::Kind::sinusoid_offset: return "sinusoid_offset";
    case TimeFunction::Kind::step: return "step";
    case TimeFunction::Kind::constant: return "constant";
  }
  return "constant";
}

inline TimeFunction::Kind time_function_kind(std::string_view s) {
  if (s == "exp_decay") return TimeFunction::Kind::exp_decay;
  if (s == "sinusoid_offset") return TimeFunction::Kind::sinusoid_offset;
  if (s == "step") return TimeFunction::Kind::step;
  if (s == "constant") return TimeFunction::Kind::constant;
  throw std::invalid_argument("unknown time function kind '" + std::string(s) + "'");
}

struct LindbladChannel {
  TimeFunction rate;
  Matrix op;
};

/// Hamiltonian pieces of a model. Missing optional parts are empty.
///
/// The environment dimension is 1 for closed systems and for Lindblad models,
/// in which case every bipartite operator is effectively an operator on S.
struct HamiltonianParts {
  BipartiteDims dims{};
  double hbar = 1.0;
  std::function<Matrix(double)> h_s;
  std::function<Matrix(double)> h_s_dot;
  std::optional<Matrix> h_e;
  std::optional<KronOperator> v_se;
  std::optional<Matrix> h_0;
  std::function<Matrix(double)> v_s;
  std::vector<LindbladChannel> lindblad;

  bool has_environment() const { return dims.environment > 1 || h_e.has_value() || v_se.has_value(); }
  bool has_lindblad() const { return !lindblad.empty(); }
};

/// H_tot(t) = H_S(t) ⊗ I + I ⊗ H_E + V_SE, structured.
inline KronOperator total_hamiltonian(const HamiltonianParts& p, double t) {
  KronOperator h = KronOperator::on_system(p.h_s(t), p.dims.environment);
  if (p.h_e) h += KronOperator::on_environment(p.dims.system, *p.h_e);
  if (p.v_se) h += *p.v_se;
  return h;
}

inline Matrix total_hamiltonian_dense(const HamiltonianParts& p, double t) {
  Matrix h = kron(p.h_s(t), Matrix::Identity(p.dims.environment, p.dims.environment));
  if (p.h_e) h += kron(Matrix::Identity(p.dims.system, p.dims.system), *p.h_e);
  if (p.v_se) h += p.v_se->to_dense();
  return h;
}

// --- two interacting spins ---------------------------------------------------

inline HamiltonianParts build_two_spins(const TimeFunction& f, double g, double hbar = 1.0) {
  HamiltonianParts p;
  p.dims = {2, 2};
  p.hbar = hbar;
  p.h_s = [f](double t) { return Matrix(f.value(t) * pauli::x()); };
  p.h_s_dot = [f](double t) { return Matrix(f.derivative(t) * pauli::x()); };
  p.h_e = pauli::x();
  p.v_se = KronOperator::product(pauli::z(), pauli::z(), g);
  return p;
}

// --- two interacting oscillators ---------------------------------------------

/// Truncated annihilation operator on `levels` Fock states.
inline Matrix lowering_operator(Index levels) {
  Matrix a = Matrix::Zero(levels, levels);
  for (Index n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

/// Two position-coupled oscillators in a fixed Fock basis.
///
/// The system basis is the Fock basis of ω_a(0); x_a and p_a are fixed in it
/// and H_S(t) = p_a²/2m + ½ m ω_a(t)² x_a². The ladder forms (with a(t)
/// rebuilt from x_a, p_a at each ω_a(t)) agree with the position forms except
/// on the top truncated level.
struct TwoOscillatorModel {
  HamiltonianParts parts;
  TimeFunction omega_a;
  double omega_b = 1.0;
  double mass = 1.0;
  double coupling = 1.0;
  double reference_omega = 1.0;
  Index cutoff = 2;
  Matrix x_a, p_a, x_b, p_b, b;

  Matrix ladder_a(double t) const {
    const double w = omega_a.value(t);
    const double hbar = parts.hbar;
    return std::sqrt(mass * w / (2.0 * hbar)) * (x_a + (1i / (mass * w)) * p_a);
  }

  /// ħω_a(a†a + ½)
  Matrix h_s_ladder(double t) const {
    const Matrix a = ladder_a(t);
    const Matrix id = Matrix::Identity(cutoff, cutoff);
    return parts.hbar * omega_a.value(t) * (a.adjoint() * a + 0.5 * id);
  }

  /// ħ g /(m √(ω_a ω_b)) (a + a†)(b + b†)
  KronOperator v_se_ladder(double t) const {
    const Matrix a = ladder_a(t);
    const double c = parts.hbar * coupling / (mass * std::sqrt(omega_a.value(t) * omega_b));
    return KronOperator::product(a + a.adjoint(), b + b.adjoint(), c);
  }

  /// Work-rate operator (ħ ω̇_a / 2)(a + a†)² ⊗ I in ladder form.
  KronOperator w_dot_ladder(double t) const {
    const Matrix a = ladder_a(t);
    const Matrix s = a + a.adjoint();
    return KronOperator::on_system(0.5 * parts.hbar * omega_a.derivative(t) * s * s, cutoff);
  }

  /// Heat-flow operator −iħ (g/m) √(ω_a/ω_b) (a† − a)(b† + b) in ladder form.
  KronOperator q_dot_ladder(double t) const {
    const Matrix a = ladder_a(t);
    const double c = parts.hbar * coupling / mass * std::sqrt(omega_a.value(t) / omega_b);
    return KronOperator::product(a.adjoint() - a, b.adjoint() + b, Complex(0.0, -c));
  }
};

inline TwoOscillatorModel build_two_oscillators(const TimeFunction& omega_a, double omega_b,
                                                double m, double g, double hbar, Index cutoff) {
  if (cutoff < 2) throw std::invalid_argument("build_two_oscillators: cutoff must be >= 2");
  const double w0 = omega_a.value(0.0);
  if (!(w0 > 0.0) || !(omega_b > 0.0) || !(m > 0.0) || !(hbar > 0.0))
    throw std::invalid_argument("build_two_oscillators: frequencies, mass and hbar must be > 0");

  TwoOscillatorModel mod;
  mod.omega_a = omega_a;
  mod.omega_b = omega_b;
  mod.mass = m;
  mod.coupling = g;
  mod.reference_omega = w0;
  mod.cutoff = cutoff;

  const Matrix c = lowering_operator(cutoff);
  const Matrix cd = c.adjoint();
  mod.x_a = std::sqrt(hbar / (2.0 * m * w0)) * (c + cd);
  mod.p_a = 1i * std::sqrt(hbar * m * w0 / 2.0) * (cd - c);
  mod.x_b = std::sqrt(hbar / (2.0 * m * omega_b)) * (c + cd);
  mod.p_b = 1i * std::sqrt(hbar * m * omega_b / 2.0) * (cd - c);
  mod.b = c;

  const Matrix xa2 = mod.x_a * mod.x_a;
  const Matrix pa2 = mod.p_a * mod.p_a;
  HamiltonianParts& p = mod.parts;
  p.dims = {cutoff, cutoff};
  p.hbar = hbar;
  p.h_s = [xa2, pa2, m, omega_a](double t) {
    const double w = omega_a.value(t);
    return Matrix(pa2 / (2.0 * m) + 0.5 * m * w * w * xa2);
  };
  p.h_s_dot = [xa2, m, omega_a](double t) {
    return Matrix(m * omega_a.value(t) * omega_a.derivative(t) * xa2);
  };
  Matrix he = Matrix::Zero(cutoff, cutoff);
  for (Index n = 0; n < cutoff; ++n) he(n, n) = hbar * omega_b * (static_cast<double>(n) + 0.5);
  p.h_e = he;
  p.v_se = KronOperator::product(mod.x_a, mod.x_b, 2.0 * g);
  return mod;
}

// --- single-qubit battery ----------------------------------------------------

struct QubitBattery {
  HamiltonianParts parts;
  double h0 = 0.0, h3 = 0.0, v0 = 0.0;
  std::array<double, 3> v{};
  double alpha0 = 0.0;            ///< h0 + v0
  std::array<double, 3> alpha{};  ///< (v1, v2, h3 + v3)

  double alpha_norm() const {
    return std::sqrt(alpha[0] * alpha[0] + alpha[1] * alpha[1] + alpha[2] * alpha[2]);
  }
};

/// H₀ = h₀ I + h₃ σᶻ, V_S(t) = (v₀ I + v⃗·σ⃗) θ(t).
inline QubitBattery build_qubit_battery(double h0, double h3, double v0, std::array<double, 3> v,
                                        double hbar = 1.0) {
  QubitBattery q;
  q.h0 = h0;
  q.h3 = h3;
  q.v0 = v0;
  q.v = v;
  q.alpha0 = h0 + v0;
  q.alpha = {v[0], v[1], h3 + v[2]};

  const Matrix H0 = h0 * pauli::identity() + h3 * pauli::z();
  const Matrix V = v0 * pauli::identity() + v[0] * pauli::x() + v[1] * pauli::y() + v[2] * pauli::z();
  const TimeFunction theta = TimeFunction::step(1.0);

  HamiltonianParts& p = q.parts;
  p.dims = {2, 1};
  p.hbar = hbar;
  p.h_0 = H0;
  p.v_s = [V, theta](double t) { return Matrix(theta.value(t) * V); };
  p.h_s = [H0, V, theta](double t) { return Matrix(H0 + theta.value(t) * V); };
  p.h_s_dot = [](double) { return Matrix(Matrix::Zero(2, 2)); };
  return q;
}

// --- spin-boson battery --------------------------------------------------------

struct SpinBoson {
  HamiltonianParts parts;
  double alpha1 = 1.0;
  double alpha3 = 1.0;
  double gamma = 0.0;
};

/// H₀ = α₃σᶻ, V_S = α₁σˣ, one dephasing channel L = σᶻ at rate γ.
inline SpinBoson build_spin_boson(double alpha1, double alpha3, double gamma, double hbar = 1.0) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("build_spin_boson: gamma must be >= 0");
  SpinBoson s;
  s.alpha1 = alpha1;
  s.alpha3 = alpha3;
  s.gamma = gamma;
  const Matrix H0 = alpha3 * pauli::z();
  const Matrix V = alpha1 * pauli::x();
  HamiltonianParts& p = s.parts;
  p.dims = {2, 1};
  p.hbar = hbar;
  p.h_0 = H0;
  p.v_s = [V](double) { return V; };
  p.h_s = [H0, V](double) { return Matrix(H0 + V); };
  p.h_s_dot = [](double) { return Matrix(Matrix::Zero(2, 2)); };
  p.lindblad.push_back({TimeFunction::constant(gamma), pauli::z()});
  return s;
}

// --- declarative model description -------------------------------------------

enum class ModelKind { two_spins, two_oscillators, qubit_battery, spin_boson };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::two_spins: return "two_spins";
    case ModelKind::two_oscillators: return "two_oscillators";
    case ModelKind::qubit_battery: return "qubit_battery";
    case ModelKind::spin_boson: return "spin_boson";
  }
  return "two_spins";
}

inline ModelKind model_kind(std::string_view s) {
  if (s == "two_spins") return ModelKind::two_spins;
  if (s == "two_oscillators") return ModelKind::two_oscillators;
  if (s == "qubit_battery") return ModelKind::qubit_battery;
  if (s == "spin_boson") return ModelKind::spin_boson;
  throw std::invalid_argument("unknown model '" + std::string(s) + "'");
}

struct ModelSpec {
  ModelKind model = ModelKind::two_spins;
  std::map<std::string, double> parameters;
  TimeFunction drive;
  Index fock_cutoff = 100;

  double param(const std::string& name, double fallback) const {
    auto it = parameters.find(name);
    return it == parameters.end() ? fallback : it->second;
  }

  void validate() const {
    for (const auto& [k, v] : parameters)
      if (!std::isfinite(v)) throw std::invalid_argument("parameter '" + k + "' is not finite");
    if (!std::isfinite(drive.amplitude) || !std::isfinite(drive.rate) || !std::isfinite(drive.offset))
      throw std::invalid_argument("drive parameters must be finite");
    if (fock_cutoff < 2) throw std::invalid_argument("fock_cutoff must be >= 2");
    if (param("hbar", 1.0) <= 0.0) throw std::invalid_argument("hbar must be > 0");
    if (model == ModelKind::spin_boson && param("gamma", 0.0) < 0.0)
      throw std::invalid_argument("gamma must be >= 0");
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// A constructed model; the model-specific extras are set for the matching kind.
struct BuiltModel {
  ModelKind kind = ModelKind::two_spins;
  HamiltonianParts parts;
  std::optional<TwoOscillatorModel> oscillators;
  std::optional<QubitBattery> qubit;
  std::optional<SpinBoson> spin_boson;
  double coupling = 0.0;
};

inline BuiltModel build_model(const ModelSpec& spec) {
  spec.validate();
  BuiltModel out;
  out.kind = spec.model;
  const double hbar = spec.param("hbar", 1.0);
  switch (spec.model) {
    case ModelKind::two_spins:
      out.coupling = spec.param("g", 1.0);
      out.parts = build_two_spins(spec.drive, out.coupling, hbar);
      break;
    case ModelKind::two_oscillators:
      out.coupling = spec.param("g", 1.0);
      out.oscillators = build_two_oscillators(spec.drive, spec.param("omega_b", 1.0),
                                              spec.param("m", 1.0), out.coupling, hbar,
                                              spec.fock_cutoff);
      out.parts = out.oscillators->parts;
      break;
    case ModelKind::qubit_battery:
      out.qubit = build_qubit_battery(spec.param("h0", 0.0), spec.param("h3", 0.0),
                                      spec.param("v0", 0.0),
                                      {spec.param("v1", 0.0), spec.param("v2", 0.0), spec.param("v3", 0.0)},
                                      hbar);
      out.parts = out.qubit->parts;
      break;
    case ModelKind::spin_boson:
      out.spin_boson = build_spin_boson(spec.param("alpha1", 1.0), spec.param("alpha3", 1.0),
                                        spec.param("gamma", 0.0), hbar);
      out.parts = out.spin_boson->parts;
      break;
  }
  return out;
}

}  // namespace qflow
