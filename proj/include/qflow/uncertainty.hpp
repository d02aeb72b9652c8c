#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "qflow/dynamics.hpp"
#include "qflow/flows.hpp"
#include "qflow/kron_operator.hpp"
#include "qflow/linalg.hpp"
#include "qflow/measurement.hpp"
#include "qflow/models.hpp"

namespace qflow {

/// Robertson–Schrödinger decomposition for a pair (A, B) on a state.
struct UncertaintyReport {
  double exp_a = 0.0;
  double exp_b = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  double cov_ab = 0.0;
  double comm_term = 0.0;  ///< ¼|⟨[A,B]⟩|²
  double rs_bound = 0.0;   ///< comm_term + cov²
  double product = 0.0;    ///< var_a · var_b
  double slack = 0.0;      ///< product − rs_bound

  double sigma_a() const { return std::sqrt(std::max(var_a, 0.0)); }
  double sigma_b() const { return std::sqrt(std::max(var_b, 0.0)); }
};

/// Builds a report from ⟨A⟩, ⟨B⟩, ⟨A²⟩, ⟨B²⟩ and ⟨AB⟩.
inline UncertaintyReport report_from_moments(double ea, double eb, double ea2, double eb2, Complex eab) {
  UncertaintyReport r;
  r.exp_a = ea;
  r.exp_b = eb;
  r.var_a = ea2 - ea * ea;
  r.var_b = eb2 - eb * eb;
  r.cov_ab = eab.real() - ea * eb;
  r.comm_term = eab.imag() * eab.imag();
  r.rs_bound = r.comm_term + r.cov_ab * r.cov_ab;
  r.product = r.var_a * r.var_b;
  r.slack = r.product - r.rs_bound;
  return r;
}

/// Dense path: all moments as Tr(ρ·).
inline UncertaintyReport rs_report(const Matrix& a, const Matrix& b, const Matrix& rho) {
  detail::require_same_dim(a, rho, "rs_report");
  detail::require_same_dim(b, rho, "rs_report");
  const Matrix ra = rho * a;
  const Matrix rb = rho * b;
  return report_from_moments(ra.trace().real(), rb.trace().real(), (ra * a).trace().real(),
                             (rb * b).trace().real(), (ra * b).trace());
}

inline UncertaintyReport rs_report(const HermitianOperator& a, const HermitianOperator& b,
                                   const QuantumState& s) {
  return rs_report(a.matrix(), b.matrix(), s.rho());
}

/// Pure-state moments from φ_A = Aψ, φ_B = Bψ: ⟨AB⟩ = φ_A†φ_B.
inline UncertaintyReport rs_report_from_images(const Vector& psi, const Vector& phi_a, const Vector& phi_b) {
  return report_from_moments(psi.dot(phi_a).real(), psi.dot(phi_b).real(), phi_a.squaredNorm(),
                             phi_b.squaredNorm(), phi_a.dot(phi_b));
}

inline UncertaintyReport rs_report(const KronOperator& a, const KronOperator& b, const Vector& psi) {
  return rs_report_from_images(psi, a.apply(psi), b.apply(psi));
}

/// σ² of a Hermitian operator on a density matrix.
inline double variance(const Matrix& a, const Matrix& rho) {
  const Matrix ra = rho * a;
  const double e = ra.trace().real();
  return (ra * a).trace().real() - e * e;
}

inline double sigma(double var) { return std::sqrt(std::max(var, 0.0)); }

struct TPlusMinus {
  double t_plus = 0.0;
  double t_minus = 0.0;
};

/// t± = √(¼|⟨[Q̊,W̊]⟩|² + cov²) ± cov, clamped at 0 against rounding.
inline TPlusMinus t_plus_minus(const UncertaintyReport& qw) {
  const double root = std::sqrt(std::max(qw.rs_bound, 0.0));
  return {std::max(root + qw.cov_ab, 0.0), std::max(root - qw.cov_ab, 0.0)};
}

inline TPlusMinus t_plus_minus(const Matrix& q, const Matrix& w, const Matrix& rho) {
  return t_plus_minus(rs_report(q, w, rho));
}

struct Window {
  double lower = 0.0;
  double upper = 0.0;
};

/// (σ_Q̊ − σ_W̊)² + 2t₊ ≤ σ²_Ů ≤ (σ_Q̊ + σ_W̊)² − 2t₋
inline Window sigma_udot_window(const UncertaintyReport& qw) {
  const double sq = qw.sigma_a();
  const double sw = qw.sigma_b();
  const TPlusMinus t = t_plus_minus(qw);
  return {(sq - sw) * (sq - sw) + 2.0 * t.t_plus, (sq + sw) * (sq + sw) - 2.0 * t.t_minus};
}

inline Window sigma_udot_window(const Matrix& q, const Matrix& w, const Matrix& rho) {
  return sigma_udot_window(rs_report(q, w, rho));
}

/// Lower bounds on σ²_U from the RS relation paired with Ů, Q̊ and W̊.
struct SigmaUBounds {
  double via_udot = 0.0;          ///< exact denominator σ²_Ů
  double via_udot_relaxed = 0.0;  ///< denominator (σ_Q̊ + σ_W̊)² − 2t₋
  double via_qdot = 0.0;
  double via_wdot = 0.0;
};

namespace detail {

inline double ratio_or_zero(double num, double den) {
  if (!(den > 0.0) || !std::isfinite(num / den)) return 0.0;
  return num / den;
}

}  // namespace detail

/// Reports are for the pairs (U, Ů), (U, Q̊), (U, W̊) and (Q̊, W̊). A vanishing
/// denominator yields the vacuous bound 0.
inline SigmaUBounds sigma_u_bounds(const UncertaintyReport& u_udot, const UncertaintyReport& u_q,
                                   const UncertaintyReport& u_w, const UncertaintyReport& q_w) {
  SigmaUBounds b;
  b.via_udot = detail::ratio_or_zero(u_udot.rs_bound, u_udot.var_b);
  b.via_udot_relaxed = detail::ratio_or_zero(u_udot.rs_bound, sigma_udot_window(q_w).upper);
  b.via_qdot = detail::ratio_or_zero(u_q.rs_bound, u_q.var_b);
  b.via_wdot = detail::ratio_or_zero(u_w.rs_bound, u_w.var_b);
  return b;
}

inline SigmaUBounds sigma_u_bounds(const Matrix& u, const Matrix& q, const Matrix& w, const Matrix& udot,
                                   const Matrix& rho) {
  return sigma_u_bounds(rs_report(u, udot, rho), rs_report(u, q, rho), rs_report(u, w, rho),
                        rs_report(q, w, rho));
}

/// Every uncertainty quantity tracked for the flow operators at one time.
struct FlowUncertainty {
  UncertaintyReport q_w;
  UncertaintyReport u_udot;
  UncertaintyReport u_q;
  UncertaintyReport u_w;
  double var_udot_direct = 0.0;
  Window udot_window;
  TPlusMinus t_pm;
  SigmaUBounds u_bounds;
};

inline FlowUncertainty analyze_flows_from(const UncertaintyReport& q_w, const UncertaintyReport& u_udot,
                                          const UncertaintyReport& u_q, const UncertaintyReport& u_w) {
  FlowUncertainty f;
  f.q_w = q_w;
  f.u_udot = u_udot;
  f.u_q = u_q;
  f.u_w = u_w;
  f.var_udot_direct = u_udot.var_b;
  f.udot_window = sigma_udot_window(q_w);
  f.t_pm = t_plus_minus(q_w);
  f.u_bounds = sigma_u_bounds(u_udot, u_q, u_w, q_w);
  return f;
}

inline FlowUncertainty analyze_flows(const FlowOperators& ops, const Matrix& rho) {
  const Matrix u = ops.u.to_dense();
  const Matrix q = ops.q_dot.to_dense();
  const Matrix w = ops.w_dot.to_dense();
  const Matrix ud = ops.u_dot.to_dense();
  return analyze_flows_from(rs_report(q, w, rho), rs_report(u, ud, rho), rs_report(u, q, rho),
                            rs_report(u, w, rho));
}

inline FlowUncertainty analyze_flows(const FlowOperators& ops, const Vector& psi) {
  const Vector pu = ops.u.apply(psi);
  const Vector pq = ops.q_dot.apply(psi);
  const Vector pw = ops.w_dot.apply(psi);
  const Vector pud = ops.u_dot.apply(psi);
  return analyze_flows_from(rs_report_from_images(psi, pq, pw), rs_report_from_images(psi, pu, pud),
                            rs_report_from_images(psi, pu, pq), rs_report_from_images(psi, pu, pw));
}

// --- model-specific closed forms -------------------------------------------------

/// σ_Q̊ σ_W̊ ≥ (|d f²/dt|/ħ) √(⟨V_SE⟩² + g²⟨σʸ⊗σᶻ⟩²⟨σˣ⊗I⟩²), with V_SE = g σᶻ⊗σᶻ.
inline double qw_bound_two_spins(double f, double fdot, double g, double hbar, const Matrix& rho) {
  if (rho.rows() != 4) throw DimensionError("qw_bound_two_spins: needs a two-qubit state");
  const double v = g * expectation(kron(pauli::z(), pauli::z()), rho);
  const double yz = expectation(kron(pauli::y(), pauli::z()), rho);
  const double xi = expectation(kron(pauli::x(), pauli::identity()), rho);
  const double df2 = 2.0 * f * fdot;
  return std::abs(df2) / hbar * std::sqrt(v * v + g * g * yz * yz * xi * xi);
}

/// Commutator-only part (|d f²/dt|/ħ)|⟨V_SE⟩|.
inline double qw_bound_two_spins_robertson(double f, double fdot, double g, double hbar, const Matrix& rho) {
  const double v = g * expectation(kron(pauli::z(), pauli::z()), rho);
  return std::abs(2.0 * f * fdot) / hbar * std::abs(v);
}

/// σ_Q̊ σ_W̊ ≥ |ω_a ω̇_a| √(ħ²⟨V⟩² + |2g⟨x_a²⟩⟨p_a x_b⟩ − iħ⟨V⟩ − ⟨p_a x_a V⟩|²),
/// evaluated with the model's (truncated) operators on a pure joint state.
inline double qw_bound_two_oscillators(const TwoOscillatorModel& mod, double t, const Vector& psi) {
  const double w = mod.omega_a.value(t);
  const double wd = mod.omega_a.derivative(t);
  const double hbar = mod.parts.hbar;
  const Index n = mod.cutoff;
  const KronOperator v = KronOperator::product(mod.x_a, mod.x_b, 2.0 * mod.coupling);
  const Vector v_psi = v.apply(psi);
  const double ev = psi.dot(v_psi).real();
  const Complex xa2 = expectation_complex(KronOperator::on_system(mod.x_a * mod.x_a, n), psi);
  const Complex pxb = expectation_complex(KronOperator::product(mod.p_a, mod.x_b), psi);
  const Complex pxv = psi.dot(KronOperator::on_system(mod.p_a * mod.x_a, n).apply(v_psi));
  const Complex c = 2.0 * mod.coupling * xa2 * pxb - Complex(0.0, hbar * ev) - pxv;
  return std::abs(w * wd) * std::sqrt(hbar * hbar * ev * ev + std::norm(c));
}

// --- commutator probe and its upper bounds ------------------------------------------

/// ℬ = ¼|Tr([A,B]ρ)|²
inline double commutator_probe(const Matrix& a, const Matrix& b, const Matrix& rho) {
  detail::require_same_dim(a, rho, "commutator_probe");
  detail::require_same_dim(b, rho, "commutator_probe");
  const Complex c = (commutator(a, b) * rho).trace();
  return 0.25 * std::norm(c);
}

inline double commutator_probe(const KronOperator& a, const KronOperator& b, const Vector& psi) {
  const Complex ab = a.apply(psi).dot(b.apply(psi));
  return ab.imag() * ab.imag();
}

/// ℬ from the part of ρ off-diagonal in the eigenbasis of A: ¼|Tr([A, C_A(ρ)]B)|².
inline double commutator_probe_offdiagonal(const Matrix& a, const Matrix& b, const Matrix& rho) {
  const Matrix c = offdiagonal_part(rho, spectral_basis(a));
  return 0.25 * std::norm((commutator(a, c) * b).trace());
}

/// ℂ_A(X) = ‖C_A(X)‖²_F
inline double coherence(const SpectralBasis& basis_a, const Matrix& x) {
  return frobenius_norm_sq(offdiagonal_part(x, basis_a));
}

/// ℂ_A(X) = ½ Σ_j ‖[X, Π_j^A]‖²_F
inline double coherence_via_commutators(const SpectralBasis& basis_a, const Matrix& x) {
  double s = 0.0;
  for (const auto& p : basis_a.projectors) s += frobenius_norm_sq(commutator(x, p));
  return 0.5 * s;
}

struct ProbeBounds {
  double probe = 0.0;
  double cs_bound_a = 0.0;            ///< ¼‖[A, C_A(ρ)]‖²_F ‖B‖²_F
  double cs_bound_b = 0.0;            ///< ¼‖[B, C_B(ρ)]‖²_F ‖A‖²_F
  double cs_bound = 0.0;              ///< min of the two
  double commutator_norm_sq = 0.0;    ///< ‖[A,B]‖²_F
  double coherence_a_of_b = 0.0;      ///< ℂ_A(B) as ‖C_A(B)‖²_F
  double coherence_a_of_b_dual = 0.0; ///< ℂ_A(B) as ½Σ‖[B,Π_j^A]‖²_F
  double coherence_bound = 0.0;       ///< 4‖A‖²_F ℂ_A(B)
};

inline ProbeBounds probe_upper_bounds(const Matrix& a, const Matrix& b, const Matrix& rho,
                                      double cluster_tol = kClusterTol) {
  const SpectralBasis ba = spectral_basis(a, cluster_tol);
  const SpectralBasis bb = spectral_basis(b, cluster_tol);
  ProbeBounds out;
  out.probe = commutator_probe(a, b, rho);
  out.cs_bound_a = 0.25 * frobenius_norm_sq(commutator(a, offdiagonal_part(rho, ba))) * frobenius_norm_sq(b);
  out.cs_bound_b = 0.25 * frobenius_norm_sq(commutator(b, offdiagonal_part(rho, bb))) * frobenius_norm_sq(a);
  out.cs_bound = std::min(out.cs_bound_a, out.cs_bound_b);
  out.commutator_norm_sq = frobenius_norm_sq(commutator(a, b));
  out.coherence_a_of_b = coherence(ba, b);
  out.coherence_a_of_b_dual = coherence_via_commutators(ba, b);
  out.coherence_bound = 4.0 * frobenius_norm_sq(a) * out.coherence_a_of_b;
  return out;
}

/// Energy–power probe ℬ(H₀, P_B^c) for a closed battery with its two upper bounds:
/// (1/4ħ²)‖[H₀, C_{H₀}(ρ)]‖²_F ‖[H₀,V_S]‖²_F and (4/ħ²)‖H₀‖⁴_F ℂ_{H₀}(ρ) ℂ_{H₀}(V_S).
struct BatteryProbeBounds {
  double probe = 0.0;
  double cs_bound = 0.0;
  double coherence_bound = 0.0;
};

inline BatteryProbeBounds battery_probe_bounds(const Matrix& h0, const Matrix& v_s, const Matrix& rho,
                                               double hbar = 1.0, double cluster_tol = kClusterTol) {
  const SpectralBasis b0 = spectral_basis(h0, cluster_tol);
  const Matrix p = (-1i / hbar) * commutator(h0, v_s);
  BatteryProbeBounds out;
  out.probe = commutator_probe(h0, p, rho);
  out.cs_bound = frobenius_norm_sq(commutator(h0, offdiagonal_part(rho, b0))) *
                 frobenius_norm_sq(commutator(h0, v_s)) / (4.0 * hbar * hbar);
  const double n0 = frobenius_norm_sq(h0);
  out.coherence_bound = 4.0 / (hbar * hbar) * n0 * n0 * coherence(b0, rho) * coherence(b0, v_s);
  return out;
}

// --- single-qubit battery ---------------------------------------------------------------

/// Exact ℬ(E_B, P_B^c) along the closed single-qubit evolution:
/// √ℬ = (2h₃²/ħ)|v₁β₁(t) + v₂β₂(t)|, with β(t) the rotation of β(0) about α
/// at angular frequency 2|α|/ħ, written in closed form as
///   |α|²(v⊥·β(t)) = (α·β)(α·v⊥) + cos(2|α|t/ħ)(|α|²(v⊥·β) − (α·β)(α·v⊥))
///                   + sin(2|α|t/ħ)|α|α₃(v₂β₁ − v₁β₂).
inline double qubit_battery_bound_exact(double h3, const std::array<double, 3>& v, const BlochVector& beta0,
                                        const std::array<double, 3>& alpha, double t, double hbar = 1.0) {
  const auto& b = beta0.beta;
  const double a2 = alpha[0] * alpha[0] + alpha[1] * alpha[1] + alpha[2] * alpha[2];
  const double vb = v[0] * b[0] + v[1] * b[1];
  double proj = vb;
  if (a2 > 0.0) {
    const double a = std::sqrt(a2);
    const double ab = alpha[0] * b[0] + alpha[1] * b[1] + alpha[2] * b[2];
    const double av = alpha[0] * v[0] + alpha[1] * v[1];
    const double ph = 2.0 * a * t / hbar;
    proj = (ab * av + std::cos(ph) * (a2 * vb - ab * av) +
            std::sin(ph) * a * alpha[2] * (v[1] * b[0] - v[0] * b[1])) / a2;
  }
  const double root = 2.0 * h3 * h3 / hbar * std::abs(proj);
  return root * root;
}

inline double qubit_battery_bound_exact(const QubitBattery& q, const BlochVector& beta0, double t) {
  return qubit_battery_bound_exact(q.h3, q.v, beta0, q.alpha, t, q.parts.hbar);
}

// --- spin-boson battery --------------------------------------------------------------

/// `printed`: P_B = P_B^c + 𝒟*[H_S] = −2α₁γσˣ + (2α₃α₁/ħ)σʸ.
/// `definition`: P_B = P_B^c + 𝒟*[H₀] = (2α₃α₁/ħ)σʸ, since σᶻ commutes with H₀.
enum class PowerConvention { printed, definition };

inline Matrix spin_boson_power_operator(double alpha1, double alpha3, double gamma, double hbar,
                                        PowerConvention conv) {
  const double a = conv == PowerConvention::printed ? -2.0 * alpha1 * gamma : 0.0;
  return a * pauli::x() + (2.0 * alpha3 * alpha1 / hbar) * pauli::y();
}

/// Closed-form (E_B, P_B) report on a Bloch state, E_B = α₃σᶻ.
inline UncertaintyReport spin_boson_report(double alpha1, double alpha3, double gamma, double hbar,
                                           const BlochVector& beta,
                                           PowerConvention conv = PowerConvention::printed) {
  if (auto v = beta.validate(); !v) throw ValidationError("spin_boson_report: " + v.reason);
  const auto& b = beta.beta;
  const double a = conv == PowerConvention::printed ? -2.0 * alpha1 * gamma : 0.0;
  const double c = 2.0 * alpha1 * alpha3 / hbar;
  UncertaintyReport r;
  r.exp_a = alpha3 * b[2];
  r.exp_b = a * b[0] + c * b[1];
  r.var_a = alpha3 * alpha3 * (1.0 - b[2] * b[2]);
  r.var_b = a * a + c * c - r.exp_b * r.exp_b;
  r.cov_ab = -alpha3 * b[2] * r.exp_b;
  const double k = alpha3 * (a * b[1] - c * b[0]);
  r.comm_term = k * k;
  r.rs_bound = r.comm_term + r.cov_ab * r.cov_ab;
  r.product = r.var_a * r.var_b;
  r.slack = r.product - r.rs_bound;
  return r;
}

/// ℬ(𝒟*[H_S], 𝒟*[log ρ]) for the spin-boson model in closed form:
/// γ⁴ |Tr(σᶻ[H_S, log ρ]σᶻ ρ)|².
inline double entropy_heat_probe_spin_boson(const SpinBoson& sb, const QuantumState& state,
                                            double eps = kLogEps) {
  const Matrix log_rho = matrix_log_hermitian(state.rho(), eps);
  const Matrix hs = sb.parts.h_s(0.0);
  const Matrix z = pauli::z();
  const Complex c = (z * commutator(hs, log_rho) * z * state.rho()).trace();
  const double g2 = sb.gamma * sb.gamma;
  return g2 * g2 * std::norm(c);
}

/// The same quantity evaluated directly from the operators.
inline double entropy_heat_probe_direct(const SpinBoson& sb, const QuantumState& state, double eps = kLogEps) {
  const Matrix log_rho = matrix_log_hermitian(state.rho(), eps);
  const Matrix a = dissipator_adjoint(sb.parts.lindblad, sb.parts.h_s(0.0), 0.0);
  const Matrix b = dissipator_adjoint(sb.parts.lindblad, log_rho, 0.0);
  return commutator_probe(a, b, state.rho());
}

}  // namespace qflow
