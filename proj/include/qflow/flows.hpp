#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "qflow/kron_operator.hpp"
#include "qflow/linalg.hpp"
#include "qflow/models.hpp"

namespace qflow {

/// 𝒟_t[ρ] = Σ_k γ_k(t)(L_k ρ L_k† − ½{L_k†L_k, ρ})
inline Matrix dissipator(const std::vector<LindbladChannel>& channels, const Matrix& rho, double t) {
  detail::require_square(rho, "dissipator");
  Matrix out = Matrix::Zero(rho.rows(), rho.cols());
  for (const auto& ch : channels) {
    detail::require_same_dim(ch.op, rho, "dissipator");
    const Matrix ldl = ch.op.adjoint() * ch.op;
    out += ch.rate.value(t) * (ch.op * rho * ch.op.adjoint() - 0.5 * anticommutator(ldl, rho));
  }
  return out;
}

/// 𝒟*_t[A] = Σ_k γ_k(t)(L_k† A L_k − ½{L_k†L_k, A})
inline Matrix dissipator_adjoint(const std::vector<LindbladChannel>& channels, const Matrix& a, double t) {
  detail::require_square(a, "dissipator_adjoint");
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (const auto& ch : channels) {
    detail::require_same_dim(ch.op, a, "dissipator_adjoint");
    const Matrix ldl = ch.op.adjoint() * ch.op;
    out += ch.rate.value(t) * (ch.op.adjoint() * a * ch.op - 0.5 * anticommutator(ldl, a));
  }
  return out;
}

/// Work-rate, heat-flow and internal-energy operators at time t on S ⊗ E.
/// W̊ and U act on S and are stored as W̊ ⊗ I, H_S ⊗ I.
struct FlowOperators {
  double t = 0.0;
  KronOperator w_dot;
  KronOperator q_dot;
  KronOperator u_dot;
  KronOperator u;

  HermitianOperator w_dot_dense() const { return HermitianOperator(w_dot.to_dense(), "energy/time"); }
  HermitianOperator q_dot_dense() const { return HermitianOperator(q_dot.to_dense(), "energy/time"); }
  HermitianOperator u_dot_dense() const { return HermitianOperator(u_dot.to_dense(), "energy/time"); }
  HermitianOperator u_dense() const { return HermitianOperator(u.to_dense(), "energy"); }
};

/// W̊ = Ḣ_S ⊗ I, Q̊ = −(i/ħ)[H_S ⊗ I, V_SE], Ů = W̊ + Q̊, U = H_S ⊗ I.
/// Without an interaction the heat flow is zero.
inline FlowOperators flow_ops_hamiltonian(const HamiltonianParts& p, double t) {
  if (!p.h_s_dot) throw std::invalid_argument("flow_ops_hamiltonian: no analytic dH_S/dt");
  const Index de = p.dims.environment;
  FlowOperators f;
  f.t = t;
  f.u = KronOperator::on_system(p.h_s(t), de);
  f.w_dot = KronOperator::on_system(p.h_s_dot(t), de);
  f.q_dot = KronOperator::zero(p.dims);
  if (p.v_se) f.q_dot = Complex(0.0, -1.0 / p.hbar) * commutator(f.u, *p.v_se);
  f.u_dot = f.w_dot + f.q_dot;
  return f;
}

/// W̊ = Ḣ_S, Q̊ = 𝒟*_t[H_S], Ů = W̊ + Q̊ (all on S).
inline FlowOperators flow_ops_lindblad(const HamiltonianParts& p, double t) {
  if (!p.h_s_dot) throw std::invalid_argument("flow_ops_lindblad: no analytic dH_S/dt");
  if (p.dims.environment != 1) throw DimensionError("flow_ops_lindblad: expects a system-only model");
  const Matrix hs = p.h_s(t);
  FlowOperators f;
  f.t = t;
  f.u = KronOperator::on_system(hs, 1);
  f.w_dot = KronOperator::on_system(p.h_s_dot(t), 1);
  f.q_dot = KronOperator::on_system(dissipator_adjoint(p.lindblad, hs, t), 1);
  f.u_dot = f.w_dot + f.q_dot;
  return f;
}

inline FlowOperators flow_ops(const HamiltonianParts& p, double t) {
  return p.has_lindblad() ? flow_ops_lindblad(p, t) : flow_ops_hamiltonian(p, t);
}

struct EntropyRate {
  Matrix op;     ///< −k_B 𝒟*_t[log ρ]; depends on the state
  double value;  ///< Tr(ρ op)
};

inline EntropyRate entropy_rate_superoperator(const HamiltonianParts& p, const QuantumState& state,
                                              double t, double eps = kLogEps, double k_b = 1.0) {
  if (!p.has_lindblad()) throw std::invalid_argument("entropy_rate_superoperator: no Lindblad operators");
  const Matrix log_rho = matrix_log_hermitian(state.rho(), eps);
  Matrix op = -k_b * dissipator_adjoint(p.lindblad, log_rho, t);
  op = 0.5 * (op + op.adjoint());
  const double value = (state.rho() * op).trace().real();
  return {std::move(op), value};
}

/// Von Neumann entropy −Tr ρ log ρ (k_B = 1).
inline double von_neumann_entropy(const Matrix& rho) {
  const auto ev = hermitian_eigen(rho).eigenvalues();
  double s = 0.0;
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) > 0.0) s -= ev(i) * std::log(ev(i));
  return s;
}

/// Battery energy and power operators. Dense; the operators live on the space
/// the state lives on (S, or S ⊗ E for an explicit environment).
struct BatteryOperators {
  Matrix e_b;
  Matrix p_b_c;
  std::optional<Matrix> p_b_o;
  Matrix p_b;
};

/// E_B = H₀, P_B^c = −(i/ħ)[H₀, V_S(t)].
inline BatteryOperators battery_ops_closed(const HamiltonianParts& p, double t) {
  if (!p.h_0 || !p.v_s) throw std::invalid_argument("battery_ops_closed: needs H_0 and V_S");
  BatteryOperators b;
  b.e_b = *p.h_0;
  b.p_b_c = (-1i / p.hbar) * commutator(*p.h_0, p.v_s(t));
  b.p_b = b.p_b_c;
  return b;
}

/// Lindblad case: P_B^o = 𝒟*_t[H₀]. Hamiltonian case: P_B^o = −(i/ħ)[H₀ ⊗ I, V_SE].
inline BatteryOperators battery_ops_open(const HamiltonianParts& p, double t) {
  BatteryOperators b = battery_ops_closed(p, t);
  if (p.has_lindblad()) {
    b.p_b_o = dissipator_adjoint(p.lindblad, *p.h_0, t);
  } else if (p.v_se) {
    const Index de = p.dims.environment;
    const KronOperator h0 = KronOperator::on_system(*p.h_0, de);
    b.e_b = h0.to_dense();
    b.p_b_c = kron(b.p_b_c, Matrix::Identity(de, de));
    b.p_b_o = (Complex(0.0, -1.0 / p.hbar) * commutator(h0, *p.v_se)).to_dense();
  } else {
    throw std::invalid_argument("battery_ops_open: needs V_SE or Lindblad operators");
  }
  b.p_b = b.p_b_c + *b.p_b_o;
  return b;
}

}  // namespace qflow
