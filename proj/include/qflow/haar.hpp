#pragma once

#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qflow/linalg.hpp"
#include "qflow/uncertainty.hpp"

namespace qflow {

/// Second-moment twirl of an operator on H ⊗ H (dim d each):
/// E[U⊗U g U†⊗U†] = λ₊Π₊ + λ₋Π₋ = l_i I + l_s S.
struct TwirlResult {
  double lambda_plus = 0.0;
  double lambda_minus = 0.0;
  double l_i = 0.0;
  double l_s = 0.0;
};

/// Tr(g S) with S the swap on H ⊗ H.
inline Complex trace_with_swap(const Matrix& g, Index d) {
  if (g.rows() != d * d || g.cols() != d * d) throw DimensionError("trace_with_swap: need a d²×d² matrix");
  Complex s = 0.0;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) s += g(i * d + j, j * d + i);
  return s;
}

inline TwirlResult twirl2(const Matrix& g, Index d) {
  detail::require_square(g, "twirl2");
  const Complex tr = g.trace();
  const Complex ts = trace_with_swap(g, d);
  const double dd = static_cast<double>(d);
  TwirlResult r;
  r.lambda_plus = ((tr + ts) / 2.0).real() / (dd * (dd + 1.0) / 2.0);
  r.lambda_minus = d > 1 ? ((tr - ts) / 2.0).real() / (dd * (dd - 1.0) / 2.0) : 0.0;
  r.l_i = 0.5 * (r.lambda_plus + r.lambda_minus);
  r.l_s = 0.5 * (r.lambda_plus - r.lambda_minus);
  return r;
}

/// Dimension inferred from a square d² × d² input.
inline TwirlResult twirl2(const Matrix& g) {
  const auto d = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(g.rows()))));
  if (d * d != g.rows()) throw DimensionError("twirl2: dimension is not a perfect square");
  return twirl2(g, d);
}

/// Swap coefficient for the twirl of ρ⊗ρ: (d𝒫 − 1)/(d(d² − 1)).
inline double l_s(double purity, Index d) {
  if (d < 2) throw std::invalid_argument("l_s: dimension must be >= 2");
  const double dd = static_cast<double>(d);
  return (dd * purity - 1.0) / (dd * (dd * dd - 1.0));
}

/// Swap coefficient for the twirl of V⊗V: (d Tr V² − (Tr V)²)/(d(d² − 1)).
inline double m_s(double trace_v, double trace_v_sq, Index d) {
  if (d < 2) throw std::invalid_argument("m_s: dimension must be >= 2");
  const double dd = static_cast<double>(d);
  return (dd * trace_v_sq - trace_v * trace_v) / (dd * (dd * dd - 1.0));
}

/// The same coefficient with (Tr V)² replaced by 1, which is exact only for Tr V = ±1.
inline double m_s_unit_trace(double trace_v_sq, Index d) { return m_s(1.0, trace_v_sq, d); }

/// K = [H₀, [H₀, V]]
inline Matrix double_commutator(const Matrix& h0, const Matrix& v) { return commutator(h0, commutator(h0, v)); }

/// Tr(K²) evaluated from the nested commutator.
inline double x_direct(const Matrix& h0, const Matrix& v) {
  const Matrix k = double_commutator(h0, v);
  return (k * k).trace().real();
}

/// Tr(H₀²(6V H₀² V − 8(H₀V)² + 2H₀²V²)), the expanded form of Tr(K²).
inline double x_expanded(const Matrix& h0, const Matrix& v) {
  const Matrix h2 = h0 * h0;
  const Matrix hv = h0 * v;
  return (h2 * (6.0 * v * h2 * v - 8.0 * hv * hv + 2.0 * h2 * v * v)).trace().real();
}

/// Haar average over initial states U ρ U† of fixed purity:
/// ℬ̄_ρ = l_s Tr(K²)/(4ħ²) with K = [H₀,[H₀,V_S]].
inline double probe_closed_rho(const Matrix& h0, const Matrix& v_s, double purity, Index d_s, double hbar = 1.0) {
  const double dd = static_cast<double>(d_s);
  if (purity < 1.0 / dd - 1e-12 || purity > 1.0 + 1e-12)
    throw std::invalid_argument("probe_closed_rho: purity outside [1/d, 1]");
  return l_s(purity, d_s) * x_direct(h0, v_s) / (4.0 * hbar * hbar);
}

struct ProbeV {
  double value = 0.0;          ///< with the general swap coefficient m_s
  double value_unit_trace = 0.0;  ///< with (Tr V)² → 1
};

/// Haar average over interactions U V_S U†: ℬ̄_V = m_s Tr(J²)/(4ħ²), J = [H₀,[H₀,ρ_t]].
inline ProbeV probe_closed_V(const Matrix& h0, const Matrix& rho_t, double trace_v, double trace_v_sq,
                             double hbar = 1.0) {
  const Index d = h0.rows();
  const double x = x_direct(h0, rho_t) / (4.0 * hbar * hbar);
  return {m_s(trace_v, trace_v_sq, d) * x, m_s_unit_trace(trace_v_sq, d) * x};
}

/// Product state ρ_S ⊗ ρ_E and V_SE = V_S ⊗ V_E, twirling ρ_S:
/// ℬ̄_ρ = l_s Tr(K²) |Tr(ρ_E V_E)|²/(4ħ²).
inline double probe_open_rho(const Matrix& h0, const Matrix& v_s, const Matrix& v_e, const Matrix& rho_e,
                             double purity_s, double hbar = 1.0) {
  const Complex c = (rho_e * v_e).trace();
  return probe_closed_rho(h0, v_s, purity_s, h0.rows(), hbar) * std::norm(c);
}

struct ProbeOpenV {
  double exact = 0.0;    ///< with 𝓜̄_E
  double large_d = 0.0;  ///< with 𝓓̄_E
  double m_bar = 0.0;
  double d_bar = 0.0;
  double delta_v_sq = 0.0;
};

/// 𝓜̄_E = (T² + W)(1 + 𝒫_E)/(2d(d+1)) + (T² − W)(1 − 𝒫_E)/(2d(d−1)), T = Tr V_E, W = Tr V_E².
inline double m_bar_e(double trace_v, double trace_v_sq, double purity_e, Index d_e) {
  const double d = static_cast<double>(d_e);
  const double t2 = trace_v * trace_v;
  return (t2 + trace_v_sq) * (1.0 + purity_e) / (2.0 * d * (d + 1.0)) +
         (t2 - trace_v_sq) * (1.0 - purity_e) / (2.0 * d * (d - 1.0));
}

/// Twirling V_E on the environment: ℬ̄_V = 𝓜̄_E Tr(Kρ_S(t))²/(4ħ²).
/// The large-bath form uses 𝓓̄_E = (W(1 + 𝒫_E) − d ΔV²)/d², ΔV² = (W − T²)/d.
inline ProbeOpenV probe_open_V(const Matrix& h0, const Matrix& v_s, const Matrix& v_e, const Matrix& rho_e,
                               const Matrix& rho_s_t, double hbar = 1.0) {
  const Index d = v_e.rows();
  if (d < 2) throw std::invalid_argument("probe_open_V: environment dimension must be >= 2");
  const double t = v_e.trace().real();
  const double w = (v_e * v_e).trace().real();
  const double p = (rho_e * rho_e).trace().real();
  const double k = (double_commutator(h0, v_s) * rho_s_t).trace().real();
  const double base = k * k / (4.0 * hbar * hbar);
  const double dd = static_cast<double>(d);
  ProbeOpenV out;
  out.m_bar = m_bar_e(t, w, p, d);
  out.delta_v_sq = (w - t * t) / dd;
  out.d_bar = (w * (1.0 + p) - dd * out.delta_v_sq) / (dd * dd);
  out.exact = out.m_bar * base;
  out.large_d = out.d_bar * base;
  return out;
}

/// Diagonal state with one eigenvalue a and the rest (1 − a)/(d − 1), a ≥ 1/d, of the given purity.
inline Matrix state_with_purity(Index d, double purity) {
  const double dd = static_cast<double>(d);
  if (d < 1 || purity < 1.0 / dd - 1e-12 || purity > 1.0 + 1e-12)
    throw std::invalid_argument("state_with_purity: purity outside [1/d, 1]");
  Matrix rho = Matrix::Zero(d, d);
  if (d == 1) {
    rho(0, 0) = 1.0;
    return rho;
  }
  // a² + (1 − a)²/(d − 1) = 𝒫
  const double disc = std::max(0.0, (dd - 1.0) * (dd * purity - 1.0));
  const double a = (1.0 + std::sqrt(disc)) / dd;
  rho(0, 0) = a;
  for (Index i = 1; i < d; ++i) rho(i, i) = (1.0 - a) / (dd - 1.0);
  return rho;
}

// --- Monte Carlo twirling oracle ----------------------------------------------------

enum class TwirlTarget { rho_s, v_s, v_e };

/// Energy–power setup: A = H₀ (⊗ I), B = −(i/ħ)[A, V], V = V_S or V_S ⊗ V_E,
/// state ρ_S or ρ_S ⊗ ρ_E.
struct ProbeSetup {
  Matrix h0;
  Matrix v_s;
  Matrix rho_s;
  std::optional<Matrix> v_e;
  std::optional<Matrix> rho_e;
  double hbar = 1.0;
};

struct MCResult {
  double mean = 0.0;
  double std_error = 0.0;
  double mean_var_product = 0.0;
  double se_var_product = 0.0;
  std::size_t n = 0;
};

namespace detail {

/// Welford accumulator with Chan's pairwise merge.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    const std::size_t total = n + o.n;
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.n) / static_cast<double>(total);
    m2 += o.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(o.n) / static_cast<double>(total);
    n = total;
  }

  double std_error() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

struct ChunkStats {
  RunningStats probe;
  RunningStats var_product;
};

inline ChunkStats run_probe_chunk(const ProbeSetup& s, TwirlTarget target, std::size_t count,
                                  std::uint64_t seed, std::uint64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  const Index ds = s.h0.rows();
  const bool open = s.v_e.has_value();
  const Index de = open ? s.v_e->rows() : 1;
  const Matrix ie = Matrix::Identity(de, de);
  const Matrix a = open ? kron(s.h0, ie) : s.h0;
  ChunkStats out;
  for (std::size_t k = 0; k < count; ++k) {
    Matrix rho_s = s.rho_s;
    Matrix v_s = s.v_s;
    Matrix v_e = open ? *s.v_e : Matrix();
    if (target == TwirlTarget::rho_s) {
      const Matrix u = haar_random_unitary(ds, rng);
      rho_s = u * s.rho_s * u.adjoint();
    } else if (target == TwirlTarget::v_s) {
      const Matrix u = haar_random_unitary(ds, rng);
      v_s = u * s.v_s * u.adjoint();
    } else {
      if (!open) throw std::invalid_argument("mc_probe_oracle: V_E twirl needs an environment");
      const Matrix u = haar_random_unitary(de, rng);
      v_e = u * *s.v_e * u.adjoint();
    }
    const Matrix v = open ? kron(v_s, v_e) : v_s;
    const Matrix rho = open ? kron(rho_s, *s.rho_e) : rho_s;
    const Matrix b = (-1i / s.hbar) * commutator(a, v);
    const UncertaintyReport r = rs_report(a, b, rho);
    out.probe.push(r.comm_term);
    out.var_product.push(r.product);
  }
  return out;
}

}  // namespace detail

/// Sample mean and standard error of ℬ(A, B) under Haar twirling of the target.
/// Samples are split into fixed chunks with independent RNG streams, so the
/// result depends only on (setup, n_samples, seed).
inline MCResult mc_probe_oracle(const ProbeSetup& setup, TwirlTarget target, std::size_t n_samples,
                                std::uint64_t seed, unsigned workers = 0) {
  if (n_samples < 100) throw std::invalid_argument("mc_probe_oracle: n_samples must be >= 100");
  if (setup.v_e.has_value() != setup.rho_e.has_value())
    throw std::invalid_argument("mc_probe_oracle: V_E and rho_E must be given together");
  constexpr std::size_t kChunk = 1000;
  const std::size_t n_chunks = (n_samples + kChunk - 1) / kChunk;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

  std::vector<detail::ChunkStats> chunks(n_chunks);
  auto chunk_size = [&](std::size_t c) { return std::min(kChunk, n_samples - c * kChunk); };
  if (workers == 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      chunks[c] = detail::run_probe_chunk(setup, target, chunk_size(c), seed, c);
  } else {
    for (std::size_t start = 0; start < n_chunks; start += workers) {
      std::vector<std::future<detail::ChunkStats>> jobs;
      for (std::size_t c = start; c < std::min(n_chunks, start + workers); ++c)
        jobs.push_back(std::async(std::launch::async, detail::run_probe_chunk, std::cref(setup), target,
                                  chunk_size(c), seed, static_cast<std::uint64_t>(c)));
      for (std::size_t j = 0; j < jobs.size(); ++j) chunks[start + j] = jobs[j].get();
    }
  }

  detail::ChunkStats total;
  for (const auto& c : chunks) {
    total.probe.merge(c.probe);
    total.var_product.merge(c.var_product);
  }
  return {total.probe.mean, total.probe.std_error(), total.var_product.mean, total.var_product.std_error(),
          total.probe.n};
}

}  // namespace qflow
