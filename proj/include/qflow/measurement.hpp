#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qflow/dynamics.hpp"
#include "qflow/linalg.hpp"

namespace qflow {

inline constexpr double kClusterTol = 1e-8;

/// Orthogonal spectral projectors of a Hermitian operator, one per distinct
/// eigenvalue (eigenvalues closer than the cluster tolerance are merged).
struct SpectralBasis {
  std::vector<Matrix> projectors;
  std::vector<double> eigenvalues;

  Index dim() const { return projectors.empty() ? 0 : projectors.front().rows(); }

  Validation validate(double tol = 1e-10) const {
    if (projectors.size() != eigenvalues.size()) return {false, "projector/eigenvalue count mismatch"};
    if (projectors.empty()) return {false, "empty basis"};
    const Index d = dim();
    Matrix sum = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < projectors.size(); ++i) {
      const Matrix& p = projectors[i];
      if ((p * p - p).norm() > tol) return {false, "projector not idempotent"};
      if (hermiticity_defect(p) > tol) return {false, "projector not Hermitian"};
      for (std::size_t j = i + 1; j < projectors.size(); ++j)
        if ((p * projectors[j]).norm() > tol) return {false, "projectors not orthogonal"};
      sum += p;
    }
    if ((sum - Matrix::Identity(d, d)).norm() > tol) return {false, "projectors do not resolve identity"};
    return {};
  }
};

inline SpectralBasis spectral_basis(const Matrix& a, double cluster_tol = kClusterTol) {
  detail::require_square(a, "spectral_basis");
  if (!is_hermitian(a, kHermitianTol * std::max(1.0, a.norm())))
    throw ValidationError("spectral_basis: operator is not Hermitian");
  const auto es = hermitian_eigen(a);
  const auto& ev = es.eigenvalues();
  const Matrix& vecs = es.eigenvectors();
  SpectralBasis out;
  Index start = 0;
  const Index n = ev.size();
  while (start < n) {
    Index end = start + 1;
    while (end < n && ev(end) - ev(end - 1) <= cluster_tol) ++end;
    const auto block = vecs.middleCols(start, end - start);
    out.projectors.push_back(block * block.adjoint());
    out.eigenvalues.push_back(ev.segment(start, end - start).mean());
    start = end;
  }
  return out;
}

inline SpectralBasis spectral_basis(const HermitianOperator& a, double cluster_tol = kClusterTol) {
  return spectral_basis(a.matrix(), cluster_tol);
}

/// D(m) = Σ_i Π_i m Π_i
inline Matrix dephase(const Matrix& m, const SpectralBasis& basis) {
  if (m.rows() != basis.dim()) throw DimensionError("dephase: dimension mismatch");
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (const auto& p : basis.projectors) out += p * m * p;
  return out;
}

inline QuantumState dephase(const QuantumState& s, const SpectralBasis& basis) {
  return QuantumState::unchecked(dephase(s.rho(), basis));
}

/// C(m) = m − D(m), the part of m off-diagonal in the basis.
inline Matrix offdiagonal_part(const Matrix& m, const SpectralBasis& basis) {
  return m - dephase(m, basis);
}

struct SelectiveOutcome {
  std::size_t index = 0;
  double eigenvalue = 0.0;
  double probability = 0.0;
  QuantumState state;
};

/// Projective measurement with a sampled outcome; returns the renormalised post-measurement state.
template <class Rng>
SelectiveOutcome measure_selective(const QuantumState& s, const SpectralBasis& basis, Rng& rng) {
  if (s.dim() != basis.dim()) throw DimensionError("measure_selective: dimension mismatch");
  std::vector<double> probs;
  for (const auto& p : basis.projectors) probs.push_back(std::max(0.0, (p * s.rho()).trace().real()));
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  const std::size_t k = pick(rng);
  const Matrix& p = basis.projectors[k];
  Matrix post = p * s.rho() * p / probs[k];
  return {k, basis.eigenvalues[k], probs[k], QuantumState::unchecked(std::move(post))};
}

/// Propagates a state over a list of increasing times starting at the first one.
using SegmentPropagator = std::function<Trajectory(const QuantumState&, const std::vector<double>&)>;

/// Evolves with `propagate`, dephasing in `basis` at each measurement time. At a
/// measurement instant the trajectory holds the pre-measurement state followed
/// by the post-measurement state at the same time.
inline Trajectory measure_nonselective_schedule(const SegmentPropagator& propagate,
                                                const QuantumState& rho0,
                                                const std::vector<double>& times,
                                                const SpectralBasis& basis,
                                                const std::vector<double>& measurement_times) {
  detail::require_sorted_times(times);
  for (std::size_t k = 1; k < measurement_times.size(); ++k)
    if (!(measurement_times[k] > measurement_times[k - 1]))
      throw std::invalid_argument("measure_nonselective_schedule: measurement times must be sorted");
  for (double tm : measurement_times)
    if (tm < times.front() || tm > times.back())
      throw std::invalid_argument("measure_nonselective_schedule: measurement time outside the grid");

  Trajectory out;
  QuantumState current = rho0;
  double seg_start = times.front();
  auto run_segment = [&](double seg_end, bool include_end) {
    std::vector<double> seg{seg_start};
    for (double t : times)
      if (t > seg_start && (t < seg_end || (include_end && t == seg_end))) seg.push_back(t);
    if (include_end && seg.back() != seg_end && seg_end > seg_start) seg.push_back(seg_end);
    Trajectory part = seg.size() > 1 ? propagate(current, seg) : Trajectory{{seg_start}, {current}, {}};
    const std::size_t first = out.times.empty() ? 0 : 1;
    for (std::size_t i = first; i < part.times.size(); ++i) {
      out.times.push_back(part.times[i]);
      out.states.push_back(part.states[i]);
    }
    current = part.states.back();
  };

  for (double tm : measurement_times) {
    run_segment(tm, true);
    current = dephase(current, basis);
    out.times.push_back(tm);
    out.states.push_back(current);
    out.measurement_indices.push_back(out.times.size() - 1);
    seg_start = tm;
  }
  run_segment(times.back(), true);
  return out;
}

}  // namespace qflow
