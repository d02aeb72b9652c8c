#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "qflow/linalg.hpp"

namespace qflow {

/// Operator on H_S ⊗ H_E stored as a sum of coefficient · A_k ⊗ B_k. A factor
/// left empty stands for the identity, so A ⊗ I costs nothing to store.
///
/// State vectors use the kron index convention i·d_E + j; internally they are
/// viewed as a d_E × d_S column-major matrix Ψ, on which A ⊗ B acts as B Ψ Aᵀ.
class KronOperator {
 public:
  struct Term {
    Complex coeff{1.0};
    std::optional<Matrix> sys;
    std::optional<Matrix> env;
  };

  KronOperator() = default;
  explicit KronOperator(BipartiteDims dims) : dims_(dims) {}

  static KronOperator zero(BipartiteDims dims) { return KronOperator(dims); }

  static KronOperator identity(BipartiteDims dims) {
    KronOperator op(dims);
    op.terms_.push_back({1.0, std::nullopt, std::nullopt});
    return op;
  }

  /// a ⊗ I_E
  static KronOperator on_system(const Matrix& a, Index env_dim) {
    detail::require_square(a, "KronOperator::on_system");
    KronOperator op({a.rows(), env_dim});
    op.terms_.push_back({1.0, a, std::nullopt});
    return op;
  }

  /// I_S ⊗ b
  static KronOperator on_environment(Index sys_dim, const Matrix& b) {
    detail::require_square(b, "KronOperator::on_environment");
    KronOperator op({sys_dim, b.rows()});
    op.terms_.push_back({1.0, std::nullopt, b});
    return op;
  }

  static KronOperator product(const Matrix& a, const Matrix& b, Complex coeff = 1.0) {
    detail::require_square(a, "KronOperator::product");
    detail::require_square(b, "KronOperator::product");
    KronOperator op({a.rows(), b.rows()});
    op.terms_.push_back({coeff, a, b});
    return op;
  }

  BipartiteDims dims() const { return dims_; }
  Index dim() const { return dims_.total(); }
  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  KronOperator& operator+=(const KronOperator& other) {
    check_dims(other);
    terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
    return *this;
  }

  KronOperator& operator-=(const KronOperator& other) { return *this += (-1.0) * other; }

  KronOperator& operator*=(Complex s) {
    for (auto& t : terms_) t.coeff *= s;
    return *this;
  }

  friend KronOperator operator+(KronOperator a, const KronOperator& b) { return a += b; }
  friend KronOperator operator-(KronOperator a, const KronOperator& b) { return a -= b; }
  friend KronOperator operator*(Complex s, KronOperator a) { return a *= s; }
  friend KronOperator operator*(double s, KronOperator a) { return a *= Complex(s); }

  /// Operator product, expanded term by term.
  friend KronOperator operator*(const KronOperator& a, const KronOperator& b) {
    a.check_dims(b);
    KronOperator out(a.dims_);
    out.terms_.reserve(a.terms_.size() * b.terms_.size());
    for (const auto& ta : a.terms_)
      for (const auto& tb : b.terms_)
        out.terms_.push_back({ta.coeff * tb.coeff, mul(ta.sys, tb.sys), mul(ta.env, tb.env)});
    return out;
  }

  KronOperator adjoint() const {
    KronOperator out(dims_);
    for (const auto& t : terms_)
      out.terms_.push_back({std::conj(t.coeff), adj(t.sys), adj(t.env)});
    return out;
  }

  Vector apply(const Vector& psi) const {
    if (psi.size() != dim()) throw DimensionError("KronOperator::apply: dimension mismatch");
    const Index ds = dims_.system;
    const Index de = dims_.environment;
    Eigen::Map<const Matrix> in(psi.data(), de, ds);
    Vector out = Vector::Zero(dim());
    Eigen::Map<Matrix> acc(out.data(), de, ds);
    for (const auto& t : terms_) {
      if (t.sys && t.env) {
        const Matrix tmp = right_multiply_transposed(in, *t.sys);
        acc.noalias() += t.coeff * left_multiply(*t.env, tmp);
      } else if (t.sys) {
        acc.noalias() += t.coeff * right_multiply_transposed(in, *t.sys);
      } else if (t.env) {
        acc.noalias() += t.coeff * left_multiply(*t.env, in);
      } else {
        acc += t.coeff * in;
      }
    }
    return out;
  }

  Matrix to_dense() const {
    Matrix out = Matrix::Zero(dim(), dim());
    const Matrix is = Matrix::Identity(dims_.system, dims_.system);
    const Matrix ie = Matrix::Identity(dims_.environment, dims_.environment);
    for (const auto& t : terms_)
      out += t.coeff * kron(t.sys ? *t.sys : is, t.env ? *t.env : ie);
    return out;
  }

  /// System-only operator when every term acts trivially on E.
  std::optional<Matrix> system_part() const {
    Matrix out = Matrix::Zero(dims_.system, dims_.system);
    for (const auto& t : terms_) {
      if (t.env) return std::nullopt;
      out += t.coeff * (t.sys ? *t.sys : Matrix::Identity(dims_.system, dims_.system));
    }
    return out;
  }

 private:
  // Banded factors (ladder and position operators) go through a sparse
  // product once the dimension makes the dense one the bottleneck.
  static constexpr Index kSparseFrom = 24;
  using Sparse = Eigen::SparseMatrix<Complex>;

  static bool worth_sparse(const Matrix& m) {
    if (m.rows() < kSparseFrom) return false;
    const Index nnz = (m.array() != Complex(0.0)).count();
    return nnz * 4 < m.size();
  }

  template <class In>
  static Matrix left_multiply(const Matrix& b, const In& x) {
    if (worth_sparse(b)) {
      const Sparse sb = b.sparseView(Complex(0.0), 0.0);
      return sb * x;
    }
    return b * x;
  }

  template <class In>
  static Matrix right_multiply_transposed(const In& x, const Matrix& a) {
    if (worth_sparse(a)) {
      const Sparse sa = Matrix(a.transpose()).sparseView(Complex(0.0), 0.0);
      return x * sa;
    }
    return x * a.transpose();
  }

  void check_dims(const KronOperator& other) const {
    if (!(dims_ == other.dims_)) throw DimensionError("KronOperator: dimension mismatch");
  }

  static std::optional<Matrix> mul(const std::optional<Matrix>& a, const std::optional<Matrix>& b) {
    if (a && b) return Matrix(*a * *b);
    if (a) return a;
    return b;
  }

  static std::optional<Matrix> adj(const std::optional<Matrix>& a) {
    if (a) return Matrix(a->adjoint());
    return std::nullopt;
  }

  BipartiteDims dims_{};
  std::vector<Term> terms_;
};

inline KronOperator commutator(const KronOperator& a, const KronOperator& b) {
  return a * b - b * a;
}

/// ⟨ψ|A|ψ⟩ as a complex number.
inline Complex expectation_complex(const KronOperator& a, const Vector& psi) {
  return psi.dot(a.apply(psi));
}

}  // namespace qflow
