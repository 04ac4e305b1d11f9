#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncspec/common.hpp"
#include "ncspec/ncpoly.hpp"

namespace ncspec {

/// Which indeterminate (if any) multiplies a linearization coefficient.
struct LetterRef {
  enum class Kind : std::uint8_t { Constant, Circular, Deterministic };
  Kind kind = Kind::Constant;
  int index = 0;  // 1-based symbol index; unused for Constant
  bool starred = false;

  static LetterRef constant() { return {}; }
  static LetterRef of(const Symbol& s) {
    return {s.is_circular() ? Kind::Circular : Kind::Deterministic, s.index, s.starred};
  }
  bool is_constant() const noexcept { return kind == Kind::Constant; }
  auto operator<=>(const LetterRef&) const = default;
};

/// One nonzero scalar coefficient of L at position (row, col).
struct LinearEntry {
  int row = 0;
  int col = 0;
  cplx coeff{};
  LetterRef letter;
};

/// Coefficient matrix of a deterministic letter A_k or A_k*.
struct DetCoefficient {
  int k = 1;
  bool starred = false;
  CMatrix coeff;
};

/// L = gamma (x) 1 + sum_j zeta_j (x) Y_j + sum_k beta_k (x) A_k, in bordered
/// form [[0, u*], [v, Q]] with a 0/1 border and Q = T (1 + nilpotent).
///
/// Besides the dense coefficient matrices the object keeps the sparse entry
/// list and, when known, the pivot certificate: pivots()[r] is the column of
/// the scalar entry of T in row r (r = 1..m-1). Structured solvers need it.
class Linearization {
 public:
  Linearization(int m, int u, int t, std::vector<LinearEntry> entries, std::vector<int> pivots = {});

  int m() const noexcept { return m_; }
  int u() const noexcept { return u_; }
  int t() const noexcept { return t_; }

  const CMatrix& gamma() const noexcept { return gamma_; }
  /// Coefficient of Y_j, 1 <= j <= u (zero matrix when Y_j does not occur).
  const CMatrix& zeta(int j) const;
  const std::vector<DetCoefficient>& betas() const noexcept { return betas_; }
  const std::vector<LinearEntry>& entries() const noexcept { return entries_; }

  bool has_pivots() const noexcept { return !pivots_.empty(); }
  const std::vector<int>& pivots() const noexcept { return pivots_; }
  /// Rows of Q in an order in which a forward substitution can proceed.
  const std::vector<int>& solve_order() const noexcept { return solve_order_; }

  /// Sizes of the monomial blocks, in gluing order (empty for imported objects).
  const std::vector<int>& block_sizes() const noexcept { return block_sizes_; }

  /// Throws std::logic_error naming the first violated structural invariant.
  void check_invariants() const;

  nlohmann::json to_json() const;
  static Linearization from_json(const nlohmann::json& j);

  friend Linearization linearize(const NcPolynomial& p);

 private:
  void build_dense();
  void build_solve_order();

  int m_;
  int u_;
  int t_;
  std::vector<LinearEntry> entries_;
  std::vector<int> pivots_;
  std::vector<int> solve_order_;
  std::vector<int> block_sizes_;
  CMatrix gamma_;
  std::vector<CMatrix> zetas_;
  std::vector<DetCoefficient> betas_;
};

/// Padded (1 . word . 1) linearization, monomial blocks glued in storage order.
/// Throws EmptyPolynomial for p = 0.
Linearization linearize(const NcPolynomial& p);

/// z e11 (x) I - gamma (x) I - sum zeta_j (x) scale X_j - sum beta (x) A (dense, mN x mN).
CMatrix eval_resolvent(const Linearization& L, const MatrixAssignment& a, double scale_circulars, cplx z);

struct SchurResiduals {
  double residual_corner = 0.0;
  double residual_p = 0.0;
  double detQ_error = 0.0;
};

/// Dense certification of P = -u*Q^{-1}v, of the corner identity and of
/// |det Q(y)| = 1 at assignment `a` (scale 1). Norms are Frobenius.
/// Throws SingularPoint when z is (numerically) an eigenvalue of P(y).
SchurResiduals verify_schur(const Linearization& L, const NcPolynomial& p, const MatrixAssignment& a, cplx z);

/// Linearization letters bound to concrete N x N matrices. Supports
/// structured products and solves with Q(y) and z e11 (x) I - L(y) that cost
/// one N x N product per letter occurrence and never form mN x mN matrices.
/// Vectors are mN x k, block r occupying rows [r N, (r+1) N).
class BoundLinearization {
 public:
  BoundLinearization(const Linearization& L, const MatrixAssignment& a, double scale_circulars);

  int N() const noexcept { return n_; }
  int m() const noexcept { return m_; }
  const Linearization& linearization() const noexcept { return *lin_; }

  /// (z e11 (x) I - L(y)) x.
  CMatrix apply(cplx z, const CMatrix& x) const;
  /// (z e11 (x) I - L(y))^* x.
  CMatrix apply_adjoint(cplx z, const CMatrix& x) const;

  /// Q(y)^{-1} rhs and Q(y)^{-*} rhs for rhs of size (m-1)N x k.
  CMatrix q_solve(const CMatrix& rhs) const;
  CMatrix q_solve_adjoint(const CMatrix& rhs) const;

  /// P(y) = -u* Q(y)^{-1} v, computed once and cached.
  const CMatrix& polynomial_value() const;

 private:
  struct Operand {
    CMatrix dense;
    CVector diag;
    bool diagonal = false;
  };
  struct Term {
    int row;
    int col;
    cplx coeff;
    int operand;  // -1 for constants
  };

  CMatrix letter_times(int operand, const Eigen::Ref<const CMatrix>& x, bool adjoint) const;
  CMatrix triangular_solve(const CMatrix& rhs, bool adjoint) const;
  const Eigen::PartialPivLU<CMatrix>& dense_q_lu() const;  // used without a pivot certificate

  const Linearization* lin_;
  int n_;
  int m_;
  std::vector<Operand> operands_;
  std::vector<Term> terms_;                  // Q part, rows/cols >= 1
  std::vector<std::vector<int>> row_terms_;  // indices into terms_, by row
  std::vector<std::vector<int>> col_terms_;  // by column
  std::vector<cplx> border_row_;             // u* entries, index 1..m-1
  std::vector<cplx> border_col_;             // v entries
  mutable std::optional<CMatrix> polynomial_;
  mutable std::optional<Eigen::PartialPivLU<CMatrix>> q_lu_;
};

/// Solves with z e11 (x) I - L(y) through the Schur complement zI - P(y),
/// LU-factored once per z. Throws SingularResolvent when zI - P(y) is singular.
class StructuredResolvent {
 public:
  StructuredResolvent(const BoundLinearization& bound, cplx z);

  CMatrix solve(const CMatrix& rhs) const;
  CMatrix solve_adjoint(const CMatrix& rhs) const;

  cplx z() const noexcept { return z_; }

 private:
  const BoundLinearization* bound_;
  cplx z_;
  Eigen::PartialPivLU<CMatrix> lu_;
};

}  // namespace ncspec
