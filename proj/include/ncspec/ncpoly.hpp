#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ncspec/common.hpp"

namespace ncspec {

enum class SymbolKind : std::uint8_t { Circular, Deterministic };

/// A letter of a noncommutative word: Y_j (circular) or A_k / A_k* (deterministic).
/// Indices are 1-based, as written in polynomial text.
struct Symbol {
  SymbolKind kind = SymbolKind::Circular;
  int index = 1;
  bool starred = false;

  static Symbol circular(int j) { return {SymbolKind::Circular, j, false}; }
  static Symbol deterministic(int k, bool starred = false) { return {SymbolKind::Deterministic, k, starred}; }

  bool is_circular() const noexcept { return kind == SymbolKind::Circular; }
  std::string to_string() const;

  auto operator<=>(const Symbol&) const = default;
};

using Word = std::vector<Symbol>;

struct Monomial {
  cplx coeff{1.0, 0.0};
  Word word;  // empty word = coeff * identity
};

/// Noncommutative polynomial in u circular and t deterministic symbols.
///
/// Monomials are kept in order of first appearance (the order used when the
/// polynomial is linearized); like terms are combined and zero terms dropped.
/// Equality is canonical, i.e. independent of that storage order, and treats
/// coefficients within a few ulps as equal.
class NcPolynomial {
 public:
  NcPolynomial(int u, int t);

  static NcPolynomial constant(int u, int t, cplx c);
  static NcPolynomial symbol(int u, int t, Symbol s);
  static NcPolynomial from_monomials(int u, int t, std::vector<Monomial> monomials);

  int u() const noexcept { return u_; }
  int t() const noexcept { return t_; }
  const std::vector<Monomial>& monomials() const noexcept { return monomials_; }

  bool is_zero() const noexcept { return monomials_.empty(); }
  bool has_circular() const;
  int degree() const;

  NcPolynomial operator+(const NcPolynomial& other) const;
  NcPolynomial operator-(const NcPolynomial& other) const;
  NcPolynomial operator*(const NcPolynomial& other) const;
  NcPolynomial scaled(cplx c) const;
  NcPolynomial power(unsigned k) const;

  /// Same polynomial with the monomials reordered by `order` (a permutation of
  /// 0..size-1). Only affects storage order, hence linearization gluing order.
  NcPolynomial reordered(const std::vector<std::size_t>& order) const;

  /// Grammar-valid text; parse_polynomial(to_string()) == *this.
  std::string to_string() const;

  friend bool operator==(const NcPolynomial& a, const NcPolynomial& b);

 private:
  void check_symbols() const;
  void normalize();

  int u_;
  int t_;
  std::vector<Monomial> monomials_;
};

/// Parses the ASCII polynomial grammar:
///   expr    := ['+'|'-'] term (('+'|'-') term)*
///   term    := factor ('*' factor)*
///   factor  := primary ('^' uint)?
///   primary := complex-literal | 'Y' uint | 'A' uint '*'? | '(' expr ')'
/// Throws SyntaxError or IndexError.
NcPolynomial parse_polynomial(std::string_view text, int u, int t);

/// Concrete N x N matrices bound to symbols (keys are 1-based indices).
struct MatrixAssignment {
  std::map<int, CMatrix> circulars;
  std::map<int, CMatrix> deterministics;

  /// Common dimension N of all bound matrices (0 when nothing is bound).
  /// Throws DimensionMismatch if matrices are not square of one size.
  int dimension() const;

  const CMatrix& circular(int j) const;
  const CMatrix& deterministic(int k) const;
};

/// Sum of coeff * product of bound matrices; circular symbols are multiplied
/// by scale_circulars (callers pass 1/sqrt(N)); A_k* binds to the adjoint.
CMatrix evaluate(const NcPolynomial& p, const MatrixAssignment& a, double scale_circulars);

/// P with every circular symbol set to 0.
NcPolynomial zero_circulars(const NcPolynomial& p);

/// Formal adjoint (reverse words, toggle stars, conjugate coefficients).
/// Throws UnsupportedStarredCircular if p contains circular symbols.
NcPolynomial adjoint(const NcPolynomial& p);

}  // namespace ncspec
