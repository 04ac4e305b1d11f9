#include "ncspec/ncpoly.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "ncspec/errors.hpp"
#include "ncspec/numfmt.hpp"

namespace ncspec {

std::string Symbol::to_string() const {
  std::string s = is_circular() ? "Y" : "A";
  s += std::to_string(index);
  if (starred) s += '*';
  return s;
}

// ---------------------------------------------------------------------------
// NcPolynomial

NcPolynomial::NcPolynomial(int u, int t) : u_(u), t_(t) {
  if (u < 0 || t < 0) throw IndexError("symbol counts must be nonnegative");
}

NcPolynomial NcPolynomial::constant(int u, int t, cplx c) {
  return from_monomials(u, t, {Monomial{c, {}}});
}

NcPolynomial NcPolynomial::symbol(int u, int t, Symbol s) {
  return from_monomials(u, t, {Monomial{cplx{1.0, 0.0}, {s}}});
}

NcPolynomial NcPolynomial::from_monomials(int u, int t, std::vector<Monomial> monomials) {
  NcPolynomial p(u, t);
  p.monomials_ = std::move(monomials);
  p.check_symbols();
  p.normalize();
  return p;
}

void NcPolynomial::check_symbols() const {
  for (const auto& m : monomials_) {
    for (const auto& s : m.word) {
      const int limit = s.is_circular() ? u_ : t_;
      if (s.index < 1 || s.index > limit) {
        throw IndexError("symbol " + s.to_string() + " exceeds declared count " + std::to_string(limit));
      }
      if (s.is_circular() && s.starred) throw UnsupportedStarredCircular();
    }
  }
}

void NcPolynomial::normalize() {
  // Combine like terms, keeping the position of the first occurrence.
  std::vector<Monomial> out;
  std::vector<double> magnitude;
  std::map<Word, std::size_t> slot;
  for (auto& m : monomials_) {
    auto [it, inserted] = slot.try_emplace(m.word, out.size());
    if (inserted) {
      out.push_back(std::move(m));
      magnitude.push_back(std::abs(out.back().coeff));
    } else {
      out[it->second].coeff += m.coeff;
      magnitude[it->second] += std::abs(m.coeff);
    }
  }
  std::vector<Monomial> kept;
  kept.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Cancellation below rounding level of the contributing terms counts as zero.
    if (std::abs(out[i].coeff) > 4e-16 * magnitude[i] && out[i].coeff != cplx{}) kept.push_back(std::move(out[i]));
  }
  monomials_ = std::move(kept);
}

bool NcPolynomial::has_circular() const {
  return std::any_of(monomials_.begin(), monomials_.end(), [](const Monomial& m) {
    return std::any_of(m.word.begin(), m.word.end(), [](const Symbol& s) { return s.is_circular(); });
  });
}

int NcPolynomial::degree() const {
  int d = 0;
  for (const auto& m : monomials_) d = std::max(d, static_cast<int>(m.word.size()));
  return d;
}

NcPolynomial NcPolynomial::operator+(const NcPolynomial& other) const {
  NcPolynomial r(std::max(u_, other.u_), std::max(t_, other.t_));
  r.monomials_ = monomials_;
  r.monomials_.insert(r.monomials_.end(), other.monomials_.begin(), other.monomials_.end());
  r.normalize();
  return r;
}

NcPolynomial NcPolynomial::operator-(const NcPolynomial& other) const { return *this + other.scaled(-1.0); }

NcPolynomial NcPolynomial::operator*(const NcPolynomial& other) const {
  NcPolynomial r(std::max(u_, other.u_), std::max(t_, other.t_));
  r.monomials_.reserve(monomials_.size() * other.monomials_.size());
  for (const auto& a : monomials_) {
    for (const auto& b : other.monomials_) {
      Monomial m{a.coeff * b.coeff, a.word};
      m.word.insert(m.word.end(), b.word.begin(), b.word.end());
      r.monomials_.push_back(std::move(m));
    }
  }
  r.normalize();
  return r;
}

NcPolynomial NcPolynomial::scaled(cplx c) const {
  NcPolynomial r = *this;
  for (auto& m : r.monomials_) m.coeff *= c;
  r.normalize();
  return r;
}

NcPolynomial NcPolynomial::power(unsigned k) const {
  NcPolynomial r = constant(u_, t_, 1.0);
  for (unsigned i = 0; i < k; ++i) r = r * *this;
  return r;
}

NcPolynomial NcPolynomial::reordered(const std::vector<std::size_t>& order) const {
  if (order.size() != monomials_.size()) throw IndexError("reorder permutation has wrong length");
  std::vector<bool> seen(order.size(), false);
  NcPolynomial r(u_, t_);
  for (std::size_t i : order) {
    if (i >= order.size() || seen[i]) throw IndexError("reorder argument is not a permutation");
    seen[i] = true;
    r.monomials_.push_back(monomials_[i]);
  }
  return r;
}

namespace {

std::vector<const Monomial*> canonical_order(const std::vector<Monomial>& ms) {
  std::vector<const Monomial*> v;
  v.reserve(ms.size());
  for (const auto& m : ms) v.push_back(&m);
  std::sort(v.begin(), v.end(), [](const Monomial* a, const Monomial* b) { return a->word < b->word; });
  return v;
}

std::string render_coeff(cplx c) {
  const double re = c.real();
  const double im = c.imag();
  if (im == 0.0) return "(" + format_double(re) + ")";
  if (re == 0.0) return "(" + format_double(im) + "i)";
  std::string s = "(" + format_double(re);
  s += im < 0 ? " - " : " + ";
  s += format_double(std::abs(im)) + "i)";
  return s;
}

}  // namespace

std::string NcPolynomial::to_string() const {
  if (monomials_.empty()) return "0";
  std::string out;
  for (const Monomial* m : canonical_order(monomials_)) {
    if (!out.empty()) out += " + ";
    std::string term;
    if (m->word.empty() || m->coeff != cplx{1.0, 0.0}) term = render_coeff(m->coeff);
    for (const auto& s : m->word) {
      if (!term.empty()) term += " * ";
      term += s.to_string();
    }
    out += term;
  }
  return out;
}

// Coefficients match up to a few rounding errors, so that e.g. (1/5)*3*2 and
// the literal (6/5) compare equal.
static bool same_coeff(cplx x, cplx y) {
  return std::abs(x - y) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(x), std::abs(y));
}

bool operator==(const NcPolynomial& a, const NcPolynomial& b) {
  if (a.monomials_.size() != b.monomials_.size()) return false;
  auto va = canonical_order(a.monomials_);
  auto vb = canonical_order(b.monomials_);
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i]->word != vb[i]->word || !same_coeff(va[i]->coeff, vb[i]->coeff)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
 public:
  Parser(std::string_view text, int u, int t) : s_(text), u_(u), t_(t) {}

  NcPolynomial parse() {
    NcPolynomial p = expr();
    skip_ws();
    if (pos_ != s_.size()) throw SyntaxError(pos_, "'+', '-', '*' or end of input");
    return p;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  bool starts_factor(char c) const {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '(' || c == 'Y' || c == 'A' || c == 'i';
  }

  NcPolynomial expr() {
    NcPolynomial acc(u_, t_);
    char c = peek();
    double sign = 1.0;
    if (c == '+' || c == '-') {
      sign = c == '-' ? -1.0 : 1.0;
      ++pos_;
    }
    acc = term().scaled(sign);
    for (;;) {
      c = peek();
      if (c != '+' && c != '-') break;
      ++pos_;
      NcPolynomial rhs = term();
      acc = c == '+' ? acc + rhs : acc - rhs;
    }
    return acc;
  }

  NcPolynomial term() {
    NcPolynomial acc = factor();
    while (peek() == '*') {
      ++pos_;
      acc = acc * factor();
    }
    return acc;
  }

  NcPolynomial factor() {
    NcPolynomial base = primary();
    if (peek() == '^') {
      ++pos_;
      skip_ws();
      const unsigned k = uint_literal("exponent");
      return base.power(k);
    }
    return base;
  }

  unsigned uint_literal(const char* what) {
    const std::size_t start = pos_;
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), value);
    if (ec != std::errc{} || ptr == s_.data() + start) throw SyntaxError(start, std::string("unsigned integer ") + what);
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return value;
  }

  bool try_decimal(double& out) {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t i = pos_;
    bool digits = false;
    while (i < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i]))) ++i, digits = true;
    if (i < s_.size() && s_[i] == '.') {
      ++i;
      while (i < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i]))) ++i, digits = true;
    }
    if (!digits) return false;
    if (i < s_.size() && (s_[i] == 'e' || s_[i] == 'E')) {
      std::size_t j = i + 1;
      if (j < s_.size() && (s_[j] == '+' || s_[j] == '-')) ++j;
      if (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) {
        while (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) ++j;
        i = j;
      }
    }
    auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + i, out);
    if (ec != std::errc{}) throw SyntaxError(start, "decimal literal");
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return true;
  }

  NcPolynomial primary() {
    const char c = peek();
    const std::size_t start = pos_;
    if (c == '(') {
      // Rational literal '(' decimal '/' decimal ')' takes precedence over a group.
      ++pos_;
      double num = 0.0;
      if (try_decimal(num) && peek() == '/') {
        ++pos_;
        double den = 0.0;
        if (!try_decimal(den)) throw SyntaxError(pos_, "denominator");
        if (peek() != ')') throw SyntaxError(pos_, "')'");
        ++pos_;
        if (den == 0.0) throw SyntaxError(start, "nonzero denominator");
        return NcPolynomial::constant(u_, t_, num / den);
      }
      pos_ = start + 1;
      NcPolynomial inner = expr();
      if (peek() != ')') throw SyntaxError(pos_, "')'");
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      try_decimal(v);
      if (peek() == 'i') {
        ++pos_;
        return NcPolynomial::constant(u_, t_, cplx{0.0, v});
      }
      return NcPolynomial::constant(u_, t_, v);
    }
    if (c == 'i') {
      ++pos_;
      return NcPolynomial::constant(u_, t_, kI);
    }
    if (c == 'Y' || c == 'A') {
      ++pos_;
      const std::size_t idx_pos = pos_;
      const unsigned idx = uint_literal("symbol index");
      const int limit = c == 'Y' ? u_ : t_;
      if (idx < 1 || static_cast<int>(idx) > limit) {
        throw IndexError(std::string(1, c) + std::to_string(idx) + " at position " + std::to_string(idx_pos) +
                         " exceeds declared count " + std::to_string(limit));
      }
      if (c == 'Y') return NcPolynomial::symbol(u_, t_, Symbol::circular(static_cast<int>(idx)));
      bool starred = false;
      if (pos_ < s_.size() && peek() == '*') {
        // '*' is a star unless a factor follows it.
        std::size_t j = pos_ + 1;
        while (j < s_.size() && std::isspace(static_cast<unsigned char>(s_[j]))) ++j;
        if (j == s_.size() || !starts_factor(s_[j])) {
          starred = true;
          pos_ += 1;
        }
      }
      return NcPolynomial::symbol(u_, t_, Symbol::deterministic(static_cast<int>(idx), starred));
    }
    throw SyntaxError(start, "literal, symbol or '('");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int u_;
  int t_;
};

}  // namespace

NcPolynomial parse_polynomial(std::string_view text, int u, int t) {
  if (u < 0 || t < 0) throw IndexError("symbol counts must be nonnegative");
  return Parser(text, u, t).parse();
}

// ---------------------------------------------------------------------------
// Assignments and evaluation

int MatrixAssignment::dimension() const {
  int n = -1;
  auto check = [&n](const CMatrix& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("bound matrix is not square");
    if (n < 0) n = static_cast<int>(m.rows());
    if (m.rows() != n) throw DimensionMismatch("bound matrices differ in size");
  };
  for (const auto& [_, m] : circulars) check(m);
  for (const auto& [_, m] : deterministics) check(m);
  return std::max(n, 0);
}

const CMatrix& MatrixAssignment::circular(int j) const {
  auto it = circulars.find(j);
  if (it == circulars.end()) throw MissingBinding("no matrix bound to Y" + std::to_string(j));
  return it->second;
}

const CMatrix& MatrixAssignment::deterministic(int k) const {
  auto it = deterministics.find(k);
  if (it == deterministics.end()) throw MissingBinding("no matrix bound to A" + std::to_string(k));
  return it->second;
}

namespace {

bool is_diagonal(const CMatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != cplx{}) return false;
  return true;
}

struct Operand {
  CMatrix dense;
  CVector diag;
  bool diagonal = false;
};

Operand make_operand(const CMatrix& m, double scale, bool adjoint) {
  Operand op;
  op.diagonal = is_diagonal(m);
  if (op.diagonal) {
    op.diag = m.diagonal() * scale;
    if (adjoint) op.diag = op.diag.conjugate();
  } else {
    op.dense = adjoint ? CMatrix(m.adjoint() * scale) : CMatrix(m * scale);
  }
  return op;
}

}  // namespace

CMatrix evaluate(const NcPolynomial& p, const MatrixAssignment& a, double scale_circulars) {
  const int n = a.dimension();
  if (n == 0) throw MissingBinding("assignment binds no matrices");

  std::map<Symbol, Operand> operands;
  for (const auto& m : p.monomials()) {
    for (const auto& s : m.word) {
      if (operands.count(s)) continue;
      if (s.is_circular()) {
        operands.emplace(s, make_operand(a.circular(s.index), scale_circulars, false));
      } else {
        operands.emplace(s, make_operand(a.deterministic(s.index), 1.0, s.starred));
      }
    }
  }

  CMatrix result = CMatrix::Zero(n, n);
  for (const auto& m : p.monomials()) {
    // Accumulate left to right; `acc_diag` tracks products that are still diagonal.
    bool still_diag = true;
    CVector acc_diag = CVector::Ones(n);
    CMatrix acc;
    for (const auto& s : m.word) {
      const Operand& op = operands.at(s);
      if (still_diag && op.diagonal) {
        acc_diag = acc_diag.cwiseProduct(op.diag);
      } else if (still_diag) {
        acc = acc_diag.asDiagonal() * op.dense;
        still_diag = false;
      } else if (op.diagonal) {
        acc = acc * op.diag.asDiagonal();
      } else {
        acc = acc * op.dense;
      }
    }
    if (still_diag) {
      result.diagonal() += m.coeff * acc_diag;
    } else {
      result += m.coeff * acc;
    }
  }
  return result;
}

NcPolynomial zero_circulars(const NcPolynomial& p) {
  std::vector<Monomial> kept;
  for (const auto& m : p.monomials()) {
    const bool circ = std::any_of(m.word.begin(), m.word.end(), [](const Symbol& s) { return s.is_circular(); });
    if (!circ) kept.push_back(m);
  }
  return NcPolynomial::from_monomials(p.u(), p.t(), std::move(kept));
}

NcPolynomial adjoint(const NcPolynomial& p) {
  if (p.has_circular()) throw UnsupportedStarredCircular();
  std::vector<Monomial> out;
  out.reserve(p.monomials().size());
  for (const auto& m : p.monomials()) {
    Monomial r{std::conj(m.coeff), Word(m.word.rbegin(), m.word.rend())};
    for (auto& s : r.word) s.starred = !s.starred;
    out.push_back(std::move(r));
  }
  return NcPolynomial::from_monomials(p.u(), p.t(), std::move(out));
}

}  // namespace ncspec
