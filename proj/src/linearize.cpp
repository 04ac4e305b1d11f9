#include "ncspec/linearize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "ncspec/errors.hpp"

namespace ncspec {

namespace {

nlohmann::json matrix_to_json(const CMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

CMatrix matrix_from_json(const nlohmann::json& j, int m, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != m) throw FileFormatError(what + ": expected " + std::to_string(m) + " rows");
  CMatrix out(m, m);
  for (int r = 0; r < m; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != m) throw FileFormatError(what + ": ragged row " + std::to_string(r));
    for (int c = 0; c < m; ++c) {
      const auto& e = row[c];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw FileFormatError(what + ": entries must be [re, im] pairs");
      out(r, c) = cplx{e[0].get<double>(), e[1].get<double>()};
    }
  }
  return out;
}

// The matrix bound to a letter, with scaling and adjoint applied.
CMatrix letter_matrix(const LetterRef& l, const MatrixAssignment& a, double scale) {
  if (l.kind == LetterRef::Kind::Circular) return a.circular(l.index) * scale;
  const CMatrix& m = a.deterministic(l.index);
  return l.starred ? CMatrix(m.adjoint()) : m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linearization

Linearization::Linearization(int m, int u, int t, std::vector<LinearEntry> entries, std::vector<int> pivots)
    : m_(m), u_(u), t_(t), entries_(std::move(entries)), pivots_(std::move(pivots)) {
  if (m_ < 1) throw std::invalid_argument("linearization dimension must be positive");
  for (const auto& e : entries_) {
    if (e.row < 0 || e.row >= m_ || e.col < 0 || e.col >= m_) throw std::invalid_argument("entry outside m x m");
    if (e.letter.kind == LetterRef::Kind::Circular && (e.letter.index < 1 || e.letter.index > u_))
      throw IndexError("circular letter index out of range");
    if (e.letter.kind == LetterRef::Kind::Deterministic && (e.letter.index < 1 || e.letter.index > t_))
      throw IndexError("deterministic letter index out of range");
  }
  if (!pivots_.empty() && static_cast<int>(pivots_.size()) != m_) throw std::invalid_argument("pivot list must have m slots");
  build_dense();
  if (!pivots_.empty()) build_solve_order();
}

const CMatrix& Linearization::zeta(int j) const {
  if (j < 1 || j > u_) throw IndexError("zeta index " + std::to_string(j) + " out of range");
  return zetas_[j - 1];
}

void Linearization::build_dense() {
  gamma_ = CMatrix::Zero(m_, m_);
  zetas_.assign(u_, CMatrix::Zero(m_, m_));
  std::map<std::pair<int, bool>, CMatrix> betas;
  for (const auto& e : entries_) {
    switch (e.letter.kind) {
      case LetterRef::Kind::Constant:
        gamma_(e.row, e.col) += e.coeff;
        break;
      case LetterRef::Kind::Circular:
        zetas_[e.letter.index - 1](e.row, e.col) += e.coeff;
        break;
      case LetterRef::Kind::Deterministic: {
        auto [it, fresh] = betas.try_emplace({e.letter.index, e.letter.starred}, CMatrix::Zero(m_, m_));
        it->second(e.row, e.col) += e.coeff;
        break;
      }
    }
  }
  betas_.clear();
  for (auto& [key, mat] : betas) betas_.push_back({key.first, key.second, std::move(mat)});
}

void Linearization::build_solve_order() {
  // pivots_[0] is unused; pivots_[r] for r >= 1 must be a permutation of 1..m-1.
  std::vector<int> pivot_row(m_, -1);
  for (int r = 1; r < m_; ++r) {
    const int c = pivots_[r];
    if (c < 1 || c >= m_ || pivot_row[c] != -1) throw std::logic_error("pivot certificate is not a permutation of 1..m-1");
    pivot_row[c] = r;
  }
  std::vector<std::vector<int>> depends(m_);
  for (const auto& e : entries_) {
    if (e.row == 0 || e.col == 0) continue;
    if (e.col == pivots_[e.row]) {
      if (!e.letter.is_constant()) throw std::logic_error("pivot entry carries an indeterminate");
      continue;
    }
    depends[e.row].push_back(pivot_row[e.col]);
  }
  // Depth-first topological sort; state 1 = on stack, 2 = done.
  std::vector<int> state(m_, 0);
  solve_order_.clear();
  for (int start = 1; start < m_; ++start) {
    if (state[start]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{start, 0}};
    state[start] = 1;
    while (!stack.empty()) {
      auto& [row, next] = stack.back();
      if (next < depends[row].size()) {
        const int d = depends[row][next++];
        if (state[d] == 1) throw std::logic_error("pivot certificate does not give a triangular order");
        if (state[d] == 0) {
          state[d] = 1;
          stack.emplace_back(d, 0);
        }
      } else {
        state[row] = 2;
        solve_order_.push_back(row);
        stack.pop_back();
      }
    }
  }
  for (int r = 1; r < m_; ++r) {
    cplx pc{};
    for (const auto& e : entries_)
      if (e.row == r && e.col == pivots_[r]) pc += e.coeff;
    if (pc == cplx{}) throw std::logic_error("zero pivot in row " + std::to_string(r));
  }
}

void Linearization::check_invariants() const {
  if (gamma_(0, 0) != cplx{}) throw std::logic_error("gamma(1,1) must vanish");
  std::vector<int> letters_in_row(m_, 0);
  std::vector<int> letters_in_col(m_, 0);
  for (const auto& e : entries_) {
    if (e.letter.is_constant()) continue;
    if (e.row == 0 || e.col == 0) throw std::logic_error("indeterminate coefficient on the border");
    if (++letters_in_row[e.row] > 1) throw std::logic_error("row " + std::to_string(e.row) + " has two indeterminates");
    if (++letters_in_col[e.col] > 1) throw std::logic_error("column " + std::to_string(e.col) + " has two indeterminates");
  }
  for (int i = 1; i < m_; ++i) {
    const cplx r = gamma_(0, i);
    const cplx c = gamma_(i, 0);
    if (r != c) throw std::logic_error("border column differs from border row");
    if (r != cplx{} && r != cplx{1.0, 0.0}) throw std::logic_error("border entries must be 0 or 1");
  }
}

nlohmann::json Linearization::to_json() const {
  nlohmann::json j;
  j["m"] = m_;
  j["u"] = u_;
  j["t"] = t_;
  j["gamma"] = matrix_to_json(gamma_);
  j["zeta"] = nlohmann::json::array();
  for (int k = 0; k < u_; ++k) j["zeta"].push_back({{"j", k + 1}, {"matrix", matrix_to_json(zetas_[k])}});
  j["beta"] = nlohmann::json::array();
  for (const auto& b : betas_)
    j["beta"].push_back({{"k", b.k}, {"starred", b.starred}, {"matrix", matrix_to_json(b.coeff)}});
  if (!pivots_.empty()) j["pivots"] = pivots_;
  return j;
}

Linearization Linearization::from_json(const nlohmann::json& j) {
  try {
    const int m = j.at("m").get<int>();
    const int u = j.at("u").get<int>();
    const int t = j.at("t").get<int>();
    if (m < 1 || u < 0 || t < 0) throw FileFormatError("linearization: invalid sizes");
    std::vector<LinearEntry> entries;
    auto collect = [&](const CMatrix& mat, LetterRef letter) {
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c)
          if (mat(r, c) != cplx{}) entries.push_back({r, c, mat(r, c), letter});
    };
    collect(matrix_from_json(j.at("gamma"), m, "gamma"), LetterRef::constant());
    for (const auto& z : j.value("zeta", nlohmann::json::array())) {
      LetterRef l{LetterRef::Kind::Circular, z.at("j").get<int>(), false};
      collect(matrix_from_json(z.at("matrix"), m, "zeta"), l);
    }
    for (const auto& b : j.value("beta", nlohmann::json::array())) {
      LetterRef l{LetterRef::Kind::Deterministic, b.at("k").get<int>(), b.value("starred", false)};
      collect(matrix_from_json(b.at("matrix"), m, "beta"), l);
    }
    std::vector<int> pivots;
    if (j.contains("pivots")) pivots = j.at("pivots").get<std::vector<int>>();
    Linearization lin(m, u, t, std::move(entries), std::move(pivots));
    lin.check_invariants();
    return lin;
  } catch (const nlohmann::json::exception& e) {
    throw FileFormatError(std::string("linearization JSON: ") + e.what());
  } catch (const std::logic_error& e) {
    throw FileFormatError(std::string("linearization JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Construction

Linearization linearize(const NcPolynomial& p) {
  if (p.is_zero()) throw EmptyPolynomial();

  int m = 1;
  for (const auto& mono : p.monomials()) m += static_cast<int>(std::max<std::size_t>(mono.word.size(), 1)) + 1;

  std::vector<LinearEntry> entries;
  std::vector<int> pivots(m, 0);
  std::vector<int> sizes;
  int offset = 0;  // global index of local index r is offset + r, local 0 is shared
  for (const auto& mono : p.monomials()) {
    const int letters = static_cast<int>(std::max<std::size_t>(mono.word.size(), 1));
    const int n = letters + 2;
    auto g = [offset](int r) { return r == 0 ? 0 : offset + r; };

    entries.push_back({0, g(n - 1), 1.0, LetterRef::constant()});
    entries.push_back({g(n - 1), 0, 1.0, LetterRef::constant()});
    for (int r = 1; r <= n - 1; ++r) {
      entries.push_back({g(r), g(n - r), -1.0, LetterRef::constant()});
      pivots[g(r)] = g(n - r);
    }
    if (mono.word.empty()) {
      entries.push_back({g(1), g(1), mono.coeff, LetterRef::constant()});
    } else {
      for (int r = 1; r <= letters; ++r) {
        const cplx c = r == 1 ? mono.coeff : cplx{1.0, 0.0};
        entries.push_back({g(r), g(n - 1 - r), c, LetterRef::of(mono.word[r - 1])});
      }
    }
    sizes.push_back(n);
    offset += n - 1;
  }

  Linearization lin(m, p.u(), p.t(), std::move(entries), std::move(pivots));
  lin.block_sizes_ = std::move(sizes);
  lin.check_invariants();
  return lin;
}

CMatrix eval_resolvent(const Linearization& L, const MatrixAssignment& a, double scale_circulars, cplx z) {
  const int n = a.dimension();
  if (n == 0) throw MissingBinding("assignment binds no matrices");
  const int m = L.m();
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(m) * n, static_cast<Eigen::Index>(m) * n);
  std::map<LetterRef, CMatrix> cache;
  for (const auto& e : L.entries()) {
    auto blk = out.block(static_cast<Eigen::Index>(e.row) * n, static_cast<Eigen::Index>(e.col) * n, n, n);
    if (e.letter.is_constant()) {
      blk.diagonal().array() -= e.coeff;
      continue;
    }
    auto it = cache.find(e.letter);
    if (it == cache.end()) {
      const CMatrix mat = letter_matrix(e.letter, a, scale_circulars);
      if (mat.rows() != n || mat.cols() != n) throw DimensionMismatch("letter matrix is not N x N");
      it = cache.emplace(e.letter, mat).first;
    }
    blk -= e.coeff * it->second;
  }
  out.topLeftCorner(n, n).diagonal().array() += z;
  return out;
}

SchurResiduals verify_schur(const Linearization& L, const NcPolynomial& p, const MatrixAssignment& a, cplx z) {
  const int n = a.dimension();
  const Eigen::Index rest = static_cast<Eigen::Index>(L.m() - 1) * n;
  const CMatrix P = evaluate(p, a, 1.0);

  const CMatrix shifted = CMatrix::Identity(n, n) * z - P;
  const Eigen::JacobiSVD<CMatrix> svd(shifted);
  const double smin = svd.singularValues()(n - 1);
  if (!(smin > 1e-10 * (1.0 + std::abs(z) + P.norm()))) throw SingularPoint("z is an eigenvalue of P(y) to working precision");

  const CMatrix lin = -eval_resolvent(L, a, 1.0, 0.0);  // L(y)
  const CMatrix ustar = lin.block(0, n, n, rest);
  const CMatrix v = lin.block(n, 0, rest, n);
  const CMatrix Q = lin.bottomRightCorner(rest, rest);

  SchurResiduals res;
  if (rest == 0) return res;
  const Eigen::FullPivLU<CMatrix> qlu(Q);
  const CMatrix from_schur = -ustar * qlu.solve(v);
  res.residual_p = (from_schur - P).norm() / (1.0 + P.norm());
  res.detQ_error = std::abs(std::abs(qlu.determinant()) - 1.0);

  const CMatrix M = eval_resolvent(L, a, 1.0, z);
  CMatrix e1 = CMatrix::Zero(M.rows(), n);
  e1.topRows(n).setIdentity();
  const CMatrix corner = M.partialPivLu().solve(e1).topRows(n);
  const CMatrix direct = shifted.partialPivLu().inverse();
  res.residual_corner = (corner - direct).norm() / (1.0 + direct.norm());
  return res;
}

// ---------------------------------------------------------------------------
// Structured solves

BoundLinearization::BoundLinearization(const Linearization& L, const MatrixAssignment& a, double scale_circulars)
    : lin_(&L), n_(a.dimension()), m_(L.m()) {
  if (n_ == 0) throw MissingBinding("assignment binds no matrices");
  std::map<LetterRef, int> index;
  border_row_.assign(m_, cplx{});
  border_col_.assign(m_, cplx{});
  row_terms_.assign(m_, {});
  col_terms_.assign(m_, {});
  for (const auto& e : L.entries()) {
    if (e.row == 0 && e.col == 0) continue;
    if (e.row == 0 || e.col == 0) {
      if (!e.letter.is_constant()) throw std::logic_error("indeterminate coefficient on the border");
      if (e.row == 0) border_row_[e.col] += e.coeff;
      if (e.col == 0) border_col_[e.row] += e.coeff;
      continue;
    }
    int op = -1;
    if (!e.letter.is_constant()) {
      auto it = index.find(e.letter);
      if (it == index.end()) {
        const CMatrix mat = letter_matrix(e.letter, a, scale_circulars);
        if (mat.rows() != n_ || mat.cols() != n_) throw DimensionMismatch("letter matrix is not N x N");
        Operand o;
        o.diagonal = mat.isDiagonal(0.0);
        if (o.diagonal) {
          o.diag = mat.diagonal();
        } else {
          o.dense = mat;
        }
        operands_.push_back(std::move(o));
        it = index.emplace(e.letter, static_cast<int>(operands_.size()) - 1).first;
      }
      op = it->second;
    }
    row_terms_[e.row].push_back(static_cast<int>(terms_.size()));
    col_terms_[e.col].push_back(static_cast<int>(terms_.size()));
    terms_.push_back({e.row, e.col, e.coeff, op});
  }
}

CMatrix BoundLinearization::letter_times(int operand, const Eigen::Ref<const CMatrix>& x, bool adjoint) const {
  if (operand < 0) return x;
  const Operand& o = operands_[operand];
  if (o.diagonal) return adjoint ? CMatrix(o.diag.conjugate().asDiagonal() * x) : CMatrix(o.diag.asDiagonal() * x);
  return adjoint ? CMatrix(o.dense.adjoint() * x) : CMatrix(o.dense * x);
}

CMatrix BoundLinearization::apply(cplx z, const CMatrix& x) const {
  const Eigen::Index n = n_;
  CMatrix y = CMatrix::Zero(x.rows(), x.cols());
  y.topRows(n) = z * x.topRows(n);
  for (int c = 1; c < m_; ++c) {
    if (border_row_[c] != cplx{}) y.topRows(n) -= border_row_[c] * x.middleRows(c * n, n);
    if (border_col_[c] != cplx{}) y.middleRows(c * n, n) -= border_col_[c] * x.topRows(n);
  }
  for (const auto& t : terms_) y.middleRows(t.row * n, n) -= t.coeff * letter_times(t.operand, x.middleRows(t.col * n, n), false);
  return y;
}

CMatrix BoundLinearization::apply_adjoint(cplx z, const CMatrix& x) const {
  const Eigen::Index n = n_;
  CMatrix y = CMatrix::Zero(x.rows(), x.cols());
  y.topRows(n) = std::conj(z) * x.topRows(n);
  for (int c = 1; c < m_; ++c) {
    if (border_col_[c] != cplx{}) y.topRows(n) -= std::conj(border_col_[c]) * x.middleRows(c * n, n);
    if (border_row_[c] != cplx{}) y.middleRows(c * n, n) -= std::conj(border_row_[c]) * x.topRows(n);
  }
  for (const auto& t : terms_)
    y.middleRows(t.col * n, n) -= std::conj(t.coeff) * letter_times(t.operand, x.middleRows(t.row * n, n), true);
  return y;
}

CMatrix BoundLinearization::triangular_solve(const CMatrix& rhs, bool adjoint) const {
  const Eigen::Index n = n_;
  const auto& piv = lin_->pivots();
  const auto& order = lin_->solve_order();
  CMatrix x = CMatrix::Zero(rhs.rows(), rhs.cols());
  // Block r of rhs/x (r >= 1) lives at rows (r-1) n.
  auto blk = [n](int r) { return static_cast<Eigen::Index>(r - 1) * n; };

  if (!adjoint) {
    for (int r : order) {
      const int p = piv[r];
      CMatrix acc = rhs.middleRows(blk(r), n);
      cplx pc{};
      for (int ti : row_terms_[r]) {
        const Term& t = terms_[ti];
        if (t.col == p) {
          pc += t.coeff;
        } else {
          acc -= t.coeff * letter_times(t.operand, x.middleRows(blk(t.col), n), false);
        }
      }
      x.middleRows(blk(p), n) = acc / pc;
    }
  } else {
    // Row p = piv[r] of Q* determines x_r; rows are visited in reverse order.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int r = *it;
      const int p = piv[r];
      CMatrix acc = rhs.middleRows(blk(p), n);
      cplx pc{};
      for (int ti : col_terms_[p]) {
        const Term& t = terms_[ti];
        if (t.row == r) {
          pc += std::conj(t.coeff);
        } else {
          acc -= std::conj(t.coeff) * letter_times(t.operand, x.middleRows(blk(t.row), n), true);
        }
      }
      x.middleRows(blk(r), n) = acc / pc;
    }
  }
  return x;
}

const Eigen::PartialPivLU<CMatrix>& BoundLinearization::dense_q_lu() const {
  if (q_lu_) return *q_lu_;
  const Eigen::Index n = n_;
  const Eigen::Index rest = static_cast<Eigen::Index>(m_ - 1) * n;
  CMatrix Q = CMatrix::Zero(rest, rest);
  const CMatrix eye = CMatrix::Identity(n, n);
  for (const auto& t : terms_) Q.block((t.row - 1) * n, (t.col - 1) * n, n, n) += t.coeff * letter_times(t.operand, eye, false);
  q_lu_.emplace(Q);
  return *q_lu_;
}

CMatrix BoundLinearization::q_solve(const CMatrix& rhs) const {
  if (rhs.rows() != static_cast<Eigen::Index>(m_ - 1) * n_) throw DimensionMismatch("q_solve: rhs has wrong height");
  if (lin_->has_pivots()) return triangular_solve(rhs, false);
  return dense_q_lu().solve(rhs);
}

CMatrix BoundLinearization::q_solve_adjoint(const CMatrix& rhs) const {
  if (rhs.rows() != static_cast<Eigen::Index>(m_ - 1) * n_) throw DimensionMismatch("q_solve_adjoint: rhs has wrong height");
  if (lin_->has_pivots()) return triangular_solve(rhs, true);
  return dense_q_lu().adjoint().solve(rhs);
}

const CMatrix& BoundLinearization::polynomial_value() const {
  if (polynomial_) return *polynomial_;
  const Eigen::Index n = n_;
  const Eigen::Index rest = static_cast<Eigen::Index>(m_ - 1) * n;
  CMatrix P = CMatrix::Zero(n, n);
  // Column chunks keep the (m-1)N x k workspace bounded.
  const Eigen::Index chunk = std::max<Eigen::Index>(1, std::min<Eigen::Index>(n, (1 << 22) / std::max<Eigen::Index>(rest, 1)));
  for (Eigen::Index c0 = 0; c0 < n; c0 += chunk) {
    const Eigen::Index k = std::min(chunk, n - c0);
    CMatrix rhs = CMatrix::Zero(rest, k);
    for (int r = 1; r < m_; ++r) {
      if (border_col_[r] == cplx{}) continue;
      rhs.block((r - 1) * n + c0, 0, k, k).diagonal().setConstant(border_col_[r]);
    }
    const CMatrix w = q_solve(rhs);
    for (int c = 1; c < m_; ++c)
      if (border_row_[c] != cplx{}) P.middleCols(c0, k) -= border_row_[c] * w.middleRows((c - 1) * n, n);
  }
  polynomial_ = std::move(P);
  return *polynomial_;
}

StructuredResolvent::StructuredResolvent(const BoundLinearization& bound, cplx z) : bound_(&bound), z_(z) {
  const CMatrix& P = bound.polynomial_value();
  CMatrix shifted = -P;
  shifted.diagonal().array() += z;
  lu_.compute(shifted);
  if (!(lu_.rcond() > 1e-14)) throw SingularResolvent("z I - P(y) is numerically singular");
}

CMatrix StructuredResolvent::solve(const CMatrix& rhs) const {
  const BoundLinearization& b = *bound_;
  const Eigen::Index n = b.N();
  const int m = b.m();
  if (rhs.rows() != static_cast<Eigen::Index>(m) * n) throw DimensionMismatch("resolvent solve: rhs has wrong height");
  const auto& lin = b.linearization();
  const CMatrix& g = lin.gamma();

  CMatrix out(rhs.rows(), rhs.cols());
  if (m == 1) {
    out = lu_.solve(rhs);
    return out;
  }
  CMatrix tail = rhs.bottomRows(rhs.rows() - n);
  const CMatrix w = b.q_solve(tail);
  CMatrix head = rhs.topRows(n);
  for (int c = 1; c < m; ++c)
    if (g(0, c) != cplx{}) head -= g(0, c) * w.middleRows((c - 1) * n, n);
  const CMatrix x0 = lu_.solve(head);
  for (int r = 1; r < m; ++r)
    if (g(r, 0) != cplx{}) tail.middleRows((r - 1) * n, n) += g(r, 0) * x0;
  out.topRows(n) = x0;
  out.bottomRows(rhs.rows() - n) = -b.q_solve(tail);
  return out;
}

CMatrix StructuredResolvent::solve_adjoint(const CMatrix& rhs) const {
  const BoundLinearization& b = *bound_;
  const Eigen::Index n = b.N();
  const int m = b.m();
  if (rhs.rows() != static_cast<Eigen::Index>(m) * n) throw DimensionMismatch("resolvent solve: rhs has wrong height");
  const CMatrix& g = b.linearization().gamma();

  CMatrix out(rhs.rows(), rhs.cols());
  if (m == 1) {
    out = lu_.adjoint().solve(rhs);
    return out;
  }
  CMatrix tail = rhs.bottomRows(rhs.rows() - n);
  const CMatrix w = b.q_solve_adjoint(tail);
  CMatrix head = rhs.topRows(n);
  for (int c = 1; c < m; ++c)
    if (g(c, 0) != cplx{}) head -= std::conj(g(c, 0)) * w.middleRows((c - 1) * n, n);
  const CMatrix x0 = lu_.adjoint().solve(head);
  for (int r = 1; r < m; ++r)
    if (g(0, r) != cplx{}) tail.middleRows((r - 1) * n, n) += std::conj(g(0, r)) * x0;
  out.topRows(n) = x0;
  out.bottomRows(rhs.rows() - n) = -b.q_solve_adjoint(tail);
  return out;
}

}  // namespace ncspec
