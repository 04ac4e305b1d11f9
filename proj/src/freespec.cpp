#include "ncspec/freespec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "ncspec/errors.hpp"
#include "ncspec/numfmt.hpp"
#include "ncspec/randmat.hpp"

namespace ncspec {

namespace {

bool is_scalar_multiple_of_identity(const CMatrix& a) {
  if (a.rows() == 0) return true;
  const cplx c = a(0, 0);
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (a(i, j) != (i == j ? c : cplx{})) return false;
  return true;
}

double norm_scale(const CMatrix& y) {
  const double one = y.cwiseAbs().colwise().sum().maxCoeff();
  const double inf = y.cwiseAbs().rowwise().sum().maxCoeff();
  return std::sqrt(one * inf);
}

// Hermitization [[0, y], [y*, 0]] - x.
CMatrix hermitize(const CMatrix& y, double x) {
  const Eigen::Index n = y.rows();
  CMatrix h = CMatrix::Zero(2 * n, 2 * n);
  h.topRightCorner(n, n) = y;
  h.bottomLeftCorner(n, n) = y.adjoint();
  h.diagonal().array() -= x;
  return h;
}

// [[0, B*], [B, 0]] with B = y^{-1}: the inverse of the hermitization at x = 0.
CMatrix offdiagonal_inverse(const CMatrix& B) {
  const Eigen::Index n = B.rows();
  CMatrix h = CMatrix::Zero(2 * n, 2 * n);
  h.topRightCorner(n, n) = B.adjoint();
  h.bottomLeftCorner(n, n) = B;
  return h;
}

std::vector<int> shifted(const std::vector<int>& idx, int by) {
  std::vector<int> out(idx);
  for (int& i : out) i += by;
  return out;
}

// Matrix of b -> X b X* on row-major vec, X = rows x cols.
CMatrix conjugation_map(const CMatrix& X) {
  const Eigen::Index r = X.rows();
  const Eigen::Index c = X.cols();
  CMatrix out(r * r, c * c);
  for (Eigen::Index r1 = 0; r1 < r; ++r1)
    for (Eigen::Index r2 = 0; r2 < r; ++r2)
      for (Eigen::Index c1 = 0; c1 < c; ++c1)
        for (Eigen::Index c2 = 0; c2 < c; ++c2) out(r1 * r + r2, c1 * c + c2) = X(r1, c1) * std::conj(X(r2, c2));
  return out;
}

}  // namespace

// Samples of (Y_z - x)^{-1}: Phi(H (b (x) 1) H)[k, l] = sum_a w_a F_a(k, p) b_pq G_a(q, l).
struct HermitizedModel::Samples {
  bool dense = false;
  int n = 1;
  std::vector<double> w;
  std::vector<CMatrix> h;  // atoms: one 2m x 2m inverse each, or y^{-1} when offdiag
  bool offdiag = false;    // atoms at x = 0: the inverse is [[0, B*], [B, 0]]
  int m = 0;
  CMatrix H;               // dense: the 2mN x 2mN inverse

  cplx atom_entry(std::size_t a, int i, int j) const {
    if (!offdiag) return h[a](i, j);
    if (i < m && j >= m) return std::conj(h[a](j - m, i));
    if (i >= m && j < m) return h[a](i - m, j);
    return {};
  }

  std::size_t size() const { return dense ? static_cast<std::size_t>(n) * n : h.size(); }
  double weight(std::size_t a) const { return dense ? 1.0 / n : w[a]; }

  /// Phi of the inverse itself.
  CMatrix mean(int m2) const {
    CMatrix g = CMatrix::Zero(m2, m2);
    if (dense) {
      for (int k = 0; k < m2; ++k)
        for (int l = 0; l < m2; ++l) g(k, l) = H.block(k * n, l * n, n, n).trace() / static_cast<double>(n);
      return g;
    }
    for (std::size_t a = 0; a < h.size(); ++a)
      for (int k = 0; k < m2; ++k)
        for (int l = 0; l < m2; ++l) g(k, l) += w[a] * atom_entry(a, k, l);
    return g;
  }
  cplx F(int k, int p, std::size_t a) const {
    if (!dense) return atom_entry(a, k, p);
    const auto i = static_cast<Eigen::Index>(a / n), j = static_cast<Eigen::Index>(a % n);
    return H(k * n + i, p * n + j);
  }
  cplx G(int q, int l, std::size_t a) const {
    if (!dense) return atom_entry(a, q, l);
    const auto i = static_cast<Eigen::Index>(a / n), j = static_cast<Eigen::Index>(a % n);
    return H(q * n + j, l * n + i);
  }

  /// K[(k,l),(p,q)] = sum_a w_a F_a(k,p) G_a(q,l) for k in I, l in J, p in P, q in Q.
  CMatrix kernel(const std::vector<int>& I, const std::vector<int>& J, const std::vector<int>& P, const std::vector<int>& Q) const {
    const std::size_t S = size();
    const Eigen::Index ni = I.size(), nj = J.size(), np = P.size(), nq = Q.size();
    CMatrix X(ni * np, static_cast<Eigen::Index>(S));
    CMatrix Y(nq * nj, static_cast<Eigen::Index>(S));
    for (std::size_t a = 0; a < S; ++a) {
      const double wa = weight(a);
      const auto col = static_cast<Eigen::Index>(a);
      for (Eigen::Index ik = 0; ik < ni; ++ik)
        for (Eigen::Index ip = 0; ip < np; ++ip) X(ik * np + ip, col) = wa * F(I[ik], P[ip], a);
      for (Eigen::Index iq = 0; iq < nq; ++iq)
        for (Eigen::Index il = 0; il < nj; ++il) Y(iq * nj + il, col) = G(Q[iq], J[il], a);
    }
    const CMatrix M = X * Y.transpose();
    CMatrix K(ni * nj, np * nq);
    for (Eigen::Index ik = 0; ik < ni; ++ik)
      for (Eigen::Index il = 0; il < nj; ++il)
        for (Eigen::Index ip = 0; ip < np; ++ip)
          for (Eigen::Index iq = 0; iq < nq; ++iq) K(ik * nj + il, ip * nq + iq) = M(ik * np + ip, iq * nj + il);
    return K;
  }
};

// ---------------------------------------------------------------------------
// Model

HermitizedModel::HermitizedModel(Linearization L, MatrixAssignment A, Representation rep)
    : lin_(std::move(L)), A_(std::move(A)) {
  A_.circulars.clear();
  n_ = std::max(A_.dimension(), 1);
  for (const auto& b : lin_.betas())
    if (!A_.deterministics.count(b.k)) throw MissingBinding("no proxy matrix bound to A" + std::to_string(b.k));

  const int m = lin_.m();
  std::vector<bool> row_used(m, false), col_used(m, false);
  for (int j = 1; j <= lin_.u(); ++j) {
    zetas_.push_back(lin_.zeta(j));
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        if (lin_.zeta(j)(r, c) != cplx{}) row_used[r] = col_used[c] = true;
  }
  for (int i = 0; i < m; ++i) {
    if (row_used[i]) rows_.push_back(i);
    if (col_used[i]) cols_.push_back(i);
  }
  q_terms_.assign(m, {});
  for (const auto& e : lin_.entries()) {
    if (e.row == 0 || e.col == 0 || e.letter.kind == LetterRef::Kind::Circular) continue;
    int beta = -1;
    if (e.letter.kind == LetterRef::Kind::Deterministic)
      for (std::size_t b = 0; b < lin_.betas().size(); ++b)
        if (lin_.betas()[b].k == e.letter.index && lin_.betas()[b].starred == e.letter.starred) beta = static_cast<int>(b);
    q_terms_[e.row].push_back({e.col, e.coeff, beta});
  }
  classify(rep);
}

void HermitizedModel::classify(Representation rep) {
  atoms_.clear();
  if (rep == Representation::Dense) return;
  const auto& betas = lin_.betas();
  std::vector<int> letters;
  for (const auto& b : betas)
    if (std::find(letters.begin(), letters.end(), b.k) == letters.end()) letters.push_back(b.k);

  auto value_of = [&](std::size_t beta, const std::map<int, cplx>& eig) {
    const cplx v = eig.at(betas[beta].k);
    return betas[beta].starred ? std::conj(v) : v;
  };

  const bool all_diagonal = std::all_of(letters.begin(), letters.end(), [&](int k) { return A_.deterministic(k).isDiagonal(0.0); });
  if (all_diagonal) {
    // Joint distribution of the diagonal entries; identical tuples merge.
    std::map<std::vector<std::pair<double, double>>, std::size_t> seen;
    for (int i = 0; i < n_; ++i) {
      std::map<int, cplx> eig;
      for (int k : letters) eig[k] = A_.deterministic(k)(i, i);
      Atom atom{1.0 / n_, {}};
      std::vector<std::pair<double, double>> key;
      for (std::size_t b = 0; b < betas.size(); ++b) {
        atom.values.push_back(value_of(b, eig));
        key.emplace_back(atom.values.back().real(), atom.values.back().imag());
      }
      auto [it, fresh] = seen.try_emplace(key, atoms_.size());
      if (fresh) {
        atoms_.push_back(std::move(atom));
      } else {
        atoms_[it->second].weight += 1.0 / n_;
      }
    }
    return;
  }

  int nonscalar = -1;
  for (int k : letters) {
    if (is_scalar_multiple_of_identity(A_.deterministic(k))) continue;
    if (nonscalar != -1) return;  // two non-commuting candidates: dense
    nonscalar = k;
  }
  const CMatrix& a = A_.deterministic(nonscalar);
  const double commutator = (a * a.adjoint() - a.adjoint() * a).norm();
  if (commutator > 1e-10 * (1.0 + a.squaredNorm())) return;  // not normal: dense
  const CVector ev = eigenvalues(a);
  for (int i = 0; i < n_; ++i) {
    std::map<int, cplx> eig;
    for (int k : letters) eig[k] = k == nonscalar ? ev(i) : A_.deterministic(k)(0, 0);
    Atom atom{1.0 / n_, {}};
    for (std::size_t b = 0; b < betas.size(); ++b) atom.values.push_back(value_of(b, eig));
    atoms_.push_back(std::move(atom));
  }
}

CMatrix HermitizedModel::atom_inverse(const Atom& atom, const CMatrix& y) const {
  if (!lin_.has_pivots()) return y.partialPivLu().inverse();
  // y = [[y00, r*], [c, W]] with W = Q(values): W^{-1} by substitution in the
  // pivot order, then the Schur complement s = y00 - r* W^{-1} c.
  const int m = lin_.m();
  const auto& piv = lin_.pivots();
  // W X = I row by row: row r of W fixes row piv[r] of X.
  CMatrix Winv = CMatrix::Zero(m - 1, m - 1);
  for (int r : lin_.solve_order()) {
    const int p = piv[r];
    Eigen::RowVectorXcd acc = Eigen::RowVectorXcd::Zero(m - 1);
    acc(r - 1) = 1.0;
    cplx pc{};
    for (const auto& t : q_terms_[r]) {
      const cplx v = t.coeff * (t.beta < 0 ? cplx{1.0} : atom.values[t.beta]);
      if (t.col == p) {
        pc += v;
      } else {
        acc -= v * Winv.row(t.col - 1);
      }
    }
    Winv.row(p - 1) = acc / pc;
  }
  const Eigen::RowVectorXcd rW = y.row(0).tail(m - 1) * Winv;
  const CVector Wc = Winv * y.col(0).tail(m - 1);
  const cplx schur = y(0, 0) - (y.row(0).tail(m - 1) * Wc)(0);
  if (schur == cplx{} || !std::isfinite(std::abs(schur))) return CMatrix::Constant(m, m, std::numeric_limits<double>::infinity());
  CMatrix B(m, m);
  B(0, 0) = 1.0 / schur;
  B.row(0).tail(m - 1) = -rW / schur;
  B.col(0).tail(m - 1) = -Wc / schur;
  B.bottomRightCorner(m - 1, m - 1) = Winv + Wc * rW / schur;
  return B;
}

CMatrix HermitizedModel::atom_yz(const Atom& a, cplx z) const {
  CMatrix y = lin_.gamma();
  y(0, 0) -= z;
  for (std::size_t b = 0; b < lin_.betas().size(); ++b) y += lin_.betas()[b].coeff * a.values[b];
  return y;
}

CMatrix HermitizedModel::build_yz(cplx z) const {
  const int m = lin_.m();
  const Eigen::Index n = n_;
  CMatrix y = CMatrix::Zero(m * n, m * n);
  for (const auto& e : lin_.entries()) {
    auto blk = y.block(e.row * n, e.col * n, n, n);
    switch (e.letter.kind) {
      case LetterRef::Kind::Constant:
        blk.diagonal().array() += e.coeff;
        break;
      case LetterRef::Kind::Circular:
        break;
      case LetterRef::Kind::Deterministic: {
        const CMatrix& a = A_.deterministic(e.letter.index);
        if (a.rows() != n) throw DimensionMismatch("proxy matrix has the wrong size");
        if (e.letter.starred) {
          blk += e.coeff * a.adjoint();
        } else {
          blk += e.coeff * a;
        }
        break;
      }
    }
  }
  y.topLeftCorner(n, n).diagonal().array() -= z;
  return y;
}

HermitizedModel::AtomPass HermitizedModel::atom_pass(cplx z) const {
  // Bracket each atom's sigma_min = 1/|B|_2 with B = y^{-1} by
  // 1/|B|_F <= s <= 1/max(column norm, row norm), then resolve only the atoms
  // that can attain the minimum.
  AtomPass pass;
  std::vector<double> lower(atoms_.size()), upper(atoms_.size());
  double best_upper = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < atoms_.size(); ++a) {
    pass.y.push_back(atom_yz(atoms_[a], z));
    pass.info.scale = std::max(pass.info.scale, norm_scale(pass.y.back()));
    CMatrix B = atom_inverse(atoms_[a], pass.y.back());
    const double nb = B.norm();
    if (!std::isfinite(nb) || nb == 0.0) {
      lower[a] = 0.0;
      upper[a] = std::numeric_limits<double>::infinity();
      B.resize(0, 0);
    } else {
      lower[a] = 1.0 / nb;
      upper[a] = 1.0 / std::max(B.colwise().norm().maxCoeff(), B.rowwise().norm().maxCoeff());
    }
    pass.inverse.push_back(std::move(B));
    best_upper = std::min(best_upper, upper[a]);
  }
  std::vector<std::size_t> order;
  for (std::size_t a = 0; a < atoms_.size(); ++a)
    if (lower[a] <= best_upper) order.push_back(a);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lower[a] < lower[b]; });
  pass.info.smin = std::numeric_limits<double>::infinity();
  for (std::size_t a : order) {
    if (lower[a] > pass.info.smin) break;
    pass.info.smin = std::min(pass.info.smin, smallest_singular(pass.y[a]));
  }
  return pass;
}

HermitizedModel::SminInfo HermitizedModel::smin_yz(cplx z) const {
  if (uses_atoms()) return atom_pass(z).info;
  SminInfo info;
  const CMatrix y = build_yz(z);
  info.smin = smallest_singular(y);
  info.scale = norm_scale(y);
  return info;
}

HermitizedModel::Samples HermitizedModel::resolvent_samples(cplx z, double x, const Tolerances& tol, const AtomPass* pass,
                                                            const CMatrix* shift) const {
  auto singular = [&]() { throw SingularBase("Y_z - x is singular at z = " + format_complex(z) + ", x = " + format_double(x)); };
  const bool plain = !shift || shift->isZero(0.0);

  Samples out;
  out.m = m();
  if (uses_atoms()) {
    std::optional<AtomPass> local;
    if (!pass) pass = &local.emplace(atom_pass(z));
    const double tol_smin = tol.smin_rel * (1.0 + pass->info.scale);
    if (x == 0.0 && plain && pass->info.smin <= tol_smin) singular();
    out.offdiag = x == 0.0 && plain;
    for (std::size_t a = 0; a < atoms_.size(); ++a) {
      if (out.offdiag) {
        if (pass->inverse[a].size() == 0) singular();
        out.h.push_back(pass->inverse[a]);
      } else if (plain) {
        const Eigen::VectorXd sv = singular_values(pass->y[a]);
        if ((sv.array() - x).abs().minCoeff() <= tol_smin) singular();
        out.h.push_back(hermitize(pass->y[a], x).partialPivLu().inverse());
      } else {
        const auto lu = (hermitize(pass->y[a], x) - *shift).fullPivLu();
        if (!lu.isInvertible()) singular();
        out.h.push_back(lu.inverse());
      }
      out.w.push_back(atoms_[a].weight);
    }
    return out;
  }
  out.dense = true;
  out.n = n_;
  const CMatrix y = build_yz(z);
  const double tol_smin = tol.smin_rel * (1.0 + norm_scale(y));
  if (x == 0.0 && plain) {
    if (smallest_singular(y) <= tol_smin) singular();
    out.H = offdiagonal_inverse(y.partialPivLu().inverse());
  } else if (plain) {
    const Eigen::VectorXd sv = singular_values(y);
    if ((sv.array() - x).abs().minCoeff() <= tol_smin) singular();
    out.H = hermitize(y, x).partialPivLu().inverse();
  } else {
    const Eigen::Index n = n_;
    CMatrix M = hermitize(y, x);
    for (Eigen::Index k = 0; k < shift->rows(); ++k)
      for (Eigen::Index l = 0; l < shift->cols(); ++l)
        if ((*shift)(k, l) != cplx{}) M.block(k * n, l * n, n, n).diagonal().array() -= (*shift)(k, l);
    out.H = M.partialPivLu().inverse();
    if (!out.H.allFinite()) singular();
  }
  return out;
}

CMatrix HermitizedModel::delta1(cplx z, double x, const Tolerances& tol) const {
  const int m = lin_.m();
  const Shift sh = shift_at(z, x, tol);
  const Samples s = resolvent_samples(z, x, tol, nullptr, &sh.s);
  std::vector<int> all(2 * m);
  for (int i = 0; i < 2 * m; ++i) all[i] = i;
  const CMatrix K = s.kernel(all, all, all, all);
  CMatrix Zmap = CMatrix::Zero(4 * m * m, 4 * m * m);
  for (const auto& zeta : zetas_) {
    CMatrix upper = CMatrix::Zero(2 * m, 2 * m);
    CMatrix lower = CMatrix::Zero(2 * m, 2 * m);
    upper.topRightCorner(m, m) = zeta;
    lower.bottomLeftCorner(m, m) = zeta.adjoint();
    Zmap += conjugation_map(upper) + conjugation_map(lower);
  }
  return Zmap * K;
}

double HermitizedModel::radius_of(const CMatrix& T, const Tolerances& tol) const {
  if (T.rows() == 0) return 0.0;
  if (T.rows() <= tol.dense_radius_limit) return eigenvalues(T).cwiseAbs().maxCoeff();
  // The map is completely positive, so the radius is attained on the cone;
  // iterate from the identity of each diagonal block.
  CVector v = CVector::Ones(T.rows());
  double estimate = 0.0;
  for (int it = 0; it < tol.max_iter; ++it) {
    CVector next = T * v;
    const double nrm = next.norm() / v.norm();
    next /= next.norm();
    const double change = std::abs(nrm - estimate);
    estimate = nrm;
    v = next;
    if (it > 10 && change <= 1e-12 * std::max(1.0, estimate)) break;
  }
  return estimate;
}

double HermitizedModel::delta1_radius(cplx z, double x, const Tolerances& tol) const {
  if (x == 0.0) return radius_from(resolvent_samples(z, 0.0, tol), 0.0, tol);
  return shift_at(z, x, tol).radius;
}

CVector HermitizedModel::pack(const CMatrix& b) const {
  const int m = lin_.m();
  const std::size_t r = rows_.size(), c = cols_.size();
  CVector v(r * r + c * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) v(i * r + j) = b(rows_[i], rows_[j]);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) v(r * r + i * c + j) = b(m + cols_[i], m + cols_[j]);
  return v;
}

CMatrix HermitizedModel::unpack(const CVector& v) const {
  const int m = lin_.m();
  const std::size_t r = rows_.size(), c = cols_.size();
  CMatrix b = CMatrix::Zero(2 * m, 2 * m);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) b(rows_[i], rows_[j]) = v(i * r + j);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) b(m + cols_[i], m + cols_[j]) = v(r * r + i * c + j);
  return b;
}

HermitizedModel::Shift HermitizedModel::base_shift(cplx z, const Tolerances& tol) const {
  return {0.0, CMatrix::Zero(2 * m(), 2 * m()), delta1_radius(z, 0.0, tol)};
}

// Newton on s = eta_c(Phi(R(s))); the Jacobian is the linearized map minus 1.
std::optional<HermitizedModel::Shift> HermitizedModel::newton_shift(cplx z, double x, const CMatrix& start,
                                                                    const Tolerances& tol) const {
  const int m2 = 2 * m();
  CMatrix s = start;
  for (int it = 0; it < 40; ++it) {
    Samples smp;
    try {
      smp = resolvent_samples(z, x, tol, nullptr, &s);
    } catch (const SingularBase&) {
      return std::nullopt;
    }
    const CMatrix g = smp.mean(m2);
    CMatrix image = CMatrix::Zero(m2, m2);
    const int m = m2 / 2;
    for (const auto& zeta : zetas_) {
      image.topLeftCorner(m, m) += zeta * g.bottomRightCorner(m, m) * zeta.adjoint();
      image.bottomRightCorner(m, m) += zeta.adjoint() * g.topLeftCorner(m, m) * zeta;
    }
    const CVector f = pack(image) - pack(s);
    const CMatrix T = stability_matrix(smp);
    if (!f.allFinite() || !T.allFinite()) return std::nullopt;
    if (f.norm() <= tol.fp * (1.0 + pack(s).norm())) return Shift{x, s, radius_of(T, tol)};
    const CMatrix J = CMatrix::Identity(T.rows(), T.cols()) - T;
    const CVector step = J.fullPivLu().solve(f);
    if (!step.allFinite()) return std::nullopt;
    s += unpack(step);
    s = 0.5 * (s + s.adjoint()).eval();
  }
  return std::nullopt;
}

std::optional<HermitizedModel::Shift> HermitizedModel::continue_shift(cplx z, const Shift& from, double x, double min_step,
                                                                      const Tolerances& tol) const {
  Shift cur = from;
  double step = x - from.x;
  while (cur.x < x) {
    const double target = std::min(x, cur.x + step);
    const auto next = newton_shift(z, target, cur.s, tol);
    if (next && next->radius < 1.0) {
      cur = *next;
      step *= 2.0;
    } else {
      step *= 0.5;
      if (step < min_step) return std::nullopt;
    }
  }
  return cur;
}

HermitizedModel::Shift HermitizedModel::shift_at(cplx z, double x, const Tolerances& tol) const {
  const Shift base = base_shift(z, tol);
  if (x == 0.0) return base;
  if (base.radius >= 1.0) throw NoConvergence("no stable solution at z = " + format_complex(z) + ", x = " + format_double(x), x);
  const auto sh = continue_shift(z, base, x, 1e-9 * x, tol);
  if (!sh) throw NoConvergence("no stable solution at z = " + format_complex(z) + ", x = " + format_double(x), x);
  return *sh;
}

SpectrumVerdict HermitizedModel::classify_point(cplx z, const Tolerances& tol) const {
  SpectrumVerdict v;
  v.z = z;
  std::optional<AtomPass> pass;
  SminInfo s;
  if (uses_atoms()) {
    s = pass.emplace(atom_pass(z)).info;
  } else {
    s = smin_yz(z);
  }
  v.smin_yz = s.smin;
  if (s.smin <= tol.smin_rel * (1.0 + s.scale)) {
    v.verdict = Verdict::InsideS0;
    return v;
  }
  const double r = radius_from(resolvent_samples(z, 0.0, tol, pass ? &*pass : nullptr), 0.0, tol);
  v.delta1_radius = r;
  v.verdict = r < 1.0 - tol.margin ? Verdict::Outside : Verdict::InsideRadius;
  return v;
}

CMatrix HermitizedModel::stability_matrix(const Samples& s) const {
  const int m = lin_.m();
  const std::vector<int>& R = rows_;
  const std::vector<int> C = shifted(cols_, m);
  CMatrix Z1 = CMatrix::Zero(R.size() * R.size(), cols_.size() * cols_.size());  // b22 -> eta_c(b)11
  CMatrix Z2 = CMatrix::Zero(cols_.size() * cols_.size(), R.size() * R.size());  // b11 -> eta_c(b)22
  for (const auto& zeta : zetas_) {
    CMatrix sub(R.size(), cols_.size());
    for (std::size_t i = 0; i < R.size(); ++i)
      for (std::size_t j = 0; j < cols_.size(); ++j) sub(i, j) = zeta(R[i], cols_[j]);
    Z1 += conjugation_map(sub);
    Z2 += conjugation_map(sub.adjoint());
  }
  const Eigen::Index r2 = Z1.rows(), c2 = Z2.rows();
  CMatrix T(r2 + c2, r2 + c2);
  T.topLeftCorner(r2, r2) = Z1 * s.kernel(C, C, R, R);
  T.topRightCorner(r2, c2) = Z1 * s.kernel(C, C, C, C);
  T.bottomLeftCorner(c2, r2) = Z2 * s.kernel(R, R, R, R);
  T.bottomRightCorner(c2, c2) = Z2 * s.kernel(R, R, C, C);
  return T;
}

double HermitizedModel::radius_from(const Samples& s, double x, const Tolerances& tol) const {
  const int m = lin_.m();
  if (rows_.empty()) return 0.0;
  if (x != 0.0) return radius_of(stability_matrix(s), tol);
  // Only the cross blocks of (Y_z)^{-1} are nonzero, so b11 and b22 decouple
  // and both diagonal blocks carry the same nonzero spectrum.
  const std::vector<int> C = shifted(cols_, m);
  CMatrix Z1 = CMatrix::Zero(rows_.size() * rows_.size(), cols_.size() * cols_.size());
  for (const auto& zeta : zetas_) {
    CMatrix sub(rows_.size(), cols_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i)
      for (std::size_t j = 0; j < cols_.size(); ++j) sub(i, j) = zeta(rows_[i], cols_[j]);
    Z1 += conjugation_map(sub);
  }
  const CMatrix K = s.kernel(C, C, rows_, rows_);  // b11 -> K(b)22
  const CMatrix T = Z1.rows() <= K.rows() ? CMatrix(Z1 * K) : CMatrix(K * Z1);
  return radius_of(T, tol);
}

HermitizedModel HermitizedModel::with_scaled_circulars(cplx w) const {
  HermitizedModel copy = *this;
  for (auto& z : copy.zetas_) z *= w;
  return copy;
}

CMatrix HermitizedModel::cauchy(cplx z, const CMatrix& w) const {
  const int m = lin_.m();
  if (w.rows() != 2 * m || w.cols() != 2 * m) throw DimensionMismatch("Cauchy transform argument must be 2m x 2m");
  CMatrix g = CMatrix::Zero(2 * m, 2 * m);
  if (uses_atoms()) {
    for (const auto& atom : atoms_) g += atom.weight * (hermitize(atom_yz(atom, z), 0.0) - w).partialPivLu().inverse();
    return g;
  }
  const Eigen::Index n = n_;
  CMatrix M = hermitize(build_yz(z), 0.0);
  for (int k = 0; k < 2 * m; ++k)
    for (int l = 0; l < 2 * m; ++l)
      if (w(k, l) != cplx{}) M.block(k * n, l * n, n, n).diagonal().array() -= w(k, l);
  const CMatrix inv = M.partialPivLu().inverse();
  for (int k = 0; k < 2 * m; ++k)
    for (int l = 0; l < 2 * m; ++l) g(k, l) = inv.block(k * n, l * n, n, n).trace() / static_cast<double>(n);
  return g;
}

CMatrix HermitizedModel::eta(const CMatrix& b) const {
  const int m = lin_.m();
  CMatrix out = CMatrix::Zero(2 * m, 2 * m);
  for (const auto& zeta : zetas_) {
    CMatrix Z = CMatrix::Zero(2 * m, 2 * m);
    Z.topRightCorner(m, m) = zeta;
    Z.bottomLeftCorner(m, m) = zeta.adjoint();
    out += Z * b * Z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Verdicts and maps

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Outside:
      return "outside";
    case Verdict::InsideS0:
      return "inside_s0";
    case Verdict::InsideRadius:
      return "inside_radius";
  }
  return "unknown";
}

SpectrumVerdict is_outside_spectrum(const HermitizedModel& h, cplx z, const Tolerances& tol) {
  return h.classify_point(z, tol);
}

bool SpectrumMap::covers(cplx z) const {
  const double eps = 1e-9 * std::max(1.0, step);
  return z.real() >= region.re_min - eps && z.real() <= region.re_min + (nx - 1) * step + eps &&
         z.imag() >= region.im_min - eps && z.imag() <= region.im_min + (ny - 1) * step + eps;
}

std::optional<Verdict> SpectrumMap::nearest(cplx z) const {
  if (!covers(z)) return std::nullopt;
  const int i = std::clamp(static_cast<int>(std::lround((z.real() - region.re_min) / step)), 0, nx - 1);
  const int j = std::clamp(static_cast<int>(std::lround((z.imag() - region.im_min) / step)), 0, ny - 1);
  return at(i, j).verdict;
}

std::optional<bool> SpectrumMap::cell_outside(cplx z) const {
  if (!covers(z)) return std::nullopt;
  const auto corner = [&](double offset, int count) {
    return count <= 1 ? 0 : std::clamp(static_cast<int>(std::floor(offset / step)), 0, count - 2);
  };
  const int i0 = corner(z.real() - region.re_min, nx);
  const int j0 = corner(z.imag() - region.im_min, ny);
  int outside = 0;
  int total = 0;
  for (int dj = 0; dj <= (ny > 1 ? 1 : 0); ++dj)
    for (int di = 0; di <= (nx > 1 ? 1 : 0); ++di) {
      ++total;
      outside += at(i0 + di, j0 + dj).verdict == Verdict::Outside;
    }
  if (outside == total) return true;
  if (outside == 0) return false;
  return std::nullopt;
}

double SpectrumMap::distance_to_inside(cplx z) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : cells)
    if (c.verdict != Verdict::Outside) best = std::min(best, std::abs(c.z - z));
  return best;
}

SpectrumMap spectrum_grid(const HermitizedModel& h, const Region& region, double step, const Tolerances& tol) {
  if (!(step > 0.0)) throw InputError("grid step must be positive");
  if (!(region.re_max >= region.re_min) || !(region.im_max >= region.im_min)) throw InputError("grid region is empty");
  SpectrumMap map;
  map.region = region;
  map.step = step;
  map.nx = static_cast<int>(std::floor((region.re_max - region.re_min) / step + 1e-9)) + 1;
  map.ny = static_cast<int>(std::floor((region.im_max - region.im_min) / step + 1e-9)) + 1;
  map.cells.reserve(static_cast<std::size_t>(map.nx) * map.ny);
  for (int j = 0; j < map.ny; ++j)
    for (int i = 0; i < map.nx; ++i) map.cells.push_back(is_outside_spectrum(h, map.node(i, j), tol));
  return map;
}

void write_spectrum_csv(std::ostream& out, const SpectrumMap& map) {
  out << "re,im,smin_yz,delta1_radius,verdict\n";
  for (const auto& c : map.cells) {
    out << format_double(c.z.real()) << ',' << format_double(c.z.imag()) << ',' << format_double(c.smin_yz) << ',';
    if (c.delta1_radius) out << format_double(*c.delta1_radius);
    out << ',' << verdict_name(c.verdict) << '\n';
  }
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot write " + path.string());
  write_spectrum_csv(out, map);
}

// ---------------------------------------------------------------------------
// Support edge and subordination

EdgeResult edge_of_support(const HermitizedModel& h, cplx z, const Tolerances& tol) {
  const SpectrumVerdict v = is_outside_spectrum(h, z, tol);
  if (v.verdict != Verdict::Outside) throw InsideSpectrum("z = " + format_complex(z) + " is not outside the spectrum");
  const auto s = h.smin_yz(z);
  const double guard = 4.0 * tol.smin_rel * (1.0 + s.scale);
  const double min_step = 0.25 * tol.edge;
  HermitizedModel::Shift lo = h.base_shift(z, tol);
  double hi = s.smin - guard;
  if (hi <= 0.0) return {s.smin, false};
  if (h.continue_shift(z, lo, hi, min_step, tol)) return {s.smin, false};
  while (hi - lo.x > tol.edge) {
    const double mid = 0.5 * (lo.x + hi);
    if (const auto next = h.continue_shift(z, lo, mid, min_step, tol)) {
      lo = *next;
    } else {
      hi = mid;
    }
  }
  return {0.5 * (lo.x + hi), true};
}

SubordinationResult subordinate(const std::function<CMatrix(const CMatrix&)>& G,
                                const std::function<CMatrix(const CMatrix&)>& eta, const CMatrix& b,
                                const Tolerances& tol) {
  SubordinationResult res;
  CMatrix w = b;
  double step = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= tol.max_iter; ++it) {
    const CMatrix next = b + eta(G(w));
    if (!next.allFinite()) throw NoConvergence("subordination iterate is not finite", step);
    step = (next - w).norm();
    w = next;
    res.iterations = it;
    if (step <= tol.fp * (1.0 + w.norm())) {
      res.omega = w;
      res.residual = (w - eta(G(w)) - b).norm();
      return res;
    }
  }
  throw NoConvergence("subordination did not converge in " + std::to_string(tol.max_iter) + " iterations", step);
}

SubordinationResult subordination(const HermitizedModel& h, cplx z, const CMatrix& b, const Tolerances& tol) {
  const int m = h.m();
  if (b.rows() != 2 * m || b.cols() != 2 * m) throw DimensionMismatch("subordination argument must be 2m x 2m");
  const CMatrix im = (b - b.adjoint()) / cplx{0.0, 2.0};
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<CMatrix>(im).eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw InputError("subordination needs Im b positive definite");
  return subordinate([&](const CMatrix& w) { return h.cauchy(z, w); }, [&](const CMatrix& x) { return h.eta(x); }, b, tol);
}

}  // namespace ncspec
