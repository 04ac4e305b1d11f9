#include "ncspec/outliers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "ncspec/errors.hpp"
#include "ncspec/numfmt.hpp"
#include "ncspec/randmat.hpp"

namespace ncspec {

namespace {

nlohmann::json complex_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

nlohmann::json complex_list_json(const std::vector<cplx>& zs) {
  nlohmann::json out = nlohmann::json::array();
  for (cplx z : zs) out.push_back(complex_json(z));
  return out;
}

bool lexicographic_less(cplx a, cplx b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

// (a (x) b)[(r, i), (s, j)] = a(r, s) b(i, j).
CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index s = 0; s < a.cols(); ++s)
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      out.block(r * b.rows(), s * b.cols(), b.rows(), b.cols()) = a(r, s) * b;
  return out;
}

struct LowRank {
  CMatrix left;   // rows x r
  CMatrix right;  // r x cols
};

LowRank low_rank(const CMatrix& a, double cutoff) {
  const Eigen::Index n = a.rows();
  if (a.isDiagonal(0.0)) {
    const double top = a.diagonal().cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i)
      if (top > 0.0 && std::abs(a(i, i)) > cutoff * top) keep.push_back(i);
    LowRank f{CMatrix::Zero(n, keep.size()), CMatrix::Zero(keep.size(), a.cols())};
    for (std::size_t c = 0; c < keep.size(); ++c) {
      f.left(keep[c], c) = a(keep[c], keep[c]);
      f.right(c, keep[c]) = 1.0;
    }
    return f;
  }
  Eigen::ColPivHouseholderQR<CMatrix> qr(a);
  qr.setThreshold(cutoff);
  const Eigen::Index r = qr.rank();
  const CMatrix q = qr.householderQ() * CMatrix::Identity(n, r);
  const CMatrix r_top = qr.matrixR().topRows(r).template triangularView<Eigen::Upper>();
  return {q, r_top * qr.colsPermutation().transpose()};
}

}  // namespace

// ---------------------------------------------------------------------------
// Decomposition and rank factors

int numerical_rank(const CMatrix& a, double cutoff) {
  if (a.size() == 0) return 0;
  if (a.isDiagonal(0.0)) {
    const Eigen::VectorXd d = a.diagonal().cwiseAbs();
    const double top = d.maxCoeff();
    return top == 0.0 ? 0 : static_cast<int>((d.array() > cutoff * top).count());
  }
  const Eigen::VectorXd s = singular_values(a);
  return s(0) == 0.0 ? 0 : static_cast<int>((s.array() > cutoff * s(0)).count());
}

Decomposition Decomposition::from_parts(const MatrixAssignment& A, const MatrixAssignment& Aprime) {
  Decomposition d;
  for (const auto& [k, a] : A.deterministics) {
    auto it = Aprime.deterministics.find(k);
    const CMatrix ap = it == Aprime.deterministics.end() ? CMatrix::Zero(a.rows(), a.cols()) : it->second;
    if (ap.rows() != a.rows() || ap.cols() != a.cols())
      throw DimensionMismatch("A' and A differ in size for letter A" + std::to_string(k));
    d.Aprime.deterministics[k] = ap;
    d.Adoubleprime.deterministics[k] = a - ap;
  }
  return d;
}

MatrixAssignment Decomposition::combined() const {
  MatrixAssignment a = Aprime;
  for (const auto& [k, app] : Adoubleprime.deterministics) {
    auto it = a.deterministics.find(k);
    if (it == a.deterministics.end()) {
      a.deterministics[k] = app;
    } else {
      it->second += app;
    }
  }
  return a;
}

int Decomposition::max_rank(double cutoff) const {
  int r = 0;
  for (const auto& [k, app] : Adoubleprime.deterministics) r = std::max(r, numerical_rank(app, cutoff));
  return r;
}

RankFactor factor_perturbation(const Linearization& L, const MatrixAssignment& Adoubleprime, double cutoff) {
  const int m = L.m();
  const int n = Adoubleprime.dimension();
  std::map<int, LowRank> letters;
  std::vector<CMatrix> lefts;
  std::vector<CMatrix> rights;
  Eigen::Index total = 0;
  for (const auto& b : L.betas()) {
    auto it = letters.find(b.k);
    if (it == letters.end()) it = letters.emplace(b.k, low_rank(Adoubleprime.deterministic(b.k), cutoff)).first;
    LowRank f = it->second;
    if (b.starred) f = {f.right.adjoint(), f.left.adjoint()};
    if (f.left.cols() == 0) continue;
    Eigen::JacobiSVD<CMatrix> svd(b.coeff, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd& s = svd.singularValues();
    Eigen::Index rb = 0;
    while (rb < s.size() && s(rb) > 1e-14 * s(0)) ++rb;
    if (rb == 0) continue;
    const CMatrix bl = svd.matrixU().leftCols(rb) * s.head(rb).asDiagonal();
    const CMatrix br = svd.matrixV().leftCols(rb).adjoint();
    lefts.push_back(kron(bl, f.left));
    rights.push_back(kron(br, f.right));
    total += lefts.back().cols();
  }
  RankFactor rf;
  const Eigen::Index mn = static_cast<Eigen::Index>(m) * n;
  rf.P = CMatrix::Zero(mn, 0);
  rf.Q = CMatrix::Zero(0, mn);
  if (total == 0) return rf;

  CMatrix left(mn, total);
  CMatrix right(total, mn);
  Eigen::Index c = 0;
  for (std::size_t i = 0; i < lefts.size(); ++i) {
    left.middleCols(c, lefts[i].cols()) = lefts[i];
    right.middleRows(c, rights[i].rows()) = rights[i];
    c += lefts[i].cols();
  }
  // left * right = Q1 R1 R2* Q2*, then an SVD of the small core.
  Eigen::HouseholderQR<CMatrix> ql(left);
  Eigen::HouseholderQR<CMatrix> qr(right.adjoint());
  const CMatrix r1 = ql.matrixQR().topRows(total).template triangularView<Eigen::Upper>();
  const CMatrix r2 = qr.matrixQR().topRows(total).template triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<CMatrix> core(r1 * r2.adjoint(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& s = core.singularValues();
  Eigen::Index p = 0;
  while (p < s.size() && s(0) > 0.0 && s(p) > cutoff * s(0)) ++p;
  if (p == 0) return rf;
  const CMatrix q1 = ql.householderQ() * CMatrix::Identity(mn, total);
  const CMatrix q2 = qr.householderQ() * CMatrix::Identity(mn, total);
  rf.P = q1 * (core.matrixU().leftCols(p) * s.head(p).asDiagonal());
  rf.Q = core.matrixV().leftCols(p).adjoint() * q2.adjoint();
  rf.p = static_cast<int>(p);
  return rf;
}

// ---------------------------------------------------------------------------
// Predictions and determinants

std::vector<cplx> predicted_outliers(const NcPolynomial& p, const MatrixAssignment& A, const SpectrumMap& map) {
  const CVector ev = eigenvalues(evaluate(zero_circulars(p), A, 1.0));
  std::vector<cplx> out;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const cplx z = ev(i);
    if (!map.covers(z)) throw GridTooCoarse("eigenvalue " + format_complex(z) + " of P(0,A) lies outside the grid region");
    const auto cell = map.cell_outside(z);
    if (!cell) throw GridTooCoarse("eigenvalue " + format_complex(z) + " of P(0,A) lies in a grid cell with mixed verdicts");
    if (*cell) out.push_back(z);
  }
  std::sort(out.begin(), out.end(), lexicographic_less);
  return out;
}

HessenbergDeterminant::HessenbergDeterminant(const CMatrix& m) : norm_(m.norm()) {
  if (m.rows() != m.cols()) throw DimensionMismatch("determinant of a non-square matrix");
  CMatrix a = m;
  const lapack_int n = static_cast<lapack_int>(a.rows());
  if (n > 1) {
    std::vector<cplx> tau(n - 1);
    const lapack_int info = LAPACKE_zgehrd(LAPACK_COL_MAJOR, n, 1, n, a.data(), n, tau.data());
    if (info != 0) throw NumericalError("zgehrd failed with info " + std::to_string(info));
  }
  for (lapack_int j = 0; j < n; ++j)
    for (lapack_int i = j + 2; i < n; ++i) a(i, j) = 0.0;
  h_ = a;
}

HessenbergDeterminant::Value HessenbergDeterminant::at(cplx z) const {
  const Eigen::Index n = h_.rows();
  Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = -h_;
  w.diagonal().array() += z;
  Value v;
  v.min_pivot = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index len = n - k;
    if (k + 1 < n && std::abs(w(k + 1, k)) > std::abs(w(k, k))) {
      w.row(k).tail(len).swap(w.row(k + 1).tail(len));
      v.phase = -v.phase;
    }
    const cplx piv = w(k, k);
    const double a = std::abs(piv);
    v.min_pivot = std::min(v.min_pivot, a);
    if (a == 0.0) {
      v.log_abs = -std::numeric_limits<double>::infinity();
      return v;
    }
    v.log_abs += std::log(a);
    v.phase *= piv / a;
    if (k + 1 < n) {
      const cplx l = w(k + 1, k) / piv;
      w.row(k + 1).tail(len - 1) -= l * w.row(k).tail(len - 1);
    }
  }
  if (n == 0) v.min_pivot = 0.0;
  return v;
}

double det_ratio(const NcPolynomial& p, const MatrixAssignment& A, const MatrixAssignment& Aprime,
                 const std::vector<cplx>& boundary) {
  if (boundary.empty()) throw InputError("det_ratio needs at least one boundary point");
  const NcPolynomial p0 = zero_circulars(p);
  const HessenbergDeterminant num(evaluate(p0, A, 1.0));
  const HessenbergDeterminant den(evaluate(p0, Aprime, 1.0));
  if (num.N() != den.N()) throw DimensionMismatch("A and A' have different dimensions");
  double worst = std::numeric_limits<double>::infinity();
  for (cplx z : boundary) {
    const auto d = den.at(z);
    if (den.N() > 0 && d.min_pivot <= 1e-12 * (std::abs(z) + den.norm()))
      throw SingularDenominator("zI - P(0,A') is singular at boundary point " + format_complex(z));
    worst = std::min(worst, num.at(z).log_abs - d.log_abs);
  }
  return std::exp(worst);
}

cplx outlier_indicator(const BoundLinearization& bound, const RankFactor& rf, cplx z) {
  if (rf.p == 0) return 1.0;
  const StructuredResolvent res(bound, z);
  const CMatrix core = CMatrix::Identity(rf.p, rf.p) - rf.Q * res.solve(rf.P);
  return core.partialPivLu().determinant();
}

double contraction_radius(const Linearization& L, const MatrixAssignment& a, double scale_circulars, cplx z) {
  const int n = a.dimension();
  const int m = L.m();
  MatrixAssignment unperturbed = a;
  for (int j = 1; j <= L.u(); ++j) unperturbed.circulars[j] = CMatrix::Zero(n, n);
  const BoundLinearization bound(L, unperturbed, scale_circulars);
  const StructuredResolvent res(bound, z);

  std::set<int> row_set;
  std::set<int> col_set;
  for (int j = 1; j <= L.u(); ++j)
    for (Eigen::Index c = 0; c < m; ++c)
      for (Eigen::Index r = 0; r < m; ++r)
        if (L.zeta(j)(r, c) != cplx{}) row_set.insert(static_cast<int>(r)), col_set.insert(static_cast<int>(c));
  if (row_set.empty()) return 0.0;
  const std::vector<int> rows(row_set.begin(), row_set.end());
  const std::vector<int> cols(col_set.begin(), col_set.end());
  const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index nc = static_cast<Eigen::Index>(cols.size());

  // T = rows C of R' restricted to columns R; Zt = Y restricted to rows R, columns C.
  CMatrix T(nc * n, nr * n);
  for (Eigen::Index ri = 0; ri < nr; ++ri) {
    CMatrix rhs = CMatrix::Zero(static_cast<Eigen::Index>(m) * n, n);
    rhs.middleRows(static_cast<Eigen::Index>(rows[ri]) * n, n).setIdentity();
    const CMatrix sol = res.solve(rhs);
    for (Eigen::Index ci = 0; ci < nc; ++ci)
      T.block(ci * n, ri * n, n, n) = sol.middleRows(static_cast<Eigen::Index>(cols[ci]) * n, n);
  }
  CMatrix Zt = CMatrix::Zero(nr * n, nc * n);
  for (int j = 1; j <= L.u(); ++j)
    for (Eigen::Index ri = 0; ri < nr; ++ri)
      for (Eigen::Index ci = 0; ci < nc; ++ci) {
        const cplx c = L.zeta(j)(rows[ri], cols[ci]);
        if (c != cplx{}) Zt.block(ri * n, ci * n, n, n) += (c * scale_circulars) * a.circular(j);
      }
  return eigenvalues(Zt * T).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Gamma

Gamma Gamma::annulus(cplx center, double r_in, double r_out) {
  if (!(r_in >= 0.0) || !(r_out > r_in)) throw InputError("annulus radii must satisfy 0 <= r_in < r_out");
  Gamma g;
  g.kind = Kind::Annulus;
  g.center = center;
  g.r_in = r_in;
  g.r_out = r_out;
  return g;
}

Gamma Gamma::rectangle(const Region& r) {
  if (!(r.re_max > r.re_min) || !(r.im_max > r.im_min)) throw InputError("rectangle must have positive width and height");
  Gamma g;
  g.kind = Kind::Rectangle;
  g.rect = r;
  return g;
}

Gamma Gamma::spectrum_distance(std::shared_ptr<const SpectrumMap> map, double eps) {
  if (!map) throw InputError("spectrum-distance region needs a spectrum map");
  if (!(eps > 0.0)) throw InputError("spectrum-distance eps must be positive");
  Gamma g;
  g.kind = Kind::SpectrumDistance;
  g.map = std::move(map);
  g.eps = eps;
  return g;
}

bool Gamma::contains(cplx z) const {
  switch (kind) {
    case Kind::Annulus: {
      const double r = std::abs(z - center);
      return r >= r_in && r <= r_out;
    }
    case Kind::Rectangle:
      return z.real() >= rect.re_min && z.real() <= rect.re_max && z.imag() >= rect.im_min && z.imag() <= rect.im_max;
    case Kind::SpectrumDistance:
      return map->covers(z) && map->distance_to_inside(z) >= eps;
  }
  return false;
}

std::vector<std::vector<cplx>> Gamma::contours(int points) const {
  if (points < 4) throw InputError("contours need at least 4 points");
  std::vector<std::vector<cplx>> out;
  const auto circle = [&](double r, double orientation) {
    std::vector<cplx> c(points);
    for (int k = 0; k < points; ++k) c[k] = center + std::polar(r, orientation * 2.0 * std::numbers::pi * k / points);
    return c;
  };
  switch (kind) {
    case Kind::Annulus:
      if (r_in > 0.0) out.push_back(circle(r_in, -1.0));
      if (std::isfinite(r_out)) out.push_back(circle(r_out, 1.0));
      break;
    case Kind::Rectangle: {
      const cplx corners[4] = {{rect.re_min, rect.im_min}, {rect.re_max, rect.im_min}, {rect.re_max, rect.im_max}, {rect.re_min, rect.im_max}};
      const int per_side = points / 4;
      std::vector<cplx> c;
      for (int s = 0; s < 4; ++s)
        for (int k = 0; k < per_side; ++k) c.push_back(corners[s] + (corners[(s + 1) % 4] - corners[s]) * (double(k) / per_side));
      out.push_back(std::move(c));
      break;
    }
    case Kind::SpectrumDistance:
      throw InputError("a spectrum-distance region has no explicit contour");
  }
  return out;
}

std::vector<cplx> Gamma::boundary_points(int points) const {
  std::vector<cplx> out;
  if (kind == Kind::SpectrumDistance) {
    for (const auto& c : map->cells) {
      const double d = map->distance_to_inside(c.z);
      if (d >= eps && d < eps + map->step) out.push_back(c.z);
    }
    return out;
  }
  for (const auto& c : contours(points)) out.insert(out.end(), c.begin(), c.end());
  return out;
}

void Gamma::check_against(const SpectrumMap& m) const {
  std::vector<const SpectrumVerdict*> bad;
  for (const auto& c : m.cells)
    if (c.verdict != Verdict::Outside && contains(c.z)) bad.push_back(&c);
  if (bad.empty()) return;
  std::ostringstream msg;
  msg << "Gamma meets the spectrum at " << bad.size() << " grid node(s):";
  for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 10); ++i)
    msg << ' ' << format_complex(bad[i]->z) << " (" << verdict_name(bad[i]->verdict) << ')';
  if (bad.size() > 10) msg << " ...";
  throw GammaInsideSpectrum(msg.str());
}

nlohmann::json Gamma::to_json() const {
  switch (kind) {
    case Kind::Annulus:
      return {{"kind", "annulus"},
              {"center", complex_json(center)},
              {"r_in", r_in},
              {"r_out", std::isfinite(r_out) ? nlohmann::json(r_out) : nlohmann::json(nullptr)}};
    case Kind::Rectangle:
      return {{"kind", "rectangle"}, {"re_min", rect.re_min}, {"re_max", rect.re_max}, {"im_min", rect.im_min}, {"im_max", rect.im_max}};
    case Kind::SpectrumDistance:
      return {{"kind", "spectrum_distance"}, {"eps", eps}, {"step", map->step}};
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Argument principle

ZeroCount count_zeros(const std::function<cplx(cplx)>& f, const std::vector<std::vector<cplx>>& contours, double max_phase,
                      int max_evaluations) {
  ZeroCount out;
  const auto eval = [&](cplx z) {
    if (++out.evaluations > max_evaluations) throw NoConvergence("argument principle exceeded its evaluation budget", max_phase);
    const cplx v = f(z);
    if (v == cplx{} || !std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw NoConvergence("function vanishes or is not finite on the contour at " + format_complex(z), 0.0);
    return v;
  };
  double total = 0.0;
  for (const auto& contour : contours) {
    std::vector<cplx> values;
    values.reserve(contour.size());
    for (cplx z : contour) values.push_back(eval(z));
    for (std::size_t i = 0; i < contour.size(); ++i) {
      struct Segment {
        cplx a, b, fa, fb;
      };
      std::vector<Segment> stack{{contour[i], contour[(i + 1) % contour.size()], values[i], values[(i + 1) % contour.size()]}};
      while (!stack.empty()) {
        const Segment s = stack.back();
        stack.pop_back();
        const double step = std::arg(s.fb / s.fa);
        if (std::abs(step) <= max_phase) {
          total += step;
          continue;
        }
        const cplx mid = 0.5 * (s.a + s.b);
        const cplx fm = eval(mid);
        stack.push_back({mid, s.b, fm, s.fb});
        stack.push_back({s.a, mid, s.fa, fm});
      }
    }
  }
  out.winding = total / (2.0 * std::numbers::pi);
  out.count = static_cast<int>(std::lround(out.winding));
  if (std::abs(out.winding - out.count) > 0.1) throw NoConvergence("winding number is not close to an integer", out.winding);
  return out;
}

// ---------------------------------------------------------------------------
// Matching

double OutlierReport::max_distance() const {
  double d = 0.0;
  for (const auto& p : pairs) d = std::max(d, p.distance);
  return d;
}

nlohmann::json OutlierReport::to_json() const {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& p : pairs) pj.push_back({{"p", complex_json(p.predicted)}, {"e", complex_json(p.empirical)}, {"dist", p.distance}});
  return {{"region", region},
          {"match_radius", match_radius},
          {"predicted", complex_list_json(predicted)},
          {"empirical", complex_list_json(empirical)},
          {"pairs", pj},
          {"unmatched_predicted", complex_list_json(unmatched_predicted)},
          {"unmatched_empirical", complex_list_json(unmatched_empirical)},
          {"counts", {{"predicted", predicted_count}, {"empirical", empirical_count}}},
          {"det_ratio_min", det_ratio_min ? nlohmann::json(*det_ratio_min) : nlohmann::json(nullptr)}};
}

OutlierReport match_outliers(const std::vector<cplx>& empirical, const std::vector<cplx>& predicted, const Gamma& gamma,
                             double match_radius) {
  OutlierReport r;
  r.region = gamma.to_json();
  r.match_radius = match_radius;
  for (cplx z : predicted)
    if (gamma.contains(z)) r.predicted.push_back(z);
  for (cplx z : empirical)
    if (gamma.contains(z)) r.empirical.push_back(z);
  std::sort(r.predicted.begin(), r.predicted.end(), lexicographic_less);
  std::sort(r.empirical.begin(), r.empirical.end(), lexicographic_less);
  r.predicted_count = static_cast<int>(r.predicted.size());
  r.empirical_count = static_cast<int>(r.empirical.size());

  struct Candidate {
    double d;
    std::size_t p;
    std::size_t e;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < r.predicted.size(); ++i)
    for (std::size_t j = 0; j < r.empirical.size(); ++j) {
      const double d = std::abs(r.predicted[i] - r.empirical[j]);
      if (d <= match_radius) candidates.push_back({d, i, j});
    }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) { return a.d < b.d; });
  std::vector<bool> used_p(r.predicted.size(), false);
  std::vector<bool> used_e(r.empirical.size(), false);
  for (const auto& c : candidates) {
    if (used_p[c.p] || used_e[c.e]) continue;
    used_p[c.p] = used_e[c.e] = true;
    r.pairs.push_back({r.predicted[c.p], r.empirical[c.e], c.d});
  }
  for (std::size_t i = 0; i < r.predicted.size(); ++i)
    if (!used_p[i]) r.unmatched_predicted.push_back(r.predicted[i]);
  for (std::size_t j = 0; j < r.empirical.size(); ++j)
    if (!used_e[j]) r.unmatched_empirical.push_back(r.empirical[j]);
  return r;
}

}  // namespace ncspec
