#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ncspec/common.hpp"
#include "ncspec/linearize.hpp"
#include "ncspec/ncpoly.hpp"

namespace ncspec {

struct Tolerances {
  double smin_rel = 1e-8;  // tol_smin = smin_rel * (1 + |y_z|)
  double margin = 0.02;
  double edge = 1e-4;
  double fp = 1e-12;
  int max_iter = 10000;
  /// Radii of maps larger than this (rows of the compressed matrix) use
  /// power iteration instead of a dense eigensolver.
  int dense_radius_limit = 2500;
};

enum class Verdict { Outside, InsideS0, InsideRadius };
const char* verdict_name(Verdict v);

struct SpectrumVerdict {
  cplx z;
  double smin_yz = 0.0;
  std::optional<double> delta1_radius;
  Verdict verdict = Verdict::InsideS0;
};

/// The deterministic part of a linearized model, y_z = (gamma - z e11) (x) 1 + sum beta (x) A,
/// bound to proxy matrices for the limit tuple a.
///
/// When the proxies are jointly diagonal, or there is a single non-scalar
/// normal letter, the model keeps only the joint spectral distribution
/// (weighted atoms) and every partial trace becomes a weighted sum of m x m
/// blocks. Otherwise it works with dense mN x mN matrices.
class HermitizedModel {
 public:
  enum class Representation { Auto, Dense };

  HermitizedModel(Linearization L, MatrixAssignment A, Representation rep = Representation::Auto);

  const Linearization& linearization() const noexcept { return lin_; }
  int N() const noexcept { return n_; }
  int m() const noexcept { return lin_.m(); }
  bool uses_atoms() const noexcept { return !atoms_.empty(); }
  std::size_t atom_count() const noexcept { return atoms_.size(); }
  /// Rows R and columns C touched by some circular coefficient.
  const std::vector<int>& circular_rows() const noexcept { return rows_; }
  const std::vector<int>& circular_cols() const noexcept { return cols_; }

  /// Dense y_z (mN x mN). Always available; costly for large N.
  CMatrix build_yz(cplx z) const;

  /// sigma_min(y_z) together with the scale |y_z| entering tol_smin, where
  /// |y_z| = sqrt(|y_z|_1 |y_z|_inf) bounds the operator norm.
  struct SminInfo {
    double smin = 0.0;
    double scale = 0.0;
  };
  SminInfo smin_yz(cplx z) const;

  /// The map b -> eta_c(Phi(R b R)) on M_2m as a (2m)^2 x (2m)^2 matrix acting
  /// on row-major vec(b), where eta_c(b) = sum_j diag(zeta_j b22 zeta_j*, zeta_j* b11 zeta_j)
  /// and R = (Y_z - x - s (x) 1)^{-1} with s = eta_c(Phi(R)) the stable solution
  /// continued from s = 0 at x = 0.
  /// Throws SingularBase when Y_z is singular at x = 0 and NoConvergence when
  /// no stable solution reaches x.
  CMatrix delta1(cplx z, double x, const Tolerances& tol = {}) const;

  /// Spectral radius of delta1(z, x), computed on the invariant subspace of
  /// block-diagonal matrices supported on the circular rows and columns.
  double delta1_radius(cplx z, double x, const Tolerances& tol = {}) const;

  /// Stable solution s at x together with the radius of the linearized map there.
  struct Shift {
    double x = 0.0;
    CMatrix s;
    double radius = 0.0;
  };
  /// Continues the stable solution from `from` to x; nullopt when the radius
  /// reaches 1 or the continuation step falls below min_step.
  std::optional<Shift> continue_shift(cplx z, const Shift& from, double x, double min_step, const Tolerances& tol = {}) const;
  /// The solution at x = 0.
  Shift base_shift(cplx z, const Tolerances& tol = {}) const;

  /// Multiplies every circular coefficient by w (radius scales by |w|^2).
  HermitizedModel with_scaled_circulars(cplx w) const;

  /// sigma_min(y_z) and, unless z is in S0, the radius at x = 0, sharing one
  /// factorization per atom.
  SpectrumVerdict classify_point(cplx z, const Tolerances& tol = {}) const;

  /// Phi((Y_z - w (x) 1)^{-1}) for a 2m x 2m argument w.
  CMatrix cauchy(cplx z, const CMatrix& w) const;
  /// eta(b) = sum_j Z_j b Z_j.
  CMatrix eta(const CMatrix& b) const;

 private:
  struct Atom {
    double weight;
    std::vector<cplx> values;  // one per entry of lin_.betas()
  };
  struct Samples;
  struct AtomPass {
    std::vector<CMatrix> y;
    std::vector<CMatrix> inverse;  // y^{-1}, empty when y is singular
    SminInfo info;
  };

  void classify(Representation rep);
  CMatrix atom_yz(const Atom& a, cplx z) const;
  CMatrix atom_inverse(const Atom& a, const CMatrix& y) const;
  AtomPass atom_pass(cplx z) const;
  Samples resolvent_samples(cplx z, double x, const Tolerances& tol, const AtomPass* pass = nullptr,
                            const CMatrix* shift = nullptr) const;
  double radius_from(const Samples& s, double x, const Tolerances& tol) const;
  CMatrix stability_matrix(const Samples& s) const;
  CVector pack(const CMatrix& b) const;
  CMatrix unpack(const CVector& v) const;
  std::optional<Shift> newton_shift(cplx z, double x, const CMatrix& start, const Tolerances& tol) const;
  Shift shift_at(cplx z, double x, const Tolerances& tol) const;
  double radius_of(const CMatrix& T, const Tolerances& tol) const;

  Linearization lin_;
  MatrixAssignment A_;
  int n_ = 1;
  std::vector<Atom> atoms_;
  std::vector<int> rows_;
  std::vector<int> cols_;
  std::vector<CMatrix> zetas_;  // scaled copies of the circular coefficients, 1..u
  struct QTerm {
    int col;
    cplx coeff;
    int beta;  // index into the atom values, -1 for constants
  };
  std::vector<std::vector<QTerm>> q_terms_;  // rows 1..m-1 of Q, circular entries dropped
};

SpectrumVerdict is_outside_spectrum(const HermitizedModel& h, cplx z, const Tolerances& tol = {});

struct Region {
  double re_min = -1.0;
  double re_max = 1.0;
  double im_min = -1.0;
  double im_max = 1.0;
};

/// Verdicts on the nodes re_min + i*step, im_min + j*step inside the region;
/// cells are stored row by row (imaginary part outermost).
struct SpectrumMap {
  Region region;
  double step = 0.0;
  int nx = 0;
  int ny = 0;
  std::vector<SpectrumVerdict> cells;

  cplx node(int i, int j) const { return {region.re_min + i * step, region.im_min + j * step}; }
  const SpectrumVerdict& at(int i, int j) const { return cells[static_cast<std::size_t>(j) * nx + i]; }
  bool covers(cplx z) const;
  /// Verdict of the nearest node (nullopt outside the grid).
  std::optional<Verdict> nearest(cplx z) const;
  /// True iff all (up to 4) nodes of the grid cell containing z are Outside;
  /// false iff none are. Mixed cells return nullopt.
  std::optional<bool> cell_outside(cplx z) const;
  /// Shortest distance from z to a node whose verdict is not Outside.
  double distance_to_inside(cplx z) const;
};

SpectrumMap spectrum_grid(const HermitizedModel& h, const Region& region, double step, const Tolerances& tol = {});

/// CSV with columns re, im, smin_yz, delta1_radius, verdict.
void write_spectrum_csv(std::ostream& out, const SpectrumMap& map);
void write_spectrum_csv(const std::filesystem::path& path, const SpectrumMap& map);

struct EdgeResult {
  double x = 0.0;
  bool crossing = true;  // false: radius stayed below 1 on the bracket, x = sigma_min
};

/// Smallest x in (0, sigma_min(y_z)) where the stable solution of delta1 is lost
/// (its radius reaches 1), by bisection to tol.edge.
/// Throws InsideSpectrum unless z is Outside.
EdgeResult edge_of_support(const HermitizedModel& h, cplx z, const Tolerances& tol = {});

struct SubordinationResult {
  CMatrix omega;
  double residual = 0.0;  // |H(omega) - b| with H(w) = w - eta(G(w))
  int iterations = 0;
};

/// Picard iteration w <- b + eta(G(w)) from w = b. Throws NoConvergence.
SubordinationResult subordinate(const std::function<CMatrix(const CMatrix&)>& G,
                                const std::function<CMatrix(const CMatrix&)>& eta, const CMatrix& b,
                                const Tolerances& tol = {});

/// Subordination for the hermitized model at z, with G(w) = Phi((Y_z - w)^{-1}).
/// Throws InputError unless Im b is positive definite.
SubordinationResult subordination(const HermitizedModel& h, cplx z, const CMatrix& b, const Tolerances& tol = {});

}  // namespace ncspec
