#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncspec/common.hpp"
#include "ncspec/freespec.hpp"
#include "ncspec/linearize.hpp"
#include "ncspec/ncpoly.hpp"

namespace ncspec {

/// A = A' + A'' letter by letter; A'' is expected to have bounded rank.
struct Decomposition {
  MatrixAssignment Aprime;
  MatrixAssignment Adoubleprime;

  /// A'' = A - A' for every deterministic letter of A (missing A' letters are zero).
  static Decomposition from_parts(const MatrixAssignment& A, const MatrixAssignment& Aprime);
  /// A' + A''.
  MatrixAssignment combined() const;
  /// Largest numerical rank among the A''_k (singular values above cutoff * s1).
  int max_rank(double cutoff = 1e-10) const;
};

int numerical_rank(const CMatrix& a, double cutoff = 1e-10);

/// Sum beta_k (x) A''_k = P * Q with p columns in P.
struct RankFactor {
  CMatrix P;
  CMatrix Q;
  int p = 0;
};

/// Truncated SVD of sum beta_k (x) A''_k keeping singular values above
/// cutoff * s1. The mN x mN sum is never formed; each letter contributes
/// low-rank factors that are recompressed together.
RankFactor factor_perturbation(const Linearization& L, const MatrixAssignment& Adoubleprime, double cutoff = 1e-10);

/// Eigenvalues of P(0, A) that lie in cells whose four nodes are all Outside.
/// Throws GridTooCoarse when an eigenvalue sits in a mixed cell or off the grid.
std::vector<cplx> predicted_outliers(const NcPolynomial& p, const MatrixAssignment& A, const SpectrumMap& map);

/// log|det(zI - M)| and its phase via LU of the Hessenberg form of M.
class HessenbergDeterminant {
 public:
  explicit HessenbergDeterminant(const CMatrix& m);

  struct Value {
    double log_abs = 0.0;
    cplx phase{1.0, 0.0};
    double min_pivot = 0.0;
  };
  Value at(cplx z) const;
  int N() const noexcept { return static_cast<int>(h_.rows()); }
  double norm() const noexcept { return norm_; }

 private:
  Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> h_;
  double norm_ = 0.0;
};

/// min over the boundary of |det(zI - P(0,A))| / |det(zI - P(0,A'))|.
/// Throws SingularDenominator when zI - P(0,A') is numerically singular at
/// some boundary point, and InputError for an empty boundary.
double det_ratio(const NcPolynomial& p, const MatrixAssignment& A, const MatrixAssignment& Aprime,
                 const std::vector<cplx>& boundary);

/// det(I_p - Q R(z) P) with R(z) = (z e11 (x) I - L(y))^{-1} and y bound in
/// `bound` (circulars X or zero, deterministic letters A').
cplx outlier_indicator(const BoundLinearization& bound, const RankFactor& rf, cplx z);

/// Spectral radius of R'(z) Y where R'(z) = (z e11 (x) I - gamma (x) I - sum beta (x) A')^{-1}
/// and Y = sum zeta_j (x) scale X_j; `a` binds X_j and A'_k. Dense eigensolve
/// of order (number of circular rows) * N.
double contraction_radius(const Linearization& L, const MatrixAssignment& a, double scale_circulars, cplx z);

/// A region Gamma away from the spectrum.
struct Gamma {
  enum class Kind { Annulus, Rectangle, SpectrumDistance };

  Kind kind = Kind::Annulus;
  cplx center{0.0, 0.0};
  double r_in = 0.0;
  double r_out = std::numeric_limits<double>::infinity();
  Region rect;
  double eps = 0.1;
  std::shared_ptr<const SpectrumMap> map;  // SpectrumDistance only

  static Gamma annulus(cplx center, double r_in, double r_out = std::numeric_limits<double>::infinity());
  static Gamma rectangle(const Region& r);
  /// {z : distance to the non-Outside nodes of map >= eps}, restricted to the map.
  static Gamma spectrum_distance(std::shared_ptr<const SpectrumMap> map, double eps);

  bool contains(cplx z) const;
  /// Closed polygons with Gamma on the left, `points` vertices each.
  /// Throws InputError for SpectrumDistance, which has no explicit boundary.
  std::vector<std::vector<cplx>> contours(int points = 256) const;
  /// Points on the boundary: the contour vertices, or for SpectrumDistance the
  /// grid nodes at distance in [eps, eps + step) from the inside.
  std::vector<cplx> boundary_points(int points = 256) const;
  /// Throws GammaInsideSpectrum listing the grid nodes in Gamma whose verdict is not Outside.
  void check_against(const SpectrumMap& map) const;

  nlohmann::json to_json() const;
};

struct ZeroCount {
  int count = 0;
  double winding = 0.0;
  int evaluations = 0;
};

/// Number of zeros minus poles of f in Gamma by the argument principle over
/// the oriented contours, refining segments until each phase step is below
/// max_phase. For unbounded Gamma, f must tend to a nonzero limit at infinity. Throws NoConvergence past max_evaluations or when the winding
/// number is not near an integer.
ZeroCount count_zeros(const std::function<cplx(cplx)>& f, const std::vector<std::vector<cplx>>& contours,
                      double max_phase = 0.5, int max_evaluations = 20000);

struct OutlierPair {
  cplx predicted;
  cplx empirical;
  double distance = 0.0;
};

struct OutlierReport {
  nlohmann::json region;
  double match_radius = 0.0;
  std::vector<cplx> predicted;
  std::vector<cplx> empirical;
  std::vector<OutlierPair> pairs;
  std::vector<cplx> unmatched_predicted;
  std::vector<cplx> unmatched_empirical;
  int predicted_count = 0;
  int empirical_count = 0;
  std::optional<double> det_ratio_min;

  bool counts_agree() const noexcept { return predicted_count == empirical_count; }
  double max_distance() const;
  nlohmann::json to_json() const;
};

/// Restricts both lists to Gamma and pairs them greedily by increasing
/// distance, accepting pairs no farther apart than match_radius.
OutlierReport match_outliers(const std::vector<cplx>& empirical, const std::vector<cplx>& predicted, const Gamma& gamma,
                             double match_radius);

}  // namespace ncspec
