// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on stderr.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ncspec/cli.hpp"
#include "ncspec/errors.hpp"
#include "ncspec/freespec.hpp"
#include "ncspec/linearize.hpp"
#include "ncspec/outliers.hpp"
#include "ncspec/randmat.hpp"
#include "testutil.hpp"

using namespace ncspec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, spec, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::filesystem::path kScratch = std::filesystem::temp_directory_path() / "ncspec_acceptance";

// Each target has its own point of `found` within `radius` (greedy by distance).
bool all_matched(std::vector<cplx> found, const std::vector<cplx>& targets, double radius, double& worst) {
  worst = 0.0;
  for (cplx t : targets) {
    auto best = std::min_element(found.begin(), found.end(), [&](cplx a, cplx b) { return std::abs(a - t) < std::abs(b - t); });
    if (best == found.end()) return false;
    worst = std::max(worst, std::abs(*best - t));
    found.erase(best);
  }
  return worst <= radius;
}

Outcome linearization_identities() {
  std::mt19937_64 rng(1);
  double worst_schur = 0.0, worst_det = 0.0;
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int u = static_cast<int>(rng() % 3);
    const int t = u == 0 ? 1 + static_cast<int>(rng() % 2) : static_cast<int>(rng() % 3);
    const auto p = testutil::random_polynomial(rng, u, t, 4, 4);
    const auto a = testutil::random_assignment(rng, u, t, 5);
    try {
      const SchurResiduals r = verify_schur(linearize(p), p, a, 10.0);
      worst_schur = std::max({worst_schur, r.residual_corner, r.residual_p});
      worst_det = std::max(worst_det, r.detQ_error);
    } catch (const SingularPoint&) {
      ++bad;
    }
  }
  return {bad == 0 && worst_schur < 1e-9 && worst_det < 1e-9,
          fmt("max Schur residual %.2e, max detQ error %.2e, singular points %d (100 polynomials, z = 10)", worst_schur, worst_det, bad)};
}

Outcome example1() {
  const std::vector<cplx> targets{2.5, {-0.5, 2.0}};
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    ModelConfig cfg = preset_config(1);
    cfg.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const auto ev = simulate_eigenvalues(cfg);
    const double secs = elapsed(t0);
    std::vector<cplx> outside;
    for (cplx z : ev)
      if (std::abs(z) > 1.6) outside.push_back(z);
    double worst = 0.0;
    const bool matched = outside.size() == 2 && all_matched(outside, targets, 0.2, worst);
    const bool seed_ok = matched && secs < 60.0;
    ok = ok && seed_ok;
    detail += fmt("%sseed %d: %zu outside |z|<=1.6, max dist %.3f, %.1f s", detail.empty() ? "" : "; ", int(seed), outside.size(),
                  outside.size() == 2 ? worst : -1.0, secs);
    std::fprintf(stderr, "  example 1 seed %d done\n", int(seed));
  }
  return {ok, detail};
}

Outcome examples3and4() {
  bool ok = true;
  std::string detail;
  const std::vector<std::vector<cplx>> expected{{{-1.0, 2.0}, 2.5}, {{-2.0, -2.4}, {-2.0, 2.4}}};
  for (int k = 0; k < 2; ++k) {
    const int id = k == 0 ? 3 : 4;
    ModelConfig cfg = preset_config(id);
    cfg.out_dir = kScratch / ("example" + std::to_string(id));
    const auto out = cmd_outliers(cfg);
    const auto& pred = out.report.predicted;
    double exact_err = pred.size() == 2 ? 0.0 : 1.0;
    for (std::size_t i = 0; i < pred.size() && pred.size() == 2; ++i) exact_err = std::max(exact_err, std::abs(pred[i] - expected[k][i]));
    double worst = 0.0;
    const bool matched = out.report.counts_agree() && all_matched(out.report.empirical, pred, 0.2, worst);
    ok = ok && exact_err < 1e-12 && matched;
    detail += fmt("%sexample %d: predicted error %.1e, counts (%d, %d), max match dist %.3f", k ? "; " : "", id, exact_err,
                  out.report.predicted_count, out.report.empirical_count, worst);
    std::fprintf(stderr, "  example %d done\n", id);
  }
  return {ok, detail};
}

Outcome example2() {
  ModelConfig cfg = preset_config(2);
  cfg.out_dir = kScratch / "example2";
  const auto out = cmd_outliers(cfg);
  double worst = 0.0;
  const bool ok = out.report.predicted.size() == 2 && all_matched(out.report.predicted, {2.125, -2.6}, 0.3, worst);
  std::string pred;
  for (cplx z : out.report.predicted) pred += (pred.empty() ? "" : ", ") + format_complex(z);
  return {ok, fmt("predicted {%s}, max dist to {2.125, -2.6} %.3f", pred.c_str(), worst)};
}

Outcome circular_exactness() {
  const HermitizedModel h(linearize(parse_polynomial("Y1", 1, 0)), {});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int wrong = 0, sampled = 0;
  double worst = 0.0;
  while (sampled < 200) {
    const cplx z = std::polar(3.0 * std::sqrt(unit(rng)), 2.0 * std::numbers::pi * unit(rng));
    if (std::abs(std::abs(z) - 1.0) <= 0.05) continue;
    ++sampled;
    const SpectrumVerdict v = is_outside_spectrum(h, z);
    if ((v.verdict == Verdict::Outside) != (std::abs(z) > 1.0)) ++wrong;
    if (v.delta1_radius) worst = std::max(worst, std::abs(*v.delta1_radius - 1.0 / std::norm(z)));
  }
  return {wrong == 0 && worst < 1e-8, fmt("%d of 200 misclassified, max |r - 1/|z|^2| = %.2e", wrong, worst)};
}

Outcome quotient_identity() {
  const int n = 8;
  const auto p = preset_config(1).parsed_polynomial();
  const Linearization L = linearize(p);
  MatrixAssignment A;
  A.deterministics[1] = generate_deterministic(DiagSpec{{2.0, cplx{0.0, 2.0}}}, n);
  const Decomposition d = Decomposition::from_parts(A, {});
  const RankFactor rf = factor_perturbation(L, d.Adoubleprime);
  MatrixAssignment prime = d.Aprime;
  for (int j = 1; j <= 3; ++j) prime.circulars[j] = sample_iid({Distribution::ComplexGaussian, n, 6, static_cast<std::uint64_t>(j)});
  MatrixAssignment full = A;
  full.circulars = prime.circulars;
  const double scale = 1.0 / std::sqrt(double(n));
  const BoundLinearization bound(L, prime, scale);
  double worst = 0.0;
  for (cplx z : Gamma::annulus(0.0, 1.8).boundary_points(64)) {
    const cplx ratio = eval_resolvent(L, full, scale, z).determinant() / eval_resolvent(L, prime, scale, z).determinant();
    worst = std::max(worst, std::abs(outlier_indicator(bound, rf, z) - ratio) / std::abs(ratio));
  }
  return {worst < 1e-8, fmt("max relative deviation %.2e over 64 points of |z| = 1.8, p = %d", worst, rf.p)};
}

// Normal proxy a = c e^{2 pi i s} + d sampled at the midpoints s = (k + 1/2)/n.
CMatrix ring_proxy(int n, double c, cplx d) {
  CMatrix a = CMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) a(k, k) = d + std::polar(c, 2.0 * std::numbers::pi * (k + 0.5) / n);
  return a;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int agree = 0, total = 0;
  std::string per_model;
  for (int model = 0; model < 10; ++model) {
    NcPolynomial p = testutil::random_polynomial(rng, 1, 1, 2, 4);
    if (!p.has_circular()) p = p + parse_polynomial("Y1", 1, 1);
    const double c = 0.5 + unit(rng);
    const cplx d = 0.5 * testutil::random_complex(rng);
    MatrixAssignment proxy;
    proxy.deterministics[1] = ring_proxy(50, c, d);
    const HermitizedModel h(linearize(p), proxy);

    const int N = 400;
    MatrixAssignment big;
    big.deterministics[1] = ring_proxy(N, c, d);
    big.circulars[1] = sample_iid({Distribution::ComplexGaussian, N, 100 + static_cast<std::uint64_t>(model), 1});
    const CMatrix M = evaluate(p, big, 1.0 / std::sqrt(double(N)));
    const CVector ev = eigenvalues(M);

    Region box = {ev.real().minCoeff() - 0.5, ev.real().maxCoeff() + 0.5, ev.imag().minCoeff() - 0.5, ev.imag().maxCoeff() + 0.5};
    double step = 0.05;
    while (((box.re_max - box.re_min) / step + 1) * ((box.im_max - box.im_min) / step + 1) > 40000) step *= 1.5;
    const SpectrumMap map = spectrum_grid(h, box, step);

    // Nodes with a 4-neighbour of the other kind mark the detected boundary.
    std::vector<cplx> boundary;
    for (int j = 0; j < map.ny; ++j)
      for (int i = 0; i < map.nx; ++i) {
        const bool out = map.at(i, j).verdict == Verdict::Outside;
        const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
        for (int q = 0; q < 4; ++q) {
          const int a = i + di[q], b = j + dj[q];
          if (a < 0 || b < 0 || a >= map.nx || b >= map.ny) continue;
          if ((map.at(a, b).verdict == Verdict::Outside) != out) {
            boundary.push_back(map.node(i, j));
            break;
          }
        }
      }

    int model_agree = 0, sampled = 0;
    while (sampled < 20) {
      const cplx z{box.re_min + unit(rng) * (box.re_max - box.re_min), box.im_min + unit(rng) * (box.im_max - box.im_min)};
      bool in_band = false;
      for (cplx b : boundary) in_band = in_band || std::abs(z - b) < 0.1;
      if (in_band) continue;
      ++sampled;
      const bool outside = h.classify_point(z).verdict == Verdict::Outside;
      const bool mc_outside = smallest_singular(M - z * CMatrix::Identity(N, N)) > 0.05;
      model_agree += outside == mc_outside;
    }
    agree += model_agree;
    total += sampled;
    per_model += fmt("%s%d", per_model.empty() ? "" : " ", model_agree);
    std::fprintf(stderr, "  oracle model %d: %d/20\n", model, model_agree);
  }
  const double rate = double(agree) / total;
  return {rate >= 0.9, fmt("agreement %.1f%% (%d/%d; per model out of 20: %s)", 100.0 * rate, agree, total, per_model.c_str())};
}

MatrixAssignment random_proxy(std::mt19937_64& rng, int trial) {
  MatrixAssignment a;
  // Alternate between the atom path (diagonal) and the dense path.
  a.deterministics[1] = trial % 2 == 0 ? CMatrix(testutil::random_matrix(rng, 5).diagonal().asDiagonal()) : testutil::random_matrix(rng, 3);
  return a;
}

Outcome scaling_law() {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int u = 1 + trial % 2;
    NcPolynomial p = testutil::random_polynomial(rng, u, 1, 3, 4);
    if (!p.has_circular()) p = p + parse_polynomial("Y1", u, 1);
    const HermitizedModel h(linearize(p), random_proxy(rng, trial));
    cplx z = 3.0 * testutil::random_complex(rng);
    while (h.smin_yz(z).smin < 1e-3) z *= 1.5;
    const cplx w = testutil::random_complex(rng);
    const double r = h.delta1_radius(z, 0.0);
    const double rw = h.with_scaled_circulars(w).delta1_radius(z, 0.0);
    worst = std::max(worst, std::abs(rw - std::norm(w) * r) / (std::norm(w) * r));
  }
  return {worst < 1e-10, fmt("max relative deviation from |w|^2 scaling %.2e (20 triples)", worst)};
}

Outcome choi_positivity() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = std::numeric_limits<double>::infinity();
  int gapped = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int u = 1 + trial % 2;
    NcPolynomial p = testutil::random_polynomial(rng, u, 1, 3, 3);
    if (!p.has_circular()) p = p + parse_polynomial("Y1", u, 1);
    const HermitizedModel h(linearize(p), random_proxy(rng, trial));
    cplx z = 3.0 * testutil::random_complex(rng);
    while (h.smin_yz(z).smin < 1e-3) z *= 1.5;
    // x > 0 is taken inside the gap, where the stable solution exists.
    const bool outside = is_outside_spectrum(h, z).verdict == Verdict::Outside;
    const double x = outside ? 0.95 * unit(rng) * edge_of_support(h, z).x : 0.0;
    gapped += outside;
    const CMatrix D = h.delta1(z, x);
    const int dim = 2 * h.m();
    CMatrix choi(dim * dim, dim * dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        for (int k = 0; k < dim; ++k)
          for (int l = 0; l < dim; ++l) choi(i * dim + k, j * dim + l) = D(k * dim + l, i * dim + j);
    const CMatrix herm = 0.5 * (choi + choi.adjoint());
    worst = std::min(worst, Eigen::SelfAdjointEigenSolver<CMatrix>(herm).eigenvalues().minCoeff());
  }
  return {worst >= -1e-10, fmt("minimum Choi eigenvalue %.2e over 100 (z, x) points, %d with x > 0", worst, gapped)};
}

// Least singular value of (z e11 (x) I - L(y)) by Lanczos on (Lambda^* Lambda)^{-1}.
double linearized_smin(const BoundLinearization& bound, cplx z, std::uint64_t seed) {
  const StructuredResolvent res(bound, z);
  const Eigen::Index n = static_cast<Eigen::Index>(bound.m()) * bound.N();
  const int steps = 80;
  CMatrix V(n, steps + 1);
  std::vector<double> alpha, beta;
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) V(i, 0) = testutil::random_complex(rng);
  V.col(0).normalize();
  double previous = 0.0, top = 0.0;
  for (int k = 0; k < steps; ++k) {
    CVector w = res.solve(res.solve_adjoint(V.col(k)));
    alpha.push_back(V.col(k).dot(w).real());
    // Full reorthogonalisation keeps the Krylov basis orthonormal.
    for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(k + 1) * (V.leftCols(k + 1).adjoint() * w);
    beta.push_back(w.norm());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k + 1, k + 1);
    for (int i = 0; i <= k; ++i) {
      T(i, i) = alpha[i];
      if (i < k) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(T).eigenvalues().maxCoeff();
    if (k > 5 && std::abs(top - previous) <= 1e-12 * top) break;
    previous = top;
    V.col(k + 1) = w / beta.back();
  }
  return 1.0 / std::sqrt(top);
}

Outcome edge_prediction() {
  const NcPolynomial p = parse_polynomial("Y1", 1, 0);
  const Linearization L = linearize(p);
  const HermitizedModel h(L, {});
  const int N = 2000;
  bool ok = true;
  std::string detail;
  for (double zr : {1.3, 1.5, 2.0}) {
    const double edge = edge_of_support(h, zr).x;
    double worst = 0.0, mean = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      MatrixAssignment a;
      a.circulars[1] = sample_iid({Distribution::ComplexGaussian, N, seed, 1});
      const BoundLinearization bound(L, a, 1.0 / std::sqrt(double(N)));
      const double s = linearized_smin(bound, zr, seed);
      worst = std::max(worst, std::abs(edge - s) / s);
      mean += s / 5;
    }
    ok = ok && worst <= 0.15;
    detail += fmt("%sz = %.1f: edge %.4f, MC mean %.4f, max rel diff %.3f", detail.empty() ? "" : "; ", zr, edge, mean, worst);
    std::fprintf(stderr, "  edge z = %.1f done\n", zr);
  }
  return {ok, detail};
}

Outcome empirical_contraction() {
  const ModelConfig cfg = preset_config(1);
  const Linearization L = linearize(cfg.parsed_polynomial());
  const int N = 300;
  double worst = 0.0;
  std::string radii;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MatrixAssignment a;
    a.deterministics[1] = CMatrix::Zero(N, N);  // A' = 0 for the finite-rank letter
    for (int j = 1; j <= 3; ++j) a.circulars[j] = sample_iid({Distribution::ComplexGaussian, N, seed, static_cast<std::uint64_t>(j)});
    const cplx z = std::polar(1.8, 2.0 * std::numbers::pi * (seed - 1) / 5.0 + 0.3);
    const double r = contraction_radius(L, a, 1.0 / std::sqrt(double(N)), z);
    worst = std::max(worst, r);
    radii += fmt("%s%.3f", radii.empty() ? "" : " ", r);
    std::fprintf(stderr, "  contraction seed %d: %.4f\n", int(seed), r);
  }
  return {worst <= 0.98, fmt("max spectral radius %.4f (per seed: %s)", worst, radii.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"linearization identities", linearization_identities},
      {"example 1 outliers at N = 1000", example1},
      {"examples 3 and 4 outliers", examples3and4},
      {"example 2 limiting outliers", example2},
      {"circular spectrum exactness", circular_exactness},
      {"quotient identity at N = 8", quotient_identity},
      {"verdict vs Monte Carlo s_min", oracle_equivalence},
      {"quadratic scaling of the radius", scaling_law},
      {"Choi positivity", choi_positivity},
      {"edge of support vs Monte Carlo", edge_prediction},
      {"empirical contraction on |z| = 1.8", empirical_contraction},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu  %-36s %s  [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(), elapsed(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
