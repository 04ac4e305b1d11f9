#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ncspec/errors.hpp"
#include "ncspec/randmat.hpp"
#include "testutil.hpp"

using namespace ncspec;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ncspec_test_randmat";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool contains(const CVector& values, cplx z, double tol) {
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::abs(values(i) - z) < tol) return true;
  return false;
}

}  // namespace

TEST_CASE("Philox known-answer vectors") {
  CHECK(Philox4x32::generate({0, 0, 0, 0}, {0, 0}) == Philox4x32::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        Philox4x32::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        Philox4x32::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("sampling is a pure function of the spec") {
  const EnsembleSpec spec{Distribution::ComplexGaussian, 30, 42, 3};
  const CMatrix a = sample_iid(spec);
  const CMatrix b = sample_iid(spec);
  CHECK((a - b).norm() == 0.0);
  EnsembleSpec other = spec;
  other.stream = 4;
  CHECK((a - sample_iid(other)).norm() > 1.0);
  // Entries do not depend on N beyond their (i*N + j) address.
  const auto [u1, u2] = Philox4x32::uniforms(42, 3, 0);
  CHECK(u1 > 0.0);
  CHECK(u1 <= 1.0);
  CHECK(std::abs(a(0, 0)) == doctest::Approx(std::sqrt(-std::log(u1))));
}

TEST_CASE("entry moments") {
  const CMatrix g = sample_iid({Distribution::ComplexGaussian, 200, 1, 0});
  const double var = g.cwiseAbs2().mean();
  CHECK(var > 0.9);
  CHECK(var < 1.1);
  const double re_var = g.real().array().square().mean();
  CHECK(2.0 * re_var == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(g.mean()) < 0.02);

  const CMatrix r = sample_iid({Distribution::RealGaussian, 200, 1, 0});
  CHECK(r.imag().norm() == 0.0);
  CHECK(r.cwiseAbs2().mean() == doctest::Approx(1.0).epsilon(0.05));

  const CMatrix s = sample_iid({Distribution::Rademacher, 100, 1, 0});
  CHECK((s.cwiseAbs().array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK(std::abs(s.real().mean()) < 0.05);
}

TEST_CASE("circular law at N = 1000") {
  const int n = 1000;
  const CMatrix x = sample_iid({Distribution::ComplexGaussian, n, 2024, 0}) / std::sqrt(double(n));
  const CVector ev = eigenvalues(x);
  CHECK(ev.cwiseAbs().maxCoeff() <= 1.1);
  int outside = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) outside += std::abs(ev(i)) > 1.05;
  CHECK(outside <= n / 100);
}

TEST_CASE("eigenvalues") {
  CMatrix d = CMatrix::Zero(3, 3);
  d.diagonal() << 2.0, cplx{0.0, 2.0}, 0.0;
  const CVector ev = eigenvalues(d);
  CHECK(contains(ev, 2.0, 1e-14));
  CHECK(contains(ev, cplx{0.0, 2.0}, 1e-14));
  CHECK(contains(ev, 0.0, 1e-14));

  CMatrix companion = CMatrix::Zero(3, 3);
  companion(0, 2) = 1.0;
  companion(1, 0) = 1.0;
  companion(2, 1) = 1.0;
  const CVector roots = eigenvalues(companion);
  for (int k = 0; k < 3; ++k) CHECK(contains(roots, std::polar(1.0, 2.0 * std::numbers::pi * k / 3.0), 1e-10));

  CMatrix bad = CMatrix::Identity(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(eigenvalues(bad), NonFinite);
  CHECK_THROWS_AS(smallest_singular(bad), NonFinite);
}

TEST_CASE("hermitization pairs eigenvalues with singular values") {
  std::mt19937_64 rng(4);
  for (int n : {3, 17, 50}) {
    const CMatrix k = testutil::random_matrix(rng, n);
    CMatrix h = CMatrix::Zero(2 * n, 2 * n);
    h.topRightCorner(n, n) = k;
    h.bottomLeftCorner(n, n) = k.adjoint();
    const CVector ev = eigenvalues(h);
    const Eigen::VectorXd sv = singular_values(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(contains(ev, sv(i), 1e-10 * sv(0)));
      CHECK(contains(ev, -sv(i), 1e-10 * sv(0)));
    }
  }
}

TEST_CASE("smallest singular value") {
  CMatrix d = CMatrix::Zero(3, 3);
  d.diagonal() << 3.0, 1.0, 0.5;
  CHECK(smallest_singular(d) == doctest::Approx(0.5).epsilon(1e-14));
  std::mt19937_64 rng(9);
  const CMatrix u = testutil::random_matrix(rng, 20).householderQr().householderQ();
  CHECK(smallest_singular(u) == doctest::Approx(1.0).epsilon(1e-12));

  const int n = 1000;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CMatrix x = sample_iid({Distribution::ComplexGaussian, n, seed, 0}) / std::sqrt(double(n));
    x.diagonal().array() -= 1.5;
    const double s = smallest_singular(x);
    CHECK(s > 0.2);
    CHECK(s < 0.8);
  }
}

TEST_CASE("deterministic generators") {
  const CMatrix d = generate_deterministic(DiagSpec{{2.0, cplx{0.0, 2.0}}}, 5);
  CMatrix expected = CMatrix::Zero(5, 5);
  expected(0, 0) = 2.0;
  expected(1, 1) = cplx{0.0, 2.0};
  CHECK((d - expected).norm() == 0.0);
  CHECK_THROWS_AS(generate_deterministic(DiagSpec{{1.0, 2.0, 3.0}}, 2), SizeError);

  const CMatrix s = generate_deterministic(BalancedSign{}, 4);
  CHECK(s.diagonal().real() == Eigen::Vector4d(1, 1, -1, -1));
  CHECK(s.isDiagonal(0.0));

  const CMatrix g = generate_deterministic(GueRealization{7}, 500);
  CHECK((g - g.adjoint()).norm() == 0.0);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<CMatrix>(g).eigenvalues();
  CHECK(ev(0) >= -2.3);
  CHECK(ev(ev.size() - 1) <= 2.3);
  CHECK(ev(ev.size() - 1) >= 1.7);
  const double offdiag_var = (g.cwiseAbs2().sum() - g.diagonal().cwiseAbs2().sum()) / (500.0 * 499.0);
  CHECK(offdiag_var * 500.0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("complex tokens") {
  CHECK(parse_complex("1.5+2i") == cplx{1.5, 2.0});
  CHECK(parse_complex("1.5-2i") == cplx{1.5, -2.0});
  CHECK(parse_complex(" -3i ") == cplx{0.0, -3.0});
  CHECK(parse_complex("i") == cplx{0.0, 1.0});
  CHECK(parse_complex("-i") == cplx{0.0, -1.0});
  CHECK(parse_complex("2-i") == cplx{2.0, -1.0});
  CHECK(parse_complex("4") == cplx{4.0, 0.0});
  CHECK(parse_complex("1e-3+2.5e+2i") == cplx{1e-3, 250.0});
  CHECK_THROWS_AS(parse_complex("abc"), FileFormatError);
  CHECK_THROWS_AS(parse_complex(""), FileFormatError);
  CHECK_THROWS_AS(parse_complex("1+2j"), FileFormatError);
  for (cplx c : {cplx{0.1, -0.3}, cplx{-1e-300, 5e10}, cplx{1.0 / 3.0, 2.0 / 7.0}}) CHECK(parse_complex(format_complex(c)) == c);
}

TEST_CASE("matrix and eigenvalue CSV files") {
  std::mt19937_64 rng(5);
  const CMatrix m = testutil::random_matrix(rng, 4);
  const auto path = temp_file("m.csv");
  write_matrix_csv(path, m);
  CHECK((read_matrix_csv(path) - m).norm() == 0.0);
  CHECK((generate_deterministic(FromFile{path}, 4) - m).norm() == 0.0);
  CHECK_THROWS_AS(generate_deterministic(FromFile{path}, 5), SizeError);
  CHECK_THROWS_AS(generate_deterministic(FromFile{temp_file("missing.csv")}, 5), FileFormatError);

  {
    std::ofstream out(temp_file("ragged.csv"));
    out << "1,2\n3\n";
  }
  CHECK_THROWS_AS(read_matrix_csv(temp_file("ragged.csv")), FileFormatError);

  const std::vector<cplx> values{{0.1, 0.2}, {-3.0, 0.0}, {1.0 / 3.0, -1e-17}};
  std::ostringstream text;
  write_eigenvalues_csv(text, values);
  CHECK(text.str() == "re,im\n0.1,0.2\n-3,0\n0.3333333333333333,-1e-17\n");
  write_eigenvalues_csv(temp_file("ev.csv"), values);
  CHECK(read_eigenvalues_csv(temp_file("ev.csv")) == values);
}
