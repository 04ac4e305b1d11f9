#include <algorithm>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "ncspec/cli.hpp"
#include "ncspec/errors.hpp"
#include "ncspec/randmat.hpp"

using namespace ncspec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ncspec_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kToy = R"(
[model]
polynomial = "Y1 + A1"
u = 1
t = 1
N = 2
seed = 5

[deterministic.A1]
kind = "diag"
values = ["1", "-1+0.5i"]
)";

std::string config_error_path(const std::string& toml) {
  try {
    config_from_json(parse_toml(toml));
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::vector<const char*> argv{"ncspec"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  return rc;
}

// Distance from z to a sampled curve.
double curve_distance(cplx z, const std::vector<std::vector<cplx>>& curves) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& c : curves)
    for (cplx w : c) d = std::min(d, std::abs(z - w));
  return d;
}

}  // namespace

TEST_CASE("toml and json configs describe the same model") {
  const std::string toml = R"(
[model]
polynomial = "Y1 + Y2*A1 + A2"
u = 2
t = 2
N = 40
seed = 9

[circular.Y2]
distribution = "rademacher"

[deterministic.A1]
kind = "diag"
values = ["2", "2i", 0.5, [1.0, -1.0]]

[deterministic.A2]
kind = "gue"
seed = 4

[decomposition.A1]
finite_rank = false

[grid]
region = [-2.0, 2.0, -1.0, 1.0]
step = 0.25
proxy_n = 30

[tolerances]
margin = 0.05

[outliers]
gamma = { kind = "annulus", center = "0.5", r_in = 1.5 }
match_radius = 0.3
boundary_points = 64

[plot]
boundary = "example1"
)";
  const std::string with_output = toml + "[output]\ndir = \"results\"\n";
  const std::string json = R"({
  "model": {"polynomial": "Y1 + Y2*A1 + A2", "u": 2, "t": 2, "N": 40, "seed": 9},
  "circular": {"Y2": "rademacher"},
  "deterministic": {"A1": {"kind": "diag", "values": ["2", "2i", 0.5, [1.0, -1.0]]}, "A2": {"kind": "gue", "seed": 4}},
  "decomposition": {"A1": {"finite_rank": false}},
  "grid": {"region": {"re_min": -2, "re_max": 2, "im_min": -1, "im_max": 1}, "step": 0.25, "proxy_n": 30},
  "tolerances": {"margin": 0.05},
  "outliers": {"gamma": {"kind": "annulus", "center": 0.5, "r_in": 1.5}, "match_radius": 0.3, "boundary_points": 64},
  "plot": {"boundary": "example1"}
})";
  const fs::path dir = scratch("formats");
  write_file(dir / "m.toml", toml);
  write_file(dir / "m.json", json);

  for (const auto& cfg : {load_config(dir / "m.toml"), load_config(dir / "m.json")}) {
    CHECK(cfg.u == 2);
    CHECK(cfg.t == 2);
    CHECK(cfg.N == 40);
    CHECK(cfg.seed == 9);
    CHECK(cfg.circulars.at(1) == Distribution::ComplexGaussian);
    CHECK(cfg.circulars.at(2) == Distribution::Rademacher);
    const auto& d = std::get<DiagSpec>(cfg.deterministics.at(1));
    REQUIRE(d.values.size() == 4);
    CHECK(d.values[1] == cplx(0.0, 2.0));
    CHECK(d.values[3] == cplx(1.0, -1.0));
    CHECK(std::get<GueRealization>(cfg.deterministics.at(2)).seed == 4);
    CHECK_FALSE(cfg.is_finite_rank(1));
    CHECK_FALSE(cfg.is_finite_rank(2));
    REQUIRE(cfg.region);
    CHECK(cfg.region->im_min == -1.0);
    CHECK(cfg.step == 0.25);
    CHECK(cfg.proxy_n == 30);
    CHECK(cfg.tol.margin == 0.05);
    REQUIRE(cfg.gamma);
    CHECK(cfg.gamma->kind == Gamma::Kind::Annulus);
    CHECK(cfg.gamma->center == cplx(0.5, 0.0));
    CHECK(std::isinf(cfg.gamma->r_out));
    CHECK(cfg.match_radius == 0.3);
    CHECK(cfg.boundary_points == 64);
    CHECK(cfg.out_dir == "out");
  }
  write_file(dir / "o.toml", with_output);
  CHECK(load_config(dir / "o.toml").out_dir == dir / "results");
}

TEST_CASE("config errors name the offending field") {
  const std::string base = kToy;
  CHECK(config_error_path(base + "[grid]\nstepp = 0.1\n") == "grid.stepp");
  CHECK(config_error_path(base + "[grid]\nstep = -0.1\n") == "grid.step");
  CHECK(config_error_path(base + "[tolerances]\nmargin = 0.0\n") == "tolerances.margin");
  CHECK(config_error_path(base + "[deterministic.A2]\nkind = \"balanced_sign\"\n") == "deterministic.A2");
  CHECK(config_error_path(base + "[circular.Y1]\ndistribution = \"cauchy\"\n") == "circular.Y1.distribution");
  CHECK(config_error_path(base + "[outliers]\ngamma = { kind = \"disk\" }\n") == "outliers.gamma.kind");
  CHECK(config_error_path(base + "[outliers]\ngamma = { kind = \"annulus\", r_in = 2.0, r_out = 1.0 }\n") == "outliers.gamma");
  CHECK(config_error_path(base + "[plot]\nboundary = \"example9\"\n") == "plot.boundary");
  CHECK(config_error_path("[model]\npolynomial = \"Y1 + A2\"\nu = 1\nt = 1\n") == "model.polynomial");
  CHECK(config_error_path("[model]\npolynomial = \"Y1 + A1\"\nu = 1\nt = 1\n") == "deterministic.A1");
  CHECK(config_error_path("[model]\npolynomial = \"Y1\"\nu = 1\nt = 0\nN = 3000\n") == "model.N");
  CHECK(config_error_path("[model]\npolynomial = \"Y1\"\nt = 0\n") == "model.u");
  CHECK(config_error_path("[model]\npolynomial = \"Y1 + A1\"\nu = 1\nt = 1\nN = 1\n[deterministic.A1]\nkind = \"diag\"\nvalues = [1, 2]\n") ==
        "deterministic.A1.values");
  CHECK(config_error_path("[model]\npolynomial = \"Y1 + A1\"\nu = 1\nt = 1\n[deterministic.A1]\nkind = \"diag\"\nvalues = [\"2x\"]\n") ==
        "deterministic.A1.values[0]");
  CHECK(config_error_path("model = 3\n") == "model");
  CHECK(config_error_path("[model\n") == "");
  CHECK_THROWS_AS(load_config("/nonexistent/model.toml"), ConfigError);
}

TEST_CASE("overrides are validated") {
  ModelConfig cfg = config_from_json(parse_toml(kToy));
  apply(cfg, {.N = 10, .seed = 7, .out_dir = fs::path("elsewhere"), .grid_step = 0.5, .tol_margin = 0.1});
  CHECK(cfg.N == 10);
  CHECK(cfg.seed == 7);
  CHECK(cfg.out_dir == "elsewhere");
  CHECK(cfg.step == 0.5);
  CHECK(cfg.tol.margin == 0.1);
  CHECK_THROWS_AS(apply(cfg, {.N = 1}), ConfigError);  // two diagonal values
  CHECK_THROWS_AS(apply(cfg, {.grid_step = 0.0}), ConfigError);
}

TEST_CASE("presets") {
  CHECK_THROWS_AS(preset_config(0), UnknownExample);
  CHECK_THROWS_AS(preset_config(5), UnknownExample);

  const ModelConfig e1 = preset_config(1);
  const CMatrix a1 = deterministic_assignment(e1, 5).deterministic(1);
  CHECK(a1.diagonal()(0) == cplx(2.0, 0.0));
  CHECK(a1.diagonal()(1) == cplx(0.0, 2.0));
  CHECK(a1.cwiseAbs().sum() == doctest::Approx(4.0));
  CHECK(e1.is_finite_rank(1));

  const ModelConfig e3 = preset_config(3);
  CHECK_FALSE(e3.is_finite_rank(1));
  CHECK(e3.is_finite_rank(2));

  // Deterministic limit of every preset, P(0, A) at N = 6.
  const std::vector<std::vector<cplx>> expected_extra = {{2.5, {-0.5, 2.0}}, {}, {2.5, {-1.0, 2.0}}, {{-2.0, 2.4}, {-2.0, -2.4}}};
  for (int id : {1, 3, 4}) {
    const ModelConfig cfg = preset_config(id);
    const CVector ev = eigenvalues(evaluate(zero_circulars(cfg.parsed_polynomial()), deterministic_assignment(cfg, 6), 1.0));
    for (cplx z : expected_extra[id - 1]) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < ev.size(); ++i) best = std::min(best, std::abs(ev(i) - z));
      CHECK(best < 1e-12);
    }
  }
}

TEST_CASE("boundary curves") {
  CHECK(boundary_curve("").empty());
  CHECK_THROWS_AS(boundary_curve("nope"), ConfigError);
  const auto circle = boundary_curve("example1");
  for (cplx z : circle[0]) CHECK(std::abs(z) == doctest::Approx(1.5));
  const double a = 3.0 / (2.0 * std::numbers::sqrt2), b = 1.0 / (2.0 * std::numbers::sqrt2);
  const auto ellipse = boundary_curve("example2");
  for (cplx z : ellipse[0])
    CHECK(std::pow(z.real() / a, 2) + std::pow(z.imag() / b, 2) == doctest::Approx(1.0));
  const auto lobes = boundary_curve("example3");
  REQUIRE(lobes.size() == 2);
  for (const auto& lobe : lobes)
    for (cplx z : lobe) CHECK(std::norm(z * z - 1.0) == doctest::Approx(std::norm(z) + 1.0).epsilon(1e-9));
  const auto disk = boundary_curve("example4");
  for (cplx z : disk[0]) CHECK(std::abs(z + 2.0) == doctest::Approx(2.4));
}

TEST_CASE("simulate on a toy config") {
  const fs::path dir = scratch("simulate");
  ModelConfig cfg = config_from_json(parse_toml(kToy));
  cfg.out_dir = dir;
  const auto first = cmd_simulate(cfg);
  REQUIRE(first.files.size() == 2);
  for (const auto& f : first.files) CHECK(fs::exists(f));
  const auto back = read_eigenvalues_csv(dir / "eigenvalues.csv");
  REQUIRE(back.size() == 2);
  CHECK(back == first.eigenvalues);
  const std::string csv = read_file(dir / "eigenvalues.csv");
  const std::string svg = read_file(dir / "scatter.svg");
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);

  // Every eigenvalue is plotted.
  std::size_t circles = 0;
  for (std::size_t pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) ++circles;
  CHECK(circles == back.size());

  cmd_simulate(cfg);
  CHECK(read_file(dir / "eigenvalues.csv") == csv);
  CHECK(read_file(dir / "scatter.svg") == svg);

  cfg.seed = 6;
  cmd_simulate(cfg);
  CHECK(read_file(dir / "eigenvalues.csv") != csv);
}

TEST_CASE("circular spectrum map is the unit disk") {
  ModelConfig cfg = config_from_json(parse_toml("[model]\npolynomial = \"Y1\"\nu = 1\nt = 0\n[grid]\nregion = [-2, 2, -2, 2]\nstep = 0.1\n"));
  cfg.out_dir = scratch("circular");
  const auto out = cmd_spectrum(cfg);
  CHECK(out.map.cells.size() == 41 * 41);
  for (const auto& c : out.map.cells) {
    const double r = std::abs(c.z);
    if (r > 1.0 + cfg.step) CHECK(c.verdict == Verdict::Outside);
    if (r < 1.0 - cfg.step) CHECK(c.verdict != Verdict::Outside);
  }
  std::istringstream csv(read_file(cfg.out_dir / "spectrum.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == static_cast<int>(out.map.cells.size()));
  CHECK(fs::exists(cfg.out_dir / "region.svg"));

  cfg.region.reset();
  CHECK_THROWS_AS(cmd_spectrum(cfg), ConfigError);
}

TEST_CASE("example 3 spectrum follows its boundary curve") {
  ModelConfig cfg = preset_config(3);
  cfg.region = Region{-2.2, 2.2, -1.2, 1.2};
  cfg.out_dir = scratch("example3");
  const auto out = cmd_spectrum(cfg);
  const auto curve = boundary_curve("example3", 4000);
  int checked = 0;
  for (const auto& c : out.map.cells) {
    if (curve_distance(c.z, curve) < 0.1) continue;
    const bool inside = std::norm(c.z * c.z - 1.0) < std::norm(c.z) + 1.0;
    CHECK_MESSAGE((c.verdict != Verdict::Outside) == inside, "z = " << format_complex(c.z));
    ++checked;
  }
  CHECK(checked > 500);
}

TEST_CASE("example 2 spectrum follows the ellipse") {
  ModelConfig cfg = preset_config(2);
  cfg.region = Region{-1.6, 1.6, -0.6, 0.6};
  cfg.step = 0.1;
  cfg.out_dir = scratch("example2");
  const auto out = cmd_spectrum(cfg);
  const auto curve = boundary_curve("example2", 4000);
  const double a = 3.0 / (2.0 * std::numbers::sqrt2), b = 1.0 / (2.0 * std::numbers::sqrt2);
  int checked = 0;
  for (const auto& c : out.map.cells) {
    if (curve_distance(c.z, curve) < 0.1) continue;
    const bool inside = std::pow(c.z.real() / a, 2) + std::pow(c.z.imag() / b, 2) < 1.0;
    CHECK_MESSAGE((c.verdict != Verdict::Outside) == inside, "z = " << format_complex(c.z));
    ++checked;
  }
  CHECK(checked > 250);
}

TEST_CASE("outlier pipeline on example 3 at small N") {
  const fs::path dir = scratch("outliers3");
  ModelConfig cfg = preset_config(3);
  cfg.N = 300;
  cfg.out_dir = dir;
  const auto out = cmd_outliers(cfg);
  CHECK(out.report.predicted == std::vector<cplx>{{-1.0, 2.0}, {2.5, 0.0}});
  CHECK(out.report.counts_agree());
  REQUIRE(out.report.det_ratio_min);
  CHECK(*out.report.det_ratio_min > 0.0);
  for (const char* f : {"report.json", "overlay.svg", "eigenvalues.csv", "spectrum.csv"}) CHECK(fs::exists(dir / f));

  const auto j = nlohmann::json::parse(read_file(dir / "report.json"));
  for (const char* key : {"region", "match_radius", "predicted", "empirical", "pairs", "unmatched_predicted", "unmatched_empirical", "counts",
                          "det_ratio_min"})
    CHECK(j.contains(key));
  CHECK(j["counts"]["predicted"] == 2);
  CHECK(j["region"]["kind"] == "annulus");
  CHECK(read_eigenvalues_csv(dir / "eigenvalues.csv").size() == 300);

  const std::string report = read_file(dir / "report.json");
  cmd_outliers(cfg);
  CHECK(read_file(dir / "report.json") == report);
}

TEST_CASE("outlier pipeline with a derived grid region") {
  ModelConfig cfg = preset_config(1);
  cfg.N = 200;
  cfg.region.reset();
  cfg.step = 0.25;
  cfg.out_dir = scratch("derived");
  const auto out = cmd_outliers(cfg);
  CHECK(out.map.covers({2.5, 0.0}));
  CHECK(out.map.covers({-0.5, 2.0}));
  CHECK(out.report.predicted_count == 2);
}

TEST_CASE("gamma meeting the spectrum is rejected") {
  ModelConfig cfg = preset_config(1);
  cfg.N = 50;
  cfg.region = Region{-2.0, 2.0, -2.0, 2.0};
  cfg.step = 0.25;
  cfg.gamma = Gamma::annulus(0.0, 1.0);
  cfg.out_dir = scratch("gamma");
  CHECK_THROWS_AS(cmd_outliers(cfg), GammaInsideSpectrum);
  cfg.gamma.reset();
  CHECK_THROWS_AS(cmd_outliers(cfg), ConfigError);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("exit");
  write_file(dir / "toy.toml", kToy);
  write_file(dir / "bad.toml", std::string(kToy) + "[grid]\nstepp = 1\n");
  write_file(dir / "inside.toml", std::string(kToy) +
                                      "[grid]\nregion = [-2, 2, -2, 2]\nstep = 0.5\n"
                                      "[outliers]\ngamma = { kind = \"annulus\", r_in = 0.5 }\n");

  std::string out;
  CHECK(run({"simulate", "--config", (dir / "toy.toml").string(), "--out", (dir / "sim").string()}, &out) == 0);
  CHECK(out.find("eigenvalues.csv") != std::string::npos);
  CHECK(fs::exists(dir / "sim" / "scatter.svg"));
  CHECK(run({"simulate", "--config", (dir / "toy.toml").string(), "--n", "1", "--out", (dir / "sim").string()}) == 2);
  CHECK(run({"simulate", "--config", (dir / "bad.toml").string()}) == 2);
  CHECK(run({"simulate", "--config", (dir / "missing.toml").string()}) == 2);
  CHECK(run({"simulate"}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"example", "5"}) == 2);
  CHECK(run({"example", "one"}) == 2);
  CHECK(run({"outliers", "--config", (dir / "inside.toml").string(), "--out", (dir / "o").string()}) == 3);
  CHECK(run({"--help"}) == 0);
}
