#include "ncspec/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "ncspec/errors.hpp"
#include "ncspec/linearize.hpp"
#include "ncspec/numfmt.hpp"
#include "ncspec/randmat.hpp"
#include "ncspec/svg.hpp"

namespace ncspec {

namespace {

bool lex_less(cplx a, cplx b) { return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag(); }

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void note(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::string seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f s", s);
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InputError("cannot write " + file.string());
  out << text;
}

void draw_gamma(SvgPlot& plot, const Gamma& g) {
  if (g.kind == Gamma::Kind::SpectrumDistance) {
    plot.points(g.boundary_points(), "#31a354", 1.2);
    return;
  }
  for (auto c : g.contours(360)) {
    c.push_back(c.front());
    plot.path(c, "#31a354", true);
  }
}

void draw_curve(SvgPlot& plot, const std::string& name) {
  for (const auto& c : boundary_curve(name)) plot.path(c, "#2171b5");
}

Region map_view(const SpectrumMap& map) {
  const double h = map.step / 2;
  return {map.region.re_min - h, map.region.re_min + (map.nx - 1) * map.step + h, map.region.im_min - h,
          map.region.im_min + (map.ny - 1) * map.step + h};
}

}  // namespace

std::vector<cplx> simulate_eigenvalues(const ModelConfig& cfg) {
  const NcPolynomial p = cfg.parsed_polynomial();
  MatrixAssignment a = deterministic_assignment(cfg, cfg.N);
  a.circulars = sample_circulars(cfg, cfg.N).circulars;
  const CVector ev = eigenvalues(evaluate(p, a, 1.0 / std::sqrt(static_cast<double>(cfg.N))));
  std::vector<cplx> out(ev.data(), ev.data() + ev.size());
  std::sort(out.begin(), out.end(), lex_less);
  return out;
}

int proxy_dimension(const ModelConfig& cfg) {
  int n = std::min(cfg.N, cfg.proxy_n);
  for (const auto& [k, g] : cfg.deterministics) {
    if (cfg.is_finite_rank(k)) continue;
    if (std::holds_alternative<FromFile>(g)) return cfg.N;
    if (const auto* d = std::get_if<DiagSpec>(&g)) n = std::max(n, static_cast<int>(d->values.size()));
  }
  return std::min(n, cfg.N);
}

HermitizedModel spectrum_model(const ModelConfig& cfg) {
  const int n = proxy_dimension(cfg);
  const Decomposition d = decomposition(cfg, deterministic_assignment(cfg, n));
  return HermitizedModel(linearize(cfg.parsed_polynomial()), d.Aprime);
}

Region auto_region(const ModelConfig& cfg, const std::vector<cplx>& points) {
  std::vector<cplx> all = points;
  if (cfg.gamma && cfg.gamma->kind == Gamma::Kind::Annulus) {
    for (int k = 0; k < 4; ++k) all.push_back(cfg.gamma->center + std::polar(cfg.gamma->r_in, k * std::numbers::pi / 2));
  } else if (cfg.gamma && cfg.gamma->kind == Gamma::Kind::Rectangle) {
    all.push_back({cfg.gamma->rect.re_min, cfg.gamma->rect.im_min});
    all.push_back({cfg.gamma->rect.re_max, cfg.gamma->rect.im_max});
  }
  const Region r = bounding_region(all, 1.0);
  const double h = cfg.step;
  return {std::floor(r.re_min / h) * h, std::ceil(r.re_max / h) * h, std::floor(r.im_min / h) * h, std::ceil(r.im_max / h) * h};
}

SimulateOutput cmd_simulate(const ModelConfig& cfg, std::ostream* log) {
  Stopwatch clock;
  SimulateOutput out;
  out.eigenvalues = simulate_eigenvalues(cfg);
  note(log, "simulate: N = " + std::to_string(cfg.N) + ", seed = " + std::to_string(cfg.seed) + ", " + seconds(clock.seconds()));

  ensure_dir(cfg.out_dir);
  const auto csv = cfg.out_dir / "eigenvalues.csv";
  write_eigenvalues_csv(csv, out.eigenvalues);

  SvgPlot plot(bounding_region(out.eigenvalues, 0.25));
  plot.title("eigenvalues, N = " + std::to_string(cfg.N) + ", seed " + std::to_string(cfg.seed));
  draw_curve(plot, cfg.boundary_curve);
  plot.points(out.eigenvalues, "black");
  const auto svg = cfg.out_dir / "scatter.svg";
  plot.write(svg);
  out.files = {csv, svg};
  return out;
}

SpectrumOutput cmd_spectrum(const ModelConfig& cfg, std::ostream* log) {
  if (!cfg.region) throw ConfigError("grid.region", "the spectrum command needs a grid region");
  Stopwatch clock;
  SpectrumOutput out;
  const HermitizedModel h = spectrum_model(cfg);
  out.map = spectrum_grid(h, *cfg.region, cfg.step, cfg.tol);
  note(log, "spectrum: " + std::to_string(out.map.cells.size()) + " nodes at proxy N = " + std::to_string(h.N()) + ", " +
                seconds(clock.seconds()));

  ensure_dir(cfg.out_dir);
  const auto csv = cfg.out_dir / "spectrum.csv";
  write_spectrum_csv(csv, out.map);
  SvgPlot plot(map_view(out.map));
  plot.title("spectrum map, step " + format_double(cfg.step));
  plot.cells(out.map);
  draw_curve(plot, cfg.boundary_curve);
  const auto svg = cfg.out_dir / "region.svg";
  plot.write(svg);
  out.files = {csv, svg};
  return out;
}

OutliersOutput cmd_outliers(const ModelConfig& cfg, std::ostream* log) {
  if (!cfg.gamma) throw ConfigError("outliers.gamma", "the outliers command needs a region gamma");
  OutliersOutput out;
  const NcPolynomial p = cfg.parsed_polynomial();
  const MatrixAssignment A = deterministic_assignment(cfg, cfg.N);
  const Decomposition dec = decomposition(cfg, A);

  Region region;
  if (cfg.region) {
    region = *cfg.region;
  } else {
    const CVector ev = eigenvalues(evaluate(zero_circulars(p), A, 1.0));
    region = auto_region(cfg, std::vector<cplx>(ev.data(), ev.data() + ev.size()));
  }

  Stopwatch clock;
  const HermitizedModel h = spectrum_model(cfg);
  out.map = spectrum_grid(h, region, cfg.step, cfg.tol);
  note(log, "outliers: spectrum map of " + std::to_string(out.map.cells.size()) + " nodes at proxy N = " + std::to_string(h.N()) +
                ", " + seconds(clock.seconds()));

  Gamma gamma = *cfg.gamma;
  if (gamma.kind == Gamma::Kind::SpectrumDistance) gamma.map = std::make_shared<const SpectrumMap>(out.map);
  gamma.check_against(out.map);

  const std::vector<cplx> predicted = predicted_outliers(p, A, out.map);
  note(log, "outliers: " + std::to_string(predicted.size()) + " eigenvalue(s) of P(0,A) outside the spectrum");

  clock = Stopwatch();
  out.eigenvalues = simulate_eigenvalues(cfg);
  note(log, "outliers: simulated N = " + std::to_string(cfg.N) + ", seed = " + std::to_string(cfg.seed) + ", " + seconds(clock.seconds()));

  out.report = match_outliers(out.eigenvalues, predicted, gamma, cfg.match_radius);
  out.report.det_ratio_min = det_ratio(p, A, dec.Aprime, gamma.boundary_points(cfg.boundary_points));
  note(log, "outliers: counts predicted " + std::to_string(out.report.predicted_count) + ", empirical " +
                std::to_string(out.report.empirical_count) + ", det ratio min " + format_double(*out.report.det_ratio_min));

  ensure_dir(cfg.out_dir);
  const auto report = cfg.out_dir / "report.json";
  write_text(report, out.report.to_json().dump(2) + "\n");
  const auto eig_csv = cfg.out_dir / "eigenvalues.csv";
  write_eigenvalues_csv(eig_csv, out.eigenvalues);
  const auto map_csv = cfg.out_dir / "spectrum.csv";
  write_spectrum_csv(map_csv, out.map);

  Region view = merge(map_view(out.map), bounding_region(out.eigenvalues, 0.25));
  SvgPlot plot(view);
  plot.title("outliers, N = " + std::to_string(cfg.N) + ", seed " + std::to_string(cfg.seed));
  plot.cells(out.map);
  draw_curve(plot, cfg.boundary_curve);
  draw_gamma(plot, gamma);
  plot.points(out.eigenvalues, "black");
  plot.crosses(predicted, "red");
  const auto svg = cfg.out_dir / "overlay.svg";
  plot.write(svg);
  out.files = {report, svg, eig_csv, map_csv};
  return out;
}

OutliersOutput cmd_example(int id, const Overrides& overrides, std::ostream* log) {
  ModelConfig cfg = preset_config(id);
  apply(cfg, overrides);
  return cmd_outliers(cfg, log);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectra and outliers of polynomials in random and deterministic matrices"};
  app.name("ncspec");
  app.require_subcommand(1, 1);

  std::string config_path;
  int example_id = 0;
  std::optional<int> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> grid_step;
  std::optional<double> tol_margin;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--n", n, "matrix dimension N");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--grid-step", grid_step, "spectrum grid step");
    sub->add_option("--tol-margin", tol_margin, "radius margin below 1");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "sample M_N and write its eigenvalues");
  CLI::App* spectrum = app.add_subcommand("spectrum", "classify a grid of points against the limiting spectrum");
  CLI::App* outliers = app.add_subcommand("outliers", "predict and match outlier eigenvalues in a region");
  CLI::App* example = app.add_subcommand("example", "run the outlier pipeline on a built-in model");
  for (CLI::App* sub : {simulate, spectrum, outliers}) {
    sub->add_option("--config", config_path, "TOML or JSON model description")->required();
    common(sub);
  }
  example->add_option("id", example_id, "built-in model 1..4")->required();
  common(example);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  Overrides o;
  o.N = n;
  o.seed = seed;
  if (out_dir) o.out_dir = *out_dir;
  o.grid_step = grid_step;
  o.tol_margin = tol_margin;

  try {
    std::vector<std::filesystem::path> files;
    if (example->parsed()) {
      const auto r = cmd_example(example_id, o, &err);
      files = r.files;
      out << r.report.to_json().dump(2) << "\n";
    } else {
      ModelConfig cfg = load_config(config_path);
      apply(cfg, o);
      if (simulate->parsed()) {
        files = cmd_simulate(cfg, &err).files;
      } else if (spectrum->parsed()) {
        files = cmd_spectrum(cfg, &err).files;
      } else {
        const auto r = cmd_outliers(cfg, &err);
        files = r.files;
        out << r.report.to_json().dump(2) << "\n";
      }
    }
    for (const auto& f : files) out << "wrote " << f.string() << "\n";
  } catch (const InputError& e) {
    err << "ncspec: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "ncspec: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace ncspec
