#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ncspec/config.hpp"
#include "ncspec/freespec.hpp"
#include "ncspec/outliers.hpp"

namespace ncspec {

/// All eigenvalues of P(X/sqrt(N), A), sorted by real then imaginary part.
std::vector<cplx> simulate_eigenvalues(const ModelConfig& cfg);

/// Dimension at which A' stands in for the limit tuple: min(N, proxy_n),
/// raised to N when an A' letter cannot be generated at a smaller size.
int proxy_dimension(const ModelConfig& cfg);

/// Model for spectrum membership built on A' at proxy_dimension(cfg).
HermitizedModel spectrum_model(const ModelConfig& cfg);

/// Grid region aligned to multiples of cfg.step that holds `points` and the
/// inner boundary of Gamma, with one unit of padding.
Region auto_region(const ModelConfig& cfg, const std::vector<cplx>& points);

struct SimulateOutput {
  std::vector<cplx> eigenvalues;
  std::vector<std::filesystem::path> files;
};
/// Writes eigenvalues.csv and scatter.svg into cfg.out_dir.
SimulateOutput cmd_simulate(const ModelConfig& cfg, std::ostream* log = nullptr);

struct SpectrumOutput {
  SpectrumMap map;
  std::vector<std::filesystem::path> files;
};
/// Writes spectrum.csv and region.svg. Throws ConfigError without grid.region.
SpectrumOutput cmd_spectrum(const ModelConfig& cfg, std::ostream* log = nullptr);

struct OutliersOutput {
  OutlierReport report;
  SpectrumMap map;
  std::vector<cplx> eigenvalues;
  std::vector<std::filesystem::path> files;
};
/// spectrum map -> Gamma check -> predicted outliers -> simulation -> matching
/// -> determinant ratio. Writes report.json, overlay.svg, eigenvalues.csv and
/// spectrum.csv. Throws ConfigError without outliers.gamma.
OutliersOutput cmd_outliers(const ModelConfig& cfg, std::ostream* log = nullptr);

/// cmd_outliers on preset `id` after applying the overrides.
OutliersOutput cmd_example(int id, const Overrides& overrides, std::ostream* log = nullptr);

/// Command-line entry point. Returns 0 on success, 2 for input and config
/// errors, 3 for numerical failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ncspec
