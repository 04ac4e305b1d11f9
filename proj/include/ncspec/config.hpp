#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncspec/common.hpp"
#include "ncspec/freespec.hpp"
#include "ncspec/ncpoly.hpp"
#include "ncspec/outliers.hpp"
#include "ncspec/randmat.hpp"

namespace ncspec {

/// Declarative description of a model run. Every field that is absent from a
/// config file keeps the default below.
struct ModelConfig {
  std::string polynomial;
  int u = 0;
  int t = 0;
  int N = 1000;
  int max_n = 2000;
  std::uint64_t seed = 0;

  /// One entry per circular symbol 1..u.
  std::map<int, Distribution> circulars;
  /// One entry per deterministic symbol 1..t.
  std::map<int, DetGenerator> deterministics;
  /// finite_rank[k] true: A'_k = 0 and A''_k = A_k. Absent letters follow
  /// default_finite_rank.
  std::map<int, bool> finite_rank;

  std::optional<Region> region;  // absent: derived from P(0, A) and Gamma
  double step = 0.1;
  int proxy_n = 200;

  Tolerances tol;

  std::optional<Gamma> gamma;
  double match_radius = 0.2;
  int boundary_points = 256;

  /// Name of an analytic boundary overlay ("example1" .. "example4").
  std::string boundary_curve;

  std::filesystem::path out_dir = "out";

  /// Parses the polynomial text with (u, t).
  NcPolynomial parsed_polynomial() const;
  /// DiagSpec letters are finite rank; every other generator keeps A' = A.
  bool is_finite_rank(int k) const;
};

/// TOML unless the extension is ".json". Relative file paths inside the config
/// resolve against the config's directory. Throws ConfigError.
ModelConfig load_config(const std::filesystem::path& path);

/// Validates a parsed document against the schema; unknown keys are rejected.
/// Throws ConfigError naming the offending field path.
ModelConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Same document as a TOML string.
nlohmann::json parse_toml(const std::string& text);

/// Re-checks the cross-field invariants after overrides were applied.
void validate(const ModelConfig& cfg);

struct Overrides {
  std::optional<int> N;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<double> grid_step;
  std::optional<double> tol_margin;
};
void apply(ModelConfig& cfg, const Overrides& o);

/// Built-in models 1..4. Throws UnknownExample.
ModelConfig preset_config(int id);

/// Closed or open polylines of the named analytic boundary; empty for "".
/// Throws ConfigError for an unknown name.
std::vector<std::vector<cplx>> boundary_curve(const std::string& name, int points = 720);

/// Deterministic letters at dimension n.
MatrixAssignment deterministic_assignment(const ModelConfig& cfg, int n);
/// Circular Y_j sampled from (seed, stream j - 1), unscaled.
MatrixAssignment sample_circulars(const ModelConfig& cfg, int n);
/// A' and A'' of the deterministic letters at dimension n.
Decomposition decomposition(const ModelConfig& cfg, const MatrixAssignment& A);

}  // namespace ncspec
