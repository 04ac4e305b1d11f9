#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "ncspec/common.hpp"

namespace ncspec {

/// Philox4x32-10 counter-based generator: the output block is a pure function
/// of (key, counter), so every random entry can be addressed directly.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block generate(Block counter, Key key) noexcept;

  /// Two uniforms from block (index, stream): the first in (0, 1], the second in [0, 1).
  static std::array<double, 2> uniforms(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept;
};

enum class Distribution { ComplexGaussian, RealGaussian, Rademacher };

/// i.i.d. entries with mean 0 and variance 1 (ComplexGaussian: Re and Im are
/// independent N(0, 1/2)). Entry (i, j) uses block index i*N + j of `stream`.
struct EnsembleSpec {
  Distribution dist = Distribution::ComplexGaussian;
  int N = 1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Unscaled sample; callers apply 1/sqrt(N).
CMatrix sample_iid(const EnsembleSpec& spec);

/// All eigenvalues with multiplicity, in solver order. Throws NonFinite.
CVector eigenvalues(const CMatrix& m);

/// Singular values in decreasing order. Throws NonFinite.
Eigen::VectorXd singular_values(const CMatrix& m);

/// Least singular value. Throws NonFinite.
double smallest_singular(const CMatrix& m);

struct DiagSpec {
  std::vector<cplx> values;  // padded with zeros up to N
};
struct BalancedSign {};  // ceil(N/2) entries +1 followed by -1
struct GueRealization {
  std::uint64_t seed = 0;
};
struct FromFile {
  std::filesystem::path path;
};
using DetGenerator = std::variant<DiagSpec, BalancedSign, GueRealization, FromFile>;

/// N x N matrix described by `g`. Throws SizeError or FileFormatError.
CMatrix generate_deterministic(const DetGenerator& g, int N);

/// "a+bi" style token; parse accepts "a", "bi", "i", "-i", "a+bi", "a-bi".
std::string format_complex(cplx c);
cplx parse_complex(const std::string& token);

CMatrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const CMatrix& m);

/// Header "re,im" then one shortest round-trip row per value.
void write_eigenvalues_csv(std::ostream& out, const std::vector<cplx>& values);
void write_eigenvalues_csv(const std::filesystem::path& path, const std::vector<cplx>& values);
std::vector<cplx> read_eigenvalues_csv(const std::filesystem::path& path);

}  // namespace ncspec
