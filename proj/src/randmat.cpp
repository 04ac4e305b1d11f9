#include "ncspec/randmat.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "ncspec/errors.hpp"
#include "ncspec/numfmt.hpp"

namespace ncspec {

// ---------------------------------------------------------------------------
// Philox

Philox4x32::Block Philox4x32::generate(Block c, Key k) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kW0;
      k[1] += kW1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
         static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }
  return c;
}

std::array<double, 2> Philox4x32::uniforms(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
  const Block out = generate({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                              static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
                             {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
  constexpr double kUlp = 0x1.0p-53;
  return {static_cast<double>((a >> 11) + 1) * kUlp, static_cast<double>(b >> 11) * kUlp};
}

CMatrix sample_iid(const EnsembleSpec& spec) {
  if (spec.N < 1) throw SizeError("matrix dimension must be at least 1");
  const auto n = static_cast<std::uint64_t>(spec.N);
  CMatrix m(spec.N, spec.N);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < n; ++j) {
      const auto [u1, u2] = Philox4x32::uniforms(spec.seed, spec.stream, i * n + j);
      cplx v;
      switch (spec.dist) {
        case Distribution::ComplexGaussian: {
          const double r = std::sqrt(-std::log(u1));
          const double th = 2.0 * std::numbers::pi * u2;
          v = {r * std::cos(th), r * std::sin(th)};
          break;
        }
        case Distribution::RealGaussian:
          v = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
          break;
        case Distribution::Rademacher:
          v = u2 < 0.5 ? -1.0 : 1.0;
          break;
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dense decompositions

CVector eigenvalues(const CMatrix& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("eigenvalues of a non-square matrix");
  if (!m.allFinite()) throw NonFinite();
  const auto n = static_cast<lapack_int>(m.rows());
  CVector w(n);
  if (n == 0) return w;
  CMatrix a = m;
  const lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, w.data(), nullptr, 1, nullptr, 1);
  if (info != 0) throw NoConvergence("zgeev failed with info " + std::to_string(info), 0.0);
  return w;
}

Eigen::VectorXd singular_values(const CMatrix& m) {
  if (!m.allFinite()) throw NonFinite();
  const auto rows = static_cast<lapack_int>(m.rows());
  const auto cols = static_cast<lapack_int>(m.cols());
  Eigen::VectorXd s(std::min(rows, cols));
  if (s.size() == 0) return s;
  CMatrix a = m;
  const lapack_int info =
      LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', rows, cols, a.data(), rows, s.data(), nullptr, 1, nullptr, 1);
  if (info != 0) throw NoConvergence("zgesdd failed with info " + std::to_string(info), 0.0);
  return s;
}

double smallest_singular(const CMatrix& m) {
  const Eigen::VectorXd s = singular_values(m);
  return s.size() == 0 ? 0.0 : s(s.size() - 1);
}

// ---------------------------------------------------------------------------
// Deterministic generators

CMatrix generate_deterministic(const DetGenerator& g, int N) {
  if (N < 1) throw SizeError("matrix dimension must be at least 1");
  return std::visit(
      [N](const auto& spec) -> CMatrix {
        using T = std::decay_t<decltype(spec)>;
        CMatrix out = CMatrix::Zero(N, N);
        if constexpr (std::is_same_v<T, DiagSpec>) {
          if (static_cast<int>(spec.values.size()) > N)
            throw SizeError(std::to_string(spec.values.size()) + " diagonal values do not fit in N = " + std::to_string(N));
          for (std::size_t i = 0; i < spec.values.size(); ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = spec.values[i];
        } else if constexpr (std::is_same_v<T, BalancedSign>) {
          const int plus = (N + 1) / 2;
          for (int i = 0; i < N; ++i) out(i, i) = i < plus ? 1.0 : -1.0;
        } else if constexpr (std::is_same_v<T, GueRealization>) {
          const CMatrix G = sample_iid({Distribution::ComplexGaussian, N, spec.seed, 0});
          out = (G + G.adjoint()) / std::sqrt(2.0 * N);
        } else {
          out = read_matrix_csv(spec.path);
          if (out.rows() != N || out.cols() != N)
            throw SizeError(spec.path.string() + " holds a " + std::to_string(out.rows()) + " x " + std::to_string(out.cols()) +
                            " matrix, expected N = " + std::to_string(N));
        }
        return out;
      },
      g);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_complex(cplx c) {
  std::string s = format_double(c.real());
  s += std::signbit(c.imag()) ? '-' : '+';
  s += format_double(std::abs(c.imag()));
  s += 'i';
  return s;
}

namespace {

bool parse_real(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::string strip(std::string_view s) {
  std::string out;
  for (char ch : s)
    if (!std::isspace(static_cast<unsigned char>(ch))) out += ch;
  return out;
}

}  // namespace

cplx parse_complex(const std::string& token) {
  const std::string t = strip(token);
  auto fail = [&]() -> cplx { throw FileFormatError("cannot parse complex number '" + token + "'"); };
  if (t.empty()) return fail();
  if (t.back() != 'i') {
    double re = 0.0;
    return parse_real(t, re) ? cplx{re, 0.0} : fail();
  }
  const std::string_view body(t.data(), t.size() - 1);
  // The imaginary part starts at the last sign that is not an exponent sign.
  std::size_t split = 0;
  for (std::size_t i = body.size(); i-- > 1;) {
    if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
      split = i;
      break;
    }
  }
  const std::string_view re_text = body.substr(0, split);
  std::string_view im_text = body.substr(split);
  double re = 0.0;
  if (split > 0 && !parse_real(re_text, re)) return fail();
  double im = 0.0;
  if (im_text.empty() || im_text == "+") {
    im = 1.0;
  } else if (im_text == "-") {
    im = -1.0;
  } else if (!parse_real(im_text, im)) {
    return fail();
  }
  return {re, im};
}

CMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileFormatError("cannot open " + path.string());
  std::vector<std::vector<cplx>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    std::vector<cplx> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(parse_complex(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw FileFormatError(path.string() + ": row " + std::to_string(rows.size() + 1) + " has " + std::to_string(row.size()) +
                            " entries, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FileFormatError(path.string() + ": no matrix rows");
  CMatrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const CMatrix& m) {
  std::ofstream out(path);
  if (!out) throw FileFormatError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_complex(m(i, j));
    }
    out << '\n';
  }
}

void write_eigenvalues_csv(std::ostream& out, const std::vector<cplx>& values) {
  out << "re,im\n";
  for (const cplx& v : values) out << format_double(v.real()) << ',' << format_double(v.imag()) << '\n';
}

void write_eigenvalues_csv(const std::filesystem::path& path, const std::vector<cplx>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot write " + path.string());
  write_eigenvalues_csv(out, values);
}

std::vector<cplx> read_eigenvalues_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileFormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip(line) != "re,im") throw FileFormatError(path.string() + ": expected header re,im");
  std::vector<cplx> values;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    const auto comma = line.find(',');
    double re = 0.0;
    double im = 0.0;
    if (comma == std::string::npos || !parse_real(strip(line.substr(0, comma)), re) || !parse_real(strip(line.substr(comma + 1)), im))
      throw FileFormatError(path.string() + ": bad row '" + line + "'");
    values.emplace_back(re, im);
  }
  return values;
}

}  // namespace ncspec
