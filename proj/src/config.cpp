#include "ncspec/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ncspec/errors.hpp"
#include "toml.hpp"

namespace ncspec {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Object view that remembers which keys were read; finish() rejects the rest.
class Table {
 public:
  Table(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_, "expected a table");
  }

  const json* get(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }
  const json& require(const std::string& key) {
    const json* v = get(key);
    if (!v) throw ConfigError(at(key), "missing required key");
    return *v;
  }
  std::string at(const std::string& key) const { return join(path_, key); }
  const std::string& path() const { return path_; }
  const json& raw() const { return j_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

double read_double(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path, "expected a number");
}

double read_positive(const json& v, const std::string& path) {
  const double x = read_double(v, path);
  if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(path, "must be positive and finite");
  return x;
}

long long read_int(const json& v, const std::string& path, long long min) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  const long long x = v.get<long long>();
  if (x < min) throw ConfigError(path, "must be >= " + std::to_string(min));
  return x;
}

std::string read_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

bool read_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

cplx read_complex(const json& v, const std::string& path) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) return {v[0].get<double>(), v[1].get<double>()};
  if (v.is_string()) {
    try {
      return parse_complex(v.get<std::string>());
    } catch (const InputError& e) {
      throw ConfigError(path, e.what());
    }
  }
  throw ConfigError(path, "expected a complex number (\"a+bi\", a number or [re, im])");
}

Region read_region(const json& v, const std::string& path) {
  Region r;
  if (v.is_array()) {
    if (v.size() != 4) throw ConfigError(path, "expected [re_min, re_max, im_min, im_max]");
    r = {read_double(v[0], path + "[0]"), read_double(v[1], path + "[1]"), read_double(v[2], path + "[2]"),
         read_double(v[3], path + "[3]")};
  } else {
    Table t(v, path);
    r.re_min = read_double(t.require("re_min"), t.at("re_min"));
    r.re_max = read_double(t.require("re_max"), t.at("re_max"));
    r.im_min = read_double(t.require("im_min"), t.at("im_min"));
    r.im_max = read_double(t.require("im_max"), t.at("im_max"));
    t.finish();
  }
  if (!std::isfinite(r.re_min) || !std::isfinite(r.re_max) || !std::isfinite(r.im_min) || !std::isfinite(r.im_max) ||
      !(r.re_max >= r.re_min) || !(r.im_max >= r.im_min))
    throw ConfigError(path, "region bounds must be finite with min <= max");
  return r;
}

// "A3" -> 3 for prefix 'A'.
int symbol_index(const std::string& key, char prefix, int limit, const std::string& path) {
  if (key.size() < 2 || key[0] != prefix) throw ConfigError(path, std::string("expected a symbol name ") + prefix + "<k>");
  int k = 0;
  for (std::size_t i = 1; i < key.size(); ++i) {
    if (key[i] < '0' || key[i] > '9' || k > 100000) throw ConfigError(path, std::string("expected a symbol name ") + prefix + "<k>");
    k = 10 * k + (key[i] - '0');
  }
  if (k < 1 || k > limit)
    throw ConfigError(path, "no symbol " + key + " (indices run 1.." + std::to_string(limit) + ")");
  return k;
}

Distribution read_distribution(const json& v, const std::string& path) {
  const std::string s = read_string(v, path);
  if (s == "complex_gaussian") return Distribution::ComplexGaussian;
  if (s == "real_gaussian") return Distribution::RealGaussian;
  if (s == "rademacher") return Distribution::Rademacher;
  throw ConfigError(path, "unknown distribution '" + s + "' (complex_gaussian, real_gaussian, rademacher)");
}

DetGenerator read_generator(const json& v, const std::string& path, const std::filesystem::path& base_dir) {
  Table t(v, path);
  const std::string kind = read_string(t.require("kind"), t.at("kind"));
  DetGenerator g;
  if (kind == "diag") {
    const json& vals = t.require("values");
    if (!vals.is_array()) throw ConfigError(t.at("values"), "expected an array");
    DiagSpec d;
    for (std::size_t i = 0; i < vals.size(); ++i) d.values.push_back(read_complex(vals[i], t.at("values") + "[" + std::to_string(i) + "]"));
    g = d;
  } else if (kind == "balanced_sign") {
    g = BalancedSign{};
  } else if (kind == "gue") {
    GueRealization r;
    if (const json* s = t.get("seed")) r.seed = static_cast<std::uint64_t>(read_int(*s, t.at("seed"), 0));
    g = r;
  } else if (kind == "file") {
    std::filesystem::path p = read_string(t.require("path"), t.at("path"));
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    g = FromFile{p};
  } else {
    throw ConfigError(t.at("kind"), "unknown generator '" + kind + "' (diag, balanced_sign, gue, file)");
  }
  t.finish();
  return g;
}

Gamma read_gamma(const json& v, const std::string& path) {
  Table t(v, path);
  const std::string kind = read_string(t.require("kind"), t.at("kind"));
  Gamma g;
  try {
    if (kind == "annulus") {
      cplx c{};
      if (const json* x = t.get("center")) c = read_complex(*x, t.at("center"));
      const double r_in = read_double(t.require("r_in"), t.at("r_in"));
      double r_out = std::numeric_limits<double>::infinity();
      if (const json* x = t.get("r_out")) r_out = read_double(*x, t.at("r_out"));
      g = Gamma::annulus(c, r_in, r_out);
    } else if (kind == "rectangle") {
      g = Gamma::rectangle(read_region(t.require("region"), t.at("region")));
    } else if (kind == "spectrum_distance") {
      g.kind = Gamma::Kind::SpectrumDistance;
      g.eps = read_positive(t.require("eps"), t.at("eps"));
    } else {
      throw ConfigError(t.at("kind"), "unknown region kind '" + kind + "' (annulus, rectangle, spectrum_distance)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InputError& e) {
    throw ConfigError(path, e.what());
  }
  t.finish();
  return g;
}

json toml_to_json(const toml::node& n, const std::string& path) {
  if (const auto* t = n.as_table()) {
    json j = json::object();
    for (auto&& [k, v] : *t) {
      const std::string key(k.str());
      j[key] = toml_to_json(v, join(path, key));
    }
    return j;
  }
  if (const auto* a = n.as_array()) {
    json j = json::array();
    for (std::size_t i = 0; i < a->size(); ++i) j.push_back(toml_to_json(*a->get(i), path + "[" + std::to_string(i) + "]"));
    return j;
  }
  if (const auto* s = n.as_string()) return s->get();
  if (const auto* i = n.as_integer()) return i->get();
  if (const auto* f = n.as_floating_point()) return f->get();
  if (const auto* b = n.as_boolean()) return b->get();
  throw ConfigError(path, "dates and times are not supported");
}

const char* kExample1 = "(3/2)*Y1 + (1/6)*Y2^2*A1 + (1/6)*Y2*Y3*A1*Y3 + A1^2*Y3 + A1 + (1/8)*A1^2";
const char* kExample2 = "(1/2)*Y1 + (1/6)*A1*Y2*(A2 + A1 + Y3)*Y2 + A2*Y3*A1 + A1 + (1/2)*A2";
const char* kExample3 = "Y1 + A1 + A2 + A1*Y2*A2*Y2 + Y3*A2*Y2";
const char* kExample4 = "(1/5)*(Y1 + 3)*(Y2 + A1)*(Y3 + 2) - 2";

std::vector<cplx> circle(cplx c, double r, int points) {
  std::vector<cplx> out;
  for (int i = 0; i <= points; ++i) out.push_back(c + std::polar(r, 2.0 * std::numbers::pi * i / points));
  return out;
}

}  // namespace

NcPolynomial ModelConfig::parsed_polynomial() const { return parse_polynomial(polynomial, u, t); }

bool ModelConfig::is_finite_rank(int k) const {
  auto it = finite_rank.find(k);
  if (it != finite_rank.end()) return it->second;
  auto g = deterministics.find(k);
  return g != deterministics.end() && std::holds_alternative<DiagSpec>(g->second);
}

json parse_toml(const std::string& text) {
  try {
    return toml_to_json(toml::parse(text), "");
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " at line " << e.source().begin.line << ", column " << e.source().begin.column;
    throw ConfigError("", msg.str());
  }
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  if (path.extension() == ".json") {
    try {
      doc = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ConfigError("", e.what());
    }
  } else {
    doc = parse_toml(ss.str());
  }
  return config_from_json(doc, path.parent_path());
}

ModelConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  ModelConfig cfg;
  Table root(doc, "");

  {
    Table m(root.require("model"), "model");
    cfg.polynomial = read_string(m.require("polynomial"), m.at("polynomial"));
    cfg.u = static_cast<int>(read_int(m.require("u"), m.at("u"), 0));
    cfg.t = static_cast<int>(read_int(m.require("t"), m.at("t"), 0));
    if (const json* v = m.get("N")) cfg.N = static_cast<int>(read_int(*v, m.at("N"), 1));
    if (const json* v = m.get("max_n")) cfg.max_n = static_cast<int>(read_int(*v, m.at("max_n"), 1));
    if (const json* v = m.get("seed")) cfg.seed = static_cast<std::uint64_t>(read_int(*v, m.at("seed"), 0));
    m.finish();
  }
  for (int j = 1; j <= cfg.u; ++j) cfg.circulars[j] = Distribution::ComplexGaussian;

  if (const json* c = root.get("circular")) {
    Table t(*c, "circular");
    for (auto it = c->begin(); it != c->end(); ++it) {
      const std::string path = t.at(it.key());
      const int j = symbol_index(it.key(), 'Y', cfg.u, path);
      t.get(it.key());
      if (it->is_string()) {
        cfg.circulars[j] = read_distribution(*it, path);
      } else {
        Table y(*it, path);
        cfg.circulars[j] = read_distribution(y.require("distribution"), y.at("distribution"));
        y.finish();
      }
    }
  }

  if (const json* d = root.get("deterministic")) {
    Table t(*d, "deterministic");
    for (auto it = d->begin(); it != d->end(); ++it) {
      const std::string path = t.at(it.key());
      const int k = symbol_index(it.key(), 'A', cfg.t, path);
      t.get(it.key());
      cfg.deterministics[k] = read_generator(*it, path, base_dir);
    }
  }

  if (const json* d = root.get("decomposition")) {
    Table t(*d, "decomposition");
    for (auto it = d->begin(); it != d->end(); ++it) {
      const std::string path = t.at(it.key());
      const int k = symbol_index(it.key(), 'A', cfg.t, path);
      t.get(it.key());
      Table a(*it, path);
      cfg.finite_rank[k] = read_bool(a.require("finite_rank"), a.at("finite_rank"));
      a.finish();
    }
  }

  if (const json* g = root.get("grid")) {
    Table t(*g, "grid");
    if (const json* v = t.get("region")) cfg.region = read_region(*v, t.at("region"));
    if (const json* v = t.get("step")) cfg.step = read_positive(*v, t.at("step"));
    if (const json* v = t.get("proxy_n")) cfg.proxy_n = static_cast<int>(read_int(*v, t.at("proxy_n"), 1));
    t.finish();
  }

  if (const json* g = root.get("tolerances")) {
    Table t(*g, "tolerances");
    if (const json* v = t.get("smin_rel")) cfg.tol.smin_rel = read_positive(*v, t.at("smin_rel"));
    if (const json* v = t.get("margin")) cfg.tol.margin = read_positive(*v, t.at("margin"));
    if (const json* v = t.get("edge")) cfg.tol.edge = read_positive(*v, t.at("edge"));
    if (const json* v = t.get("fp")) cfg.tol.fp = read_positive(*v, t.at("fp"));
    if (const json* v = t.get("max_iter")) cfg.tol.max_iter = static_cast<int>(read_int(*v, t.at("max_iter"), 1));
    if (const json* v = t.get("dense_radius_limit"))
      cfg.tol.dense_radius_limit = static_cast<int>(read_int(*v, t.at("dense_radius_limit"), 1));
    t.finish();
  }

  if (const json* o = root.get("outliers")) {
    Table t(*o, "outliers");
    if (const json* v = t.get("gamma")) cfg.gamma = read_gamma(*v, t.at("gamma"));
    if (const json* v = t.get("match_radius")) cfg.match_radius = read_positive(*v, t.at("match_radius"));
    if (const json* v = t.get("boundary_points")) cfg.boundary_points = static_cast<int>(read_int(*v, t.at("boundary_points"), 8));
    t.finish();
  }

  if (const json* p = root.get("plot")) {
    Table t(*p, "plot");
    if (const json* v = t.get("boundary")) {
      cfg.boundary_curve = read_string(*v, t.at("boundary"));
      try {
        boundary_curve(cfg.boundary_curve, 8);
      } catch (const ConfigError& e) {
        throw ConfigError(t.at("boundary"), e.what());
      }
    }
    t.finish();
  }

  if (const json* o = root.get("output")) {
    Table t(*o, "output");
    if (const json* v = t.get("dir")) {
      std::filesystem::path dir = read_string(*v, t.at("dir"));
      if (dir.is_relative() && !base_dir.empty()) dir = base_dir / dir;
      cfg.out_dir = dir;
    }
    t.finish();
  }

  root.finish();
  validate(cfg);
  return cfg;
}

void validate(const ModelConfig& cfg) {
  try {
    cfg.parsed_polynomial();
  } catch (const InputError& e) {
    throw ConfigError("model.polynomial", e.what());
  }
  if (cfg.N > cfg.max_n)
    throw ConfigError("model.N", "N = " + std::to_string(cfg.N) + " exceeds max_n = " + std::to_string(cfg.max_n));
  if (cfg.N < 1) throw ConfigError("model.N", "must be >= 1");
  for (int k = 1; k <= cfg.t; ++k) {
    auto it = cfg.deterministics.find(k);
    if (it == cfg.deterministics.end()) throw ConfigError("deterministic.A" + std::to_string(k), "no generator for A" + std::to_string(k));
    if (const auto* d = std::get_if<DiagSpec>(&it->second); d && static_cast<int>(d->values.size()) > cfg.N)
      throw ConfigError("deterministic.A" + std::to_string(k) + ".values",
                        std::to_string(d->values.size()) + " values do not fit in N = " + std::to_string(cfg.N));
  }
  if (!(cfg.step > 0.0)) throw ConfigError("grid.step", "must be positive");
  if (!(cfg.tol.margin > 0.0) || !(cfg.tol.margin < 1.0)) throw ConfigError("tolerances.margin", "must lie in (0, 1)");
  if (!(cfg.tol.smin_rel > 0.0)) throw ConfigError("tolerances.smin_rel", "must be positive");
  if (!(cfg.match_radius > 0.0)) throw ConfigError("outliers.match_radius", "must be positive");
}

void apply(ModelConfig& cfg, const Overrides& o) {
  if (o.N) cfg.N = *o.N;
  if (o.seed) cfg.seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.grid_step) cfg.step = *o.grid_step;
  if (o.tol_margin) cfg.tol.margin = *o.tol_margin;
  validate(cfg);
}

ModelConfig preset_config(int id) {
  ModelConfig cfg;
  cfg.N = 1000;
  cfg.u = 3;
  cfg.boundary_curve = "example" + std::to_string(id);
  switch (id) {
    case 1:
      cfg.polynomial = kExample1;
      cfg.t = 1;
      cfg.seed = 1;
      cfg.deterministics[1] = DiagSpec{{2.0, cplx{0.0, 2.0}}};
      cfg.region = Region{-3.0, 3.0, -3.0, 3.0};
      cfg.gamma = Gamma::annulus(0.0, 1.8);
      break;
    case 2:
      cfg.polynomial = kExample2;
      cfg.t = 2;
      cfg.seed = 2;
      cfg.deterministics[1] = DiagSpec{{2.0, -2.5}};
      cfg.deterministics[2] = GueRealization{0};
      // The bulk edge sits between the nodes 1.05 and 1.1; bulk eigenvalues of
      // P(0, A) near 1 must fall in cells with both real nodes inside.
      cfg.region = Region{-3.0, 2.5, -0.6, 0.6};
      cfg.step = 0.05;
      cfg.gamma = Gamma::annulus(0.0, 1.6);
      cfg.match_radius = 0.3;
      break;
    case 3:
      cfg.polynomial = kExample3;
      cfg.t = 2;
      cfg.seed = 3;
      cfg.deterministics[1] = BalancedSign{};
      cfg.deterministics[2] = DiagSpec{{1.5, cplx{-2.0, 2.0}}};
      cfg.region = Region{-3.0, 3.0, -3.0, 3.0};
      cfg.gamma = Gamma::annulus(0.0, 1.9);
      break;
    case 4:
      cfg.polynomial = kExample4;
      cfg.t = 1;
      cfg.seed = 4;
      cfg.deterministics[1] = DiagSpec{{cplx{0.0, 2.0}, cplx{0.0, -2.0}}};
      cfg.region = Region{-5.0, 1.0, -3.0, 3.0};
      cfg.gamma = Gamma::annulus(-2.0, 2.0);
      break;
    default:
      throw UnknownExample(id);
  }
  for (int j = 1; j <= cfg.u; ++j) cfg.circulars[j] = Distribution::ComplexGaussian;
  cfg.out_dir = "example" + std::to_string(id);
  validate(cfg);
  return cfg;
}

std::vector<std::vector<cplx>> boundary_curve(const std::string& name, int points) {
  using std::numbers::pi;
  if (name.empty()) return {};
  if (name == "example1") return {circle(0.0, 1.5, points)};
  if (name == "example2") {
    std::vector<cplx> e;
    const double a = 3.0 / (2.0 * std::numbers::sqrt2);
    const double b = 1.0 / (2.0 * std::numbers::sqrt2);
    for (int i = 0; i <= points; ++i) {
      const double th = 2.0 * pi * i / points;
      e.emplace_back(a * std::cos(th), b * std::sin(th));
    }
    return {e};
  }
  if (name == "example3") {
    // |z^2 - 1|^2 = |z|^2 + 1 in polar form: r^2 = 1 + 2 cos(2 theta), two lobes through 0.
    std::vector<std::vector<cplx>> lobes;
    for (double base : {0.0, pi}) {
      std::vector<cplx> lobe;
      const int half = points / 2;
      for (int i = 0; i <= half; ++i) {
        const double th = -pi / 3.0 + (2.0 * pi / 3.0) * i / half;
        const double r2 = std::max(0.0, 1.0 + 2.0 * std::cos(2.0 * th));
        lobe.push_back(std::polar(std::sqrt(r2), base + th));
      }
      lobes.push_back(std::move(lobe));
    }
    return lobes;
  }
  if (name == "example4") {
    // (B+3) B (B+2) / 5 - 2 over unit disks B: the middle factor spans every
    // phase, so the set is the disk of radius 4 * 3 / 5 about -2.
    return {circle(-2.0, 12.0 / 5.0, points)};
  }
  throw ConfigError("plot.boundary", "unknown boundary curve '" + name + "' (example1 .. example4)");
}

MatrixAssignment deterministic_assignment(const ModelConfig& cfg, int n) {
  MatrixAssignment a;
  for (const auto& [k, g] : cfg.deterministics) a.deterministics[k] = generate_deterministic(g, n);
  return a;
}

MatrixAssignment sample_circulars(const ModelConfig& cfg, int n) {
  MatrixAssignment a;
  for (const auto& [j, dist] : cfg.circulars)
    a.circulars[j] = sample_iid({dist, n, cfg.seed, static_cast<std::uint64_t>(j)});
  return a;
}

Decomposition decomposition(const ModelConfig& cfg, const MatrixAssignment& A) {
  MatrixAssignment Aprime;
  for (const auto& [k, a] : A.deterministics)
    if (!cfg.is_finite_rank(k)) Aprime.deterministics[k] = a;
  return Decomposition::from_parts(A, Aprime);
}

}  // namespace ncspec
