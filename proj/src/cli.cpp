#include "homlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "homlab/corrector_hierarchy.hpp"
#include "homlab/homogenized_solutions.hpp"
#include "homlab/parallel.hpp"
#include "homlab/random_lattice.hpp"
#include "homlab/symbol.hpp"
#include "json.hpp"

namespace homlab {

namespace {

using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

const std::map<std::string, std::map<std::string, std::string>>& all_defaults() {
  static const std::map<std::string, std::map<std::string, std::string>> table = [] {
    const std::map<std::string, std::string> continuum{
        {"medium", "cosine"}, {"dim", "auto"}, {"modes", "16"}, {"tolerance", "1e-12"}};
    auto with = [&](std::map<std::string, std::string> extra) {
      auto m = continuum;
      for (auto& [k, v] : extra) m[k] = v;
      return m;
    };
    const std::map<std::string, std::string> lattice{{"distribution", "rademacher"},
                                                     {"dim", "2"},
                                                     {"delta", "0.2"},
                                                     {"seed", "20240601"},
                                                     {"tolerance", "1e-12"}};
    auto lat = [&](std::map<std::string, std::string> extra) {
      auto m = lattice;
      for (auto& [k, v] : extra) m[k] = v;
      return m;
    };
    std::map<std::string, std::map<std::string, std::string>> t;
    t["correctors"] = with({{"order", "3"}, {"modes", "24"}});
    t["symbol"] = with({{"radius", "1.0"}, {"radial_points", "8"}});
    t["taylor"] = with({{"max_degree", "10"}, {"order", "3"}});
    t["rate"] = with({{"order", "3"}, {"eps", "0.4,0.2,0.1,0.05"}, {"period", "16"}, {"cutoff", "9"}});
    t["two-scale"] = with({{"order", "2"}, {"modes", "24"}, {"period", "4"}});
    t["mc"] = lat({{"side", "4"}, {"samples", "256"}, {"k", "1,0"}});
    t["periodize"] = lat({{"sides", "4,8,16"}, {"order", "1"}, {"samples", "1024"}});
    for (auto& [kind, m] : t) m["out"] = "runs/" + kind;
    return t;
  }();
  return table;
}

bool is_lattice(const std::string& kind) { return kind == "mc" || kind == "periodize"; }

medium::Descriptor medium_descriptor(const std::string& name) {
  if (name == "identity") return medium::Identity{};
  if (name == "cosine") return medium::cosine_1d();
  if (name == "laminate") return medium::laminate_2d();
  if (name == "oblique") return medium::oblique_2d();
  throw ConfigError("unknown medium '" + name + "' (expected identity, cosine, laminate or oblique)");
}

int medium_dim(const RunConfig& c) {
  const std::string m = c.get("medium");
  const std::string d = c.get("dim");
  const int natural = m == "cosine" ? 1 : 2;
  if (d == "auto") return natural;
  const int v = c.get_int("dim");
  if (m != "identity" && v != natural)
    throw ConfigError("medium '" + m + "' lives in dimension " + std::to_string(natural));
  return v;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void validate(const RunConfig& c) {
  const std::string& k = c.kind;
  require(c.get_double("tolerance") > 0.0 && c.get_double("tolerance") <= 1e-3,
          "tolerance must lie in (0, 1e-3]");
  if (!is_lattice(k)) {
    medium_descriptor(c.get("medium"));
    const int d = medium_dim(c);
    require(d >= 1 && d <= 3, "dim must be 1, 2 or 3");
    require(c.get_int("modes") >= 1 && c.get_int("modes") <= 64, "modes must lie in [1, 64]");
    if (c.values.count("order")) {
      const int n = c.get_int("order");
      require(n >= (k == "two-scale" ? 0 : 1) && n <= max_corrector_order(d),
              "order must lie in [1, " + std::to_string(max_corrector_order(d)) + "] for d = " +
                  std::to_string(d));
    }
  }
  if (k == "symbol") {
    require(c.get_double("radius") > 0.0 && c.get_double("radius") < M_PI, "radius must lie in (0, pi)");
    require(c.get_int("radial_points") >= 1, "radial_points must be positive");
  } else if (k == "taylor") {
    const int D = c.get_int("max_degree");
    require(D >= 2 && D <= 12 && D % 2 == 0, "max_degree must be even and in [2, 12]");
  } else if (k == "rate") {
    const auto eps = c.get_doubles("eps");
    require(eps.size() >= 2, "eps needs at least two values");
    const double cutoff = c.get_double("cutoff");
    require(c.get_double("period") > 0.0 && cutoff > 0.0, "period and cutoff must be positive");
    for (double e : eps) require(e > 0.0 && e * cutoff < kTwoPi, "every eps must satisfy 0 < eps * cutoff < 2 pi");
  } else if (k == "two-scale") {
    require(c.get_int("period") >= 1 && c.get_int("period") <= 16, "period must lie in [1, 16]");
  } else if (is_lattice(k)) {
    parse_distribution(c.get("distribution"));
    const int d = c.get_int("dim");
    require(d >= 1 && d <= 3, "dim must be 1, 2 or 3");
    require(std::abs(c.get_double("delta")) < 1.0, "delta must satisfy |delta| < 1");
    const int samples = c.get_int("samples");
    require(samples >= 2, "samples must be at least 2");
    if (k == "mc") {
      const int side = c.get_int("side");
      require(side >= 2, "side must be at least 2");
      require(d < 3 || (side <= 16 && samples <= 4096), "d = 3 runs are capped at side 16 and 4096 samples");
      const auto kv = c.get_ints("k");
      require(static_cast<int>(kv.size()) == d, "k needs one entry per dimension");
      bool nonzero = false;
      for (int v : kv) nonzero = nonzero || ((v % side) + side) % side != 0;
      require(nonzero, "k must be a nonzero dual-lattice frequency");
    } else {
      const auto sides = c.get_ints("sides");
      require(!sides.empty() && sides.front() >= 2, "sides must start at 2 or more");
      for (std::size_t i = 1; i < sides.size(); ++i) require(sides[i] > sides[i - 1], "sides must increase");
      require(d < 3 || (sides.back() <= 16 && samples <= 4096), "d = 3 runs are capped at side 16 and 4096 samples");
      const int n = c.get_int("order");
      require(n >= 1 && n <= 2, "periodization order must be 1 or 2");
    }
  }
}

CoefficientField build_medium(const RunConfig& c) {
  const int d = medium_dim(c);
  return make_coefficient_field(FrequencyLattice::make(d, c.get_int("modes")),
                                medium_descriptor(c.get("medium")));
}

std::string dotted_tuple(std::size_t flat, int n, int d) {
  if (n == 0) return "-";
  std::string s;
  std::vector<int> digits(n);
  for (int i = n - 1; i >= 0; --i) {
    digits[i] = static_cast<int>(flat % d) + 1;
    flat /= d;
  }
  for (int i = 0; i < n; ++i) s += (i ? "." : "") + std::to_string(digits[i]);
  return s;
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json r = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct RunOutput {
  ordered_json headline = ordered_json::object();
  std::vector<std::string> artifacts;
};

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << std::setprecision(17);
  return out;
}

RunOutput run_correctors(const RunConfig& c, const std::filesystem::path& dir) {
  const auto a = build_medium(c);
  CorrectorOptions opts;
  opts.solve.tolerance = c.get_double("tolerance");
  const auto set = compute_correctors(a, c.get_int("order"), opts);
  RunOutput out;
  {
    auto csv = open_csv(dir / "abar.csv");
    csv << "order,tuple,i,j,value\n";
    for (int n = 1; n <= set.order; ++n)
      for (std::size_t t = 0; t < set.abar[n].size(); ++t)
        for (int i = 0; i < set.dim; ++i)
          for (int j = 0; j < set.dim; ++j)
            csv << n << "," << dotted_tuple(t, n - 1, set.dim) << "," << i + 1 << "," << j + 1 << ","
                << set.abar[n][t](i, j) << "\n";
  }
  const auto growth = growth_report(set);
  {
    auto csv = open_csv(dir / "growth.csv");
    csv << "n,corrector_norm,coefficient_norm,flux_norm\n";
    for (const auto& r : growth.rows)
      csv << r.n << "," << r.corrector_norm << "," << r.coefficient_norm << "," << r.flux_norm << "\n";
  }
  write_correctors(set, dir / "correctors.bin");
  PlotSeries s{"corrector norm", {}, {}};
  for (const auto& r : growth.rows)
    if (r.corrector_norm > 0.0) {
      s.x.push_back(r.n);
      s.y.push_back(r.corrector_norm);
    }
  if (s.x.size() >= 2) {
    write_svg_plot(dir / "growth.svg", "Corrector growth", "n", "norm", {s}, false, true);
    out.artifacts.push_back("growth.svg");
  }
  out.artifacts.insert(out.artifacts.begin(), {"abar.csv", "growth.csv", "correctors.bin"});
  out.headline["abar1"] = matrix_json(set.abar[1][0]);
  out.headline["fitted_base"] = growth.fitted_base;
  out.headline["envelope_base"] = growth.envelope_base;
  return out;
}

RunOutput run_symbol(const RunConfig& c, const std::filesystem::path& dir) {
  const auto a = build_medium(c);
  const int d = a.dim();
  SymbolOptions opts;
  opts.solve.tolerance = c.get_double("tolerance");
  const double radius = c.get_double("radius");
  const int count = c.get_int("radial_points");
  const auto dirs = comparison_directions(d);
  std::vector<Wavevector> pts;
  for (const auto& e : dirs)
    for (int r = 1; r <= count; ++r) {
      Wavevector xi{};
      for (int j = 0; j < d; ++j) xi[j] = radius * r / count * e[j];
      pts.push_back(xi);
    }
  std::vector<std::optional<SymbolSample>> results(pts.size());
  std::vector<char> violation(pts.size(), 0);
  parallel_for(pts.size(), [&](std::size_t i) {
    try {
      results[i] = bhat_at(a, pts[i], opts);
    } catch (const SymbolBoundError&) {
      violation[i] = 1;
    }
  });
  std::vector<SymbolSample> samples;
  for (const auto& r : results)
    if (r) samples.push_back(*r);
  write_symbol_csv(samples, d, dir / "symbol.csv");

  std::vector<PlotSeries> series;
  for (std::size_t e = 0; e < dirs.size() && e < 6; ++e) {
    PlotSeries s{"direction " + std::to_string(e + 1), {}, {}};
    for (int r = 0; r < count; ++r) {
      const auto& res = results[e * count + r];
      if (!res) continue;
      double n2 = 0.0;
      for (int j = 0; j < d; ++j) n2 += res->xi[j] * res->xi[j];
      s.x.push_back(std::sqrt(n2));
      s.y.push_back(res->value.real() / n2);
    }
    series.push_back(s);
  }
  write_svg_plot(dir / "symbol.svg", "Re B / |xi|^2", "|xi|", "Re B / |xi|^2", series, false, false);

  RunOutput out;
  out.artifacts = {"symbol.csv", "symbol.svg"};
  out.headline["samples"] = samples.size();
  out.headline["band_violations"] = std::count(violation.begin(), violation.end(), 1);
  out.headline["lambda"] = a.lambda();
  return out;
}

RunOutput run_taylor(const RunConfig& c, const std::filesystem::path& dir) {
  const auto a = build_medium(c);
  SymbolOptions opts;
  opts.solve.tolerance = c.get_double("tolerance");
  RayDesign design;
  design.max_degree = c.get_int("max_degree");
  std::vector<SymbolSample> samples;
  const auto model = fit_symbol(a, design, opts, &samples);
  write_symbol_csv(samples, a.dim(), dir / "symbol_samples.csv");
  write_taylor_json(model, dir / "taylor.json");

  const int order = std::min(c.get_int("order"), model.max_degree - 1);
  CorrectorOptions copts;
  copts.solve.tolerance = c.get_double("tolerance");
  const auto set = compute_correctors(a, order, copts);
  const auto routes = compare_with_correctors(model, set, order);
  double worst = 0.0;
  {
    auto csv = open_csv(dir / "routes.csv");
    csv << "n,model_form,corrector_form,discrepancy\n";
    for (const auto& r : routes) {
      csv << r.n << "," << r.model_form << "," << r.corrector_form << "," << r.discrepancy << "\n";
      worst = std::max(worst, r.discrepancy);
    }
  }
  RunOutput out;
  out.artifacts = {"symbol_samples.csv", "taylor.json", "routes.csv"};
  out.headline["condition_number"] = model.condition_number;
  out.headline["rms_residual"] = model.rms_residual;
  out.headline["max_route_discrepancy"] = worst;
  return out;
}

RunOutput run_rate(const RunConfig& c, const std::filesystem::path& dir) {
  const auto a = build_medium(c);
  const int d = a.dim();
  const int order = c.get_int("order");
  CorrectorOptions copts;
  copts.solve.tolerance = c.get_double("tolerance");
  const auto set = compute_correctors(a, order, copts);
  FullSpaceGrid grid{d, c.get_double("period"), c.get_double("cutoff")};
  SymbolOptions sopts;
  sopts.solve.tolerance = c.get_double("tolerance");
  SymbolCache cache(a, grid, sopts);
  const auto eps = c.get_doubles("eps");
  const auto f = Forcing::gaussian(d);

  RunOutput out;
  ordered_json slopes = ordered_json::array(), spreads = ordered_json::array();
  std::vector<PlotSeries> series;
  for (int ell = 1; ell <= order; ++ell) {
    const auto t = error_and_rate(set, ell, f, grid, eps, cache);
    const std::string name = "rate_ell" + std::to_string(ell) + ".csv";
    write_rate_csv(t, dir / name);
    out.artifacts.push_back(name);
    slopes.push_back(t.slope);
    spreads.push_back(t.ratio_spread);
    PlotSeries s{"ell = " + std::to_string(ell), {}, {}};
    for (const auto& r : t.rows)
      if (r.error > 0.0) {
        s.x.push_back(r.eps);
        s.y.push_back(r.error);
      }
    series.push_back(s);
  }
  write_svg_plot(dir / "rate.svg", "Averaged-solution error", "eps", "error", series, true, true);
  out.artifacts.push_back("rate.svg");
  out.headline["slopes"] = slopes;
  out.headline["ratio_spreads"] = spreads;
  out.headline["symbol_evaluations"] = cache.misses();
  return out;
}

RunOutput run_two_scale(const RunConfig& c, const std::filesystem::path& dir) {
  const auto a = build_medium(c);
  const int d = a.dim();
  const int order = c.get_int("order");
  CorrectorOptions copts;
  copts.solve.tolerance = c.get_double("tolerance");
  const auto set = compute_correctors(a, std::max(order, 1), copts);
  auto lat = FrequencyLattice::make(d, 1);
  std::vector<Complex> s(lat->num_grid_points());
  for (std::size_t p = 0; p < s.size(); ++p) {
    const auto x = lat->grid_point(p);
    double v = std::sin(kTwoPi * x[0]);
    for (int j = 1; j < d; ++j) v += std::cos(kTwoPi * x[0]) * std::sin(kTwoPi * x[j]);
    s[p] = v;
  }
  const auto w = SpectralField::from_grid(lat, Rank::scalar, s);
  RunOutput out;
  double worst = 0.0;
  {
    auto csv = open_csv(dir / "two_scale.csv");
    csv << "n,period,residual\n";
    for (int n = 0; n <= order; ++n) {
      const double r = two_scale_residual(set, n, w, c.get_int("period"));
      csv << n << "," << c.get_int("period") << "," << r << "\n";
      worst = std::max(worst, r);
    }
  }
  out.artifacts = {"two_scale.csv"};
  out.headline["max_residual"] = worst;
  return out;
}

RunOutput run_mc(const RunConfig& c, const std::filesystem::path& dir) {
  const int d = c.get_int("dim"), side = c.get_int("side");
  MonteCarloOptions opts;
  opts.rng.seed = std::stoull(c.get("seed"));
  opts.solve.tolerance = c.get_double("tolerance");
  ModeIndex k{};
  const auto kv = c.get_ints("k");
  for (int j = 0; j < d; ++j) k[j] = kv[j];
  const double delta = c.get_double("delta");
  const auto e = mc_bhat(parse_distribution(c.get("distribution")), d, side, delta, k,
                         c.get_int("samples"), opts);
  write_mc_csv({e}, d, side, dir / "mc.csv");
  RunOutput out;
  out.artifacts = {"mc.csv"};
  out.headline["re"] = e.value.real();
  out.headline["im"] = e.value.imag();
  out.headline["stderr"] = e.standard_error;
  out.headline["samples"] = e.samples;
  out.headline["contamination"] = e.contamination;
  out.headline["band_violations"] = within_discrete_band(e.value, e.xi, d, delta) ? 0 : 1;
  return out;
}

RunOutput run_periodize(const RunConfig& c, const std::filesystem::path& dir) {
  MonteCarloOptions opts;
  opts.rng.seed = std::stoull(c.get("seed"));
  opts.solve.tolerance = c.get_double("tolerance");
  const int d = c.get_int("dim");
  const auto t = periodization_experiment(parse_distribution(c.get("distribution")), d,
                                          c.get_double("delta"), c.get_ints("sides"),
                                          c.get_int("order"), c.get_int("samples"), opts);
  write_periodization_csv(t, dir / "periodization.csv");
  std::vector<PlotSeries> series;
  for (int i = 0; i < d; ++i) {
    PlotSeries s{"E[abar_" + std::to_string(i + 1) + std::to_string(i + 1) + "]", {}, {}};
    for (const auto& r : t.rows) {
      s.x.push_back(r.side);
      s.y.push_back(r.mean[0](i, i));
    }
    series.push_back(s);
  }
  write_svg_plot(dir / "periodization.svg", "Periodized coefficient", "L", "mean", series, true, false);
  RunOutput out;
  out.artifacts = {"periodization.csv", "periodization.svg"};
  out.headline["successive_differences"] = t.successive_differences;
  bool monotone = true;
  for (std::size_t i = 1; i < t.successive_differences.size(); ++i)
    monotone = monotone && t.successive_differences[i] < t.successive_differences[i - 1];
  out.headline["differences_decrease"] = monotone;
  return out;
}

RunOutput dispatch(const RunConfig& c, const std::filesystem::path& dir) {
  if (c.kind == "correctors") return run_correctors(c, dir);
  if (c.kind == "symbol") return run_symbol(c, dir);
  if (c.kind == "taylor") return run_taylor(c, dir);
  if (c.kind == "rate") return run_rate(c, dir);
  if (c.kind == "two-scale") return run_two_scale(c, dir);
  if (c.kind == "mc") return run_mc(c, dir);
  return run_periodize(c, dir);
}

void write_json(const std::filesystem::path& path, const ordered_json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace

int RunConfig::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(r)) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) {
    RunConfig tmp{kind, {{key, item}}};
    out.push_back(tmp.get_double(key));
  }
  return out;
}

std::vector<int> RunConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(get(key))) {
    RunConfig tmp{kind, {{key, item}}};
    out.push_back(tmp.get_int(key));
  }
  return out;
}

const std::map<std::string, std::string>& config_defaults(const std::string& kind) {
  const auto& t = all_defaults();
  const auto it = t.find(kind);
  if (it == t.end()) throw ConfigError("unknown experiment kind '" + kind + "'");
  return it->second;
}

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> out;
  for (const auto& [k, v] : all_defaults()) out.push_back(k);
  return out;
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> raw;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    if (raw.count(key)) throw ConfigError("line " + std::to_string(number) + ": duplicate key '" + key + "'");
    raw[key] = value;
  }
  if (!raw.count("kind")) throw ConfigError("missing required key 'kind'");
  RunConfig c;
  c.kind = raw.at("kind");
  c.values = config_defaults(c.kind);
  for (const auto& [key, value] : raw) {
    if (key == "kind") continue;
    if (!c.values.count(key))
      throw ConfigError("unknown key '" + key + "' for kind '" + c.kind + "'");
    c.values[key] = value;
  }
  try {
    validate(c);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

int run_config(const std::filesystem::path& config_path, const RunOptions& opts) {
  std::ostream& log = opts.log ? *opts.log : std::cerr;
  RunConfig c;
  try {
    c = load_config(config_path);
  } catch (const std::invalid_argument& e) {
    log << "config error: " << e.what() << "\n";
    return kExitValidation;
  }
  return run_config(c, opts);
}

int run_config(const RunConfig& config, const RunOptions& opts) {
  std::ostream& log = opts.log ? *opts.log : std::cerr;
  RunConfig c = config;
  if (opts.seed) {
    if (!c.values.count("seed")) {
      log << "config error: kind '" << c.kind << "' takes no seed\n";
      return kExitValidation;
    }
    c.values["seed"] = std::to_string(*opts.seed);
  }
  if (opts.out) c.values["out"] = opts.out->string();
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    log << "config error: " << e.what() << "\n";
    return kExitValidation;
  }
  const std::filesystem::path dir = c.get("out");
  if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir) && !opts.force) {
    log << "output directory " << dir << " is not empty; pass --force to overwrite\n";
    return kExitValidation;
  }
  std::filesystem::create_directories(dir);

  ordered_json manifest;
  manifest["homlab_version"] = kHomlabVersion;
  manifest["kind"] = c.kind;
  manifest["config"] = ordered_json::object();
  for (const auto& [k, v] : c.values) manifest["config"][k] = v;
  manifest["threads"] = thread_count();
  manifest["started_utc"] = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  int code = kExitOk;
  try {
    const auto out = dispatch(c, dir);
    manifest["status"] = "ok";
    manifest["headline"] = out.headline;
    manifest["artifacts"] = out.artifacts;
  } catch (const std::exception& e) {
    log << "run failed: " << e.what() << "\n";
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    code = kExitSolver;
  }
  manifest["finished_utc"] = utc_now();
  manifest["seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "manifest.json", manifest);
  return code;
}

ReportSummary emit_report(const std::filesystem::path& dir, std::ostream* log_ptr) {
  std::ostream& log = log_ptr ? *log_ptr : std::cerr;
  ReportSummary summary;
  if (!std::filesystem::is_directory(dir)) {
    log << "report directory " << dir << " does not exist\n";
    summary.exit_code = kExitValidation;
    return summary;
  }
  ordered_json runs = ordered_json::array();
  ordered_json warnings = ordered_json::array();
  std::vector<std::filesystem::path> candidates;
  if (std::filesystem::exists(dir / "manifest.json")) candidates.push_back(dir);
  std::vector<std::filesystem::path> subdirs;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_directory()) subdirs.push_back(entry.path());
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& s : subdirs) {
    if (std::filesystem::exists(s / "manifest.json")) {
      candidates.push_back(s);
    } else {
      warnings.push_back("no manifest in " + s.filename().string() + ", skipped");
    }
  }
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>homlab report</title></head><body>\n"
       << "<h1>homlab report</h1>\n";
  for (const auto& run : candidates) {
    ordered_json m;
    try {
      std::ifstream in(run / "manifest.json");
      m = ordered_json::parse(in);
    } catch (const std::exception& e) {
      warnings.push_back("unreadable manifest in " + run.filename().string() + ": " + e.what());
      continue;
    }
    const std::string name = run == dir ? "." : run.filename().string();
    ordered_json r;
    r["name"] = name;
    r["kind"] = m.value("kind", "");
    r["status"] = m.value("status", "unknown");
    r["headline"] = m.value("headline", ordered_json::object());
    if (m.contains("error")) r["error"] = m["error"];
    runs.push_back(r);
    ++summary.runs;
    if (r["status"] != "ok") ++summary.failed;
    html << "<h2>" << name << " (" << r["kind"].get<std::string>() << ", "
         << r["status"].get<std::string>() << ")</h2>\n";
    for (const auto& entry : std::filesystem::directory_iterator(run))
      if (entry.path().extension() == ".svg") {
        const auto rel = run == dir ? entry.path().filename() : std::filesystem::path(name) / entry.path().filename();
        html << "<img src=\"" << rel.string() << "\" alt=\"" << rel.string() << "\">\n";
      }
  }
  html << "</body></html>\n";
  if (candidates.empty()) warnings.push_back("no runs found");
  summary.warnings = static_cast<int>(warnings.size());
  for (const auto& w : warnings) log << "warning: " << w.get<std::string>() << "\n";

  ordered_json doc;
  doc["homlab_version"] = kHomlabVersion;
  doc["run_count"] = summary.runs;
  doc["failed_count"] = summary.failed;
  doc["warning_count"] = summary.warnings;
  doc["warnings"] = warnings;
  doc["runs"] = runs;
  write_json(dir / "summary.json", doc);
  std::ofstream(dir / "index.html") << html.str();
  summary.exit_code = summary.failed > 0 ? kExitSolver : kExitOk;
  return summary;
}

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<PlotSeries>& series, bool log_x, bool log_y) {
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if ((log_x && s.x[i] <= 0) || (log_y && s.y[i] <= 0) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel
      << (log_x ? " (log)" : "") << "</text>\n"
      << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
      << ")\" text-anchor=\"middle\" font-size=\"13\">" << ylabel << (log_y ? " (log)" : "") << "</text>\n";
  auto label = [&](double v, bool lg) {
    std::ostringstream os;
    os << std::setprecision(3) << (lg ? std::pow(10.0, v) : v);
    return os.str();
  };
  out << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" font-size=\"11\">" << label(x0, log_x) << "</text>\n"
      << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\" font-size=\"11\">"
      << label(x1, log_x) << "</text>\n"
      << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"11\">"
      << label(y0, log_y) << "</text>\n"
      << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\" font-size=\"11\">"
      << label(y1, log_y) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if ((log_x && s.x[i] <= 0) || (log_y && s.y[i] <= 0) || !std::isfinite(s.y[i])) continue;
      out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    out << "\"/>\n"
        << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
        << color << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace homlab
