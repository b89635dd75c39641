#pragma once

// Batch experiments driven by key=value configuration files.
//
// Exit codes: 0 success, 2 validation failure, 3 solver failure.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace homlab {

inline constexpr const char* kHomlabVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSolver = 3;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Parsed configuration with every key resolved to its default when absent.
struct RunConfig {
  std::string kind;
  std::map<std::string, std::string> values;  // resolved, including defaults

  std::string get(const std::string& key) const { return values.at(key); }
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
};

// Keys understood by an experiment kind with their defaults.
const std::map<std::string, std::string>& config_defaults(const std::string& kind);
std::vector<std::string> experiment_kinds();

// Parses "key = value" lines; '#' starts a comment. Throws ConfigError for
// syntax errors, unknown kinds or keys, and values outside module guards.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::filesystem::path> out;  // overrides the config's out key
  bool force = false;
  std::optional<unsigned long long> seed;
  std::ostream* log = nullptr;  // diagnostics; std::cerr when null
};

// Runs one experiment and writes manifest.json, CSV tables and SVG plots into
// the output directory. Validation failures leave no artifacts behind.
int run_config(const std::filesystem::path& config_path, const RunOptions& opts = {});
int run_config(const RunConfig& config, const RunOptions& opts = {});

struct ReportSummary {
  int runs = 0;
  int failed = 0;
  int warnings = 0;
  int exit_code = kExitOk;
};

// Collects the manifests of `dir` and its immediate subdirectories into
// summary.json and index.html inside `dir`.
ReportSummary emit_report(const std::filesystem::path& dir, std::ostream* log = nullptr);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal polyline plot.
void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<PlotSeries>& series, bool log_x, bool log_y);

}  // namespace homlab
