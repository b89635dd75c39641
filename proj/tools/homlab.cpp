#include <iostream>

#include "CLI11.hpp"
#include "homlab/cli.hpp"
#include "homlab/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Periodic and random homogenization laboratory"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = hardware concurrency)");

  std::string config;
  std::string out;
  bool force = false;
  unsigned long long seed = 0;
  auto* run = app.add_subcommand("run", "run one experiment from a key=value config");
  run->add_option("config", config, "configuration file")->required();
  run->add_option("--out", out, "output directory (overrides the config)");
  run->add_flag("--force", force, "write into a non-empty output directory");
  auto* seed_opt = run->add_option("--seed", seed, "random seed (overrides the config)");

  std::string dir;
  auto* report = app.add_subcommand("report", "summarise the runs below a directory");
  report->add_option("dir", dir, "directory holding run outputs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : homlab::kExitValidation;
  }
  homlab::set_thread_count(threads);

  if (*run) {
    homlab::RunOptions opts;
    if (!out.empty()) opts.out = out;
    opts.force = force;
    if (*seed_opt) opts.seed = seed;
    return homlab::run_config(config, opts);
  }
  const auto summary = homlab::emit_report(dir);
  std::cout << summary.runs << " runs, " << summary.failed << " failed, " << summary.warnings
            << " warnings\n";
  return summary.exit_code;
}
