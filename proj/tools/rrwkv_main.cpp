// rrwkv <command> [--config FILE] [--set key=value]... [--out DIR]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rrwkv/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Recurrent models with medium-based long-range shortcuts: training, checks and benchmarks"};
  app.require_subcommand(0, 1);

  std::string config_file, out_dir;
  std::vector<std::string> overrides;
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "Print every configuration key with its default and exit");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "Train on a synthetic task; writes metrics.csv, checkpoint.txt, probe.csv"},
      {"eval", "Evaluate a checkpoint on the held-out task set; writes eval.csv"},
      {"gradcheck", "Compare analytic gradients with central differences; writes gradreport.csv"},
      {"bench", "Count multiply-adds and time the mixing cores; writes bench.csv, bench_fit.csv"},
      {"pathlen", "Longest shortest path through the information-flow graph; writes pathlen.csv"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_file, "Flat key = value file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Override one key (key=value); repeatable");
    sub->add_option("--out", out_dir, "Output directory (default $RRWKV_OUT_DIR/<command> or runs/<command>)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (list_keys) {
    for (const auto& key : rrwkv::config_schema())
      std::cout << key.name << " = " << key.default_value << "    # " << key.help << '\n';
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  rrwkv::RunConfig cfg;
  try {
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& assignment : overrides) cfg.merge_assignment(assignment);
    if (!out_dir.empty()) cfg.set("out_dir", out_dir);
  } catch (const rrwkv::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return rrwkv::run_command(app.get_subcommands().front()->get_name(), cfg, std::cout, std::cerr);
}
