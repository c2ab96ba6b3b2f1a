// pvrecon <subcommand> --config <path> [--out <dir>] [--seed <u64>]
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pvrecon.h"

namespace {

void log_line(const char* message, void*) { std::fprintf(stderr, "pvrecon: %s\n", message); }

int report_failure(const char* what, pvr_status status) {
  std::fprintf(stderr, "pvrecon: %s failed (%s): %s\n", what, pvr_status_name(status), pvr_last_error());
  return static_cast<int>(status) > 0 && static_cast<int>(status) < 100 ? static_cast<int>(status) : 100;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed traffic density reconstruction from probe vehicles"};
  app.set_version_flag("--version", std::string(pvr_version()));
  app.require_subcommand(1);

  std::string config_path, out_dir, seed;
  std::vector<std::string> overrides;
  bool quiet = false;
  const char* help[][2] = {
      {"simulate", "Generate ground truth and probe measurements"},
      {"reconstruct", "Train the estimator and report its L2 error"},
      {"identify", "Fit a velocity law from probe trajectories"},
      {"evaluate", "Score a saved network against a truth field"},
      {"sweep-mu", "Reconstruct over a grid of mu values"},
      {"full", "Run every stage and export all artifacts"},
  };
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->add_option("--config", config_path, "Configuration file (key = value)")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Master seed (overrides seed)");
    sub->add_option("--set", overrides, "Extra key=value override, repeatable");
    sub->add_flag("-q,--quiet", quiet, "Suppress progress messages");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  pvr_config* config = nullptr;
  pvr_status st = pvr_config_load(config_path.c_str(), &config);
  if (st != PVR_OK) return report_failure("config", st);

  auto set = [&](const std::string& key, const std::string& value) {
    const pvr_status s = pvr_config_set(config, key.c_str(), value.c_str());
    if (s != PVR_OK) {
      report_failure("config", s);
      return false;
    }
    return true;
  };
  bool good = true;
  if (!out_dir.empty()) good = good && set("output_dir", out_dir);
  if (!seed.empty()) good = good && set("seed", seed);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "pvrecon: --set expects key=value, got '%s'\n", kv.c_str());
      good = false;
      break;
    }
    good = good && set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!good) {
    pvr_config_free(config);
    return static_cast<int>(PVR_ERR_CONFIG);
  }

  char dir[4096];
  pvr_config_get(config, "output_dir", dir, sizeof dir, nullptr);
  pvr_report* report = nullptr;
  st = pvr_run(config, subcommand.c_str(), quiet ? nullptr : log_line, nullptr, &report);
  pvr_config_free(config);
  if (st != PVR_OK) return report_failure(subcommand.c_str(), st);

  double l2 = 0.0;
  if (pvr_report_get_number(report, "l2.rms", &l2) == PVR_OK) std::printf("l2_rms %.9g\n", l2);
  std::printf("manifest %s/manifest.json\n", dir);
  pvr_report_free(report);
  return 0;
}
