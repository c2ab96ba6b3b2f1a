#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvrecon/config.hpp"
#include "pvrecon/core.hpp"
#include "pvrecon/eval.hpp"
#include "pvrecon/identify.hpp"
#include "pvrecon/micro_sim.hpp"
#include "pvrecon/pinn.hpp"
#include "pvrecon/probe.hpp"

namespace pvrecon {

// Observation window [0, T] and prediction horizon dT of a scenario.
struct Timing {
  double T = 0.0;
  double dT = 0.0;
};

struct TruthData {
  std::optional<DensityField> field;  // absent for imports without a truth file
  VelocityModel model;                // law that generated the data
  std::vector<Trajectory> tracks;     // probe paths over [0, T]
  ProbeDataset clean;
  Timing timing;
  ReconstructionDomain domain;
  std::optional<TrajectorySet> vehicles;
  std::map<std::string, double> counters;
};

TruthData generate_truth(const ScenarioConfig& config);


struct Identification {
  VelocityEstimates estimates;
  FitResult fit;
  double greenshields_v_free = 0.0;  // least-squares line through the samples
  double fitted_distance = 0.0;      // RMS distance to the true law on the sampled range
  double greenshields_distance = 0.0;
  double rho_lo = 0.0, rho_hi = 0.0;
};

Identification identify_velocity(const ScenarioConfig& config, const TruthData& truth, const ProbeDataset& data);

// Velocity law used inside the physics residual for the pinn.velocity option.
VelocityModel residual_model(const ScenarioConfig& config, const TruthData& truth, const Identification* identified);

struct Reconstruction {
  NetworkSpec spec;
  TrainResult result;
  std::optional<L2Result> l2;
};

Reconstruction reconstruct(const ScenarioConfig& config, const TruthData& truth, const ProbeDataset& data,
                           const VelocityModel& model, double mu, const TrainObserver& observer = {});

struct RunReport {
  std::map<std::string, double> numbers;  // metrics and counters, flattened
  std::vector<std::string> outputs;
  std::string manifest_json;
};

using LogSink = std::function<void(const std::string&)>;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate", "reconstruct", "identify", "evaluate", "sweep-mu", "full"};
  return names;
}

// Runs one subcommand end to end and writes its outputs plus manifest.json
// into config.output_dir. Failures are rethrown tagged with the stage name
// after renaming the files written so far to *.partial.
RunReport run_command(const std::string& subcommand, const ScenarioConfig& config, const LogSink& log = {});

}  // namespace pvrecon
