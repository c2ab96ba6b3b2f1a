#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pvrecon {

enum class ScenarioKind { MacroFds, MicroFl1, Import };

// Every tunable of a scenario run. Defaults reproduce the reference
// experiments; see README for the documented schema.
struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::MacroFds;
  std::uint64_t seed = 2022;
  std::string output_dir = "pvrecon-out";

  // Ground-truth grid for the macroscopic scenario.
  double grid_x_min = 0.0;
  double grid_x_max = 1.0;
  int grid_nx = 201;
  double grid_t_max = 2.0;
  int grid_nt = 201;

  std::string velocity_model = "greenshields";  // greenshields | nonlinear | tabulated
  double v_free = 1.0;
  double nonlinear_exponent = 1.5;
  double nonlinear_damping = 2.0;
  std::string velocity_table;  // "rho:v,rho:v,..."
  double gamma = 0.05;

  std::string macro_ic = "riemann";  // two-step | riemann | gaussian | sinusoid
  double ic_low = 0.3;
  double ic_high = 0.7;
  double ic_left = 0.25;
  double ic_right = 0.55;
  double ic_smoothing = 0.02;
  double ic_center = 0.5;
  double ic_width = 0.1;
  double ic_wavelength = 1.0;
  std::string bc_left = "dirichlet";  // dirichlet | zero-gradient | periodic
  double bc_left_value = 0.3;
  double bc_left_amplitude = 0.1;
  double bc_left_period = 0.5;
  std::string bc_right = "zero-gradient";
  double bc_right_value = 0.0;

  double horizon_fraction = 0.25;  // dT = fraction * T, T + dT = end of the truth window

  int probe_count = 6;
  double probe_entry_interval = 0.15;
  double probe_period = 0.0;  // 0: T / 100
  double probe_rk4_dt = 0.0;  // 0: period / 4

  double noise_sigma = 0.0;

  int net_hidden_layers = 8;
  int net_hidden_width = 20;
  double mu = 0.5;
  int n_phy = 2000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int iterations = 20000;
  std::string pinn_velocity = "auto";  // auto | greenshields | greenshields-fit | model | learned

  int micro_vehicles = 120;
  double micro_start = 0.0;
  double micro_end = 0.6;
  double micro_density = 0.3;
  double micro_x_max = 1.6;
  double micro_duration = 2.0;
  int micro_nx = 161;
  int micro_nt = 101;
  double micro_dt = 1e-3;
  double micro_output_period = 0.01;
  std::string micro_leader = "stop-release";  // constant | stop-release | sinusoidal
  double leader_speed = 0.6;
  double leader_stop_start = 0.3;
  double leader_stop_end = 0.8;
  double leader_release_speed = 0.8;
  double leader_amplitude = 0.2;
  double leader_period = 1.0;
  int micro_probes = 6;
  double micro_kernel_factor = 3.0;
  std::string micro_trajectories;  // optional import path
  double micro_vehicle_length = 0.0;  // required with micro.trajectories

  bool identify = false;
  int identify_hidden_layers = 2;
  int identify_hidden_width = 16;
  int identify_iterations = 6000;
  double identify_learning_rate = 5e-3;
  double identify_monotonicity_weight = 1.0;

  std::string import_probes;
  std::string import_truth;
  double import_window = 0.0;  // T for imported data; 0: last sample time

  std::string sweep_mu_values = "0.1,0.3,0.5,0.7,0.9,1";
  int sweep_threads = 1;

  std::string evaluate_network;  // default <output_dir>/network.txt
  std::string evaluate_truth;    // default <output_dir>/truth.csv
  std::string evaluate_probes;   // default <output_dir>/probes.csv
  std::string evaluate_domain;   // default <output_dir>/domain.csv if present, else rebuilt from the probes
  std::string evaluate_velocity_model;

  // Set one key from its textual value; validates bounds.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  // Cross-field checks after all keys are set.
  void validate() const;
};

ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);
std::string serialize_config(const ScenarioConfig& config);

std::vector<double> parse_number_list(const std::string& key, const std::string& text);

// Per-stage seeds: master seed XOR a fixed ASCII tag.
struct StageSeeds {
  std::uint64_t noise, init, collocation, identify;
};
inline constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;        // "noise"
inline constexpr std::uint64_t kInitTag = 0x696e6974ULL;           // "init"
inline constexpr std::uint64_t kCollocationTag = 0x636f6c6cULL;    // "coll"
inline constexpr std::uint64_t kIdentifyTag = 0x6964656e74ULL;     // "ident"
StageSeeds derive_seeds(std::uint64_t master);

}  // namespace pvrecon
