#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pvrecon/core.hpp"
#include "pvrecon/probe.hpp"

namespace pvrecon {

struct VelocitySample {
  double rho = 0.0;
  double v = 0.0;
  int probe_id = 0;
  double t = 0.0;
};

struct VelocityEstimates {
  std::vector<VelocitySample> samples;
  std::size_t dropped_negative = 0;
  std::size_t skipped_probes = 0;  // fewer than three samples
};

// Central differences in the interior, one-sided at the ends.
VelocityEstimates estimate_velocities(const ProbeDataset& dataset);

struct FitConfig {
  int hidden_layers = 2;
  int hidden_width = 16;
  int iterations = 6000;
  double learning_rate = 5e-3;
  double monotonicity_weight = 1.0;  // penalty on positive slopes
  int monotonicity_points = 101;
  std::uint64_t seed = 7;

  void validate() const;
};

struct FitResult {
  VelocityModel model;
  double final_loss = 0.0;
  double max_monotonicity_violation = 0.0;  // largest V(rho_{k+1}) - V(rho_k) on the check grid
  double v_at_one = 0.0;
};

FitResult fit_velocity_model(const std::vector<VelocitySample>& samples, const FitConfig& config);

// Least-squares v_f for v = v_f (1 - rho).
double best_fit_greenshields(const std::vector<VelocitySample>& samples);

// RMS distance of two velocity laws over 201 points of [rho_lo, rho_hi].
double velocity_l2_distance(const std::function<double(double)>& a, const std::function<double(double)>& b,
                            double rho_lo, double rho_hi);

void write_velocity_samples_csv(const std::string& path, const std::vector<VelocitySample>& samples);
void save_velocity_model(const std::string& path, const VelocityModel& model);
VelocityModel load_velocity_model(const std::string& path);

}  // namespace pvrecon
