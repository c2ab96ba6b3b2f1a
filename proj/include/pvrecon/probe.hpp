#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvrecon/core.hpp"
#include "pvrecon/micro_sim.hpp"

namespace pvrecon {

struct Trajectory {
  std::vector<double> t;
  std::vector<double> x;

  // Linear interpolation; holds the end values outside the recorded span.
  double position_at(double time) const;
};

struct Measurement {
  double t = 0.0;
  double x = 0.0;
  double rho = 0.0;
};

struct ProbeTrack {
  int id = 0;
  std::vector<Measurement> samples;
};

struct ProbeDataset {
  std::vector<ProbeTrack> probes;
  double period = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t clamped = 0;  // noisy values pulled back into [0, 1]

  std::size_t size() const;
  void validate() const;
};

// Integrates dx/dt = V(rho(t, x)) with classical RK4; the probe stops at x_max.
Trajectory advect_probe(const DensityField& field, const VelocityModel& model, double x0, double t0, double t1,
                        double dt);

// One measurement per probe per tick k * period (from the grid start) inside
// the probe's recorded span, read from the field by bilinear interpolation.
ProbeDataset sample_measurements(const DensityField& field, const std::vector<Trajectory>& trajectories,
                                 double period);

// Vehicles act as probes and report their spacing density at every tick of
// `period` up to t_end, with positions interpolated between stamps.
ProbeDataset sample_vehicle_probes(const TrajectorySet& trajectories, const std::vector<int>& vehicle_ids,
                                   double period, double t_end);

// rho <- clamp(rho + N(0, sigma^2), 0, 1), seeded.
ProbeDataset add_noise(const ProbeDataset& dataset, double sigma, std::uint64_t seed);

std::vector<Trajectory> dataset_tracks(const ProbeDataset& dataset);

// CSV `probe_id,t,x,rho`.
void write_dataset_csv(const std::string& path, const ProbeDataset& dataset);
ProbeDataset read_dataset_csv(const std::string& path);

}  // namespace pvrecon
