#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pvrecon/core.hpp"
#include "pvrecon/probe.hpp"

namespace pvrecon {

// Band between the rearmost and the foremost probe over [0, T + dT], stored
// at stamps and linear in between.
class ReconstructionDomain {
 public:
  ReconstructionDomain() = default;
  ReconstructionDomain(std::vector<double> stamps, std::vector<double> lower, std::vector<double> upper, double T,
                       double dT);

  double horizon_start() const { return T_; }  // T
  double horizon() const { return dT_; }       // dT
  double t_end() const { return T_ + dT_; }
  const std::vector<double>& stamps() const { return stamps_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  std::pair<double, double> bounds(double t) const;
  bool contains(double t, double x) const;

  struct Box {
    double t_lo, t_hi, x_lo, x_hi;
  };
  Box bounding_box() const;

 private:
  std::vector<double> stamps_, lower_, upper_;
  double T_ = 0.0, dT_ = 0.0;
};

inline constexpr int kExtrapolationWindow = 10;

// Probes before their first sample are held at their entry position. After T
// each probe continues at its average velocity over its last ten samples.
// Bounds are clipped to [x_min, x_max].
ReconstructionDomain reconstruction_domain(const std::vector<Trajectory>& tracks, double T, double dT, double x_min,
                                           double x_max);

// Velocity used to continue a track past its last sample.
double trailing_velocity(const Trajectory& track);

using Estimate = std::function<double(double t, double x)>;

struct L2Result {
  double rms = 0.0;       // sqrt(mean |rho - rho_hat|^2) over domain nodes
  double integral = 0.0;  // sqrt(sum |rho - rho_hat|^2 dx dt)
  std::size_t nodes = 0;
  std::size_t missing = 0;  // domain nodes without ground truth
};

L2Result l2_error(const DensityField& truth, const Estimate& estimate, const ReconstructionDomain& domain);

// Rasterize an estimate onto a grid, clamped to [0, 1].
DensityField rasterize(const Estimate& estimate, const SpaceTimeGrid& grid);

// PGM (P2): 256 gray levels, rho = 0 white, rho = 1 black, one row per time
// slice starting at t_min; missing cells are white.
void write_pgm(const std::string& path, const DensityField& field);

// Writes <prefix>.csv and <prefix>.pgm; returns the written paths.
std::vector<std::string> export_heatmap(const DensityField& field, const std::string& prefix);
std::vector<std::string> export_heatmap(const Estimate& estimate, const SpaceTimeGrid& grid, const std::string& prefix);

void write_domain_csv(const std::string& path, const ReconstructionDomain& domain);
ReconstructionDomain read_domain_csv(const std::string& path, double T, double dT);

}  // namespace pvrecon
