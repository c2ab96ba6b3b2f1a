#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "pvrecon/core.hpp"

namespace pvrecon {

struct ConstantLeader {
  double speed = 1.0;
};

// speeds[k] applies on [switch_times[k-1], switch_times[k]); one more speed than switch times.
struct PiecewiseLeader {
  std::vector<double> switch_times;
  std::vector<double> speeds;
};

struct SinusoidalLeader {
  double mean = 0.5;
  double amplitude = 0.2;
  double period = 1.0;
};

using LeaderProfile = std::variant<ConstantLeader, PiecewiseLeader, SinusoidalLeader>;

double leader_speed(const LeaderProfile& leader, double t);
void validate_leader(const LeaderProfile& leader);

// Follower positions x_1 < ... < x_n followed by the leader x_{n+1}.
struct Platoon {
  std::vector<double> positions;
  double vehicle_length = 0.01;
  LeaderProfile leader = ConstantLeader{};

  int followers() const { return static_cast<int>(positions.size()) - 1; }
  double mass() const { return followers() * vehicle_length; }
  void validate() const;
};

// n followers placed so the local densities are cell averages of `rho` on
// [x_start, x_end]; l_n = (integral of rho) / n.
Platoon platoon_from_profile(const std::function<double(double)>& rho, double x_start, double x_end, int n,
                             LeaderProfile leader);

// rho_i = l_n / (x_{i+1} - x_i).
std::vector<double> local_density(const Platoon& platoon);
std::vector<double> local_density(std::span<const double> positions, double vehicle_length);

Platoon step_fl1(const Platoon& platoon, const VelocityModel& model, double t, double dt);

// Largest step keeping every follower's displacement below 0.1 of its free gap.
double guarded_dt(const Platoon& platoon, const VelocityModel& model);

struct TrajectorySet {
  std::vector<double> times;
  std::vector<std::vector<double>> positions;  // per stamp, per vehicle (leader last)
  double vehicle_length = 0.01;
  std::vector<std::vector<double>> speeds;  // optional, same layout as positions

  int vehicles() const { return positions.empty() ? 0 : static_cast<int>(positions.front().size()); }
  std::vector<double> densities_at(std::size_t stamp) const;
  // Positions linearly interpolated in time, clamped to the recorded range.
  std::vector<double> positions_at(double t) const;
  void validate() const;
};

struct MicroRunStats {
  long steps = 0;
  long guarded_substeps = 0;  // extra substeps forced by the spacing guard
};

// Integrates to T; stamps every `output_period`. Internal steps never exceed
// dt and are subdivided when the spacing guard requires it.
TrajectorySet run_fl1(const Platoon& platoon, const VelocityModel& model, double T, double dt, double output_period,
                      MicroRunStats* stats = nullptr);

struct EmpiricalField {
  DensityField field;
  double kernel_width = 0.0;
};

// Staircase density between consecutive vehicles smoothed in x by a Gaussian
// of standard deviation kernel_width (renormalized over the platoon); cells
// outside [x_1, x_{n+1}] are marked missing.
EmpiricalField empirical_density_field(const TrajectorySet& trajectories, const SpaceTimeGrid& grid,
                                       double kernel_width);

// CSV `t,vehicle_id,x` (plus `v` when speeds are present).
void write_trajectories_csv(const std::string& path, const TrajectorySet& trajectories);
TrajectorySet read_trajectories_csv(const std::string& path, double vehicle_length);

}  // namespace pvrecon
