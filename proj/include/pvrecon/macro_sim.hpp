#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "pvrecon/core.hpp"

namespace pvrecon {

// Piecewise-constant levels separated at `edges`, each jump smoothed by a
// tanh of half-width `smoothing` (0 keeps the jumps sharp).
struct StepProfile {
  std::vector<double> levels;
  std::vector<double> edges;
  double smoothing = 0.0;
};

struct GaussianBump {
  double base = 0.2;
  double amplitude = 0.5;
  double center = 0.5;
  double width = 0.1;
};

struct Sinusoid {
  double mean = 0.5;
  double amplitude = 0.2;
  double wavelength = 1.0;
  double phase = 0.0;
};

struct CustomProfile {
  std::function<double(double)> rho;
};

using InitialCondition = std::variant<StepProfile, GaussianBump, Sinusoid, CustomProfile>;

double initial_density(const InitialCondition& ic, double x);

struct Boundary {
  enum class Kind { Periodic, Dirichlet, ZeroGradient };
  Kind kind = Kind::ZeroGradient;
  // Dirichlet value(t) = value + amplitude * sin(2 pi t / period).
  double value = 0.0;
  double amplitude = 0.0;
  double period = 1.0;

  double at(double t) const;
  static Boundary periodic() { return {Kind::Periodic}; }
  static Boundary dirichlet(double v) { return {Kind::Dirichlet, v}; }
  static Boundary zero_gradient() { return {Kind::ZeroGradient}; }
};

struct MacroScenario {
  SpaceTimeGrid grid;
  VelocityModel model;
  ModelConstants constants;
  InitialCondition initial;
  Boundary left;
  Boundary right;

  void validate() const;
};

// Supply/demand form of the Godunov flux for a flux function with a single
// interior maximum. The critical density is found once by a 129-point scan
// followed by golden-section refinement.
class GodunovFlux {
 public:
  explicit GodunovFlux(const VelocityModel& model);
  double operator()(double rho_left, double rho_right) const;
  double critical_density() const { return rho_crit_; }
  double capacity() const { return q_max_; }

 private:
  const VelocityModel* model_;
  double rho_crit_ = 0.5;
  double q_max_ = 0.25;
};

// max |(rho V(rho))'| over [0, 1] by dense sampling.
double max_characteristic_speed(const VelocityModel& model);

inline constexpr double kStabilitySafety = 0.9;

// Combined explicit bound safety / (max|lambda|/dx + 2 gamma/dx^2); never
// larger than safety * min(dx/max|lambda|, dx^2/(2 gamma)).
double stable_dt(const SpaceTimeGrid& grid, const VelocityModel& model, const ModelConstants& constants);

struct StepStats {
  std::size_t clamped = 0;
};

// One forward-Euler step of rho_t + (rho V)_x = gamma rho_xx at time t.
std::vector<double> step(std::span<const double> state, const MacroScenario& scenario, double dt, double t,
                         StepStats* stats = nullptr);

struct MacroResult {
  DensityField field;
  double internal_dt = 0.0;
  long steps = 0;
  std::size_t clamped = 0;
};

MacroResult run(const MacroScenario& scenario);

// Solver with the Godunov flux and bounds cached across steps.
class MacroSolver {
 public:
  explicit MacroSolver(const MacroScenario& scenario);
  double max_dt() const { return max_dt_; }
  void step(std::span<const double> state, double dt, double t, std::vector<double>& next, StepStats& stats) const;
  double mass(std::span<const double> state) const;

 private:
  const MacroScenario* scenario_;
  GodunovFlux flux_;
  double max_dt_;
};

}  // namespace pvrecon
