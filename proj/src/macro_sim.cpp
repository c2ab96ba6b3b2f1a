#include "pvrecon/macro_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

double initial_density(const InitialCondition& ic, double x) {
  struct Visitor {
    double x;
    double operator()(const StepProfile& p) const {
      if (p.levels.empty() || p.edges.size() + 1 != p.levels.size())
        fail(ErrorCode::Config, "step profile needs one more level than edges");
      double rho = p.levels.front();
      for (std::size_t k = 0; k < p.edges.size(); ++k) {
        const double jump = p.levels[k + 1] - p.levels[k];
        const double h = p.smoothing > 0.0 ? 0.5 * (1.0 + std::tanh((x - p.edges[k]) / p.smoothing))
                                           : (x >= p.edges[k] ? 1.0 : 0.0);
        rho += jump * h;
      }
      return rho;
    }
    double operator()(const GaussianBump& g) const {
      const double z = (x - g.center) / g.width;
      return g.base + g.amplitude * std::exp(-0.5 * z * z);
    }
    double operator()(const Sinusoid& s) const {
      return s.mean + s.amplitude * std::sin(2.0 * std::numbers::pi * x / s.wavelength + s.phase);
    }
    double operator()(const CustomProfile& c) const { return c.rho(x); }
  };
  return std::visit(Visitor{x}, ic);
}

double Boundary::at(double t) const {
  if (amplitude == 0.0) return value;
  return value + amplitude * std::sin(2.0 * std::numbers::pi * t / period);
}

void MacroScenario::validate() const {
  constants.validate();
  for (int j = 0; j < grid.nx(); ++j) {
    const double rho = initial_density(initial, grid.x(j));
    if (!(rho >= 0.0 && rho <= 1.0)) {
      std::ostringstream os;
      os << "initial density " << rho << " at x=" << grid.x(j) << " outside [0, 1]";
      fail(ErrorCode::Config, os.str());
    }
  }
  if ((left.kind == Boundary::Kind::Periodic) != (right.kind == Boundary::Kind::Periodic))
    fail(ErrorCode::Config, "periodic boundaries must be set on both ends");
  for (const Boundary* b : {&left, &right}) {
    if (b->kind != Boundary::Kind::Dirichlet) continue;
    const double lo = b->value - std::abs(b->amplitude), hi = b->value + std::abs(b->amplitude);
    if (!(lo >= 0.0 && hi <= 1.0)) fail(ErrorCode::Config, "Dirichlet boundary density outside [0, 1]");
    if (b->amplitude != 0.0 && !(b->period > 0.0)) fail(ErrorCode::Config, "boundary period must be positive");
  }
}

GodunovFlux::GodunovFlux(const VelocityModel& model) : model_(&model) {
  if (const auto* g = model.greenshields()) {
    rho_crit_ = 0.5;
    q_max_ = 0.25 * g->v_free;
    return;
  }
  constexpr int kScan = 129;
  int best = 0;
  double best_q = -1.0;
  for (int k = 0; k < kScan; ++k) {
    const double q = model.flux(static_cast<double>(k) / (kScan - 1));
    if (q > best_q) {
      best_q = q;
      best = k;
    }
  }
  double a = std::max(0, best - 1) / static_cast<double>(kScan - 1);
  double b = std::min(kScan - 1, best + 1) / static_cast<double>(kScan - 1);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double qc = model.flux(c), qd = model.flux(d);
  while (b - a > 1e-12) {
    if (qc > qd) {
      b = d;
      d = c;
      qd = qc;
      c = b - ratio * (b - a);
      qc = model.flux(c);
    } else {
      a = c;
      c = d;
      qc = qd;
      d = a + ratio * (b - a);
      qd = model.flux(d);
    }
  }
  rho_crit_ = 0.5 * (a + b);
  q_max_ = std::max(best_q, model.flux(rho_crit_));
}

double GodunovFlux::operator()(double rho_left, double rho_right) const {
  const double demand = rho_left < rho_crit_ ? model_->flux(rho_left) : q_max_;
  const double supply = rho_right > rho_crit_ ? model_->flux(rho_right) : q_max_;
  return std::min(demand, supply);
}

double max_characteristic_speed(const VelocityModel& model) {
  if (const auto* g = model.greenshields()) return g->v_free;
  constexpr int kSamples = 2001;
  double best = 0.0;
  if (model.differentiable()) {
    for (int k = 0; k < kSamples; ++k) {
      const double rho = static_cast<double>(k) / (kSamples - 1);
      const auto j = model.jet(rho);
      best = std::max(best, std::abs(j.v + rho * j.dv));
    }
  } else {
    double prev = model.flux(0.0);
    for (int k = 1; k < kSamples; ++k) {
      const double rho = static_cast<double>(k) / (kSamples - 1);
      const double q = model.flux(rho);
      best = std::max(best, std::abs(q - prev) * (kSamples - 1));
      prev = q;
    }
  }
  return best;
}

double stable_dt(const SpaceTimeGrid& grid, const VelocityModel& model, const ModelConstants& constants) {
  constants.validate();
  const double dx = grid.dx();
  const double rate = max_characteristic_speed(model) / dx + 2.0 * constants.gamma / (dx * dx);
  if (!(rate > 0.0)) fail(ErrorCode::Config, "scenario has neither advection nor diffusion");
  return kStabilitySafety / rate;
}

MacroSolver::MacroSolver(const MacroScenario& scenario)
    : scenario_(&scenario), flux_(scenario.model), max_dt_(stable_dt(scenario.grid, scenario.model, scenario.constants)) {
  scenario.validate();
}

void MacroSolver::step(std::span<const double> state, double dt, double t, std::vector<double>& next,
                       StepStats& stats) const {
  const auto& sc = *scenario_;
  const int n = sc.grid.nx();
  if (static_cast<int>(state.size()) != n) fail(ErrorCode::Config, "state length does not match the grid");
  if (!(dt > 0.0) || dt > max_dt_ * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "time step " << dt << " exceeds the stability bound " << max_dt_;
    fail(ErrorCode::Config, os.str());
  }
  auto ghost = [&](const Boundary& b, double edge, double wrap) {
    switch (b.kind) {
      case Boundary::Kind::Periodic: return wrap;
      case Boundary::Kind::Dirichlet: return b.at(t);
      case Boundary::Kind::ZeroGradient: return edge;
    }
    return edge;
  };
  const double gl = ghost(sc.left, state[0], state[n - 1]);
  const double gr = ghost(sc.right, state[n - 1], state[0]);
  auto at = [&](int j) { return j < 0 ? gl : (j >= n ? gr : state[j]); };

  const double dx = sc.grid.dx();
  const double lam = dt / dx;
  const double mu = sc.constants.gamma * dt / (dx * dx);
  next.resize(n);
  // Interface fluxes F_{j-1/2} for j = 0..n.
  double f_left = flux_(at(-1), at(0));
  for (int j = 0; j < n; ++j) {
    const double f_right = flux_(at(j), at(j + 1));
    const double rho = state[j] - lam * (f_right - f_left) + mu * (at(j + 1) - 2.0 * state[j] + at(j - 1));
    if (rho < 0.0 || rho > 1.0 || !std::isfinite(rho)) {
      ++stats.clamped;
      next[j] = std::isfinite(rho) ? std::clamp(rho, 0.0, 1.0) : 0.0;
    } else {
      next[j] = rho;
    }
    f_left = f_right;
  }
}

double MacroSolver::mass(std::span<const double> state) const {
  double m = 0.0;
  for (double v : state) m += v;
  return m * scenario_->grid.dx();
}

std::vector<double> step(std::span<const double> state, const MacroScenario& scenario, double dt, double t,
                         StepStats* stats) {
  MacroSolver solver(scenario);
  std::vector<double> next;
  StepStats local;
  solver.step(state, dt, t, next, stats ? *stats : local);
  return next;
}

MacroResult run(const MacroScenario& scenario) {
  MacroSolver solver(scenario);
  const auto& g = scenario.grid;
  const long substeps = std::max(1L, static_cast<long>(std::ceil(g.dt() / solver.max_dt() - 1e-12)));
  const double dt = g.dt() / substeps;

  MacroResult result;
  result.field = DensityField(g, 0.0);
  result.internal_dt = dt;
  std::vector<double> state(g.nx()), next;
  for (int j = 0; j < g.nx(); ++j) state[j] = initial_density(scenario.initial, g.x(j));
  result.field.set_row(0, state);

  StepStats stats;
  for (int i = 1; i < g.nt(); ++i) {
    const double t0 = g.t(i - 1);
    for (long k = 0; k < substeps; ++k) {
      solver.step(state, dt, t0 + k * dt, next, stats);
      state.swap(next);
      ++result.steps;
    }
    result.field.set_row(i, state);
  }
  result.clamped = stats.clamped;
  return result;
}

}  // namespace pvrecon
