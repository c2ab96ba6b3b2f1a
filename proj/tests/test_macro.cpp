#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pvrecon/macro_sim.hpp"
#include "test_util.hpp"

using namespace pvrecon;

namespace {

MacroScenario riemann(int nx, double gamma, double t_end = 1.0) {
  return {SpaceTimeGrid(0.0, 1.0, nx, 0.0, t_end, 11), VelocityModel(Greenshields{1.0}), ModelConstants{gamma},
          StepProfile{{0.2, 0.8}, {0.5}, 0.0}, Boundary::dirichlet(0.2), Boundary::dirichlet(0.8)};
}

double wave_error(const MacroScenario& sc, const DensityField& f, const ViscousWave& w) {
  const auto& g = sc.grid;
  const int last = g.nt() - 1;
  double sum = 0.0;
  for (int j = 0; j < g.nx(); ++j) sum += std::pow(f.at(last, j) - w(g.t(last), g.x(j)), 2);
  return std::sqrt(sum / g.nx());
}

double max_gradient(const DensityField& f, int row) {
  double m = 0.0;
  for (int j = 1; j < f.grid().nx(); ++j) m = std::max(m, std::abs(f.at(row, j) - f.at(row, j - 1)) / f.grid().dx());
  return m;
}

}  // namespace

TEST_CASE("wave oracle solves the viscous equation") {
  // Independent check of the closed form by finite differences of the formula.
  const ViscousWave w{0.1, 0.5, 1.0, 0.02, 0.3};
  const double h = 1e-4;
  for (double x : {0.2, 0.28, 0.31, 0.4}) {
    const double t = 0.05;
    const double r = w(t, x);
    const double rt = (w(t + h, x) - w(t - h, x)) / (2 * h);
    const double rx = (w(t, x + h) - w(t, x - h)) / (2 * h);
    const double rxx = (w(t, x + h) - 2 * r + w(t, x - h)) / (h * h);
    CHECK(rt + (1 - 2 * r) * rx - 0.02 * rxx == doctest::Approx(0.0).epsilon(1e-5).scale(1.0));
  }
  CHECK(w(0, -10) == doctest::Approx(0.1));
  CHECK(w(0, 10) == doctest::Approx(0.5));
  CHECK(w.speed() == doctest::Approx(0.4));
}

TEST_CASE("stable_dt examples") {
  const SpaceTimeGrid g(0.0, 1.0, 101, 0.0, 1.0, 11);
  const VelocityModel gs(Greenshields{1.0});
  CHECK(max_characteristic_speed(gs) == doctest::Approx(1.0));
  CHECK(stable_dt(g, gs, ModelConstants{0.0}) <= 0.009 + 1e-15);
  CHECK(stable_dt(g, gs, ModelConstants{0.0}) == doctest::Approx(0.009));
  CHECK(stable_dt(g, gs, ModelConstants{0.05}) <= 0.0009 + 1e-15);
}

TEST_CASE("stable_dt never exceeds either explicit bound") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const int nx = 20 + static_cast<int>(u(rng) * 400);
    const SpaceTimeGrid g(0.0, 0.5 + 2 * u(rng), nx, 0.0, 1.0, 5);
    const double gamma = 0.5 * u(rng);
    VelocityModel m = k % 3 == 0   ? VelocityModel(Greenshields{0.2 + 3 * u(rng)})
                      : k % 3 == 1 ? VelocityModel::nonlinear(0.5 + u(rng), 0.5 + 2 * u(rng), 3 * u(rng))
                                   : VelocityModel(TabulatedVelocity{{{0.0, 1.0}, {u(rng), 0.5}, {1.0, 0.0}}});
    // Direct dense-sampling bound on the characteristic speed.
    double lam = 0.0;
    const int samples = 20000;
    for (int s = 0; s < samples; ++s) {
      const double a = static_cast<double>(s) / samples, b = static_cast<double>(s + 1) / samples;
      lam = std::max(lam, std::abs((m.flux(b) - m.flux(a)) / (b - a)));
    }
    const double dx = g.dx();
    const double dt = stable_dt(g, m, ModelConstants{gamma});
    CHECK(dt <= kStabilitySafety * dx / lam * (1 + 1e-9));
    if (gamma > 0) CHECK(dt <= kStabilitySafety * dx * dx / (2 * gamma));
  }
}

TEST_CASE("uniform periodic state is a fixed point") {
  MacroScenario sc{SpaceTimeGrid(0.0, 1.0, 64, 0.0, 1.0, 5), VelocityModel(Greenshields{1.0}), ModelConstants{0.05},
                   StepProfile{{0.37}, {}, 0.0}, Boundary::periodic(), Boundary::periodic()};
  std::vector<double> state(64, 0.37);
  const double dt = stable_dt(sc.grid, sc.model, sc.constants);
  const auto next = step(state, sc, dt, 0.0);
  for (double v : next) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
  const MacroResult r = run(sc);
  for (int i = 0; i < sc.grid.nt(); ++i)
    for (int j = 0; j < 64; ++j) CHECK(r.field.at(i, j) == doctest::Approx(0.37).epsilon(1e-13));
}

TEST_CASE("empty road with zero inflow stays empty") {
  MacroScenario sc{SpaceTimeGrid(0.0, 1.0, 50, 0.0, 1.0, 5), VelocityModel(Greenshields{1.0}), ModelConstants{0.05},
                   StepProfile{{0.0}, {}, 0.0}, Boundary::dirichlet(0.0), Boundary::zero_gradient()};
  const MacroResult r = run(sc);
  for (double v : r.field.values()) CHECK(v == 0.0);
  CHECK(r.clamped == 0);
}

TEST_CASE("constant field under consistent boundaries") {
  for (const auto& model : {VelocityModel(Greenshields{1.0}), VelocityModel::nonlinear(1.0, 1.5, 2.0)}) {
    MacroScenario sc{SpaceTimeGrid(0.0, 1.0, 40, 0.0, 0.5, 6), model, ModelConstants{0.02},
                     StepProfile{{0.6}, {}, 0.0}, Boundary::dirichlet(0.6), Boundary::zero_gradient()};
    const MacroResult r = run(sc);
    for (double v : r.field.values()) CHECK(v == doctest::Approx(0.6).epsilon(1e-13));
  }
}

TEST_CASE("periodic runs conserve mass") {
  MacroScenario sc{SpaceTimeGrid(0.0, 1.0, 128, 0.0, 1.0, 21), VelocityModel(Greenshields{1.0}), ModelConstants{0.02},
                   Sinusoid{0.5, 0.3, 1.0, 0.0}, Boundary::periodic(), Boundary::periodic()};
  MacroSolver solver(sc);
  std::vector<double> state(128), next;
  for (int j = 0; j < 128; ++j) state[j] = initial_density(sc.initial, sc.grid.x(j));
  StepStats stats;
  const double m0 = solver.mass(state);
  double m = m0;
  for (int k = 0; k < 200; ++k) {
    solver.step(state, solver.max_dt(), k * solver.max_dt(), next, stats);
    CHECK(std::abs(solver.mass(next) - m) <= 1e-12);
    m = solver.mass(next);
    state.swap(next);
  }
  CHECK(stats.clamped == 0);

  const MacroResult r = run(sc);
  REQUIRE(r.clamped == 0);
  const auto first = r.field.row(0), last = r.field.row(sc.grid.nt() - 1);
  const double a = std::accumulate(first.begin(), first.end(), 0.0) * sc.grid.dx();
  const double b = std::accumulate(last.begin(), last.end(), 0.0) * sc.grid.dx();
  CHECK(std::abs(a - b) <= 1e-8);
}

TEST_CASE("density stays in [0, 1] without clamping") {
  Boundary inflow = Boundary::dirichlet(0.3);
  inflow.amplitude = 0.1;
  inflow.period = 0.5;
  const std::vector<MacroScenario> scenarios{
      {SpaceTimeGrid(0.0, 1.0, 201, 0.0, 2.0, 201), VelocityModel(Greenshields{1.0}), ModelConstants{0.05},
       StepProfile{{0.3, 0.7}, {0.5}, 0.02}, inflow, Boundary::zero_gradient()},
      {SpaceTimeGrid(0.0, 1.0, 201, 0.0, 2.0, 201), VelocityModel(Greenshields{1.0}), ModelConstants{0.05},
       StepProfile{{0.2, 0.8, 0.2}, {0.25, 0.55}, 0.02}, Boundary::dirichlet(0.2), Boundary::zero_gradient()},
      {SpaceTimeGrid(0.0, 1.0, 201, 0.0, 1.0, 101), VelocityModel::nonlinear(1.0, 1.5, 2.0), ModelConstants{0.0},
       StepProfile{{0.0, 1.0, 0.0}, {0.3, 0.6}, 0.0}, Boundary::dirichlet(0.0), Boundary::zero_gradient()}};
  for (const auto& sc : scenarios) {
    const MacroResult r = run(sc);
    CHECK(r.clamped == 0);
    for (double v : r.field.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("oversized steps are refused") {
  const MacroScenario sc = riemann(50, 0.01);
  std::vector<double> state(50, 0.5);
  const double dt = stable_dt(sc.grid, sc.model, sc.constants);
  CHECK(error_of([&] { step(state, sc, 1.01 * dt, 0.0); }) == ErrorCode::Config);
}

TEST_CASE("riemann problem converges to the viscous traveling wave under refinement") {
  const ViscousWave w{0.2, 0.8, 1.0, 0.01, 0.5};
  double prev = 1.0;
  std::vector<double> errs;
  for (int nx : {50, 100, 200, 400}) {
    const MacroScenario sc = riemann(nx, 0.01);
    const double e = wave_error(sc, run(sc).field, w);
    CAPTURE(nx);
    CHECK(e < prev);
    errs.push_back(e);
    prev = e;
  }
  CHECK(errs.back() <= 0.02);
  const double order = std::log2(errs[2] / errs[3]);
  CHECK(order >= 0.8);
}

TEST_CASE("shock front moves at the Rankine-Hugoniot speed") {
  const ViscousWave w{0.1, 0.5, 1.0, 0.002, 0.2};
  MacroScenario sc{SpaceTimeGrid(0.0, 1.0, 1001, 0.0, 1.5, 4), VelocityModel(Greenshields{1.0}), ModelConstants{0.002},
                   CustomProfile{[&](double x) { return w(0.0, x); }}, Boundary::dirichlet(0.1),
                   Boundary::zero_gradient()};
  const MacroResult r = run(sc);
  auto front = [&](int row) {
    // Position where the profile crosses the mid density, by linear interpolation.
    const double mid = 0.3;
    for (int j = 1; j < sc.grid.nx(); ++j)
      if (r.field.at(row, j - 1) < mid && r.field.at(row, j) >= mid) {
        const double a = r.field.at(row, j - 1), b = r.field.at(row, j);
        return sc.grid.x(j - 1) + (mid - a) / (b - a) * sc.grid.dx();
      }
    return std::nan("");
  };
  const int last = sc.grid.nt() - 1;
  const double speed = (front(last) - front(0)) / sc.grid.t(last);
  CHECK(speed == doctest::Approx(0.4).epsilon(0.02));
}

TEST_CASE("smaller viscosity sharpens the front") {
  double prev = 0.0;
  for (double gamma : {0.05, 0.02, 0.01}) {
    const MacroScenario sc = riemann(400, gamma, 0.5);
    const MacroResult r = run(sc);
    const double g = max_gradient(r.field, sc.grid.nt() - 1);
    CHECK(g >= prev);
    prev = g;
  }
}

TEST_CASE("godunov flux") {
  const VelocityModel gs(Greenshields{1.0});
  const GodunovFlux f(gs);
  CHECK(f.critical_density() == doctest::Approx(0.5));
  CHECK(f(0.2, 0.2) == doctest::Approx(gs.flux(0.2)));
  CHECK(f(0.2, 0.8) == doctest::Approx(0.16));  // min over [0.2, 0.8]
  CHECK(f(0.8, 0.2) == doctest::Approx(0.25));  // max over [0.2, 0.8]
  CHECK(f(0.1, 0.4) == doctest::Approx(gs.flux(0.1)));
  CHECK(f(0.7, 0.9) == doctest::Approx(gs.flux(0.9)));

  // General flux: compare with brute-force min/max over the interval.
  const VelocityModel nl = VelocityModel::nonlinear(1.0, 1.5, 2.0);
  const GodunovFlux g(nl);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const double a = u(rng), b = u(rng);
    double best = a <= b ? 1e9 : -1e9;
    for (int s = 0; s <= 4000; ++s) {
      const double r = std::min(a, b) + (std::abs(b - a) * s) / 4000;
      best = a <= b ? std::min(best, nl.flux(r)) : std::max(best, nl.flux(r));
    }
    CHECK(g(a, b) == doctest::Approx(best).epsilon(1e-6).scale(1.0));
  }
}
