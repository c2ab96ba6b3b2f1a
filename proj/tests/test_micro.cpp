#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "pvrecon/macro_sim.hpp"
#include "pvrecon/micro_sim.hpp"
#include "test_util.hpp"

using namespace pvrecon;

namespace {

const VelocityModel kGreenshields(Greenshields{1.0});

Platoon random_platoon(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 5 + static_cast<int>(u(rng) * 60);
  Platoon p;
  p.vehicle_length = 0.005;
  p.positions.resize(n + 1);
  double x = 0.0;
  for (int i = 0; i <= n; ++i) {
    p.positions[i] = x;
    x += p.vehicle_length * (1.05 + 8.0 * u(rng));
  }
  if (u(rng) < 0.5)
    p.leader = PiecewiseLeader{{0.2 + 0.3 * u(rng), 0.6 + 0.3 * u(rng)}, {u(rng), 0.0, u(rng)}};
  else
    p.leader = SinusoidalLeader{0.5, 0.4, 0.3 + u(rng)};
  return p;
}

}  // namespace

TEST_CASE("leader profiles") {
  const PiecewiseLeader p{{1.0, 2.0}, {0.8, 0.0, 0.5}};
  CHECK(leader_speed(p, 0.5) == 0.8);
  CHECK(leader_speed(p, 1.0) == 0.0);
  CHECK(leader_speed(p, 1.99) == 0.0);
  CHECK(leader_speed(p, 2.0) == 0.5);
  CHECK(leader_speed(SinusoidalLeader{0.5, 0.2, 1.0}, 0.25) == doctest::Approx(0.7));
  CHECK(error_of([] { validate_leader(PiecewiseLeader{{1.0}, {0.5}}); }) == ErrorCode::Config);
  CHECK(error_of([] { validate_leader(SinusoidalLeader{0.1, 0.2, 1.0}); }) == ErrorCode::Config);
  CHECK(error_of([] { validate_leader(ConstantLeader{-1.0}); }) == ErrorCode::Config);
}

TEST_CASE("local density examples") {
  const std::vector<double> x{0.0, 0.1, 0.3};
  const auto rho = local_density(x, 0.05);
  REQUIRE(rho.size() == 2);
  CHECK(rho[0] == doctest::Approx(0.5));
  CHECK(rho[1] == doctest::Approx(0.25));
  const std::vector<double> bumper{0.0, 0.05};
  CHECK(error_of([&] { local_density(bumper, 0.05); }) == ErrorCode::Collision);
}

TEST_CASE("uniform profile gives an evenly spaced platoon") {
  const Platoon p = platoon_from_profile([](double) { return 0.4; }, 0.0, 1.0, 40, ConstantLeader{0.6});
  CHECK(p.followers() == 40);
  CHECK(p.vehicle_length == doctest::Approx(0.01));
  CHECK(p.mass() == doctest::Approx(0.4));
  for (double r : local_density(p)) CHECK(r == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("profile platoon reproduces cell averages") {
  const auto profile = [](double x) { return 0.2 + 0.5 * x; };
  const Platoon p = platoon_from_profile(profile, 0.0, 1.0, 100, ConstantLeader{});
  const auto rho = local_density(p);
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double a = p.positions[i], b = p.positions[i + 1];
    const double mean = 0.2 + 0.25 * (a + b);
    CHECK(rho[i] == doctest::Approx(mean).epsilon(1e-4));
  }
}

TEST_CASE("FL1 step example") {
  Platoon p;
  p.positions = {0.0, 0.1, 0.3};
  p.vehicle_length = 0.05;
  p.leader = ConstantLeader{1.0};
  const Platoon q = step_fl1(p, kGreenshields, 0.0, 0.01);
  CHECK(q.positions[0] == doctest::Approx(0.005));
  CHECK(q.positions[1] == doctest::Approx(0.1075));
  CHECK(q.positions[2] == doctest::Approx(0.31));
  CHECK(error_of([&] { step_fl1(p, kGreenshields, 0.0, 0.0); }) == ErrorCode::Config);

  // A stopped leader with a follower close behind and a huge step.
  Platoon jam;
  jam.positions = {0.0, 0.06};
  jam.vehicle_length = 0.05;
  jam.leader = ConstantLeader{0.0};
  CHECK(error_of([&] { step_fl1(jam, kGreenshields, 0.0, 1.0); }) == ErrorCode::StepSize);
  CHECK(guarded_dt(jam, kGreenshields) > 0.0);
  CHECK_NOTHROW(step_fl1(jam, kGreenshields, 0.0, guarded_dt(jam, kGreenshields)));
}

TEST_CASE("vehicles never overtake or collide and never reverse") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const Platoon p = random_platoon(rng);
    const VelocityModel& model = k % 2 ? kGreenshields : VelocityModel::nonlinear(1.0, 1.5, 2.0);
    MicroRunStats stats;
    const TrajectorySet traj = run_fl1(p, model, 1.0, 0.01, 0.05, &stats);
    CHECK_NOTHROW(traj.validate());
    CHECK(traj.times.size() == 21);
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
      for (double r : traj.densities_at(s)) {
        CHECK(r > 0.0);
        CHECK(r < 1.0);
      }
      if (s > 0)
        for (int i = 0; i < traj.vehicles(); ++i) CHECK(traj.positions[s][i] >= traj.positions[s - 1][i]);
    }
  }
}

TEST_CASE("equilibrium platoon moves rigidly") {
  Platoon p = platoon_from_profile([](double) { return 0.3; }, 0.0, 0.5, 20, ConstantLeader{0.7});
  const TrajectorySet traj = run_fl1(p, kGreenshields, 1.0, 0.005, 0.1);
  for (int i = 0; i < traj.vehicles(); ++i)
    CHECK(traj.positions.back()[i] - traj.positions.front()[i] == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("run parameters are validated") {
  const Platoon p = platoon_from_profile([](double) { return 0.3; }, 0.0, 0.5, 10, ConstantLeader{0.7});
  CHECK(error_of([&] { run_fl1(p, kGreenshields, 1.0, 0.01, 0.3); }) == ErrorCode::Config);
  CHECK(error_of([&] { run_fl1(p, kGreenshields, -1.0, 0.01, 0.1); }) == ErrorCode::Config);
}

TEST_CASE("empirical field without smoothing is the staircase density") {
  TrajectorySet traj;
  traj.vehicle_length = 0.05;
  traj.times = {0.0, 1.0};
  traj.positions = {{0.0, 0.1, 0.3}, {0.0, 0.1, 0.3}};
  const SpaceTimeGrid g(-0.1, 0.4, 11, 0.0, 1.0, 3);
  const EmpiricalField f = empirical_density_field(traj, g, 0.0);
  CHECK(f.field.missing(0, 0));
  CHECK(f.field.missing(0, 10));
  CHECK(f.field.at(1, 3) == doctest::Approx(0.5));   // x = 0.05
  CHECK(f.field.at(1, 6) == doctest::Approx(0.25));  // x = 0.2
  CHECK(error_of([&] { empirical_density_field(traj, SpaceTimeGrid(0, 1, 5, 0, 2, 3), 0.0); }) ==
        ErrorCode::OutOfDomain);
}

TEST_CASE("smoothing keeps a uniform platoon uniform") {
  const Platoon p = platoon_from_profile([](double) { return 0.45; }, 0.0, 1.0, 50, ConstantLeader{0.55});
  const TrajectorySet traj = run_fl1(p, kGreenshields, 0.5, 0.01, 0.1);
  const EmpiricalField f = empirical_density_field(traj, SpaceTimeGrid(0.0, 1.5, 151, 0.0, 0.5, 6), 0.03);
  for (int i = 0; i < f.field.grid().nt(); ++i)
    for (int j = 0; j < f.field.grid().nx(); ++j)
      if (!f.field.missing(i, j)) CHECK(f.field.at(i, j) == doctest::Approx(0.45).epsilon(1e-6));
}

TEST_CASE("trajectory CSV round trip") {
  const Platoon p = platoon_from_profile([](double x) { return 0.2 + 0.3 * x; }, 0.0, 1.0, 12, ConstantLeader{0.5});
  const TrajectorySet traj = run_fl1(p, kGreenshields, 0.4, 0.01, 0.1);
  const std::string path = scratch_dir("micro_csv") + "/traj.csv";
  write_trajectories_csv(path, traj);
  const TrajectorySet back = read_trajectories_csv(path, traj.vehicle_length);
  REQUIRE(back.times == traj.times);
  CHECK(back.positions == traj.positions);
  CHECK(back.speeds == traj.speeds);
}

TEST_CASE("many-vehicle limit approaches the macroscopic entropy solution") {
  // Tail over vacuum and a shock from 0.2 into 0.6, led at the equilibrium speed of the jam.
  const auto profile = [](double x) { return x < 0.5 ? 0.2 : 0.6; };
  const double T = 0.5;
  MacroScenario macro{SpaceTimeGrid(-1.0, 3.0, 4001, 0.0, T, 2), kGreenshields, ModelConstants{0.0},
                      StepProfile{{0.0, 0.2, 0.6}, {0.0, 0.5}, 0.0}, Boundary::dirichlet(0.0),
                      Boundary::dirichlet(0.6)};
  const DensityField reference = run(macro).field;
  const SpaceTimeGrid window(0.45, 1.15, 141, 0.0, T, 2);

  std::vector<double> errors;
  for (int n : {25, 50, 100, 200, 400}) {
    const Platoon p = platoon_from_profile(profile, 0.0, 1.0, n, ConstantLeader{0.4});
    const TrajectorySet traj = run_fl1(p, kGreenshields, T, 1e-3, T);
    const EmpiricalField f = empirical_density_field(traj, window, 0.0);
    double l1 = 0.0;
    for (int j = 0; j < window.nx(); ++j) {
      REQUIRE_FALSE(f.field.missing(1, j));
      l1 += std::abs(f.field.at(1, j) - sample_density(reference, T, window.x(j))) * window.dx();
    }
    CAPTURE(n);
    CAPTURE(l1);
    if (!errors.empty()) CHECK(l1 < errors.back());
    errors.push_back(l1);
  }
  CHECK(errors.back() <= 0.01);
}
