#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "pvrecon/eval.hpp"
#include "test_util.hpp"

using namespace pvrecon;

namespace {

Trajectory line(double x0, double v, double t1, double dt = 0.1) {
  Trajectory tr;
  for (int k = 0; k * dt <= t1 + 1e-12; ++k) {
    tr.t.push_back(k * dt);
    tr.x.push_back(x0 + v * k * dt);
  }
  return tr;
}

// Probes parked at both ends: the domain is the whole strip.
ReconstructionDomain full_strip(double T, double dT = 0.0) {
  return reconstruction_domain({line(0.0, 0.0, T), line(1.0, 0.0, T)}, T, dT, 0.0, 1.0);
}

DensityField field_of(const SpaceTimeGrid& g, const Estimate& f) {
  DensityField out(g, 0.0);
  for (int i = 0; i < g.nt(); ++i)
    for (int j = 0; j < g.nx(); ++j) out.set(i, j, f(g.t(i), g.x(j)));
  return out;
}

}  // namespace

TEST_CASE("domain between two probes with a prediction horizon") {
  const auto d = reconstruction_domain({line(0.0, 0.5, 1.0), line(0.2, 0.5, 1.0)}, 1.0, 0.5, 0.0, 2.0);
  CHECK(d.horizon_start() == 1.0);
  CHECK(d.horizon() == 0.5);
  CHECK(d.t_end() == 1.5);
  CHECK(d.bounds(0.5).first == doctest::Approx(0.25));
  CHECK(d.bounds(0.5).second == doctest::Approx(0.45));
  CHECK(d.bounds(1.4).first == doctest::Approx(0.7));
  CHECK(d.bounds(1.4).second == doctest::Approx(0.9));
  CHECK(d.contains(0.5, 0.3));
  CHECK_FALSE(d.contains(0.5, 0.5));
  CHECK_FALSE(d.contains(1.6, 0.8));
  const auto box = d.bounding_box();
  CHECK(box.t_hi == 1.5);
  CHECK(box.x_hi == doctest::Approx(0.95));
}

TEST_CASE("domain bounds are clipped to the road") {
  const auto d = reconstruction_domain({line(0.0, 0.5, 1.0), line(0.5, 0.5, 1.0)}, 1.0, 1.0, 0.0, 1.0);
  CHECK(d.bounds(2.0).second == 1.0);
  CHECK(d.bounds(2.0).first == 1.0);
  CHECK(error_of([] { reconstruction_domain({line(0, 0.5, 1)}, 1.0, 0.5, 0.0, 1.0); }) == ErrorCode::Domain);
  CHECK(error_of([] { reconstruction_domain({line(0, 0.5, 1), line(0.1, 0.5, 1)}, 0.0, 0.5, 0.0, 1.0); }) ==
        ErrorCode::Config);
}

TEST_CASE("trailing velocity averages the last ten samples") {
  Trajectory tr;
  for (int k = 0; k <= 20; ++k) {
    tr.t.push_back(0.1 * k);
    tr.x.push_back(k <= 10 ? 0.0 : 0.03 * (k - 10));  // at rest, then 0.3
  }
  CHECK(trailing_velocity(tr) == doctest::Approx(0.3));
  Trajectory two;
  two.t = {0.0, 1.0};
  two.x = {0.0, 0.4};
  CHECK(trailing_velocity(two) == doctest::Approx(0.4));
  two.t.pop_back();
  two.x.pop_back();
  CHECK(trailing_velocity(two) == 0.0);
}

TEST_CASE("l2 error examples") {
  const SpaceTimeGrid g(0, 1, 21, 0, 1, 11);
  const DensityField truth = field_of(g, [](double t, double x) { return 0.3 + 0.2 * t * x; });
  const auto domain = full_strip(1.0);
  const L2Result same = l2_error(truth, [](double t, double x) { return 0.3 + 0.2 * t * x; }, domain);
  CHECK(same.rms == 0.0);
  CHECK(same.nodes == 21u * 11u);
  const L2Result off = l2_error(truth, [](double t, double x) { return 0.4 + 0.2 * t * x; }, domain);
  CHECK(off.rms == doctest::Approx(0.1));
  CHECK(off.integral == doctest::Approx(0.1 * std::sqrt(231 * g.dx() * g.dt())));
}

TEST_CASE("l2 error is a pseudometric over estimates") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const SpaceTimeGrid g(0, 1, 31, 0, 1, 21);
  const auto domain = full_strip(1.0);
  auto random_estimate = [&] {
    const double a = u(rng), b = u(rng), c = u(rng);
    return Estimate([a, b, c](double t, double x) { return 0.3 + 0.4 * a + 0.25 * b * std::sin(3 * x + c * t); });
  };
  for (int k = 0; k < 30; ++k) {
    const Estimate e1 = random_estimate(), e2 = random_estimate(), e3 = random_estimate();
    const DensityField f1 = field_of(g, e1), f2 = field_of(g, e2);
    const double d12 = l2_error(f1, e2, domain).rms, d21 = l2_error(f2, e1, domain).rms;
    const double d13 = l2_error(f1, e3, domain).rms, d23 = l2_error(f2, e3, domain).rms;
    CHECK(l2_error(f1, e1, domain).rms == 0.0);
    CHECK(d12 >= 0.0);
    CHECK(d12 == doctest::Approx(d21).epsilon(1e-12));
    CHECK(d12 <= d13 + d23 + 1e-12);
  }
}

TEST_CASE("node sum approximates the continuous integral") {
  const SpaceTimeGrid g(0, 1, 401, 0, 1, 401);
  const DensityField zero(g, 0.0);
  const double pi = std::numbers::pi;
  const L2Result r = l2_error(zero, [pi](double t, double x) { return std::sin(pi * x) * t; }, full_strip(1.0));
  CHECK(r.integral == doctest::Approx(std::sqrt(1.0 / 6.0)).epsilon(0.01));
}

TEST_CASE("a longer horizon covers more nodes") {
  const SpaceTimeGrid g(0, 2, 41, 0, 2, 41);
  const DensityField truth(g, 0.3);
  std::size_t prev = 0;
  for (double dT : {0.0, 0.25, 0.5, 1.0}) {
    const auto d = reconstruction_domain({line(0.0, 0.5, 1.0), line(0.3, 0.5, 1.0)}, 1.0, dT, 0.0, 2.0);
    const std::size_t nodes = l2_error(truth, [](double, double) { return 0.3; }, d).nodes;
    CHECK(nodes > prev);
    prev = nodes;
  }
}

TEST_CASE("missing truth is skipped and counted") {
  const SpaceTimeGrid g(0, 1, 11, 0, 1, 11);
  DensityField truth(g, 0.5);
  truth.set_missing(3, 4);
  truth.set_missing(5, 5);
  const L2Result r = l2_error(truth, [](double, double) { return 0.5; }, full_strip(1.0));
  CHECK(r.missing == 2);
  CHECK(r.nodes == 119);
  DensityField empty(g, 0.5);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) empty.set_missing(i, j);
  CHECK(error_of([&] { l2_error(empty, [](double, double) { return 0.5; }, full_strip(1.0)); }) ==
        ErrorCode::EmptyInput);
}

TEST_CASE("heatmaps map free road to white and jam to black") {
  const SpaceTimeGrid g(0, 1, 3, 0, 1, 2);
  DensityField f(g, 0.0);
  f.set(0, 1, 1.0);
  f.set(1, 0, 0.5);
  f.set_missing(1, 2);
  const std::string dir = scratch_dir("eval_pgm");
  const auto paths = export_heatmap(f, dir + "/h");
  REQUIRE(paths.size() == 2);
  std::ifstream in(paths[1]);
  std::string magic;
  int w, h, max;
  in >> magic >> w >> h >> max;
  CHECK(magic == "P2");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(max == 255);
  std::vector<int> px(6);
  for (int& p : px) in >> p;
  CHECK(px == std::vector<int>{255, 0, 255, 128, 255, 255});

  const DensityField r = rasterize([](double, double x) { return 2.0 * x - 0.5; }, g);
  CHECK(r.at(0, 0) == 0.0);
  CHECK(r.at(0, 1) == 0.5);
  CHECK(r.at(0, 2) == 1.0);
}

TEST_CASE("domain CSV lists stamps with bounds") {
  const auto d = reconstruction_domain({line(0.0, 0.5, 1.0), line(0.2, 0.5, 1.0)}, 1.0, 0.5, 0.0, 2.0);
  const std::string path = scratch_dir("eval_domain") + "/d.csv";
  write_domain_csv(path, d);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x_low,x_high");
  std::size_t rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  CHECK(rows == d.stamps().size());
  const ReconstructionDomain back = read_domain_csv(path, 1.0, 0.5);
  CHECK(back.stamps() == d.stamps());
  CHECK(back.lower() == d.lower());
  CHECK(back.upper() == d.upper());
}
