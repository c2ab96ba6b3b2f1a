#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pvrecon/eval.hpp"
#include "pvrecon/pinn.hpp"
#include "test_util.hpp"

using namespace pvrecon;

namespace {

ProbeDataset toy_dataset(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProbeDataset ds;
  for (int p = 0; p < 2; ++p) {
    ProbeTrack tr;
    tr.id = p;
    for (int k = 0; k < n / 2; ++k) tr.samples.push_back({0.1 * k + 0.01 * p, u(rng), 0.2 + 0.6 * u(rng)});
    ds.probes.push_back(tr);
  }
  return ds;
}

ReconstructionDomain unit_domain() {
  return ReconstructionDomain({0.0, 1.0}, {0.0, 0.0}, {1.0, 1.0}, 1.0, 0.0);
}

double total(CostModel& cost, const NetworkParameters& p) {
  const LossRecord r = cost.costs(p);
  return total_cost(r.j_est, r.j_phy, cost.mu());
}

}  // namespace

TEST_CASE("latin hypercube places exactly one point per bin in each dimension") {
  const ReconstructionDomain::Box box{0.5, 2.5, -1.0, 3.0};
  for (int n : {1, 2, 7, 50, 333}) {
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
      const Eigen::MatrixXd pts = latin_hypercube(n, box, seed);
      REQUIRE(pts.cols() == n);
      const double lo[2] = {box.t_lo, box.x_lo};
      const double hi[2] = {box.t_hi, box.x_hi};
      for (int d = 0; d < 2; ++d) {
        std::vector<int> count(n, 0);
        for (int k = 0; k < n; ++k) {
          const double u = (pts(d, k) - lo[d]) / (hi[d] - lo[d]) * n;
          const int bin = static_cast<int>(std::floor(u));
          REQUIRE(bin >= 0);
          REQUIRE(bin < n);
          ++count[bin];
        }
        CHECK(std::all_of(count.begin(), count.end(), [](int c) { return c == 1; }));
      }
    }
  }
  CHECK(latin_hypercube(40, box, 5) == latin_hypercube(40, box, 5));
  CHECK(error_of([&] { latin_hypercube(10, {0, 0, 0, 1}, 1); }) == ErrorCode::Domain);
}

TEST_CASE("total cost is exactly linear in mu") {
  const double je = 0.37, jp = 0.011;
  CHECK(total_cost(je, jp, 0.0) == jp);
  CHECK(total_cost(je, jp, 1.0) == je);
  for (double mu : {0.1, 0.25, 0.5, 0.9}) CHECK(total_cost(je, jp, mu) == doctest::Approx(mu * je + (1 - mu) * jp));
  const double a = total_cost(je, jp, 0.2), b = total_cost(je, jp, 0.4), c = total_cost(je, jp, 0.6);
  CHECK(b - a == doctest::Approx(c - b).epsilon(1e-14));
  CHECK(error_of([] { total_cost(1, 1, 1.5); }) == ErrorCode::Config);
}

TEST_CASE("physics cost is the mean squared pointwise residual") {
  const auto spec = NetworkSpec::estimator(2, 6, 0, 1, 0, 1);
  const auto p = NetworkParameters::glorot(spec, 3);
  const VelocityModel g(Greenshields{1.0});
  const Eigen::MatrixXd pts = latin_hypercube(30, {0, 1, 0, 1}, 4);
  double sum = 0.0;
  for (int k = 0; k < 30; ++k) {
    const double f = physics_residual(p, spec, g, 0.05, pts(0, k), pts(1, k));
    sum += f * f;
  }
  CHECK(physics_cost(p, spec, g, 0.05, pts) == doctest::Approx(sum / 30).epsilon(1e-12));

  const ProbeDataset ds = toy_dataset(10, 2);
  double se = 0.0;
  for (const auto& tr : ds.probes)
    for (const auto& s : tr.samples) se += std::pow(forward(p, spec, s.t, s.x) - s.rho, 2);
  CHECK(estimation_cost(p, spec, ds) == doctest::Approx(se / 10).epsilon(1e-12));
  CHECK(error_of([&] {
          physics_cost(p, spec, VelocityModel(TabulatedVelocity{{{0, 1}, {1, 0}}}), 0.05, pts);
        }) == ErrorCode::Unsupported);
}

TEST_CASE("parameter gradient matches central differences") {
  const auto spec = NetworkSpec::estimator(2, 5, 0.0, 1.0, 0.0, 1.0);
  NetworkParameters p = NetworkParameters::glorot(spec, 12);
  // Non-zero biases so every parameter influences the cost.
  for (auto& b : p.biases) b.setConstant(0.1);
  const ProbeDataset ds = toy_dataset(20, 5);
  const VelocityModel model(Greenshields{1.0});
  {
    for (double mu : {0.0, 0.5, 1.0}) {
      CostModel cost(spec, ds, model, 0.05, latin_hypercube(50, {0, 1, 0, 1}, 6), mu);
      NetworkParameters grad;
      cost.evaluate(p, grad);
      const Eigen::VectorXd g = grad.flatten();
      const Eigen::VectorXd theta = p.flatten();
      std::mt19937_64 rng(31);
      std::uniform_int_distribution<Eigen::Index> pick(0, theta.size() - 1);
      for (int k = 0; k < 20; ++k) {
        const Eigen::Index i = pick(rng);
        const double h = 1e-6;
        NetworkParameters q = p;
        Eigen::VectorXd th = theta;
        th[i] += h;
        q.assign(th);
        const double up = total(cost, q);
        th[i] -= 2 * h;
        q.assign(th);
        const double down = total(cost, q);
        const double fd = (up - down) / (2 * h);
        CAPTURE(mu);
        CAPTURE(i);
        CHECK(std::abs(g[i] - fd) <= 1e-4 * std::max(std::abs(fd), 1e-6));
      }
    }
  }
}

TEST_CASE("training with mu = 1 overfits ten measurements") {
  const auto spec = NetworkSpec::estimator(2, 10, 0.0, 1.0, 0.0, 1.0);
  const ProbeDataset ds = toy_dataset(10, 9);
  TrainingConfig cfg;
  cfg.mu = 1.0;
  cfg.iterations = 2000;
  cfg.n_phy = 50;
  cfg.learning_rate = 1e-2;
  const TrainResult r = train(cfg, spec, ds, VelocityModel(Greenshields{1.0}), 0.05, unit_domain());
  REQUIRE(r.history.size() == 2000u);
  CHECK(r.final_costs.j_est <= r.history.front().j_est / 100.0);
}

TEST_CASE("training is deterministic and records every iteration") {
  const auto spec = NetworkSpec::estimator(2, 6, 0.0, 1.0, 0.0, 1.0);
  const ProbeDataset ds = toy_dataset(12, 10);
  TrainingConfig cfg;
  cfg.iterations = 50;
  cfg.n_phy = 64;
  const VelocityModel g(Greenshields{1.0});
  int calls = 0;
  const TrainResult a = train(cfg, spec, ds, g, 0.05, unit_domain(), [&](int, const LossRecord&) { ++calls; });
  const TrainResult b = train(cfg, spec, ds, g, 0.05, unit_domain());
  CHECK(calls == 50);
  CHECK(a.history.size() == 50u);
  CHECK(a.params.flatten() == b.params.flatten());
  CHECK(a.final_costs.j_est == b.final_costs.j_est);
  cfg.init_seed = 99;
  const TrainResult c = train(cfg, spec, ds, g, 0.05, unit_domain());
  CHECK(c.params.flatten() != a.params.flatten());
}

TEST_CASE("training configuration is validated") {
  const auto spec = NetworkSpec::estimator(1, 3, 0.0, 1.0, 0.0, 1.0);
  const ProbeDataset ds = toy_dataset(4, 1);
  const VelocityModel g(Greenshields{1.0});
  TrainingConfig cfg;
  cfg.mu = 1.2;
  CHECK(error_of([&] { train(cfg, spec, ds, g, 0.05, unit_domain()); }) == ErrorCode::Config);
  cfg.mu = 0.5;
  cfg.learning_rate = 0.0;
  CHECK(error_of([&] { train(cfg, spec, ds, g, 0.05, unit_domain()); }) == ErrorCode::Config);
  cfg.learning_rate = 1e-3;
  CHECK(error_of([&] { train(cfg, spec, ProbeDataset{}, g, 0.05, unit_domain()); }) == ErrorCode::EmptyInput);
}

TEST_CASE("a non-finite loss is reported as divergence") {
  const auto spec = NetworkSpec::estimator(1, 3, 0.0, 1.0, 0.0, 1.0);
  const ProbeDataset ds = toy_dataset(6, 1);
  TrainingConfig cfg;
  cfg.iterations = 20;
  cfg.n_phy = 10;
  cfg.learning_rate = 1.0;
  ProbeDataset bad = ds;
  bad.probes[0].samples[0].rho = std::numeric_limits<double>::infinity();
  const ErrorCode code = error_of([&] { train(cfg, spec, bad, VelocityModel(Greenshields{1.0}), 0.05, unit_domain()); });
  CHECK(code == ErrorCode::Divergence);
}
