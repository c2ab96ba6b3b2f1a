#include "pvrecon/pinn.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

void TrainingConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::Config, what); };
  if (!(mu >= 0.0 && mu <= 1.0)) bad("mu must lie in [0, 1]");
  if (n_phy < 1) bad("n_phy must be at least 1");
  if (iterations < 1) bad("iteration count must be at least 1");
  if (!(learning_rate > 0.0)) bad("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad("moment decays must lie in [0, 1)");
  if (!(epsilon > 0.0)) bad("epsilon must be positive");
  if (!(horizon >= 0.0)) bad("prediction horizon must be non-negative");
}

double physics_residual(const NetworkParameters& params, const NetworkSpec& spec, const VelocityModel& model,
                        double gamma, double t, double x) {
  if (!model.differentiable()) fail(ErrorCode::Unsupported, "physics residual needs a differentiable velocity model");
  const Jet j = derivatives(params, spec, t, x);
  const VelocityJet v = model.jet(std::clamp(j.value, 0.0, 1.0));
  return j.d_a + (v.v + j.value * v.dv) * j.d_b - gamma * j.d_bb;
}

Eigen::MatrixXd latin_hypercube(int n, const ReconstructionDomain::Box& box, std::uint64_t seed) {
  if (n < 1) fail(ErrorCode::Config, "latin hypercube needs at least one point");
  if (!(box.t_hi > box.t_lo) || !(box.x_hi > box.x_lo)) fail(ErrorCode::Domain, "latin hypercube box is degenerate");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd pts(2, n);
  const double lo[2] = {box.t_lo, box.x_lo};
  const double hi[2] = {box.t_hi, box.x_hi};
  std::vector<int> bins(n);
  for (int d = 0; d < 2; ++d) {
    std::iota(bins.begin(), bins.end(), 0);
    for (int k = n - 1; k > 0; --k) {
      std::uniform_int_distribution<int> pick(0, k);
      std::swap(bins[k], bins[pick(rng)]);
    }
    const double width = (hi[d] - lo[d]) / n;
    for (int k = 0; k < n; ++k) {
      // Keep the draw strictly inside its bin so boundaries never double-count.
      const double u = std::clamp(unit(rng), 1e-12, 1.0 - 1e-12);
      pts(d, k) = lo[d] + (bins[k] + u) * width;
    }
  }
  return pts;
}

namespace {

void dataset_points(const ProbeDataset& dataset, Eigen::MatrixXd& points, Eigen::RowVectorXd& rho) {
  const auto n = static_cast<Eigen::Index>(dataset.size());
  if (n == 0) fail(ErrorCode::EmptyInput, "estimation cost needs at least one measurement");
  points.resize(2, n);
  rho.resize(n);
  Eigen::Index k = 0;
  for (const auto& p : dataset.probes)
    for (const auto& s : p.samples) {
      points(0, k) = s.t;
      points(1, k) = s.x;
      rho[k] = s.rho;
      ++k;
    }
}

}  // namespace

double estimation_cost(const NetworkParameters& params, const NetworkSpec& spec, const ProbeDataset& dataset) {
  Eigen::MatrixXd pts;
  Eigen::RowVectorXd rho;
  dataset_points(dataset, pts, rho);
  const Eigen::RowVectorXd est = forward_batch(params, spec, pts);
  return (est - rho).squaredNorm() / static_cast<double>(rho.size());
}

double physics_cost(const NetworkParameters& params, const NetworkSpec& spec, const VelocityModel& model,
                    double gamma, const Eigen::MatrixXd& points) {
  if (points.cols() == 0) fail(ErrorCode::EmptyInput, "physics cost needs at least one collocation point");
  if (!model.differentiable()) fail(ErrorCode::Unsupported, "physics residual needs a differentiable velocity model");
  JetTape tape;
  jet_forward(spec, params, points, JetOrder::Second, tape);
  Eigen::RowVectorXd v, dv, d2v;
  const Eigen::RowVectorXd rho = tape.out(0);
  model.jet_batch(rho, v, dv, d2v);
  const Eigen::RowVectorXd g = v.array() + rho.array() * dv.array();
  const Eigen::RowVectorXd f =
      tape.out(1).array() + g.array() * tape.out(2).array() - gamma * tape.out(3).array();
  return f.squaredNorm() / static_cast<double>(points.cols());
}

double total_cost(double j_est, double j_phy, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) {
    std::ostringstream os;
    os << "mu = " << mu << " outside [0, 1]";
    fail(ErrorCode::Config, os.str());
  }
  return mu * j_est + (1.0 - mu) * j_phy;
}

CostModel::CostModel(const NetworkSpec& spec, const ProbeDataset& dataset, const VelocityModel& model, double gamma,
                     Eigen::MatrixXd collocation, double mu)
    : spec_(spec), model_(&model), gamma_(gamma), mu_(mu), collocation_(std::move(collocation)) {
  spec_.validate();
  if (spec_.input_dim() != 2) fail(ErrorCode::Config, "the estimator takes (t, x) inputs");
  if (!model.differentiable()) fail(ErrorCode::Unsupported, "physics residual needs a differentiable velocity model");
  if (!(mu >= 0.0 && mu <= 1.0)) fail(ErrorCode::Config, "mu must lie in [0, 1]");
  if (collocation_.cols() == 0) fail(ErrorCode::EmptyInput, "physics cost needs at least one collocation point");
  dataset_points(dataset, data_points_, data_rho_);
}

LossRecord CostModel::evaluate(const NetworkParameters& params, NetworkParameters& grad) {
  if (!grad.matches(spec_)) grad = NetworkParameters::zeros(spec_);
  grad.set_zero();
  return run(params, &grad);
}

LossRecord CostModel::costs(const NetworkParameters& params) { return run(params, nullptr); }

LossRecord CostModel::run(const NetworkParameters& params, NetworkParameters* grad) {
  LossRecord out;

  jet_forward(spec_, params, data_points_, JetOrder::Value, data_tape_);
  const Eigen::RowVectorXd r = data_tape_.out(0) - data_rho_;
  const double n_est = static_cast<double>(r.size());
  out.j_est = r.squaredNorm() / n_est;
  if (grad && mu_ > 0.0) {
    const Eigen::RowVectorXd bar = (2.0 * mu_ / n_est) * r;
    jet_backward(spec_, params, data_tape_, {&bar, nullptr, nullptr, nullptr}, *grad);
  }

  jet_forward(spec_, params, collocation_, JetOrder::Second, phy_tape_);
  const Eigen::RowVectorXd rho = phy_tape_.out(0);
  const auto rho_t = phy_tape_.out(1).array();
  const auto rho_x = phy_tape_.out(2).array();
  const auto rho_xx = phy_tape_.out(3).array();
  model_->jet_batch(rho, v_, dv_, d2v_);
  const Eigen::ArrayXXd speed = v_.array() + rho.array() * dv_.array();         // (rho V)'
  const Eigen::ArrayXXd speed_d = 2.0 * dv_.array() + rho.array() * d2v_.array();  // (rho V)''
  const Eigen::RowVectorXd f = (rho_t + speed * rho_x - gamma_ * rho_xx).matrix();
  const double n_phy = static_cast<double>(f.size());
  out.j_phy = f.squaredNorm() / n_phy;
  if (grad && mu_ < 1.0) {
    const Eigen::ArrayXXd c = (2.0 * (1.0 - mu_) / n_phy) * f.array();
    const Eigen::RowVectorXd bar0 = (c * speed_d * rho_x).matrix();
    const Eigen::RowVectorXd bar1 = c.matrix();
    const Eigen::RowVectorXd bar2 = (c * speed).matrix();
    const Eigen::RowVectorXd bar3 = (-gamma_ * c).matrix();
    jet_backward(spec_, params, phy_tape_, {&bar0, &bar1, &bar2, &bar3}, *grad);
  }
  return out;
}

TrainResult train(const TrainingConfig& config, const NetworkSpec& spec, const ProbeDataset& dataset,
                  const VelocityModel& model, double gamma, const ReconstructionDomain& domain,
                  const TrainObserver& observer) {
  config.validate();
  ModelConstants{gamma}.validate();
  if (dataset.size() == 0) fail(ErrorCode::EmptyInput, "training needs at least one measurement");

  const auto box = domain.bounding_box();
  CostModel cost(spec, dataset, model, gamma, latin_hypercube(config.n_phy, box, config.collocation_seed), config.mu);

  TrainResult result;
  result.params = NetworkParameters::glorot(spec, config.init_seed);
  result.history.reserve(config.iterations);
  NetworkParameters grad = NetworkParameters::zeros(spec);
  NetworkParameters m = NetworkParameters::zeros(spec);
  NetworkParameters v = NetworkParameters::zeros(spec);
  double b1t = 1.0, b2t = 1.0;

  auto adam = [&](auto& theta, const auto& g, auto& m1, auto& m2, double step) {
    m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
    m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseProduct(g);
    theta.array() -= step * m1.array() / (m2.array().sqrt() + config.epsilon * std::sqrt(1.0 - b2t));
  };

  for (int it = 0; it < config.iterations; ++it) {
    const LossRecord rec = cost.evaluate(result.params, grad);
    if (!std::isfinite(rec.j_est) || !std::isfinite(rec.j_phy) || !grad.all_finite()) {
      std::ostringstream os;
      os << "training diverged at iteration " << it;
      fail(ErrorCode::Divergence, os.str());
    }
    result.history.push_back(rec);
    if (observer) observer(it, rec);

    b1t *= config.beta1;
    b2t *= config.beta2;
    // Bias-corrected step folded into the learning rate.
    const double step = config.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    for (std::size_t l = 0; l < result.params.weights.size(); ++l) {
      adam(result.params.weights[l], grad.weights[l], m.weights[l], v.weights[l], step);
      adam(result.params.biases[l], grad.biases[l], m.biases[l], v.biases[l], step);
    }
  }
  result.final_costs = cost.costs(result.params);
  if (!std::isfinite(result.final_costs.j_est) || !std::isfinite(result.final_costs.j_phy))
    fail(ErrorCode::Divergence, "training diverged after the final update");
  return result;
}

void write_loss_history_csv(const std::string& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << std::setprecision(9) << "iter,j_est,j_phy\n";
  for (std::size_t k = 0; k < history.size(); ++k) out << k << ',' << history[k].j_est << ',' << history[k].j_phy << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace pvrecon
