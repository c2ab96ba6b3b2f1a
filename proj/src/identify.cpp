#include "pvrecon/identify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pvrecon/error.hpp"
#include "pvrecon/mlp.hpp"

namespace pvrecon {

VelocityEstimates estimate_velocities(const ProbeDataset& dataset) {
  VelocityEstimates out;
  for (const auto& p : dataset.probes) {
    const auto& s = p.samples;
    const std::size_t n = s.size();
    if (n < 3) {
      ++out.skipped_probes;
      continue;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t a = k == 0 ? 0 : k - 1;
      const std::size_t b = k + 1 == n ? n - 1 : k + 1;
      const double v = (s[b].x - s[a].x) / (s[b].t - s[a].t);
      if (v < 0.0) {
        ++out.dropped_negative;
        continue;
      }
      out.samples.push_back({s[k].rho, v, p.id, s[k].t});
    }
  }
  return out;
}

void FitConfig::validate() const {
  if (hidden_layers < 1 || hidden_width < 1) fail(ErrorCode::Config, "velocity network needs a hidden layer");
  if (iterations < 1) fail(ErrorCode::Config, "fit iteration count must be at least 1");
  if (!(learning_rate > 0.0)) fail(ErrorCode::Config, "fit learning rate must be positive");
  if (!(monotonicity_weight >= 0.0)) fail(ErrorCode::Config, "monotonicity weight must be non-negative");
  if (monotonicity_points < 2) fail(ErrorCode::Config, "monotonicity grid needs at least two points");
}

FitResult fit_velocity_model(const std::vector<VelocitySample>& samples, const FitConfig& config) {
  config.validate();
  if (samples.size() < 10) fail(ErrorCode::Coverage, "identification needs at least 10 velocity samples");
  double lo = 1.0, hi = 0.0;
  for (const auto& s : samples) {
    lo = std::min(lo, s.rho);
    hi = std::max(hi, s.rho);
  }
  if (hi - lo < 0.2) {
    std::ostringstream os;
    os << "velocity samples span densities [" << lo << ", " << hi << "]; need a range of at least 0.2";
    fail(ErrorCode::Coverage, os.str());
  }

  NetworkSpec spec;
  spec.widths.push_back(1);
  for (int l = 0; l < config.hidden_layers; ++l) spec.widths.push_back(config.hidden_width);
  spec.widths.push_back(1);
  spec.output = OutputActivation::Softplus;
  spec.input_lo = {0.0};
  spec.input_hi = {1.0};
  spec.validate();

  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd data(1, n);
  Eigen::RowVectorXd target(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    data(0, k) = samples[k].rho;
    target[k] = samples[k].v;
  }
  const int m = config.monotonicity_points;
  Eigen::MatrixXd grid(1, m);
  for (int k = 0; k < m; ++k) grid(0, k) = static_cast<double>(k) / (m - 1);

  NetworkParameters params = NetworkParameters::glorot(spec, config.seed);
  NetworkParameters grad = NetworkParameters::zeros(spec);
  Eigen::VectorXd theta = params.flatten(), m1 = Eigen::VectorXd::Zero(theta.size()), m2 = m1;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  JetTape data_tape, grid_tape;
  const Eigen::RowVectorXd gap = 1.0 - data.row(0).array();
  const Eigen::RowVectorXd grid_gap = 1.0 - grid.row(0).array();

  // V = (1 - rho) N, so V' = (1 - rho) N' - N.
  auto loss_and_grad = [&](bool want_grad) {
    grad.set_zero();
    jet_forward(spec, params, data, JetOrder::Value, data_tape);
    const Eigen::RowVectorXd r = gap.cwiseProduct(data_tape.out(0)) - target;
    double loss = r.squaredNorm() / n;
    jet_forward(spec, params, grid, JetOrder::Second, grid_tape);
    const Eigen::RowVectorXd slope =
        (grid_gap.cwiseProduct(grid_tape.out(1)) - grid_tape.out(0)).cwiseMax(0.0);
    loss += config.monotonicity_weight * slope.squaredNorm() / m;
    if (want_grad) {
      const Eigen::RowVectorXd bar_data = (2.0 / n) * r.cwiseProduct(gap);
      jet_backward(spec, params, data_tape, {&bar_data, nullptr, nullptr, nullptr}, grad);
      const Eigen::RowVectorXd bar_slope = (2.0 * config.monotonicity_weight / m) * slope;
      const Eigen::RowVectorXd bar_value = -bar_slope;
      const Eigen::RowVectorXd bar_d1 = bar_slope.cwiseProduct(grid_gap);
      jet_backward(spec, params, grid_tape, {&bar_value, &bar_d1, nullptr, nullptr}, grad);
    }
    return loss;
  };

  for (int it = 0; it < config.iterations; ++it) {
    const double loss = loss_and_grad(true);
    if (!std::isfinite(loss)) fail(ErrorCode::Divergence, "velocity fit diverged at iteration " + std::to_string(it));
    const Eigen::VectorXd g = grad.flatten();
    b1t *= beta1;
    b2t *= beta2;
    m1 = beta1 * m1 + (1 - beta1) * g;
    m2 = beta2 * m2 + (1 - beta2) * g.cwiseProduct(g);
    const double step = config.learning_rate * std::sqrt(1 - b2t) / (1 - b1t);
    theta.array() -= step * m1.array() / (m2.array().sqrt() + eps * std::sqrt(1 - b2t));
    params.assign(theta);
  }

  auto learned = std::make_shared<LearnedVelocity>();
  learned->spec = spec;
  learned->params = params;
  learned->fit_rho_min = lo;
  learned->fit_rho_max = hi;
  FitResult result{VelocityModel(std::shared_ptr<const LearnedVelocity>(learned)), loss_and_grad(false), 0.0, 0.0};
  double prev = result.model.velocity(0.0);
  for (int k = 1; k < m; ++k) {
    const double v = result.model.velocity(static_cast<double>(k) / (m - 1));
    result.max_monotonicity_violation = std::max(result.max_monotonicity_violation, v - prev);
    prev = v;
  }
  result.v_at_one = result.model.velocity(1.0);
  return result;
}

double best_fit_greenshields(const std::vector<VelocitySample>& samples) {
  double num = 0.0, den = 0.0;
  for (const auto& s : samples) {
    num += s.v * (1.0 - s.rho);
    den += (1.0 - s.rho) * (1.0 - s.rho);
  }
  if (!(den > 0.0)) fail(ErrorCode::Coverage, "cannot fit a Greenshields line to these samples");
  return num / den;
}

double velocity_l2_distance(const std::function<double(double)>& a, const std::function<double(double)>& b,
                            double rho_lo, double rho_hi) {
  constexpr int kPoints = 201;
  double sum = 0.0;
  for (int k = 0; k < kPoints; ++k) {
    const double rho = rho_lo + (rho_hi - rho_lo) * k / (kPoints - 1);
    const double d = a(rho) - b(rho);
    sum += d * d;
  }
  return std::sqrt(sum / kPoints);
}

void write_velocity_samples_csv(const std::string& path, const std::vector<VelocitySample>& samples) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << std::setprecision(9) << "probe_id,t,rho,v\n";
  for (const auto& s : samples) out << s.probe_id << ',' << s.t << ',' << s.rho << ',' << s.v << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

void save_velocity_model(const std::string& path, const VelocityModel& model) {
  const auto* lv = model.learned();
  if (!lv) fail(ErrorCode::Unsupported, "only learned velocity models are serialized");
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << serialize_network(lv->spec, lv->params, "velocity-model");
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << "fit_range " << lv->fit_rho_min << ' '
      << lv->fit_rho_max << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

VelocityModel load_velocity_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  auto net = parse_network(text);
  if (net.tag != "velocity-model") fail(ErrorCode::Parse, path + ": not a velocity model file");
  auto lv = std::make_shared<LearnedVelocity>();
  lv->spec = net.spec;
  lv->params = net.params;
  const auto pos = text.find("fit_range ");
  if (pos != std::string::npos) {
    std::istringstream ls(text.substr(pos + 10));
    ls >> lv->fit_rho_min >> lv->fit_rho_max;
  }
  return VelocityModel(std::shared_ptr<const LearnedVelocity>(lv));
}

}  // namespace pvrecon
