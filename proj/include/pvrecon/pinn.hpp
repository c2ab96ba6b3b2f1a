#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pvrecon/core.hpp"
#include "pvrecon/eval.hpp"
#include "pvrecon/mlp.hpp"
#include "pvrecon/probe.hpp"

namespace pvrecon {

struct TrainingConfig {
  double mu = 0.5;
  int n_phy = 2000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int iterations = 20000;
  std::uint64_t init_seed = 1;
  std::uint64_t collocation_seed = 2;
  double horizon = 0.0;  // prediction horizon dT

  void validate() const;
};

// rho_t + (V(rho) + rho V'(rho)) rho_x - gamma rho_xx of the network output.
double physics_residual(const NetworkParameters& params, const NetworkSpec& spec, const VelocityModel& model,
                        double gamma, double t, double x);

// n points in the box, one per bin in each dimension (2 x n; row 0 = t, row 1 = x).
Eigen::MatrixXd latin_hypercube(int n, const ReconstructionDomain::Box& box, std::uint64_t seed);

double estimation_cost(const NetworkParameters& params, const NetworkSpec& spec, const ProbeDataset& dataset);
double physics_cost(const NetworkParameters& params, const NetworkSpec& spec, const VelocityModel& model,
                    double gamma, const Eigen::MatrixXd& points);
double total_cost(double j_est, double j_phy, double mu);

struct LossRecord {
  double j_est = 0.0;
  double j_phy = 0.0;
};

// Costs and their exact parameter gradient for a fixed dataset and
// collocation set. Buffers are reused between evaluations.
class CostModel {
 public:
  CostModel(const NetworkSpec& spec, const ProbeDataset& dataset, const VelocityModel& model, double gamma,
            Eigen::MatrixXd collocation, double mu);

  // Returns (J_est, J_phy); writes dJ/dTheta of mu J_est + (1 - mu) J_phy into grad.
  LossRecord evaluate(const NetworkParameters& params, NetworkParameters& grad);
  LossRecord costs(const NetworkParameters& params);
  double mu() const { return mu_; }
  const Eigen::MatrixXd& collocation() const { return collocation_; }

 private:
  LossRecord run(const NetworkParameters& params, NetworkParameters* grad);

  NetworkSpec spec_;
  const VelocityModel* model_;
  double gamma_;
  double mu_;
  Eigen::MatrixXd data_points_;
  Eigen::RowVectorXd data_rho_;
  Eigen::MatrixXd collocation_;
  JetTape data_tape_, phy_tape_;
  Eigen::RowVectorXd v_, dv_, d2v_;
};

struct TrainResult {
  NetworkParameters params;
  std::vector<LossRecord> history;  // costs at the start of every iteration
  LossRecord final_costs;
};

using TrainObserver = std::function<void(int iteration, const LossRecord&)>;

// Glorot initialisation from init_seed, Latin hypercube collocation over the
// domain's bounding box from collocation_seed, full-batch Adam on
// mu J_est + (1 - mu) J_phy.
TrainResult train(const TrainingConfig& config, const NetworkSpec& spec, const ProbeDataset& dataset,
                  const VelocityModel& model, double gamma, const ReconstructionDomain& domain,
                  const TrainObserver& observer = {});

void write_loss_history_csv(const std::string& path, const std::vector<LossRecord>& history);

}  // namespace pvrecon
