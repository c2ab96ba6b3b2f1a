#pragma once

// Fully connected tanh network with a bounded output map.
//
// Besides the plain forward pass, the network propagates a second-order jet
// (value, d/da, d/db, d2/db2) through every layer, where a and b are two raw
// input directions. For the space-time estimator a = t and b = x; for the
// one-dimensional velocity network both directions are the density. The
// backward pass is the exact adjoint of that jet propagation, so parameter
// gradients of costs that depend on input derivatives come out in one sweep.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pvrecon {

enum class OutputActivation { Sigmoid, Softplus, Identity };

const char* output_activation_name(OutputActivation a) noexcept;
OutputActivation parse_output_activation(const std::string& name);

struct NetworkSpec {
  std::vector<int> widths;  // input, hidden..., output
  OutputActivation output = OutputActivation::Sigmoid;
  // Affine map sending [input_lo, input_hi] to [-1, 1] per input.
  std::vector<double> input_lo;
  std::vector<double> input_hi;

  int input_dim() const { return widths.front(); }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  void validate() const;

  static NetworkSpec estimator(int hidden_layers, int hidden_width, double t_lo, double t_hi,
                               double x_lo, double x_hi);
};

struct NetworkParameters {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static NetworkParameters zeros(const NetworkSpec& spec);
  // Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
  static NetworkParameters glorot(const NetworkSpec& spec, std::uint64_t seed);

  Eigen::Index size() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  bool all_finite() const;
  bool matches(const NetworkSpec& spec) const;

  NetworkParameters& operator+=(const NetworkParameters& other);
  void set_zero();
};

struct Jet {
  double value = 0.0;
  double d_a = 0.0;
  double d_b = 0.0;
  double d_bb = 0.0;
};

// Column-major batch of raw inputs (input_dim x N).
using InputBatch = Eigen::MatrixXd;

enum class JetOrder { Value, Second };

// Buffers for a batched forward pass; reused across iterations.
struct JetTape {
  JetOrder order = JetOrder::Value;
  int dir_a = 0;
  int dir_b = 0;
  std::array<Eigen::MatrixXd, 4> input;  // normalized inputs and their direction streams
  std::vector<Eigen::MatrixXd> pre[4];   // per layer pre-activations per stream
  std::vector<Eigen::MatrixXd> post[4];  // per layer activations per stream

  // Output streams, 1 x N each.
  const Eigen::MatrixXd& out(int stream) const { return post[stream].back(); }
};

// Directions default to (t, x) for two inputs and (rho, rho) for one.
void jet_forward(const NetworkSpec& spec, const NetworkParameters& params, const InputBatch& inputs,
                 JetOrder order, JetTape& tape);

// Adjoints of the output streams (1 x N each; unused streams may be empty)
// are pulled back onto the parameters and accumulated into grad.
void jet_backward(const NetworkSpec& spec, const NetworkParameters& params, const JetTape& tape,
                  const std::array<const Eigen::RowVectorXd*, 4>& out_adjoint, NetworkParameters& grad);

double forward(const NetworkParameters& params, const NetworkSpec& spec, std::span<const double> input);
double forward(const NetworkParameters& params, const NetworkSpec& spec, double t, double x);
Eigen::RowVectorXd forward_batch(const NetworkParameters& params, const NetworkSpec& spec,
                                 const InputBatch& inputs);

// (rho, rho_t, rho_x, rho_xx) with respect to raw inputs.
Jet derivatives(const NetworkParameters& params, const NetworkSpec& spec, double t, double x);

// Versioned flat text format: header lines, then one parameter per line.
void save_network(const std::string& path, const NetworkSpec& spec, const NetworkParameters& params,
                  const std::string& tag = "estimator");
std::string serialize_network(const NetworkSpec& spec, const NetworkParameters& params,
                              const std::string& tag = "estimator");
struct LoadedNetwork {
  std::string tag;
  NetworkSpec spec;
  NetworkParameters params;
};
LoadedNetwork parse_network(const std::string& text);
LoadedNetwork load_network(const std::string& path);

}  // namespace pvrecon
