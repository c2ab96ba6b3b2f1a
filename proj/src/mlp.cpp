#include "pvrecon/mlp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

namespace {

enum class Act { Tanh, Sigmoid, Softplus, Identity };

Act layer_activation(const NetworkSpec& spec, int layer) {
  if (layer + 1 < spec.layer_count()) return Act::Tanh;
  switch (spec.output) {
    case OutputActivation::Sigmoid: return Act::Sigmoid;
    case OutputActivation::Softplus: return Act::Softplus;
    case OutputActivation::Identity: return Act::Identity;
  }
  return Act::Identity;
}

double act_value(Act act, double a) {
  switch (act) {
    case Act::Tanh: return std::tanh(a);
    case Act::Sigmoid: return 1.0 / (1.0 + std::exp(-a));
    case Act::Softplus: return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a)));
    case Act::Identity: return a;
  }
  return a;
}

// Elementwise value and first three derivatives of the activation.
struct ActEval {
  Eigen::ArrayXXd s, d1, d2, d3;
};

void eval_activation(Act act, const Eigen::MatrixXd& pre, bool need_d3, ActEval& out) {
  const auto a = pre.array();
  switch (act) {
    case Act::Tanh: {
      // exp-based tanh: Eigen vectorizes exp but not tanh for doubles.
      const Eigen::ArrayXXd e = (-2.0 * a.abs()).exp();
      out.s = (1.0 - e) / (1.0 + e) * a.sign();
      out.d1 = 1.0 - out.s.square();
      out.d2 = -2.0 * out.s * out.d1;
      if (need_d3) out.d3 = out.d1 * (6.0 * out.s.square() - 2.0);
      break;
    }
    case Act::Sigmoid: {
      out.s = 1.0 / (1.0 + (-a).exp());
      out.d1 = out.s * (1.0 - out.s);
      out.d2 = out.d1 * (1.0 - 2.0 * out.s);
      if (need_d3) out.d3 = out.d1 * (1.0 - 6.0 * out.s + 6.0 * out.s.square());
      break;
    }
    case Act::Softplus: {
      out.s = a.max(0.0) + (-a.abs()).exp().log1p();
      Eigen::ArrayXXd sig = 1.0 / (1.0 + (-a).exp());
      out.d1 = sig;
      out.d2 = sig * (1.0 - sig);
      if (need_d3) out.d3 = out.d2 * (1.0 - 2.0 * sig);
      break;
    }
    case Act::Identity: {
      out.s = a;
      out.d1 = Eigen::ArrayXXd::Ones(a.rows(), a.cols());
      out.d2 = Eigen::ArrayXXd::Zero(a.rows(), a.cols());
      if (need_d3) out.d3 = Eigen::ArrayXXd::Zero(a.rows(), a.cols());
      break;
    }
  }
}

// Derivatives recovered from the stored activation value where possible.
void activation_derivatives(Act act, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post, bool need_d3,
                            ActEval& out) {
  const auto y = post.array();
  switch (act) {
    case Act::Tanh:
      out.d1 = 1.0 - y.square();
      out.d2 = -2.0 * y * out.d1;
      if (need_d3) out.d3 = out.d1 * (6.0 * y.square() - 2.0);
      return;
    case Act::Sigmoid:
      out.d1 = y * (1.0 - y);
      out.d2 = out.d1 * (1.0 - 2.0 * y);
      if (need_d3) out.d3 = out.d1 * (1.0 - 6.0 * y + 6.0 * y.square());
      return;
    default:
      eval_activation(act, pre, need_d3, out);
  }
}

double input_scale(const NetworkSpec& spec, int k) { return 2.0 / (spec.input_hi[k] - spec.input_lo[k]); }

}  // namespace

const char* output_activation_name(OutputActivation a) noexcept {
  switch (a) {
    case OutputActivation::Sigmoid: return "sigmoid";
    case OutputActivation::Softplus: return "softplus";
    case OutputActivation::Identity: return "identity";
  }
  return "identity";
}

OutputActivation parse_output_activation(const std::string& name) {
  if (name == "sigmoid") return OutputActivation::Sigmoid;
  if (name == "softplus") return OutputActivation::Softplus;
  if (name == "identity") return OutputActivation::Identity;
  fail(ErrorCode::Parse, "unknown output activation '" + name + "'");
}

void NetworkSpec::validate() const {
  if (widths.size() < 3) fail(ErrorCode::Config, "network needs at least one hidden layer");
  for (int w : widths)
    if (w < 1) fail(ErrorCode::Config, "network layer widths must be positive");
  if (widths.back() != 1) fail(ErrorCode::Config, "network output width must be 1");
  if (widths.front() != 1 && widths.front() != 2) fail(ErrorCode::Config, "network input width must be 1 or 2");
  if (static_cast<int>(input_lo.size()) != input_dim() || static_cast<int>(input_hi.size()) != input_dim())
    fail(ErrorCode::Config, "normalization box does not match the input width");
  for (int k = 0; k < input_dim(); ++k)
    if (!(input_hi[k] > input_lo[k])) fail(ErrorCode::Config, "normalization box must have positive extent");
}

NetworkSpec NetworkSpec::estimator(int hidden_layers, int hidden_width, double t_lo, double t_hi, double x_lo,
                                   double x_hi) {
  NetworkSpec spec;
  spec.widths.push_back(2);
  for (int i = 0; i < hidden_layers; ++i) spec.widths.push_back(hidden_width);
  spec.widths.push_back(1);
  spec.output = OutputActivation::Sigmoid;
  spec.input_lo = {t_lo, x_lo};
  spec.input_hi = {t_hi, x_hi};
  spec.validate();
  return spec;
}

NetworkParameters NetworkParameters::zeros(const NetworkSpec& spec) {
  spec.validate();
  NetworkParameters p;
  for (int l = 0; l < spec.layer_count(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(spec.widths[l + 1], spec.widths[l]));
    p.biases.push_back(Eigen::VectorXd::Zero(spec.widths[l + 1]));
  }
  return p;
}

NetworkParameters NetworkParameters::glorot(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParameters p = zeros(spec);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < spec.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / (spec.widths[l] + spec.widths[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto& w = p.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
  }
  return p;
}

Eigen::Index NetworkParameters::size() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Eigen::VectorXd NetworkParameters::flatten() const {
  Eigen::VectorXd flat(size());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat[k++] = w(r, c);
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) flat[k++] = biases[l][r];
  }
  return flat;
}

void NetworkParameters::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != size()) fail(ErrorCode::Config, "flat parameter vector has the wrong length");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) biases[l][r] = flat[k++];
  }
}

bool NetworkParameters::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  return true;
}

bool NetworkParameters::matches(const NetworkSpec& spec) const {
  if (static_cast<int>(weights.size()) != spec.layer_count() || biases.size() != weights.size()) return false;
  for (int l = 0; l < spec.layer_count(); ++l) {
    if (weights[l].rows() != spec.widths[l + 1] || weights[l].cols() != spec.widths[l]) return false;
    if (biases[l].size() != spec.widths[l + 1]) return false;
  }
  return true;
}

NetworkParameters& NetworkParameters::operator+=(const NetworkParameters& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

void NetworkParameters::set_zero() {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].setZero();
    biases[l].setZero();
  }
}

void jet_forward(const NetworkSpec& spec, const NetworkParameters& params, const InputBatch& inputs,
                 JetOrder order, JetTape& tape) {
  const int dim = spec.input_dim();
  if (inputs.rows() != dim) fail(ErrorCode::Domain, "input batch has the wrong number of rows");
  if (!inputs.allFinite()) fail(ErrorCode::Domain, "network input is not finite");
  const Eigen::Index n = inputs.cols();
  const int layers = spec.layer_count();
  const int streams = order == JetOrder::Second ? 4 : 1;

  tape.order = order;
  tape.dir_a = 0;
  tape.dir_b = dim == 2 ? 1 : 0;

  tape.input[0].resize(dim, n);
  for (int k = 0; k < dim; ++k)
    tape.input[0].row(k) = (inputs.row(k).array() - spec.input_lo[k]) * input_scale(spec, k) - 1.0;
  if (streams == 4) {
    tape.input[1] = Eigen::MatrixXd::Zero(dim, n);
    tape.input[1].row(tape.dir_a).setConstant(input_scale(spec, tape.dir_a));
    tape.input[2] = Eigen::MatrixXd::Zero(dim, n);
    tape.input[2].row(tape.dir_b).setConstant(input_scale(spec, tape.dir_b));
    tape.input[3] = Eigen::MatrixXd::Zero(dim, n);
  }
  for (int s = 0; s < 4; ++s) {
    tape.pre[s].resize(s < streams ? layers : 0);
    tape.post[s].resize(s < streams ? layers : 0);
  }

  ActEval act;
  for (int l = 0; l < layers; ++l) {
    const auto& w = params.weights[l];
    auto y = [&](int s) -> const Eigen::MatrixXd& { return l == 0 ? tape.input[s] : tape.post[s][l - 1]; };
    tape.pre[0][l].noalias() = w * y(0);
    tape.pre[0][l].colwise() += params.biases[l];
    eval_activation(layer_activation(spec, l), tape.pre[0][l], false, act);
    tape.post[0][l] = act.s.matrix();
    if (streams == 4) {
      for (int s = 1; s < 4; ++s) tape.pre[s][l].noalias() = w * y(s);
      const auto p2 = tape.pre[2][l].array();
      tape.post[1][l] = (act.d1 * tape.pre[1][l].array()).matrix();
      tape.post[2][l] = (act.d1 * p2).matrix();
      tape.post[3][l] = (act.d2 * p2.square() + act.d1 * tape.pre[3][l].array()).matrix();
    }
  }
}

void jet_backward(const NetworkSpec& spec, const NetworkParameters& params, const JetTape& tape,
                  const std::array<const Eigen::RowVectorXd*, 4>& out_adjoint, NetworkParameters& grad) {
  const int layers = spec.layer_count();
  const bool second = tape.order == JetOrder::Second;
  const Eigen::Index n = tape.input[0].cols();

  std::array<Eigen::MatrixXd, 4> ybar;
  std::array<bool, 4> live{};
  for (int s = 0; s < 4; ++s) {
    if (out_adjoint[s] != nullptr && out_adjoint[s]->size() > 0) {
      if (s > 0 && !second) fail(ErrorCode::Unsupported, "derivative adjoints require a second-order tape");
      if (out_adjoint[s]->size() != n) fail(ErrorCode::Domain, "adjoint length does not match the batch");
      ybar[s] = *out_adjoint[s];
      live[s] = true;
    }
  }
  for (int s = 0; s < 4; ++s)
    if (!live[s] && (s == 0 || second)) {
      ybar[s] = Eigen::MatrixXd::Zero(1, n);
      live[s] = true;
    }

  ActEval act;
  std::array<Eigen::MatrixXd, 4> abar;
  for (int l = layers - 1; l >= 0; --l) {
    const auto& w = params.weights[l];
    auto y = [&](int s) -> const Eigen::MatrixXd& { return l == 0 ? tape.input[s] : tape.post[s][l - 1]; };
    const Act a = layer_activation(spec, l);
    if (second && a == Act::Tanh) {
      // Fused loop for the hidden layers, which dominate the cost.
      const Eigen::Index size = tape.pre[0][l].size();
      for (int s = 0; s < 4; ++s) abar[s].resize(tape.pre[0][l].rows(), n);
      const double* yv = tape.post[0][l].data();
      const double *p1 = tape.pre[1][l].data(), *p2 = tape.pre[2][l].data(), *p3 = tape.pre[3][l].data();
      const double *b0 = ybar[0].data(), *b1 = ybar[1].data(), *b2 = ybar[2].data(), *b3 = ybar[3].data();
      double *a0 = abar[0].data(), *a1 = abar[1].data(), *a2 = abar[2].data(), *a3 = abar[3].data();
      for (Eigen::Index k = 0; k < size; ++k) {
        const double yk = yv[k];
        const double d1 = 1.0 - yk * yk;
        const double d2 = -2.0 * yk * d1;
        const double d3 = d1 * (6.0 * yk * yk - 2.0);
        a1[k] = d1 * b1[k];
        a2[k] = d1 * b2[k] + 2.0 * d2 * p2[k] * b3[k];
        a3[k] = d1 * b3[k];
        a0[k] = d1 * b0[k] + d2 * (p1[k] * b1[k] + p2[k] * b2[k] + p3[k] * b3[k]) + d3 * p2[k] * p2[k] * b3[k];
      }
    } else if (second) {
      activation_derivatives(a, tape.pre[0][l], tape.post[0][l], true, act);
      const auto p1 = tape.pre[1][l].array();
      const auto p2 = tape.pre[2][l].array();
      const auto p3 = tape.pre[3][l].array();
      const auto y0 = ybar[0].array();
      const auto y1 = ybar[1].array();
      const auto y2 = ybar[2].array();
      const auto y3 = ybar[3].array();
      abar[1] = (act.d1 * y1).matrix();
      abar[2] = (act.d1 * y2 + 2.0 * act.d2 * p2 * y3).matrix();
      abar[3] = (act.d1 * y3).matrix();
      abar[0] = (act.d1 * y0 + act.d2 * (p1 * y1 + p2 * y2 + p3 * y3) + act.d3 * p2.square() * y3).matrix();
    } else {
      activation_derivatives(a, tape.pre[0][l], tape.post[0][l], false, act);
      abar[0] = (act.d1 * ybar[0].array()).matrix();
    }

    const int streams = second ? 4 : 1;
    for (int s = 0; s < streams; ++s) grad.weights[l].noalias() += abar[s] * y(s).transpose();
    grad.biases[l] += abar[0].rowwise().sum();
    if (l > 0)
      for (int s = 0; s < streams; ++s) ybar[s].noalias() = w.transpose() * abar[s];
  }
}

double forward(const NetworkParameters& params, const NetworkSpec& spec, std::span<const double> input) {
  if (static_cast<int>(input.size()) != spec.input_dim()) fail(ErrorCode::Domain, "wrong number of network inputs");
  Eigen::VectorXd y(spec.input_dim());
  for (int k = 0; k < spec.input_dim(); ++k) {
    if (!std::isfinite(input[k])) fail(ErrorCode::Domain, "network input is not finite");
    y[k] = (input[k] - spec.input_lo[k]) * input_scale(spec, k) - 1.0;
  }
  for (int l = 0; l < spec.layer_count(); ++l) {
    Eigen::VectorXd a = params.weights[l] * y + params.biases[l];
    const Act act = layer_activation(spec, l);
    y = a.unaryExpr([act](double v) { return act_value(act, v); });
  }
  return y[0];
}

double forward(const NetworkParameters& params, const NetworkSpec& spec, double t, double x) {
  const double in[2] = {t, x};
  return forward(params, spec, std::span<const double>(in, 2));
}

Eigen::RowVectorXd forward_batch(const NetworkParameters& params, const NetworkSpec& spec,
                                 const InputBatch& inputs) {
  JetTape tape;
  jet_forward(spec, params, inputs, JetOrder::Value, tape);
  return tape.out(0);
}

Jet derivatives(const NetworkParameters& params, const NetworkSpec& spec, double t, double x) {
  InputBatch in(2, 1);
  in << t, x;
  JetTape tape;
  jet_forward(spec, params, in, JetOrder::Second, tape);
  return Jet{tape.out(0)(0, 0), tape.out(1)(0, 0), tape.out(2)(0, 0), tape.out(3)(0, 0)};
}

std::string serialize_network(const NetworkSpec& spec, const NetworkParameters& params, const std::string& tag) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "pvrecon-network 1\n";
  os << "tag " << tag << "\n";
  os << "widths";
  for (int w : spec.widths) os << ' ' << w;
  os << "\nhidden tanh\noutput " << output_activation_name(spec.output) << "\ninput_lo";
  for (double v : spec.input_lo) os << ' ' << v;
  os << "\ninput_hi";
  for (double v : spec.input_hi) os << ' ' << v;
  const Eigen::VectorXd flat = params.flatten();
  os << "\nparameters " << flat.size() << "\n";
  for (Eigen::Index k = 0; k < flat.size(); ++k) os << flat[k] << "\n";
  return os.str();
}

void save_network(const std::string& path, const NetworkSpec& spec, const NetworkParameters& params,
                  const std::string& tag) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << serialize_network(spec, params, tag);
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

LoadedNetwork parse_network(const std::string& text) {
  std::istringstream in(text);
  auto expect = [&](const std::string& key) {
    std::string word;
    if (!(in >> word) || word != key) fail(ErrorCode::Parse, "network file: expected '" + key + "'");
  };
  auto rest_of_line = [&]() {
    std::string line;
    std::getline(in, line);
    return std::istringstream(line);
  };
  LoadedNetwork net;
  expect("pvrecon-network");
  int version = 0;
  if (!(in >> version) || version != 1) fail(ErrorCode::Parse, "network file: unsupported version");
  expect("tag");
  in >> net.tag;
  expect("widths");
  {
    auto ls = rest_of_line();
    int w;
    while (ls >> w) net.spec.widths.push_back(w);
  }
  expect("hidden");
  std::string hidden;
  in >> hidden;
  if (hidden != "tanh") fail(ErrorCode::Parse, "network file: unsupported hidden activation '" + hidden + "'");
  expect("output");
  std::string output;
  in >> output;
  net.spec.output = parse_output_activation(output);
  expect("input_lo");
  {
    auto ls = rest_of_line();
    double v;
    while (ls >> v) net.spec.input_lo.push_back(v);
  }
  expect("input_hi");
  {
    auto ls = rest_of_line();
    double v;
    while (ls >> v) net.spec.input_hi.push_back(v);
  }
  net.spec.validate();
  expect("parameters");
  Eigen::Index count = 0;
  in >> count;
  net.params = NetworkParameters::zeros(net.spec);
  if (count != net.params.size()) fail(ErrorCode::Parse, "network file: parameter count does not match widths");
  Eigen::VectorXd flat(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    std::string tok;
    if (!(in >> tok)) fail(ErrorCode::Parse, "network file: truncated parameter list");
    flat[k] = std::stod(tok);
  }
  net.params.assign(flat);
  if (!net.params.all_finite()) fail(ErrorCode::Parse, "network file: non-finite parameter");
  return net;
}

LoadedNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

}  // namespace pvrecon
