#include "pvrecon/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Domain: return "domain";
    case ErrorCode::OutOfDomain: return "out-of-domain";
    case ErrorCode::Config: return "config";
    case ErrorCode::Collision: return "collision";
    case ErrorCode::StepSize: return "step-size";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Coverage: return "coverage";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

SpaceTimeGrid::SpaceTimeGrid(double x_min, double x_max, int nx, double t_min, double t_max, int nt)
    : x_min_(x_min), x_max_(x_max), t_min_(t_min), t_max_(t_max), nx_(nx), nt_(nt) {
  if (!(x_max > x_min) || !(t_max > t_min)) fail(ErrorCode::Config, "grid extents must be positive");
  if (nx < 2 || nt < 2) fail(ErrorCode::Config, "grid needs at least two nodes per axis");
}

bool SpaceTimeGrid::contains(double t, double x) const {
  // Tolerate round-off on the upper edges.
  const double et = 1e-12 * std::max(1.0, std::abs(t_max_));
  const double ex = 1e-12 * std::max(1.0, std::abs(x_max_));
  return t >= t_min_ - et && t <= t_max_ + et && x >= x_min_ - ex && x <= x_max_ + ex;
}

namespace {

void check_density(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    std::ostringstream os;
    os << "density " << rho << " outside [0, 1]";
    fail(ErrorCode::Domain, os.str());
  }
}

}  // namespace

DensityField::DensityField(const SpaceTimeGrid& grid, double fill)
    : grid_(grid), values_(static_cast<std::size_t>(grid.nx()) * grid.nt(), fill) {
  if (!std::isnan(fill)) check_density(fill);
}

DensityField::DensityField(const SpaceTimeGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(grid.nx()) * grid.nt())
    fail(ErrorCode::Config, "field values do not match the grid size");
  for (double v : values_)
    if (!std::isnan(v)) check_density(v);
}

void DensityField::set(int i, int j, double rho) {
  check_density(rho);
  values_[static_cast<std::size_t>(i) * grid_.nx() + j] = rho;
}

void DensityField::set_missing(int i, int j) {
  values_[static_cast<std::size_t>(i) * grid_.nx() + j] = std::numeric_limits<double>::quiet_NaN();
}

bool DensityField::missing(int i, int j) const { return std::isnan(at(i, j)); }

std::span<const double> DensityField::row(int i) const {
  return {values_.data() + static_cast<std::size_t>(i) * grid_.nx(), static_cast<std::size_t>(grid_.nx())};
}

void DensityField::set_row(int i, std::span<const double> rho) {
  if (static_cast<int>(rho.size()) != grid_.nx()) fail(ErrorCode::Config, "row length does not match the grid");
  for (int j = 0; j < grid_.nx(); ++j) {
    if (std::isnan(rho[j]))
      set_missing(i, j);
    else
      set(i, j, rho[j]);
  }
}

std::size_t DensityField::missing_count() const {
  return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](double v) { return std::isnan(v); }));
}

double sample_density(const DensityField& field, double t, double x) {
  const auto& g = field.grid();
  if (!g.contains(t, x)) {
    std::ostringstream os;
    os << "sample point (t=" << t << ", x=" << x << ") outside the field";
    fail(ErrorCode::OutOfDomain, os.str());
  }
  // Coordinates within 1e-9 cells of a node snap onto it, so queries at
  // x(j), t(i) reproduce the stored values exactly.
  auto cell = [](double raw, int n) {
    const double r = std::round(raw);
    return std::clamp(std::abs(raw - r) < 1e-9 ? r : raw, 0.0, static_cast<double>(n - 1));
  };
  const double ft = cell((t - g.t_min()) / g.dt(), g.nt());
  const double fx = cell((x - g.x_min()) / g.dx(), g.nx());
  const int i = std::min(static_cast<int>(ft), g.nt() - 2);
  const int j = std::min(static_cast<int>(fx), g.nx() - 2);
  const double a = ft - i;
  const double b = fx - j;
  const double v00 = field.at(i, j), v01 = field.at(i, j + 1);
  const double v10 = field.at(i + 1, j), v11 = field.at(i + 1, j + 1);
  // Exact node hits must not touch (possibly missing) neighbours.
  if (a == 0.0 && b == 0.0) return v00;
  if (std::isnan(v00) || std::isnan(v01) || std::isnan(v10) || std::isnan(v11))
    fail(ErrorCode::OutOfDomain, "sample point touches a missing cell");
  const double rho = (1 - a) * ((1 - b) * v00 + b * v01) + a * ((1 - b) * v10 + b * v11);
  return std::clamp(rho, 0.0, 1.0);
}

void write_field_csv(const std::string& path, const DensityField& field) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  // Full round-trip precision so a re-imported field is bit-identical.
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "t,x,rho\n";
  const auto& g = field.grid();
  for (int i = 0; i < g.nt(); ++i)
    for (int j = 0; j < g.nx(); ++j) {
      out << g.t(i) << ',' << g.x(j) << ',';
      if (field.missing(i, j))
        out << "nan";
      else
        out << field.at(i, j);
      out << '\n';
    }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

DensityField read_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,x,rho", 0) != 0)
    fail(ErrorCode::Parse, path + ": expected header 't,x,rho'");
  std::vector<double> ts, xs, values;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
      fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": expected three columns");
    try {
      ts.push_back(std::stod(a));
      xs.push_back(std::stod(b));
      values.push_back(c == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(c));
    } catch (const std::exception&) {
      fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  if (values.size() < 4) fail(ErrorCode::Parse, path + ": too few rows for a grid");
  int nx = 1;
  while (nx < static_cast<int>(ts.size()) && ts[nx] == ts[0]) ++nx;
  if (values.size() % nx != 0) fail(ErrorCode::Parse, path + ": rows do not form a regular grid");
  const int nt = static_cast<int>(values.size() / nx);
  SpaceTimeGrid grid(xs.front(), xs[nx - 1], nx, ts.front(), ts.back(), nt);
  return DensityField(grid, std::move(values));
}

VelocityModel::VelocityModel(Greenshields g) : impl_(g), free_speed_(g.v_free) {
  if (!(g.v_free > 0.0) || !std::isfinite(g.v_free)) fail(ErrorCode::Config, "free-flow speed must be positive");
}

VelocityModel::VelocityModel(TabulatedVelocity t) : impl_(std::move(t)) {
  const auto& k = std::get<TabulatedVelocity>(impl_).knots;
  if (k.size() < 2) fail(ErrorCode::Config, "tabulated velocity needs at least two knots");
  if (k.front().first != 0.0 || k.back().first != 1.0)
    fail(ErrorCode::Config, "tabulated velocity knots must cover rho = 0 and rho = 1");
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (!(k[i].second >= 0.0) || !std::isfinite(k[i].second))
      fail(ErrorCode::Config, "tabulated velocity must be non-negative");
    if (i > 0 && !(k[i].first > k[i - 1].first))
      fail(ErrorCode::Config, "tabulated velocity knots must be strictly increasing in rho");
    if (i > 0 && k[i].second > k[i - 1].second)
      fail(ErrorCode::Config, "tabulated velocity must be non-increasing");
  }
  if (k.back().second != 0.0) fail(ErrorCode::Config, "tabulated velocity must vanish at rho = 1");
  free_speed_ = k.front().second;
}

VelocityModel::VelocityModel(std::shared_ptr<const LearnedVelocity> l) : impl_(std::move(l)) {
  const auto& lv = std::get<std::shared_ptr<const LearnedVelocity>>(impl_);
  if (!lv) fail(ErrorCode::Config, "learned velocity model is empty");
  lv->spec.validate();
  if (lv->spec.input_dim() != 1) fail(ErrorCode::Config, "learned velocity network must take one input");
  if (!lv->params.matches(lv->spec)) fail(ErrorCode::Config, "learned velocity parameters do not match spec");
  free_speed_ = learned_raw(0.0);
}

VelocityModel VelocityModel::nonlinear(double v_free, double exponent, double damping, int knots) {
  if (!(v_free > 0.0) || !(exponent > 0.0) || !(damping >= 0.0) || knots < 2)
    fail(ErrorCode::Config, "invalid non-linear velocity parameters");
  TabulatedVelocity tab;
  for (int k = 0; k < knots; ++k) {
    const double rho = static_cast<double>(k) / (knots - 1);
    double v = v_free * (1.0 - std::pow(rho, exponent)) / (1.0 + damping * rho);
    if (k == knots - 1) v = 0.0;
    tab.knots.emplace_back(rho, std::max(v, 0.0));
  }
  return VelocityModel(std::move(tab));
}

VelocityModel::Kind VelocityModel::kind() const {
  if (std::holds_alternative<Greenshields>(impl_)) return Kind::Greenshields;
  if (std::holds_alternative<TabulatedVelocity>(impl_)) return Kind::Tabulated;
  return Kind::Learned;
}

std::string VelocityModel::describe() const {
  std::ostringstream os;
  switch (kind()) {
    case Kind::Greenshields: os << "greenshields(v_free=" << greenshields()->v_free << ")"; break;
    case Kind::Tabulated: os << "tabulated(" << tabulated()->knots.size() << " knots)"; break;
    case Kind::Learned:
      os << "learned(fit range [" << learned()->fit_rho_min << ", " << learned()->fit_rho_max << "])";
      break;
  }
  return os.str();
}

const LearnedVelocity* VelocityModel::learned() const {
  auto p = std::get_if<std::shared_ptr<const LearnedVelocity>>(&impl_);
  return p ? p->get() : nullptr;
}

double VelocityModel::learned_raw(double rho) const {
  const auto* lv = learned();
  const double in[1] = {rho};
  return (1.0 - rho) * forward(lv->params, lv->spec, std::span<const double>(in, 1));
}

double VelocityModel::velocity(double rho) const {
  check_density(rho);
  switch (kind()) {
    case Kind::Greenshields: return greenshields()->v_free * (1.0 - rho);
    case Kind::Tabulated: {
      const auto& k = tabulated()->knots;
      auto it = std::upper_bound(k.begin(), k.end(), rho, [](double r, const auto& knot) { return r < knot.first; });
      if (it == k.end()) return k.back().second;
      const auto& hi = *it;
      const auto& lo = *(it - 1);
      const double w = (rho - lo.first) / (hi.first - lo.first);
      return lo.second + w * (hi.second - lo.second);
    }
    case Kind::Learned: return std::min(learned_raw(rho), free_speed_);
  }
  return 0.0;
}

VelocityJet VelocityModel::jet(double rho) const {
  Eigen::RowVectorXd r(1), v, dv, d2v;
  r[0] = rho;
  check_density(rho);
  jet_batch(r, v, dv, d2v);
  return {v[0], dv[0], d2v[0]};
}

void VelocityModel::jet_batch(const Eigen::RowVectorXd& rho, Eigen::RowVectorXd& v, Eigen::RowVectorXd& dv,
                              Eigen::RowVectorXd& d2v) const {
  switch (kind()) {
    case Kind::Greenshields: {
      const double vf = greenshields()->v_free;
      v = vf * (1.0 - rho.array());
      dv = Eigen::RowVectorXd::Constant(rho.size(), -vf);
      d2v = Eigen::RowVectorXd::Zero(rho.size());
      return;
    }
    case Kind::Tabulated:
      fail(ErrorCode::Unsupported, "tabulated velocity models are not differentiable");
    case Kind::Learned: {
      const auto* lv = learned();
      JetTape tape;
      jet_forward(lv->spec, lv->params, rho, JetOrder::Second, tape);
      const Eigen::ArrayXXd gap = 1.0 - rho.array();
      v = gap * tape.out(0).array();
      dv = gap * tape.out(1).array() - tape.out(0).array();
      d2v = gap * tape.out(3).array() - 2.0 * tape.out(1).array();
      for (Eigen::Index k = 0; k < rho.size(); ++k)
        if (v[k] > free_speed_) {
          v[k] = free_speed_;
          dv[k] = 0.0;
          d2v[k] = 0.0;
        }
      return;
    }
  }
}

void ModelConstants::validate() const {
  if (!(gamma >= 0.0 && gamma <= 0.5)) {
    std::ostringstream os;
    os << "gamma = " << gamma << " outside [0, 0.5]";
    fail(ErrorCode::Config, os.str());
  }
}

}  // namespace pvrecon
