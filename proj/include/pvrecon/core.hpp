#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pvrecon/mlp.hpp"

namespace pvrecon {

// Regular node grid over [t_min, t_max] x [x_min, x_max].
class SpaceTimeGrid {
 public:
  SpaceTimeGrid() = default;
  SpaceTimeGrid(double x_min, double x_max, int nx, double t_min, double t_max, int nt);

  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  double t_min() const { return t_min_; }
  double t_max() const { return t_max_; }
  int nx() const { return nx_; }
  int nt() const { return nt_; }
  double dx() const { return (x_max_ - x_min_) / (nx_ - 1); }
  double dt() const { return (t_max_ - t_min_) / (nt_ - 1); }
  double x(int j) const { return x_min_ + j * dx(); }
  double t(int i) const { return t_min_ + i * dt(); }
  bool contains(double t, double x) const;

  bool operator==(const SpaceTimeGrid&) const = default;

 private:
  double x_min_ = 0.0, x_max_ = 1.0, t_min_ = 0.0, t_max_ = 1.0;
  int nx_ = 2, nt_ = 2;
};

// Density on a SpaceTimeGrid, rows are time slices. Cells may be marked
// missing (NaN) where no ground truth exists; all other values lie in [0, 1].
class DensityField {
 public:
  DensityField() = default;
  DensityField(const SpaceTimeGrid& grid, double fill);
  DensityField(const SpaceTimeGrid& grid, std::vector<double> values);

  const SpaceTimeGrid& grid() const { return grid_; }
  double at(int i, int j) const { return values_[static_cast<std::size_t>(i) * grid_.nx() + j]; }
  void set(int i, int j, double rho);
  void set_missing(int i, int j);
  bool missing(int i, int j) const;
  std::span<const double> row(int i) const;
  void set_row(int i, std::span<const double> rho);
  const std::vector<double>& values() const { return values_; }
  std::size_t missing_count() const;

 private:
  SpaceTimeGrid grid_;
  std::vector<double> values_;
};

// Bilinear interpolation in (t, x); exact at nodes.
double sample_density(const DensityField& field, double t, double x);

// Field CSV with header `t,x,rho`, row-major by time; missing cells are `nan`.
void write_field_csv(const std::string& path, const DensityField& field);
DensityField read_field_csv(const std::string& path);

struct Greenshields {
  double v_free = 1.0;
};

struct TabulatedVelocity {
  std::vector<std::pair<double, double>> knots;  // (rho, V), rho strictly increasing over [0, 1]
};

// V(rho) = (1 - rho) N(rho) for a trained one-dimensional network N with a
// non-negative output, so V(1) = 0 holds exactly. V is capped at V(0) so the
// model never exceeds its free-flow speed.
struct LearnedVelocity {
  NetworkSpec spec;
  NetworkParameters params;
  double fit_rho_min = 0.0;  // density range covered by the fitting data
  double fit_rho_max = 1.0;
};

// Values and first two density derivatives of V.
struct VelocityJet {
  double v = 0.0;
  double dv = 0.0;
  double d2v = 0.0;
};

class VelocityModel {
 public:
  VelocityModel() : VelocityModel(Greenshields{}) {}
  explicit VelocityModel(Greenshields g);
  explicit VelocityModel(TabulatedVelocity t);
  explicit VelocityModel(std::shared_ptr<const LearnedVelocity> l);

  // v_f (1 - rho^a) / (1 + b rho), tabulated on a fine grid.
  static VelocityModel nonlinear(double v_free, double exponent, double damping, int knots = 401);

  enum class Kind { Greenshields, Tabulated, Learned };
  Kind kind() const;
  std::string describe() const;

  double velocity(double rho) const;
  double flux(double rho) const { return rho * velocity(rho); }
  double free_speed() const { return free_speed_; }

  bool differentiable() const { return kind() != Kind::Tabulated; }
  VelocityJet jet(double rho) const;
  // Batched V, V', V'' at the given densities; throws for tabulated models.
  void jet_batch(const Eigen::RowVectorXd& rho, Eigen::RowVectorXd& v, Eigen::RowVectorXd& dv,
                 Eigen::RowVectorXd& d2v) const;

  const Greenshields* greenshields() const { return std::get_if<Greenshields>(&impl_); }
  const TabulatedVelocity* tabulated() const { return std::get_if<TabulatedVelocity>(&impl_); }
  const LearnedVelocity* learned() const;

 private:
  double learned_raw(double rho) const;

  std::variant<Greenshields, TabulatedVelocity, std::shared_ptr<const LearnedVelocity>> impl_;
  double free_speed_ = 1.0;
};

inline double velocity(const VelocityModel& model, double rho) { return model.velocity(rho); }
inline double flux(const VelocityModel& model, double rho) { return model.flux(rho); }

// Diffusion correction of the viscous model. gamma = 0 selects the inviscid limit.
struct ModelConstants {
  double gamma = 0.05;
  void validate() const;
};

}  // namespace pvrecon
