#include "pvrecon/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

ReconstructionDomain::ReconstructionDomain(std::vector<double> stamps, std::vector<double> lower,
                                           std::vector<double> upper, double T, double dT)
    : stamps_(std::move(stamps)), lower_(std::move(lower)), upper_(std::move(upper)), T_(T), dT_(dT) {
  if (stamps_.size() < 2 || lower_.size() != stamps_.size() || upper_.size() != stamps_.size())
    fail(ErrorCode::Config, "reconstruction domain needs matching stamp and bound arrays");
  for (std::size_t k = 0; k < stamps_.size(); ++k) {
    if (k > 0 && !(stamps_[k] > stamps_[k - 1])) fail(ErrorCode::Config, "domain stamps must be increasing");
    if (lower_[k] > upper_[k]) fail(ErrorCode::Config, "domain lower bound exceeds upper bound");
  }
}

std::pair<double, double> ReconstructionDomain::bounds(double t) const {
  if (t <= stamps_.front()) return {lower_.front(), upper_.front()};
  if (t >= stamps_.back()) return {lower_.back(), upper_.back()};
  const auto it = std::upper_bound(stamps_.begin(), stamps_.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - stamps_.begin());
  const double w = (t - stamps_[k - 1]) / (stamps_[k] - stamps_[k - 1]);
  return {(1 - w) * lower_[k - 1] + w * lower_[k], (1 - w) * upper_[k - 1] + w * upper_[k]};
}

bool ReconstructionDomain::contains(double t, double x) const {
  constexpr double eps = 1e-12;
  if (t < stamps_.front() - eps || t > stamps_.back() + eps) return false;
  const auto [lo, hi] = bounds(t);
  return x >= lo - eps && x <= hi + eps;
}

ReconstructionDomain::Box ReconstructionDomain::bounding_box() const {
  return {stamps_.front(), stamps_.back(), *std::min_element(lower_.begin(), lower_.end()),
          *std::max_element(upper_.begin(), upper_.end())};
}

double trailing_velocity(const Trajectory& track) {
  const std::size_t n = track.t.size();
  if (n < 2) return 0.0;
  const std::size_t back = std::min<std::size_t>(kExtrapolationWindow, n - 1);
  return (track.x[n - 1] - track.x[n - 1 - back]) / (track.t[n - 1] - track.t[n - 1 - back]);
}

ReconstructionDomain reconstruction_domain(const std::vector<Trajectory>& tracks, double T, double dT, double x_min,
                                           double x_max) {
  if (tracks.size() < 2) fail(ErrorCode::Domain, "reconstruction domain needs at least two probe trajectories");
  if (!(T > 0.0) || !(dT >= 0.0)) fail(ErrorCode::Config, "invalid measurement window or horizon");

  // Stamps: every recorded sample time in [0, T], then the same spacing across the horizon.
  std::vector<double> stamps{0.0, T};
  double spacing = T;
  for (const auto& tr : tracks) {
    if (tr.t.empty()) fail(ErrorCode::EmptyInput, "empty probe trajectory");
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
      if (tr.t[k] >= 0.0 && tr.t[k] <= T) stamps.push_back(tr.t[k]);
      if (k > 0) spacing = std::min(spacing, tr.t[k] - tr.t[k - 1]);
    }
  }
  if (dT > 0.0) {
    const long extra = std::max(1L, static_cast<long>(std::ceil(dT / spacing - 1e-9)));
    for (long k = 1; k <= extra; ++k) stamps.push_back(T + dT * k / extra);
  }
  std::sort(stamps.begin(), stamps.end());
  stamps.erase(std::unique(stamps.begin(), stamps.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
               stamps.end());

  std::vector<double> velocity(tracks.size());
  for (std::size_t p = 0; p < tracks.size(); ++p) velocity[p] = trailing_velocity(tracks[p]);

  std::vector<double> lower(stamps.size()), upper(stamps.size());
  for (std::size_t k = 0; k < stamps.size(); ++k) {
    const double t = stamps[k];
    double lo = x_max, hi = x_min;
    for (std::size_t p = 0; p < tracks.size(); ++p) {
      const auto& tr = tracks[p];
      double x = tr.position_at(t);
      if (t > tr.t.back() && t > T - 1e-12) x = tr.x.back() + velocity[p] * (t - tr.t.back());
      x = std::clamp(x, x_min, x_max);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    lower[k] = lo;
    upper[k] = hi;
  }
  return ReconstructionDomain(std::move(stamps), std::move(lower), std::move(upper), T, dT);
}

L2Result l2_error(const DensityField& truth, const Estimate& estimate, const ReconstructionDomain& domain) {
  const auto& g = truth.grid();
  L2Result r;
  double sum = 0.0;
  for (int i = 0; i < g.nt(); ++i) {
    const double t = g.t(i);
    if (t < domain.stamps().front() - 1e-12 || t > domain.t_end() + 1e-12) continue;
    const auto [lo, hi] = domain.bounds(t);
    for (int j = 0; j < g.nx(); ++j) {
      const double x = g.x(j);
      if (x < lo - 1e-12 || x > hi + 1e-12) continue;
      if (truth.missing(i, j)) {
        ++r.missing;
        continue;
      }
      const double d = truth.at(i, j) - estimate(t, x);
      sum += d * d;
      ++r.nodes;
    }
  }
  if (r.nodes == 0) fail(ErrorCode::EmptyInput, "reconstruction domain contains no grid nodes with ground truth");
  r.rms = std::sqrt(sum / static_cast<double>(r.nodes));
  r.integral = std::sqrt(sum * g.dx() * g.dt());
  return r;
}

DensityField rasterize(const Estimate& estimate, const SpaceTimeGrid& grid) {
  DensityField f(grid, 0.0);
  for (int i = 0; i < grid.nt(); ++i)
    for (int j = 0; j < grid.nx(); ++j) {
      const double v = estimate(grid.t(i), grid.x(j));
      f.set(i, j, std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0);
    }
  return f;
}

void write_pgm(const std::string& path, const DensityField& field) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  const auto& g = field.grid();
  out << "P2\n" << g.nx() << ' ' << g.nt() << "\n255\n";
  for (int i = 0; i < g.nt(); ++i) {
    for (int j = 0; j < g.nx(); ++j) {
      const int level = field.missing(i, j) ? 255 : static_cast<int>(std::lround(255.0 * (1.0 - field.at(i, j))));
      out << level << (j + 1 < g.nx() ? ' ' : '\n');
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

std::vector<std::string> export_heatmap(const DensityField& field, const std::string& prefix) {
  write_field_csv(prefix + ".csv", field);
  write_pgm(prefix + ".pgm", field);
  return {prefix + ".csv", prefix + ".pgm"};
}

std::vector<std::string> export_heatmap(const Estimate& estimate, const SpaceTimeGrid& grid,
                                        const std::string& prefix) {
  return export_heatmap(rasterize(estimate, grid), prefix);
}

void write_domain_csv(const std::string& path, const ReconstructionDomain& domain) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << "t,x_low,x_high\n";
  for (std::size_t k = 0; k < domain.stamps().size(); ++k)
    out << domain.stamps()[k] << ',' << domain.lower()[k] << ',' << domain.upper()[k] << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

ReconstructionDomain read_domain_csv(const std::string& path, double T, double dT) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,x_low,x_high") fail(ErrorCode::Parse, path + ": expected header 't,x_low,x_high'");
  std::vector<double> stamps, lower, upper;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    double v[3];
    char comma;
    if (!(ls >> v[0] >> comma >> v[1] >> comma >> v[2]))
      fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": malformed row");
    stamps.push_back(v[0]);
    lower.push_back(v[1]);
    upper.push_back(v[2]);
  }
  if (stamps.empty()) fail(ErrorCode::EmptyInput, path + ": no domain rows");
  return ReconstructionDomain(std::move(stamps), std::move(lower), std::move(upper), T, dT);
}

}  // namespace pvrecon
