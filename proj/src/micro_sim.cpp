#include "pvrecon/micro_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

double leader_speed(const LeaderProfile& leader, double t) {
  struct Visitor {
    double t;
    double operator()(const ConstantLeader& c) const { return c.speed; }
    double operator()(const PiecewiseLeader& p) const {
      std::size_t k = 0;
      while (k < p.switch_times.size() && t >= p.switch_times[k]) ++k;
      return p.speeds[k];
    }
    double operator()(const SinusoidalLeader& s) const {
      return s.mean + s.amplitude * std::sin(2.0 * std::numbers::pi * t / s.period);
    }
  };
  return std::visit(Visitor{t}, leader);
}

void validate_leader(const LeaderProfile& leader) {
  if (const auto* c = std::get_if<ConstantLeader>(&leader)) {
    if (!(c->speed >= 0.0)) fail(ErrorCode::Config, "leader speed must be non-negative");
  } else if (const auto* p = std::get_if<PiecewiseLeader>(&leader)) {
    if (p->speeds.size() != p->switch_times.size() + 1)
      fail(ErrorCode::Config, "piecewise leader needs one more speed than switch times");
    for (double v : p->speeds)
      if (!(v >= 0.0)) fail(ErrorCode::Config, "leader speed must be non-negative");
    if (!std::is_sorted(p->switch_times.begin(), p->switch_times.end()))
      fail(ErrorCode::Config, "leader switch times must be sorted");
  } else if (const auto* s = std::get_if<SinusoidalLeader>(&leader)) {
    if (!(s->mean >= std::abs(s->amplitude))) fail(ErrorCode::Config, "sinusoidal leader speed must stay non-negative");
    if (!(s->period > 0.0)) fail(ErrorCode::Config, "sinusoidal leader period must be positive");
  }
}

void Platoon::validate() const {
  if (positions.size() < 2) fail(ErrorCode::Config, "platoon needs a leader and at least one follower");
  if (!(vehicle_length > 0.0)) fail(ErrorCode::Config, "vehicle length must be positive");
  validate_leader(leader);
  local_density(*this);
}

std::vector<double> local_density(std::span<const double> positions, double vehicle_length) {
  std::vector<double> rho(positions.size() - 1);
  for (std::size_t i = 0; i + 1 < positions.size(); ++i) {
    const double gap = positions[i + 1] - positions[i];
    if (!(gap > vehicle_length)) {
      std::ostringstream os;
      os << "vehicles " << i << " and " << i + 1 << " collide (gap " << gap << " <= length " << vehicle_length << ")";
      fail(ErrorCode::Collision, os.str());
    }
    rho[i] = vehicle_length / gap;
  }
  return rho;
}

std::vector<double> local_density(const Platoon& platoon) {
  return local_density(platoon.positions, platoon.vehicle_length);
}

Platoon platoon_from_profile(const std::function<double(double)>& rho, double x_start, double x_end, int n,
                             LeaderProfile leader) {
  if (n < 1 || !(x_end > x_start)) fail(ErrorCode::Config, "invalid platoon profile");
  constexpr int kCells = 20000;
  const double h = (x_end - x_start) / kCells;
  std::vector<double> cumulative(kCells + 1, 0.0);
  for (int k = 0; k < kCells; ++k) {
    const double a = x_start + k * h;
    cumulative[k + 1] = cumulative[k] + 0.5 * h * (rho(a) + rho(a + h));
  }
  const double mass = cumulative.back();
  if (!(mass > 0.0)) fail(ErrorCode::Config, "platoon profile carries no mass");
  Platoon p;
  p.vehicle_length = mass / n;
  p.leader = std::move(leader);
  p.positions.resize(n + 1);
  p.positions[0] = x_start;
  p.positions[n] = x_end;
  int k = 0;
  for (int i = 1; i < n; ++i) {
    const double target = i * p.vehicle_length;
    while (cumulative[k + 1] < target) ++k;
    const double w = (target - cumulative[k]) / (cumulative[k + 1] - cumulative[k]);
    p.positions[i] = x_start + (k + w) * h;
  }
  p.validate();
  return p;
}

double guarded_dt(const Platoon& platoon, const VelocityModel& model) {
  // Per pair: the follower may close at most a tenth of its free gap.
  const auto rho = local_density(platoon);
  double h = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double v = model.velocity(rho[i]);
    const double free_gap = platoon.positions[i + 1] - platoon.positions[i] - platoon.vehicle_length;
    if (v > 0.0) h = std::min(h, 0.1 * free_gap / v);
  }
  return h;
}

Platoon step_fl1(const Platoon& platoon, const VelocityModel& model, double t, double dt) {
  if (!(dt > 0.0)) fail(ErrorCode::Config, "time step must be positive");
  const auto rho = local_density(platoon);
  Platoon next = platoon;
  const int n = platoon.followers();
  for (int i = 0; i < n; ++i) next.positions[i] += dt * model.velocity(rho[i]);
  next.positions[n] += dt * leader_speed(platoon.leader, t);
  for (int i = 0; i < n; ++i) {
    if (!(next.positions[i + 1] - next.positions[i] > next.vehicle_length)) {
      std::ostringstream os;
      os << "step of " << dt << " at t=" << t << " makes vehicles " << i << " and " << i + 1 << " collide";
      fail(ErrorCode::StepSize, os.str());
    }
  }
  return next;
}

namespace {

std::vector<double> stamp_speeds(const Platoon& p, const VelocityModel& model, double t) {
  const auto rho = local_density(p);
  std::vector<double> v(p.positions.size());
  for (std::size_t i = 0; i < rho.size(); ++i) v[i] = model.velocity(rho[i]);
  v.back() = leader_speed(p.leader, t);
  return v;
}

}  // namespace

TrajectorySet run_fl1(const Platoon& platoon, const VelocityModel& model, double T, double dt, double output_period,
                      MicroRunStats* stats) {
  platoon.validate();
  if (!(T > 0.0) || !(dt > 0.0) || !(output_period > 0.0)) fail(ErrorCode::Config, "invalid run parameters");
  const long stamps = std::lround(T / output_period);
  if (std::abs(stamps * output_period - T) > 1e-9 * T)
    fail(ErrorCode::Config, "run length must be a multiple of the output period");

  TrajectorySet out;
  out.vehicle_length = platoon.vehicle_length;
  Platoon p = platoon;
  MicroRunStats local;
  MicroRunStats& st = stats ? *stats : local;
  out.times.push_back(0.0);
  out.positions.push_back(p.positions);
  out.speeds.push_back(stamp_speeds(p, model, 0.0));
  for (long s = 1; s <= stamps; ++s) {
    double t = (s - 1) * output_period;
    const double t_end = s * output_period;
    while (t < t_end - 1e-14) {
      double h = std::min(dt, t_end - t);
      const double guard = guarded_dt(p, model);
      if (guard < h) {
        h = guard;
        ++st.guarded_substeps;
      }
      p = step_fl1(p, model, t, h);
      t += h;
      ++st.steps;
    }
    out.times.push_back(t_end);
    out.positions.push_back(p.positions);
    out.speeds.push_back(stamp_speeds(p, model, t_end));
  }
  return out;
}

std::vector<double> TrajectorySet::densities_at(std::size_t stamp) const {
  return local_density(positions.at(stamp), vehicle_length);
}

std::vector<double> TrajectorySet::positions_at(double t) const {
  if (times.empty()) fail(ErrorCode::EmptyInput, "empty trajectory set");
  if (t <= times.front()) return positions.front();
  if (t >= times.back()) return positions.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times.begin());
  const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
  std::vector<double> x(positions[k].size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (1 - w) * positions[k - 1][i] + w * positions[k][i];
  return x;
}

void TrajectorySet::validate() const {
  if (times.empty() || positions.size() != times.size()) fail(ErrorCode::Config, "trajectory stamps are inconsistent");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (k > 0 && !(times[k] > times[k - 1])) fail(ErrorCode::Config, "trajectory stamps must be strictly increasing");
    if (static_cast<int>(positions[k].size()) != vehicles()) fail(ErrorCode::Config, "vehicle count changes over time");
    for (std::size_t i = 1; i < positions[k].size(); ++i)
      if (!(positions[k][i] > positions[k][i - 1])) fail(ErrorCode::Config, "vehicle ordering violated");
  }
}

EmpiricalField empirical_density_field(const TrajectorySet& trajectories, const SpaceTimeGrid& grid,
                                       double kernel_width) {
  if (trajectories.times.empty()) fail(ErrorCode::EmptyInput, "empty trajectory set");
  if (grid.t_min() < trajectories.times.front() - 1e-9 || grid.t_max() > trajectories.times.back() + 1e-9)
    fail(ErrorCode::OutOfDomain, "trajectories do not cover the grid's time range");
  if (!(kernel_width >= 0.0)) fail(ErrorCode::Config, "kernel width must be non-negative");

  EmpiricalField out{DensityField(grid, 0.0), kernel_width};
  const double inv = kernel_width > 0.0 ? 1.0 / (std::numbers::sqrt2 * kernel_width) : 0.0;
  for (int i = 0; i < grid.nt(); ++i) {
    const auto x = trajectories.positions_at(grid.t(i));
    const auto rho = local_density(x, trajectories.vehicle_length);
    for (int j = 0; j < grid.nx(); ++j) {
      const double xj = grid.x(j);
      if (xj < x.front() || xj > x.back()) {
        out.field.set_missing(i, j);
        continue;
      }
      double value;
      if (kernel_width == 0.0) {
        auto it = std::upper_bound(x.begin(), x.end(), xj);
        std::size_t cell = static_cast<std::size_t>(it - x.begin());
        cell = std::clamp<std::size_t>(cell, 1, rho.size()) - 1;
        value = rho[cell];
      } else {
        // Exact Gaussian weight of each cell; cells beyond 6 widths are negligible.
        const double reach = 6.0 * kernel_width;
        auto lo = std::lower_bound(x.begin(), x.end(), xj - reach);
        std::size_t first = lo == x.begin() ? 0 : static_cast<std::size_t>(lo - x.begin()) - 1;
        double num = 0.0, den = 0.0;
        for (std::size_t c = first; c < rho.size() && x[c] <= xj + reach; ++c) {
          const double w = 0.5 * (std::erf((x[c + 1] - xj) * inv) - std::erf((x[c] - xj) * inv));
          num += w * rho[c];
          den += w;
        }
        value = den > 0.0 ? num / den : rho.front();
      }
      out.field.set(i, j, std::clamp(value, 0.0, 1.0));
    }
  }
  return out;
}

void write_trajectories_csv(const std::string& path, const TrajectorySet& trajectories) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const bool with_v = trajectories.speeds.size() == trajectories.times.size();
  out << (with_v ? "t,vehicle_id,x,v\n" : "t,vehicle_id,x\n");
  for (std::size_t k = 0; k < trajectories.times.size(); ++k)
    for (std::size_t i = 0; i < trajectories.positions[k].size(); ++i) {
      out << trajectories.times[k] << ',' << i << ',' << trajectories.positions[k][i];
      if (with_v) out << ',' << trajectories.speeds[k][i];
      out << '\n';
    }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

TrajectorySet read_trajectories_csv(const std::string& path, double vehicle_length) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_v = false;
  if (line == "t,vehicle_id,x,v")
    with_v = true;
  else if (line != "t,vehicle_id,x")
    fail(ErrorCode::Parse, path + ": expected header 't,vehicle_id,x[,v]'");

  // vehicle id -> (t -> (x, v))
  std::map<long, std::map<double, std::pair<double, double>>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[4];
    const int cols = with_v ? 4 : 3;
    for (int c = 0; c < cols; ++c)
      if (!std::getline(ls, f[c], ',')) fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": missing column");
    try {
      const double t = std::stod(f[0]);
      const long id = std::stol(f[1]);
      const double x = std::stod(f[2]);
      const double v = with_v ? std::stod(f[3]) : 0.0;
      if (!rows[id].emplace(t, std::make_pair(x, v)).second)
        fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": duplicate stamp for vehicle");
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  if (rows.size() < 2) fail(ErrorCode::Parse, path + ": need at least two vehicles");

  TrajectorySet set;
  set.vehicle_length = vehicle_length;
  for (const auto& [t, xv] : rows.begin()->second) set.times.push_back(t);
  // Order vehicles by their position at the first stamp, rearmost first.
  std::vector<long> ids;
  for (const auto& [id, series] : rows) {
    if (series.size() != set.times.size()) fail(ErrorCode::Parse, path + ": vehicles must share time stamps");
    std::size_t k = 0;
    for (const auto& [t, xv] : series)
      if (t != set.times[k++]) fail(ErrorCode::Parse, path + ": vehicles must share time stamps");
    ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end(), [&](long a, long b) {
    return rows[a].begin()->second.first < rows[b].begin()->second.first;
  });
  for (std::size_t k = 0; k < set.times.size(); ++k) {
    std::vector<double> xs, vs;
    for (long id : ids) {
      const auto& xv = rows[id].at(set.times[k]);
      xs.push_back(xv.first);
      vs.push_back(xv.second);
    }
    set.positions.push_back(std::move(xs));
    if (with_v) set.speeds.push_back(std::move(vs));
  }
  set.validate();
  return set;
}

}  // namespace pvrecon
