#include "pvrecon/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

double Trajectory::position_at(double time) const {
  if (t.empty()) fail(ErrorCode::EmptyInput, "empty trajectory");
  if (time <= t.front()) return x.front();
  if (time >= t.back()) return x.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t k = static_cast<std::size_t>(it - t.begin());
  const double w = (time - t[k - 1]) / (t[k] - t[k - 1]);
  return (1 - w) * x[k - 1] + w * x[k];
}

std::size_t ProbeDataset::size() const {
  std::size_t n = 0;
  for (const auto& p : probes) n += p.samples.size();
  return n;
}

void ProbeDataset::validate() const {
  for (const auto& p : probes)
    for (std::size_t k = 0; k < p.samples.size(); ++k) {
      const auto& s = p.samples[k];
      if (!(s.rho >= 0.0 && s.rho <= 1.0)) fail(ErrorCode::Domain, "probe density outside [0, 1]");
      if (k > 0 && !(s.t > p.samples[k - 1].t))
        fail(ErrorCode::Config, "probe " + std::to_string(p.id) + ": times must be strictly increasing");
    }
}

Trajectory advect_probe(const DensityField& field, const VelocityModel& model, double x0, double t0, double t1,
                        double dt) {
  const auto& g = field.grid();
  if (!g.contains(t0, x0)) fail(ErrorCode::OutOfDomain, "probe start point lies outside the field");
  if (t1 > g.t_max() + 1e-12 || t1 < t0) fail(ErrorCode::OutOfDomain, "probe end time outside the field");
  if (!(dt > 0.0)) fail(ErrorCode::Config, "probe time step must be positive");

  auto speed = [&](double t, double x) {
    return model.velocity(sample_density(field, std::min(t, g.t_max()), std::min(x, g.x_max())));
  };
  Trajectory tr;
  tr.t.push_back(t0);
  tr.x.push_back(x0);
  const long steps = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / dt - 1e-9)));
  double x = x0;
  for (long k = 0; k < steps; ++k) {
    const double t = t0 + k * dt;
    const double h = std::min(dt, t1 - t);
    if (h <= 0.0) break;
    if (x < g.x_max()) {
      const double k1 = speed(t, x);
      const double k2 = speed(t + 0.5 * h, x + 0.5 * h * k1);
      const double k3 = speed(t + 0.5 * h, x + 0.5 * h * k2);
      const double k4 = speed(t + h, x + h * k3);
      x = std::min(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), g.x_max());
    }
    tr.t.push_back(k + 1 == steps ? t1 : t + h);
    tr.x.push_back(x);
  }
  return tr;
}

ProbeDataset sample_measurements(const DensityField& field, const std::vector<Trajectory>& trajectories,
                                 double period) {
  if (!(period > 0.0)) fail(ErrorCode::Config, "sampling period must be positive");
  const double t_origin = field.grid().t_min();
  ProbeDataset ds;
  ds.period = period;
  for (std::size_t p = 0; p < trajectories.size(); ++p) {
    const auto& tr = trajectories[p];
    ProbeTrack track;
    track.id = static_cast<int>(p);
    const long first = static_cast<long>(std::ceil((tr.t.front() - t_origin) / period - 1e-9));
    const long last = static_cast<long>(std::floor((tr.t.back() - t_origin) / period + 1e-9));
    for (long k = std::max(first, 0L); k <= last; ++k) {
      const double t = t_origin + k * period;
      const double x = tr.position_at(t);
      track.samples.push_back({t, x, sample_density(field, t, x)});
    }
    ds.probes.push_back(std::move(track));
  }
  return ds;
}

ProbeDataset sample_vehicle_probes(const TrajectorySet& trajectories, const std::vector<int>& vehicle_ids,
                                   double period, double t_end) {
  if (!(period > 0.0)) fail(ErrorCode::Config, "sampling period must be positive");
  ProbeDataset ds;
  ds.period = period;
  const int followers = trajectories.vehicles() - 1;
  for (int id : vehicle_ids)
    if (id < 0 || id >= followers) fail(ErrorCode::Config, "probe vehicle id " + std::to_string(id) + " is not a follower");
  const double t0 = trajectories.times.front();
  for (int id : vehicle_ids) {
    ProbeTrack track;
    track.id = id;
    const long last = static_cast<long>(std::floor((t_end - t0) / period + 1e-9));
    for (long k = 0; k <= last; ++k) {
      const double t = t0 + k * period;
      if (t > trajectories.times.back() + 1e-9) break;
      const auto x = trajectories.positions_at(t);
      const double rho = trajectories.vehicle_length / (x[id + 1] - x[id]);
      track.samples.push_back({t, x[id], rho});
    }
    ds.probes.push_back(std::move(track));
  }
  return ds;
}

ProbeDataset add_noise(const ProbeDataset& dataset, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) fail(ErrorCode::Config, "noise standard deviation must be non-negative");
  ProbeDataset out = dataset;
  out.sigma = sigma;
  out.seed = seed;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& p : out.probes)
    for (auto& s : p.samples) {
      const double v = s.rho + noise(rng);
      if (v < 0.0 || v > 1.0) ++out.clamped;
      s.rho = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

std::vector<Trajectory> dataset_tracks(const ProbeDataset& dataset) {
  std::vector<Trajectory> tracks;
  for (const auto& p : dataset.probes) {
    Trajectory tr;
    for (const auto& s : p.samples) {
      tr.t.push_back(s.t);
      tr.x.push_back(s.x);
    }
    if (!tr.t.empty()) tracks.push_back(std::move(tr));
  }
  return tracks;
}

void write_dataset_csv(const std::string& path, const ProbeDataset& dataset) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "probe_id,t,x,rho\n";
  for (const auto& p : dataset.probes)
    for (const auto& s : p.samples) out << p.id << ',' << s.t << ',' << s.x << ',' << s.rho << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

ProbeDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "probe_id,t,x,rho") fail(ErrorCode::Parse, path + ": expected header 'probe_id,t,x,rho'");
  std::map<int, ProbeTrack> tracks;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[4];
    for (auto& field : f)
      if (!std::getline(ls, field, ',')) fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": missing column");
    try {
      const int id = std::stoi(f[0]);
      auto& tr = tracks[id];
      tr.id = id;
      tr.samples.push_back({std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  ProbeDataset ds;
  for (auto& [id, tr] : tracks) {
    std::sort(tr.samples.begin(), tr.samples.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    ds.probes.push_back(std::move(tr));
  }
  if (ds.probes.size() > 0 && ds.probes.front().samples.size() > 1)
    ds.period = ds.probes.front().samples[1].t - ds.probes.front().samples[0].t;
  ds.validate();
  return ds;
}

}  // namespace pvrecon
