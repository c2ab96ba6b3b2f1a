#include "pvrecon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "pvrecon/error.hpp"
#include "pvrecon/macro_sim.hpp"

namespace pvrecon {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

VelocityModel parse_table(const std::string& text) {
  TabulatedVelocity table;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail(ErrorCode::Config, "velocity.table entries must look like rho:v");
    const auto pair = parse_number_list("velocity.table", item.substr(0, colon) + "," + item.substr(colon + 1));
    if (pair.size() != 2) fail(ErrorCode::Config, "velocity.table entries must look like rho:v");
    table.knots.emplace_back(pair[0], pair[1]);
  }
  return VelocityModel(std::move(table));
}

VelocityModel configured_model(const ScenarioConfig& cfg) {
  if (cfg.velocity_model == "nonlinear")
    return VelocityModel::nonlinear(cfg.v_free, cfg.nonlinear_exponent, cfg.nonlinear_damping);
  if (cfg.velocity_model == "tabulated") return parse_table(cfg.velocity_table);
  return VelocityModel(Greenshields{cfg.v_free});
}

Timing window(double t_end, double fraction) {
  Timing w;
  w.T = t_end / (1.0 + fraction);
  w.dT = t_end - w.T;
  return w;
}

// Import timing: the configured window, or the last measurement time.
Timing import_timing(const ScenarioConfig& cfg, const ProbeDataset& data) {
  double last = 0.0;
  for (const auto& p : data.probes)
    if (!p.samples.empty()) last = std::max(last, p.samples.back().t);
  Timing w;
  w.T = cfg.import_window > 0.0 ? cfg.import_window : last;
  w.dT = cfg.horizon_fraction * w.T;
  if (!(w.T > 0.0)) fail(ErrorCode::Domain, "imported measurements span no time");
  return w;
}

InitialCondition macro_initial(const ScenarioConfig& cfg) {
  if (cfg.macro_ic == "riemann") return StepProfile{{cfg.ic_low, cfg.ic_high}, {cfg.ic_center}, cfg.ic_smoothing};
  if (cfg.macro_ic == "gaussian")
    return GaussianBump{cfg.ic_low, cfg.ic_high - cfg.ic_low, cfg.ic_center, cfg.ic_width};
  if (cfg.macro_ic == "sinusoid")
    return Sinusoid{0.5 * (cfg.ic_low + cfg.ic_high), 0.5 * (cfg.ic_high - cfg.ic_low), cfg.ic_wavelength, 0.0};
  return StepProfile{{cfg.ic_low, cfg.ic_high, cfg.ic_low}, {cfg.ic_left, cfg.ic_right}, cfg.ic_smoothing};
}

Boundary boundary(const std::string& kind, double value, double amplitude, double period) {
  if (kind == "periodic") return Boundary::periodic();
  if (kind == "zero-gradient") return Boundary::zero_gradient();
  Boundary b = Boundary::dirichlet(value);
  b.amplitude = amplitude;
  b.period = period;
  return b;
}

double probe_period(const ScenarioConfig& cfg, double T) { return cfg.probe_period > 0.0 ? cfg.probe_period : T / 100.0; }

void macro_truth(const ScenarioConfig& cfg, TruthData& out) {
  MacroScenario sc{SpaceTimeGrid(cfg.grid_x_min, cfg.grid_x_max, cfg.grid_nx, 0.0, cfg.grid_t_max, cfg.grid_nt),
                   out.model,
                   ModelConstants{cfg.gamma},
                   macro_initial(cfg),
                   boundary(cfg.bc_left, cfg.bc_left_value, cfg.bc_left_amplitude, cfg.bc_left_period),
                   boundary(cfg.bc_right, cfg.bc_right_value, 0.0, 1.0)};
  MacroResult res = run(sc);
  out.counters["macro.steps"] = static_cast<double>(res.steps);
  out.counters["macro.clamped"] = static_cast<double>(res.clamped);
  out.timing = window(cfg.grid_t_max, cfg.horizon_fraction);

  const double T = out.timing.T;
  if ((cfg.probe_count - 1) * cfg.probe_entry_interval >= T)
    fail(ErrorCode::Config, "probes.entry_interval lets probes enter after the observation window");
  const double period = probe_period(cfg, T);
  const double rk4_dt = cfg.probe_rk4_dt > 0.0 ? cfg.probe_rk4_dt : period / 4.0;
  for (int k = 0; k < cfg.probe_count; ++k)
    out.tracks.push_back(advect_probe(res.field, out.model, cfg.grid_x_min, k * cfg.probe_entry_interval, T, rk4_dt));
  out.clean = sample_measurements(res.field, out.tracks, period);
  out.field = std::move(res.field);
}

void micro_truth(const ScenarioConfig& cfg, TruthData& out) {
  TrajectorySet traj;
  if (!cfg.micro_trajectories.empty()) {
    traj = read_trajectories_csv(cfg.micro_trajectories, cfg.micro_vehicle_length);
  } else {
    LeaderProfile leader = ConstantLeader{cfg.leader_speed};
    if (cfg.micro_leader == "stop-release")
      leader = PiecewiseLeader{{cfg.leader_stop_start, cfg.leader_stop_end},
                               {cfg.leader_speed, 0.0, cfg.leader_release_speed}};
    else if (cfg.micro_leader == "sinusoidal")
      leader = SinusoidalLeader{cfg.leader_speed, cfg.leader_amplitude, cfg.leader_period};
    const double density = cfg.micro_density;
    Platoon platoon = platoon_from_profile([density](double) { return density; }, cfg.micro_start, cfg.micro_end,
                                           cfg.micro_vehicles, leader);
    MicroRunStats stats;
    traj = run_fl1(platoon, out.model, cfg.micro_duration, cfg.micro_dt, cfg.micro_output_period, &stats);
    out.counters["micro.steps"] = static_cast<double>(stats.steps);
    out.counters["micro.guarded_substeps"] = static_cast<double>(stats.guarded_substeps);
  }
  const double t0 = traj.times.front(), t1 = traj.times.back();
  if (!(t1 > t0)) fail(ErrorCode::Domain, "trajectories span no time");
  const SpaceTimeGrid grid(cfg.micro_start, cfg.micro_x_max, cfg.micro_nx, t0, t1, cfg.micro_nt);
  EmpiricalField emp = empirical_density_field(traj, grid, cfg.micro_kernel_factor * traj.vehicle_length);
  out.counters["truth.missing_cells"] = static_cast<double>(emp.field.missing_count());
  out.timing = window(t1 - t0, cfg.horizon_fraction);
  const double T = t0 + out.timing.T;

  const int followers = traj.vehicles() - 1;
  if (cfg.micro_probes > followers) fail(ErrorCode::Config, "micro.probes exceeds the number of followers");
  std::vector<int> ids;
  for (int k = 0; k < cfg.micro_probes; ++k)
    ids.push_back(static_cast<int>(std::lround(static_cast<double>(k) * (followers - 1) / (cfg.micro_probes - 1))));
  out.clean = sample_vehicle_probes(traj, ids, probe_period(cfg, out.timing.T), T);
  for (int id : ids) {
    Trajectory tr;
    for (std::size_t s = 0; s < traj.times.size() && traj.times[s] <= T + 1e-9; ++s) {
      tr.t.push_back(traj.times[s]);
      tr.x.push_back(traj.positions[s][id]);
    }
    out.tracks.push_back(std::move(tr));
  }
  out.field = std::move(emp.field);
  out.vehicles = std::move(traj);
}

void import_truth(const ScenarioConfig& cfg, TruthData& out) {
  out.clean = read_dataset_csv(cfg.import_probes);
  out.clean.validate();
  out.tracks = dataset_tracks(out.clean);
  out.timing = import_timing(cfg, out.clean);
  if (!cfg.import_truth.empty()) out.field = read_field_csv(cfg.import_truth);
}

std::pair<double, double> spatial_extent(const ScenarioConfig& cfg, const TruthData& truth) {
  if (truth.field) return {truth.field->grid().x_min(), truth.field->grid().x_max()};
  return {cfg.grid_x_min, cfg.grid_x_max};
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

TruthData generate_truth(const ScenarioConfig& cfg) {
  cfg.validate();
  TruthData out;
  out.model = configured_model(cfg);
  switch (cfg.scenario) {
    case ScenarioKind::MacroFds: macro_truth(cfg, out); break;
    case ScenarioKind::MicroFl1: micro_truth(cfg, out); break;
    case ScenarioKind::Import: import_truth(cfg, out); break;
  }
  const auto [x_lo, x_hi] = spatial_extent(cfg, out);
  out.domain = reconstruction_domain(out.tracks, out.timing.T, out.timing.dT, x_lo, x_hi);
  return out;
}

VelocityModel residual_model(const ScenarioConfig& cfg, const TruthData& truth, const Identification* identified) {
  const std::string& choice = cfg.pinn_velocity;
  if (choice == "learned" || (choice == "auto" && identified)) {
    if (!identified) fail(ErrorCode::Config, "pinn.velocity = learned needs identify = true");
    return identified->fit.model;
  }
  if (choice == "greenshields-fit") {
    if (!identified) fail(ErrorCode::Config, "pinn.velocity = greenshields-fit needs identify = true");
    return VelocityModel(Greenshields{identified->greenshields_v_free});
  }
  if (choice == "greenshields") return VelocityModel(Greenshields{cfg.v_free});
  if (choice == "model") {
    if (!truth.model.differentiable())
      fail(ErrorCode::Unsupported, "pinn.velocity = model needs a differentiable law; " + truth.model.describe() +
                                       " is tabulated");
    return truth.model;
  }
  // auto without identification: the configured law if usable, else its Greenshields line.
  return truth.model.differentiable() ? truth.model : VelocityModel(Greenshields{cfg.v_free});
}

Identification identify_velocity(const ScenarioConfig& cfg, const TruthData& truth, const ProbeDataset& data) {
  Identification out;
  out.estimates = estimate_velocities(data);
  FitConfig fc;
  fc.hidden_layers = cfg.identify_hidden_layers;
  fc.hidden_width = cfg.identify_hidden_width;
  fc.iterations = cfg.identify_iterations;
  fc.learning_rate = cfg.identify_learning_rate;
  fc.monotonicity_weight = cfg.identify_monotonicity_weight;
  fc.seed = derive_seeds(cfg.seed).identify;
  out.fit = fit_velocity_model(out.estimates.samples, fc);
  out.greenshields_v_free = best_fit_greenshields(out.estimates.samples);
  out.rho_lo = 1.0;
  out.rho_hi = 0.0;
  for (const auto& s : out.estimates.samples) {
    out.rho_lo = std::min(out.rho_lo, s.rho);
    out.rho_hi = std::max(out.rho_hi, s.rho);
  }
  const VelocityModel& law = truth.model;
  const VelocityModel& fitted = out.fit.model;
  const double vf = out.greenshields_v_free;
  auto truth_fn = [&law](double r) { return law.velocity(r); };
  out.fitted_distance =
      velocity_l2_distance([&fitted](double r) { return fitted.velocity(r); }, truth_fn, out.rho_lo, out.rho_hi);
  out.greenshields_distance =
      velocity_l2_distance([vf](double r) { return vf * (1.0 - r); }, truth_fn, out.rho_lo, out.rho_hi);
  return out;
}

Reconstruction reconstruct(const ScenarioConfig& cfg, const TruthData& truth, const ProbeDataset& data,
                           const VelocityModel& model, double mu, const TrainObserver& observer) {
  const auto seeds = derive_seeds(cfg.seed);
  TrainingConfig tc;
  tc.mu = mu;
  tc.n_phy = cfg.n_phy;
  tc.learning_rate = cfg.learning_rate;
  tc.beta1 = cfg.beta1;
  tc.beta2 = cfg.beta2;
  tc.iterations = cfg.iterations;
  tc.init_seed = seeds.init;
  tc.collocation_seed = seeds.collocation;
  tc.horizon = truth.timing.dT;

  const auto box = truth.domain.bounding_box();
  Reconstruction out;
  out.spec = NetworkSpec::estimator(cfg.net_hidden_layers, cfg.net_hidden_width, box.t_lo, box.t_hi, box.x_lo, box.x_hi);
  out.result = train(tc, out.spec, data, model, cfg.gamma, truth.domain, observer);
  if (truth.field) {
    const auto& params = out.result.params;
    const auto& spec = out.spec;
    out.l2 = l2_error(*truth.field, [&](double t, double x) { return forward(params, spec, t, x); }, truth.domain);
  }
  return out;
}

namespace {

// Per-run bookkeeping: outputs written so far, metrics, counters, timings.
class Run {
 public:
  Run(std::string subcommand, const ScenarioConfig& cfg, LogSink log)
      : subcommand_(std::move(subcommand)), cfg_(cfg), log_(std::move(log)), start_(now_seconds()) {
    std::error_code ec;
    fs::create_directories(cfg_.output_dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create output directory '" + cfg_.output_dir + "': " + ec.message());
  }

  std::string path(const std::string& name) {
    std::string p = (fs::path(cfg_.output_dir) / name).string();
    outputs_.push_back(p);
    return p;
  }
  std::string prefix(const std::string& name) const { return (fs::path(cfg_.output_dir) / name).string(); }
  void add_paths(const std::vector<std::string>& paths) {
    for (const auto& p : paths)
      if (std::find(outputs_.begin(), outputs_.end(), p) == outputs_.end()) outputs_.push_back(p);
  }

  template <class F>
  auto stage(const std::string& name, F&& fn) {
    if (log_) log_("[" + name + "]");
    const double t0 = now_seconds();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        timings_[name] += now_seconds() - t0;
      } else {
        auto r = fn();
        timings_[name] += now_seconds() - t0;
        return r;
      }
    } catch (const Error& e) {
      failed_stage_ = name;
      throw Error(e.code(), "stage '" + name + "': " + e.what());
    } catch (const std::exception& e) {
      failed_stage_ = name;
      throw Error(ErrorCode::Io, "stage '" + name + "': " + e.what());
    }
  }

  void metric(const std::string& key, double v) { metrics_[key] = v; }
  void counter(const std::string& key, double v) { counters_[key] = v; }
  void counters(const std::map<std::string, double>& c) {
    for (const auto& [k, v] : c) counters_[k] = v;
  }
  void log(const std::string& msg) const {
    if (log_) log_(msg);
  }

  json manifest(const std::string& status, const std::string& error) const {
    json m;
    m["tool"] = "pvrecon";
    m["version"] = "1.0.0";
    m["subcommand"] = subcommand_;
    m["status"] = status;
    if (!error.empty()) {
      m["error"] = error;
      m["failed_stage"] = failed_stage_;
    }
    json config = json::object();
    for (const auto& key : ScenarioConfig::keys()) config[key] = cfg_.get(key);
    m["config"] = config;
    const auto seeds = derive_seeds(cfg_.seed);
    m["seeds"] = {{"master", cfg_.seed},
                  {"noise", seeds.noise},
                  {"init", seeds.init},
                  {"collocation", seeds.collocation},
                  {"identify", seeds.identify}};
    m["outputs"] = outputs_;
    m["metrics"] = metrics_;
    m["counters"] = counters_;
    json wall = timings_;
    wall["total"] = now_seconds() - start_;
    m["wall_clock_seconds"] = wall;
    return m;
  }

  RunReport finish() {
    const std::string mpath = (fs::path(cfg_.output_dir) / "manifest.json").string();
    outputs_.push_back(mpath);
    const json m = manifest("ok", "");
    std::ofstream out(mpath);
    out << m.dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed for '" + mpath + "'");
    RunReport report;
    report.numbers = counters_;
    for (const auto& [k, v] : metrics_) report.numbers[k] = v;
    report.outputs = outputs_;
    report.manifest_json = m.dump(2);
    return report;
  }

  // Renames everything written so far to *.partial and records the failure.
  void abort(const std::string& error) noexcept {
    try {
      std::vector<std::string> renamed;
      for (const auto& p : outputs_) {
        std::error_code ec;
        if (!fs::exists(p, ec)) continue;
        fs::rename(p, p + ".partial", ec);
        if (!ec) renamed.push_back(p + ".partial");
      }
      outputs_ = renamed;
      std::ofstream out((fs::path(cfg_.output_dir) / "manifest.json.partial").string());
      out << manifest("failed", error).dump(2) << '\n';
    } catch (...) {
    }
  }

 private:
  std::string subcommand_;
  const ScenarioConfig& cfg_;
  LogSink log_;
  double start_;
  std::string failed_stage_;
  std::vector<std::string> outputs_;
  std::map<std::string, double> metrics_, counters_, timings_;
};

SpaceTimeGrid export_grid(const TruthData& truth) {
  if (truth.field) return truth.field->grid();
  const auto box = truth.domain.bounding_box();
  return SpaceTimeGrid(box.x_lo, box.x_hi, 201, box.t_lo, box.t_hi, 201);
}

void record_l2(Run& run, const std::string& prefix, const L2Result& l2) {
  run.metric(prefix + ".rms", l2.rms);
  run.metric(prefix + ".integral", l2.integral);
  run.counter(prefix + ".nodes", static_cast<double>(l2.nodes));
  run.counter(prefix + ".missing_nodes", static_cast<double>(l2.missing));
}

struct Prepared {
  TruthData truth;
  ProbeDataset data;  // measurements after noise
};

Prepared prepare(Run& run, const ScenarioConfig& cfg) {
  Prepared p;
  p.truth = run.stage("generate-truth", [&] { return generate_truth(cfg); });
  run.counters(p.truth.counters);
  run.metric("window.T", p.truth.timing.T);
  run.metric("window.dT", p.truth.timing.dT);
  p.data = run.stage("noise", [&] {
    const double sigma = cfg.noise_sigma;
    return sigma > 0.0 ? add_noise(p.truth.clean, sigma, derive_seeds(cfg.seed).noise) : p.truth.clean;
  });
  run.counter("noise.clamped", static_cast<double>(p.data.clamped));
  run.counter("probes.measurements", static_cast<double>(p.data.size()));
  return p;
}

void write_simulation(Run& run, const Prepared& p) {
  run.stage("export-truth", [&] {
    if (p.truth.field) run.add_paths(export_heatmap(*p.truth.field, run.prefix("truth")));
    write_dataset_csv(run.path("probes.csv"), p.data);
    write_dataset_csv(run.path("probes_clean.csv"), p.truth.clean);
    write_domain_csv(run.path("domain.csv"), p.truth.domain);
    if (p.truth.vehicles) write_trajectories_csv(run.path("trajectories.csv"), *p.truth.vehicles);
  });
}

std::optional<Identification> run_identify(Run& run, const ScenarioConfig& cfg, const Prepared& p) {
  const Identification id = run.stage("identify", [&] { return identify_velocity(cfg, p.truth, p.data); });
  run.counter("identify.samples", static_cast<double>(id.estimates.samples.size()));
  run.counter("identify.dropped_negative", static_cast<double>(id.estimates.dropped_negative));
  run.counter("identify.skipped_probes", static_cast<double>(id.estimates.skipped_probes));
  run.metric("identify.final_loss", id.fit.final_loss);
  run.metric("identify.v_at_one", id.fit.v_at_one);
  run.metric("identify.max_monotonicity_violation", id.fit.max_monotonicity_violation);
  run.metric("identify.fit_rho_min", id.rho_lo);
  run.metric("identify.fit_rho_max", id.rho_hi);
  run.metric("identify.greenshields_v_free", id.greenshields_v_free);
  run.metric("identify.fitted_distance", id.fitted_distance);
  run.metric("identify.greenshields_distance", id.greenshields_distance);
  run.stage("export-identify", [&] {
    write_velocity_samples_csv(run.path("velocity_samples.csv"), id.estimates.samples);
    save_velocity_model(run.path("velocity_model.txt"), id.fit.model);
  });
  return id;
}

Reconstruction run_reconstruct(Run& run, const ScenarioConfig& cfg, const Prepared& p,
                               const std::optional<Identification>& identified) {
  const VelocityModel model = residual_model(cfg, p.truth, identified ? &*identified : nullptr);
  run.log("residual velocity law: " + model.describe());
  Reconstruction rec = run.stage("train", [&] {
    const int every = std::max(1, cfg.iterations / 20);
    return reconstruct(cfg, p.truth, p.data, model, cfg.mu, [&](int it, const LossRecord& l) {
      if (it % every == 0) {
        std::ostringstream os;
        os << "iter " << it << " J_est " << l.j_est << " J_phy " << l.j_phy;
        run.log(os.str());
      }
    });
  });
  const auto& hist = rec.result.history;
  run.metric("train.j_est_initial", hist.front().j_est);
  run.metric("train.j_phy_initial", hist.front().j_phy);
  run.metric("train.j_est_final", rec.result.final_costs.j_est);
  run.metric("train.j_phy_final", rec.result.final_costs.j_phy);
  if (rec.l2) record_l2(run, "l2", *rec.l2);
  run.stage("export-network", [&] {
    save_network(run.path("network.txt"), rec.spec, rec.result.params, "estimator");
    write_loss_history_csv(run.path("loss_history.csv"), rec.result.history);
  });
  return rec;
}

void export_estimate(Run& run, const TruthData& truth, const ProbeDataset& data, const NetworkSpec& spec,
                     const NetworkParameters& params) {
  run.stage("export-estimate", [&] {
    const std::string prefix = run.prefix("estimate");
    run.add_paths(
        export_heatmap([&](double t, double x) { return forward(params, spec, t, x); }, export_grid(truth), prefix));
    write_dataset_csv(run.path("estimate_probes.csv"), data);
  });
}

void command_sweep(Run& run, const ScenarioConfig& cfg, const Prepared& p,
                   const std::optional<Identification>& identified) {
  const auto mus = parse_number_list("sweep.mu_values", cfg.sweep_mu_values);
  if (mus.empty()) fail(ErrorCode::Config, "sweep.mu_values is empty");
  const VelocityModel model = residual_model(cfg, p.truth, identified ? &*identified : nullptr);
  std::vector<std::optional<Reconstruction>> results(mus.size());
  std::vector<std::string> errors(mus.size());

  run.stage("sweep", [&] {
    // Each training is independent and identically seeded; results are merged by index.
    auto work = [&](std::size_t k) {
      try {
        results[k] = reconstruct(cfg, p.truth, p.data, model, mus[k]);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    };
    const std::size_t threads = std::min<std::size_t>(cfg.sweep_threads, mus.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < mus.size(); k += threads) work(k);
      });
    for (auto& t : pool) t.join();
    for (std::size_t k = 0; k < mus.size(); ++k)
      if (!errors[k].empty()) {
        std::ostringstream os;
        os << "mu = " << mus[k] << ": " << errors[k];
        fail(ErrorCode::Divergence, os.str());
      }
  });

  run.stage("export-sweep", [&] {
    const std::string path = run.path("sweep_mu.csv");
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
    out << std::setprecision(9) << "mu,l2_rms,l2_integral,j_est,j_phy\n";
    for (std::size_t k = 0; k < mus.size(); ++k) {
      const auto& r = *results[k];
      const double rms = r.l2 ? r.l2->rms : std::nan("");
      const double integral = r.l2 ? r.l2->integral : std::nan("");
      out << mus[k] << ',' << rms << ',' << integral << ',' << r.result.final_costs.j_est << ','
          << r.result.final_costs.j_phy << '\n';
      std::ostringstream key;
      key << "sweep.mu_" << mus[k];
      run.metric(key.str() + ".l2_rms", rms);
      run.metric(key.str() + ".j_est", r.result.final_costs.j_est);
      run.metric(key.str() + ".j_phy", r.result.final_costs.j_phy);
    }
    if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
  });
}

void command_evaluate(Run& run, const ScenarioConfig& cfg) {
  auto in_dir = [&](const std::string& configured, const char* name) {
    return configured.empty() ? (fs::path(cfg.output_dir) / name).string() : configured;
  };
  struct Inputs {
    LoadedNetwork net;
    DensityField truth;
    ProbeDataset probes;
  };
  Inputs in = run.stage("load", [&] {
    return Inputs{load_network(in_dir(cfg.evaluate_network, "network.txt")),
                  read_field_csv(in_dir(cfg.evaluate_truth, "truth.csv")),
                  read_dataset_csv(in_dir(cfg.evaluate_probes, "probes.csv"))};
  });
  TruthData truth;
  truth.field = in.truth;
  truth.clean = in.probes;
  truth.tracks = dataset_tracks(in.probes);
  run.stage("domain", [&] {
    const auto& g = in.truth.grid();
    if (cfg.scenario == ScenarioKind::Import)
      truth.timing = import_timing(cfg, in.probes);
    else
      truth.timing = window(g.t_max() - g.t_min(), cfg.horizon_fraction);
    // Prefer the domain saved alongside the truth so scores match the original run.
    std::string saved = cfg.evaluate_domain;
    if (saved.empty() && fs::exists(fs::path(cfg.output_dir) / "domain.csv"))
      saved = (fs::path(cfg.output_dir) / "domain.csv").string();
    if (!saved.empty())
      truth.domain = read_domain_csv(saved, truth.timing.T, truth.timing.dT);
    else
      truth.domain = reconstruction_domain(truth.tracks, truth.timing.T, truth.timing.dT, g.x_min(), g.x_max());
  });
  const auto& net = in.net;
  const L2Result l2 = run.stage("evaluate", [&] {
    return l2_error(in.truth, [&](double t, double x) { return forward(net.params, net.spec, t, x); }, truth.domain);
  });
  record_l2(run, "l2", l2);
  if (!cfg.evaluate_velocity_model.empty()) {
    const VelocityModel learned = run.stage("load-velocity", [&] { return load_velocity_model(cfg.evaluate_velocity_model); });
    const VelocityModel law = configured_model(cfg);
    const auto* lv = learned.learned();
    run.metric("identify.fitted_distance",
               velocity_l2_distance([&](double r) { return learned.velocity(r); },
                                    [&](double r) { return law.velocity(r); }, lv->fit_rho_min, lv->fit_rho_max));
  }
  export_estimate(run, truth, in.probes, net.spec, net.params);
  run.stage("export-domain", [&] { write_domain_csv(run.path("evaluation_domain.csv"), truth.domain); });
}

}  // namespace

RunReport run_command(const std::string& subcommand, const ScenarioConfig& cfg, const LogSink& log) {
  if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
    fail(ErrorCode::Config, "unknown subcommand '" + subcommand + "'");
  cfg.validate();
  Run run(subcommand, cfg, log);
  try {
    if (subcommand == "evaluate") {
      command_evaluate(run, cfg);
      return run.finish();
    }
    const Prepared p = prepare(run, cfg);
    const bool want_identify = cfg.identify || cfg.pinn_velocity == "learned" ||
                               cfg.pinn_velocity == "greenshields-fit" || subcommand == "identify";
    if (subcommand == "simulate") {
      write_simulation(run, p);
    } else if (subcommand == "identify") {
      run_identify(run, cfg, p);
    } else if (subcommand == "reconstruct") {
      const auto identified = want_identify ? run_identify(run, cfg, p) : std::nullopt;
      run_reconstruct(run, cfg, p, identified);
    } else if (subcommand == "sweep-mu") {
      const auto identified = want_identify ? run_identify(run, cfg, p) : std::nullopt;
      command_sweep(run, cfg, p, identified);
    } else {
      write_simulation(run, p);
      const auto identified = want_identify ? run_identify(run, cfg, p) : std::nullopt;
      const Reconstruction rec = run_reconstruct(run, cfg, p, identified);
      export_estimate(run, p.truth, p.data, rec.spec, rec.result.params);
    }
    return run.finish();
  } catch (const Error& e) {
    run.abort(e.what());
    throw;
  } catch (const std::exception& e) {
    run.abort(e.what());
    throw Error(ErrorCode::Io, e.what());
  }
}

}  // namespace pvrecon
