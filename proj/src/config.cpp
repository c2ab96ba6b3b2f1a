#include "pvrecon/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "pvrecon/error.hpp"

namespace pvrecon {

namespace {

struct Entry {
  std::string key;
  std::function<std::string(const ScenarioConfig&)> get;
  std::function<void(ScenarioConfig&, const std::string&)> set;
};

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void range_error(const std::string& key, const std::string& value, const std::string& bounds) {
  fail(ErrorCode::Config, key + " = " + value + ": value outside " + bounds);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    fail(ErrorCode::Config, key + " = " + value + ": expected a number");
  }
  if (used != value.size() || !std::isfinite(v)) fail(ErrorCode::Config, key + " = " + value + ": expected a number");
  return v;
}

long long parse_integer(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    fail(ErrorCode::Config, key + " = " + value + ": expected an integer");
  }
  if (used != value.size()) fail(ErrorCode::Config, key + " = " + value + ": expected an integer");
  return v;
}

// Bounds written in interval notation; open ends use parentheses.
struct Range {
  double lo, hi;
  bool lo_open = false, hi_open = false;
  bool contains(double v) const {
    return (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
  std::string text() const {
    std::ostringstream os;
    os << (lo_open ? '(' : '[') << lo << ", " << hi << (hi_open ? ')' : ']');
    return os.str();
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

Entry real(std::string key, double ScenarioConfig::*m, Range r) {
  return {key, [m](const ScenarioConfig& c) { return format_double(c.*m); },
          [key, m, r](ScenarioConfig& c, const std::string& v) {
            const double d = parse_double(key, v);
            if (!r.contains(d)) range_error(key, v, r.text());
            c.*m = d;
          }};
}

Entry integer(std::string key, int ScenarioConfig::*m, long long lo, long long hi) {
  return {key, [m](const ScenarioConfig& c) { return std::to_string(c.*m); },
          [key, m, lo, hi](ScenarioConfig& c, const std::string& v) {
            const long long d = parse_integer(key, v);
            if (d < lo || d > hi) range_error(key, v, "[" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            c.*m = static_cast<int>(d);
          }};
}

Entry text(std::string key, std::string ScenarioConfig::*m) {
  return {key, [m](const ScenarioConfig& c) { return c.*m; },
          [m](ScenarioConfig& c, const std::string& v) { c.*m = v; }};
}

Entry choice(std::string key, std::string ScenarioConfig::*m, std::vector<std::string> options) {
  return {key, [m](const ScenarioConfig& c) { return c.*m; },
          [key, m, options](ScenarioConfig& c, const std::string& v) {
            if (std::find(options.begin(), options.end(), v) == options.end()) {
              std::string all;
              for (const auto& o : options) all += (all.empty() ? "" : " | ") + o;
              fail(ErrorCode::Config, key + " = " + v + ": expected one of " + all);
            }
            c.*m = v;
          }};
}

Entry flag(std::string key, bool ScenarioConfig::*m) {
  return {key, [m](const ScenarioConfig& c) { return std::string(c.*m ? "true" : "false"); },
          [key, m](ScenarioConfig& c, const std::string& v) {
            if (v == "true" || v == "1" || v == "yes")
              c.*m = true;
            else if (v == "false" || v == "0" || v == "no")
              c.*m = false;
            else
              fail(ErrorCode::Config, key + " = " + v + ": expected true or false");
          }};
}

const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::MacroFds: return "macro-fds";
    case ScenarioKind::MicroFl1: return "micro-fl1";
    case ScenarioKind::Import: return "import";
  }
  return "macro-fds";
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    const Range unit{0.0, 1.0};
    const Range positive{0.0, kInf, true};
    const Range non_negative{0.0, kInf};
    const Range any{-kInf, kInf};
    std::vector<Entry> e;
    e.push_back({"scenario", [](const ScenarioConfig& c) { return std::string(scenario_name(c.scenario)); },
                 [](ScenarioConfig& c, const std::string& v) {
                   if (v == "macro-fds")
                     c.scenario = ScenarioKind::MacroFds;
                   else if (v == "micro-fl1")
                     c.scenario = ScenarioKind::MicroFl1;
                   else if (v == "import")
                     c.scenario = ScenarioKind::Import;
                   else
                     fail(ErrorCode::Config, "scenario = " + v + ": expected one of macro-fds | micro-fl1 | import");
                 }});
    e.push_back({"seed", [](const ScenarioConfig& c) { return std::to_string(c.seed); },
                 [](ScenarioConfig& c, const std::string& v) {
                   std::size_t used = 0;
                   try {
                     if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
                     c.seed = std::stoull(v, &used);
                   } catch (const std::exception&) {
                     used = 0;
                   }
                   if (used == 0 || used != v.size()) fail(ErrorCode::Config, "seed = " + v + ": expected an unsigned 64-bit integer");
                 }});
    e.push_back(text("output_dir", &ScenarioConfig::output_dir));

    e.push_back(real("grid.x_min", &ScenarioConfig::grid_x_min, any));
    e.push_back(real("grid.x_max", &ScenarioConfig::grid_x_max, any));
    e.push_back(integer("grid.nx", &ScenarioConfig::grid_nx, 2, 100000));
    e.push_back(real("grid.t_max", &ScenarioConfig::grid_t_max, positive));
    e.push_back(integer("grid.nt", &ScenarioConfig::grid_nt, 2, 100000));

    e.push_back(choice("velocity.model", &ScenarioConfig::velocity_model, {"greenshields", "nonlinear", "tabulated"}));
    e.push_back(real("velocity.v_free", &ScenarioConfig::v_free, {0.0, 1000.0, true}));
    e.push_back(real("velocity.exponent", &ScenarioConfig::nonlinear_exponent, {0.0, 10.0, true}));
    e.push_back(real("velocity.damping", &ScenarioConfig::nonlinear_damping, {0.0, 100.0}));
    e.push_back(text("velocity.table", &ScenarioConfig::velocity_table));
    e.push_back(real("gamma", &ScenarioConfig::gamma, {0.0, 0.5}));

    e.push_back(choice("macro.ic", &ScenarioConfig::macro_ic, {"two-step", "riemann", "gaussian", "sinusoid"}));
    e.push_back(real("macro.ic_low", &ScenarioConfig::ic_low, unit));
    e.push_back(real("macro.ic_high", &ScenarioConfig::ic_high, unit));
    e.push_back(real("macro.ic_left", &ScenarioConfig::ic_left, any));
    e.push_back(real("macro.ic_right", &ScenarioConfig::ic_right, any));
    e.push_back(real("macro.ic_smoothing", &ScenarioConfig::ic_smoothing, non_negative));
    e.push_back(real("macro.ic_center", &ScenarioConfig::ic_center, any));
    e.push_back(real("macro.ic_width", &ScenarioConfig::ic_width, positive));
    e.push_back(real("macro.ic_wavelength", &ScenarioConfig::ic_wavelength, positive));
    e.push_back(choice("macro.bc_left", &ScenarioConfig::bc_left, {"dirichlet", "zero-gradient", "periodic"}));
    e.push_back(real("macro.bc_left_value", &ScenarioConfig::bc_left_value, unit));
    e.push_back(real("macro.bc_left_amplitude", &ScenarioConfig::bc_left_amplitude, {0.0, 0.5}));
    e.push_back(real("macro.bc_left_period", &ScenarioConfig::bc_left_period, positive));
    e.push_back(choice("macro.bc_right", &ScenarioConfig::bc_right, {"dirichlet", "zero-gradient", "periodic"}));
    e.push_back(real("macro.bc_right_value", &ScenarioConfig::bc_right_value, unit));

    e.push_back(real("horizon.fraction", &ScenarioConfig::horizon_fraction, {0.0, 10.0}));

    e.push_back(integer("probes.count", &ScenarioConfig::probe_count, 2, 1000));
    e.push_back(real("probes.entry_interval", &ScenarioConfig::probe_entry_interval, non_negative));
    e.push_back(real("probes.period", &ScenarioConfig::probe_period, non_negative));
    e.push_back(real("probes.rk4_dt", &ScenarioConfig::probe_rk4_dt, non_negative));

    e.push_back(real("noise.sigma", &ScenarioConfig::noise_sigma, {0.0, 1.0}));

    e.push_back(integer("net.hidden_layers", &ScenarioConfig::net_hidden_layers, 1, 64));
    e.push_back(integer("net.hidden_width", &ScenarioConfig::net_hidden_width, 1, 1024));
    e.push_back(real("mu", &ScenarioConfig::mu, unit));
    e.push_back(integer("train.n_phy", &ScenarioConfig::n_phy, 1, 10000000));
    e.push_back(real("train.learning_rate", &ScenarioConfig::learning_rate, {0.0, 1.0, true}));
    e.push_back(real("train.beta1", &ScenarioConfig::beta1, {0.0, 1.0, false, true}));
    e.push_back(real("train.beta2", &ScenarioConfig::beta2, {0.0, 1.0, false, true}));
    e.push_back(integer("train.iterations", &ScenarioConfig::iterations, 1, 100000000));
    e.push_back(choice("pinn.velocity", &ScenarioConfig::pinn_velocity, {"auto", "greenshields", "greenshields-fit", "model", "learned"}));

    e.push_back(integer("micro.vehicles", &ScenarioConfig::micro_vehicles, 2, 1000000));
    e.push_back(real("micro.start", &ScenarioConfig::micro_start, any));
    e.push_back(real("micro.end", &ScenarioConfig::micro_end, any));
    e.push_back(real("micro.density", &ScenarioConfig::micro_density, {0.0, 1.0, true, true}));
    e.push_back(real("micro.x_max", &ScenarioConfig::micro_x_max, any));
    e.push_back(real("micro.duration", &ScenarioConfig::micro_duration, positive));
    e.push_back(integer("micro.nx", &ScenarioConfig::micro_nx, 2, 100000));
    e.push_back(integer("micro.nt", &ScenarioConfig::micro_nt, 2, 100000));
    e.push_back(real("micro.dt", &ScenarioConfig::micro_dt, positive));
    e.push_back(real("micro.output_period", &ScenarioConfig::micro_output_period, positive));
    e.push_back(choice("micro.leader", &ScenarioConfig::micro_leader, {"constant", "stop-release", "sinusoidal"}));
    e.push_back(real("micro.leader_speed", &ScenarioConfig::leader_speed, non_negative));
    e.push_back(real("micro.stop_start", &ScenarioConfig::leader_stop_start, non_negative));
    e.push_back(real("micro.stop_end", &ScenarioConfig::leader_stop_end, non_negative));
    e.push_back(real("micro.release_speed", &ScenarioConfig::leader_release_speed, non_negative));
    e.push_back(real("micro.leader_amplitude", &ScenarioConfig::leader_amplitude, non_negative));
    e.push_back(real("micro.leader_period", &ScenarioConfig::leader_period, positive));
    e.push_back(integer("micro.probes", &ScenarioConfig::micro_probes, 2, 100000));
    e.push_back(real("micro.kernel_factor", &ScenarioConfig::micro_kernel_factor, non_negative));
    e.push_back(text("micro.trajectories", &ScenarioConfig::micro_trajectories));
    e.push_back(real("micro.vehicle_length", &ScenarioConfig::micro_vehicle_length, non_negative));

    e.push_back(flag("identify", &ScenarioConfig::identify));
    e.push_back(integer("identify.hidden_layers", &ScenarioConfig::identify_hidden_layers, 1, 16));
    e.push_back(integer("identify.hidden_width", &ScenarioConfig::identify_hidden_width, 1, 1024));
    e.push_back(integer("identify.iterations", &ScenarioConfig::identify_iterations, 1, 100000000));
    e.push_back(real("identify.learning_rate", &ScenarioConfig::identify_learning_rate, {0.0, 1.0, true}));
    e.push_back(real("identify.monotonicity_weight", &ScenarioConfig::identify_monotonicity_weight, non_negative));

    e.push_back(text("import.probes", &ScenarioConfig::import_probes));
    e.push_back(text("import.truth", &ScenarioConfig::import_truth));
    e.push_back(real("import.window", &ScenarioConfig::import_window, non_negative));

    e.push_back(text("sweep.mu_values", &ScenarioConfig::sweep_mu_values));
    e.push_back(integer("sweep.threads", &ScenarioConfig::sweep_threads, 1, 256));

    e.push_back(text("evaluate.network", &ScenarioConfig::evaluate_network));
    e.push_back(text("evaluate.truth", &ScenarioConfig::evaluate_truth));
    e.push_back(text("evaluate.probes", &ScenarioConfig::evaluate_probes));
    e.push_back(text("evaluate.domain", &ScenarioConfig::evaluate_domain));
    e.push_back(text("evaluate.velocity_model", &ScenarioConfig::evaluate_velocity_model));
    return e;
  }();
  return entries;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : registry())
    if (e.key == key) return e;
  fail(ErrorCode::Config, "unknown configuration key '" + key + "'");
}

}  // namespace

void ScenarioConfig::set(const std::string& key, const std::string& value) { find_entry(key).set(*this, value); }

std::string ScenarioConfig::get(const std::string& key) const { return find_entry(key).get(*this); }

const std::vector<std::string>& ScenarioConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(e.key);
    return out;
  }();
  return k;
}

std::vector<double> parse_number_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(ErrorCode::Config, key + " = '" + text + "': empty list entry");
    out.push_back(parse_double(key, item));
  }
  if (out.empty()) fail(ErrorCode::Config, key + ": expected a comma-separated list of numbers");
  return out;
}

void ScenarioConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::Config, what); };
  if (!(grid_x_max > grid_x_min)) bad("grid.x_max must exceed grid.x_min");
  if (!(micro_end > micro_start)) bad("micro.end must exceed micro.start");
  if (!(micro_x_max > micro_start)) bad("micro.x_max must exceed micro.start");
  if (leader_stop_end < leader_stop_start) bad("micro.stop_end must not precede micro.stop_start");
  if (micro_leader == "sinusoidal" && leader_amplitude > leader_speed)
    bad("micro.leader_amplitude must not exceed micro.leader_speed (leader speed stays non-negative)");
  if (micro_probes > micro_vehicles) bad("micro.probes must not exceed micro.vehicles");
  if (!micro_trajectories.empty() && !(micro_vehicle_length > 0.0))
    bad("micro.vehicle_length must be positive when micro.trajectories is set");
  if (velocity_model == "tabulated" && velocity_table.empty()) bad("velocity.table is required for tabulated models");
  if (scenario == ScenarioKind::Import && import_probes.empty()) bad("import.probes is required for import scenarios");
  if ((bc_left == "periodic") != (bc_right == "periodic")) bad("periodic boundaries must be set on both ends");
  for (double mu_value : parse_number_list("sweep.mu_values", sweep_mu_values))
    if (!(mu_value >= 0.0 && mu_value <= 1.0)) bad("sweep.mu_values entries must lie in [0, 1]");
}

ScenarioConfig parse_config(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::Parse, "line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
      fail(ErrorCode::Config, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    try {
      cfg.set(key, value);
    } catch (const Error& e) {
      fail(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ScenarioConfig& config) {
  std::ostringstream os;
  for (const auto& e : registry()) os << e.key << " = " << e.get(config) << '\n';
  return os.str();
}

StageSeeds derive_seeds(std::uint64_t master) {
  return {master ^ kNoiseTag, master ^ kInitTag, master ^ kCollocationTag, master ^ kIdentifyTag};
}

}  // namespace pvrecon
