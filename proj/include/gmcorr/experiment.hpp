#pragma once

// Named scenarios, sweep expansion, steady-state sampling and result files.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gmcorr/config.hpp"
#include "gmcorr/correlations.hpp"
#include "gmcorr/lindblad.hpp"
#include "gmcorr/models.hpp"
#include "gmcorr/trajectory.hpp"

#ifndef GMCORR_VERSION
#define GMCORR_VERSION "unknown"
#endif

namespace gmcorr {

enum class Scenario {
  oracle_check,
  three_qubit_entropy_cross,
  three_qubit_beamsplitter,
  lmg_jump_sweep,
  lmg_homodyne_sweep,
  dicke_validate,
};

inline constexpr std::array<std::pair<Scenario, std::string_view>, 6> kScenarioNames{{
    {Scenario::oracle_check, "oracle-check"},
    {Scenario::three_qubit_entropy_cross, "three-qubit-entropy-cross"},
    {Scenario::three_qubit_beamsplitter, "three-qubit-beamsplitter"},
    {Scenario::lmg_jump_sweep, "lmg-jump-sweep"},
    {Scenario::lmg_homodyne_sweep, "lmg-homodyne-sweep"},
    {Scenario::dicke_validate, "dicke-validate"},
}};

inline std::string_view scenario_name(Scenario s) {
  for (const auto& [k, v] : kScenarioNames)
    if (k == s) return v;
  return "?";
}

enum class ModelKind { three_qubit, lmg };
enum class OutputFormat { csv, json, both };

struct ExperimentConfig {
  Scenario scenario = Scenario::oracle_check;
  std::string name;  // output file stem
  ModelKind model = ModelKind::three_qubit;
  TrajectoryConfig traj;
  bool n_trajectories_set = false;

  // three-qubit
  double gamma_a = 0.0;
  std::vector<double> gamma_b{1.0};
  double gamma_c = 0.0;
  ThreeQubitUnraveling unraveling = ThreeQubitUnraveling::direct;
  std::string initial_state = "psi1";
  int excited_level = 1;

  // LMG, in units of lambda = 1
  std::vector<int> n_spins{10};
  std::vector<double> h_over_lambda{0.5};
  double gamma_b_over_lambda = 0.2;
  double gamma_aniso = 0.0;
  double rate_factor = 1.0;
  std::vector<double> theta_deg{0.0};
  HamiltonianStep hamiltonian_step = HamiltonianStep::euler;

  double oracle_tolerance = 0.05;
  int dicke_max_n = 8;
  int schmidt_max_n = 60;

  std::string output_dir = "out";
  OutputFormat format = OutputFormat::both;
  unsigned threads = 0;

  /// Resolved configuration as canonical key/value text, defaults included.
  /// Parsing it back yields the same configuration.
  std::map<std::string, std::string> echo;

  bool is_lmg() const {
    return scenario == Scenario::lmg_jump_sweep || scenario == Scenario::lmg_homodyne_sweep ||
           (scenario == Scenario::oracle_check && model == ModelKind::lmg);
  }
  bool is_three_qubit() const {
    return scenario == Scenario::three_qubit_entropy_cross || scenario == Scenario::three_qubit_beamsplitter ||
           (scenario == Scenario::oracle_check && model == ModelKind::three_qubit);
  }
  bool is_steady_state() const {
    return scenario == Scenario::lmg_jump_sweep || scenario == Scenario::lmg_homodyne_sweep;
  }
};

namespace detail {

inline std::string join_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + shortest_repr(v[i]);
  return s + "]";
}

inline std::string join_list(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

template <class E, std::size_t K>
E parse_choice(const ConfigFile& f, const std::string& key, const std::array<std::pair<E, std::string_view>, K>& table,
               E fallback, std::string& text) {
  std::string def;
  for (const auto& [e, n] : table)
    if (e == fallback) def = n;
  text = f.get_string(key, def);
  for (const auto& [e, n] : table)
    if (n == text) return e;
  std::string allowed;
  for (const auto& [e, n] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
  throw ConfigError(f.origin() + ": '" + key + "' must be one of {" + allowed + "}, got '" + text + "'");
}

}  // namespace detail

/// Builds an ExperimentConfig from parsed key/value text, applying the
/// scenario's defaults. Keys the scenario does not use are errors.
inline ExperimentConfig parse_experiment(const ConfigFile& f) {
  ExperimentConfig c;
  auto& echo = c.echo;
  std::string text;

  c.scenario = detail::parse_choice(f, "scenario", kScenarioNames, Scenario::oracle_check, text);
  if (!f.has("scenario")) throw ConfigError(f.origin() + ": missing required key 'scenario'");
  echo["scenario"] = text;
  c.name = f.get_string("name", std::string(scenario_name(c.scenario)));
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos)
    throw ConfigError(f.origin() + ": 'name' must be a plain file stem");
  echo["name"] = c.name;
  c.output_dir = f.get_string("output_dir", c.output_dir);
  const long long threads = f.get_int("threads", 0);
  if (threads < 0) throw ConfigError(f.origin() + ": 'threads' must be >= 0");
  c.threads = static_cast<unsigned>(threads);
  static constexpr std::array<std::pair<OutputFormat, std::string_view>, 3> kFormats{
      {{OutputFormat::csv, "csv"}, {OutputFormat::json, "json"}, {OutputFormat::both, "both"}}};
  c.format = detail::parse_choice(f, "output_format", kFormats, OutputFormat::both, text);
  echo["output_format"] = text;

  if (c.scenario == Scenario::dicke_validate) {
    c.dicke_max_n = static_cast<int>(f.get_int("dicke_max_n", 8));
    c.schmidt_max_n = static_cast<int>(f.get_int("schmidt_max_n", 60));
    if (c.dicke_max_n < 2 || c.dicke_max_n > kMaxRegisterSpins)
      throw ConfigError(f.origin() + ": 'dicke_max_n' must be in [2, " + std::to_string(kMaxRegisterSpins) + "]");
    if (c.schmidt_max_n < 2) throw ConfigError(f.origin() + ": 'schmidt_max_n' must be >= 2");
    echo["dicke_max_n"] = std::to_string(c.dicke_max_n);
    echo["schmidt_max_n"] = std::to_string(c.schmidt_max_n);
    f.reject_unused("scenario " + std::string(scenario_name(c.scenario)));
    return c;
  }

  if (c.scenario == Scenario::oracle_check) {
    static constexpr std::array<std::pair<ModelKind, std::string_view>, 2> kModels{
        {{ModelKind::three_qubit, "three-qubit"}, {ModelKind::lmg, "lmg"}}};
    c.model = detail::parse_choice(f, "model", kModels, ModelKind::three_qubit, text);
    echo["model"] = text;
  }

  // Scenario defaults.
  auto& t = c.traj;
  UnravelingMethod default_method = UnravelingMethod::jump;
  switch (c.scenario) {
    case Scenario::oracle_check:
      if (c.model == ModelKind::lmg) {
        default_method = UnravelingMethod::diffusive;
        c.n_spins = {6};
        c.theta_deg = {0.0, 90.0};
        t.dt = 1e-3, t.t_final = 5.0, t.record_stride = 1000;
      } else {
        t.dt = 1e-3, t.t_final = 2.0, t.record_stride = 500;
      }
      t.n_trajectories = 2000;
      break;
    case Scenario::three_qubit_entropy_cross:
      t.dt = 1e-3, t.t_final = 4.0, t.record_stride = 20, t.n_trajectories = 2000;
      break;
    case Scenario::three_qubit_beamsplitter:
      c.gamma_a = 1.0, c.gamma_b = {1.0, 5.0, 10.0}, c.gamma_c = 1.0;
      c.unraveling = ThreeQubitUnraveling::beam_splitter_ab;
      c.initial_state = "psi2";
      t.dt = 1e-3, t.t_final = 3.0, t.record_stride = 20, t.n_trajectories = 2000;
      break;
    case Scenario::lmg_jump_sweep:
      c.h_over_lambda = {-0.5, -0.1, 0.1, 0.5, 1.0, 1.5, 2.0};
      t.dt = 1e-2, t.t_final = 100.0, t.burn_in = 50.0, t.record_stride = 100, t.n_trajectories = 500;
      break;
    case Scenario::lmg_homodyne_sweep:
      default_method = UnravelingMethod::diffusive;
      c.n_spins = {20};
      c.theta_deg = {0.0, 30.0, 60.0, 90.0, 120.0, 150.0};
      c.hamiltonian_step = HamiltonianStep::exact;
      t.dt = 1e-3, t.t_final = 100.0, t.burn_in = 50.0, t.record_stride = 1000, t.n_trajectories = 500;
      break;
    case Scenario::dicke_validate:
      break;
  }
  if (c.is_lmg()) c.initial_state = "dicke-ground";

  t.method = default_method;
  if (c.scenario == Scenario::oracle_check && c.model == ModelKind::lmg) {
    static constexpr std::array<std::pair<UnravelingMethod, std::string_view>, 2> kMethods{
        {{UnravelingMethod::jump, "jump"}, {UnravelingMethod::diffusive, "diffusive"}}};
    t.method = detail::parse_choice(f, "method", kMethods, default_method, text);
    echo["method"] = text;
  }

  t.dt = f.get_double("dt", t.dt);
  t.t_final = f.get_double("t_final", t.t_final);
  t.burn_in = f.get_double("burn_in", t.burn_in);
  t.record_stride = static_cast<int>(f.get_int("record_stride", t.record_stride));
  c.n_trajectories_set = f.has("n_trajectories");
  t.n_trajectories = static_cast<int>(f.get_int("n_trajectories", t.n_trajectories));
  t.master_seed = f.get_uint64("seed", 0);
  echo["dt"] = detail::shortest_repr(t.dt);
  echo["t_final"] = detail::shortest_repr(t.t_final);
  echo["burn_in"] = detail::shortest_repr(t.burn_in);
  echo["record_stride"] = std::to_string(t.record_stride);
  echo["seed"] = std::to_string(t.master_seed);
  if (c.n_trajectories_set) echo["n_trajectories"] = std::to_string(t.n_trajectories);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(f.origin() + ": " + e.what());
  }
  if (std::abs(t.total_steps() * t.dt - t.t_final) > 1e-9 * std::max(1.0, t.t_final))
    throw ConfigError(f.origin() + ": t_final must be an integer multiple of dt");
  if (t.record_times().empty()) throw ConfigError(f.origin() + ": no recorded times in [burn_in, t_final]");

  if (t.method == UnravelingMethod::jump) {
    static constexpr std::array<std::pair<NoJumpUpdate, std::string_view>, 2> kUpdates{
        {{NoJumpUpdate::exponential, "exponential"}, {NoJumpUpdate::first_order, "first-order"}}};
    t.no_jump = detail::parse_choice(f, "no_jump_update", kUpdates, NoJumpUpdate::exponential, text);
    echo["no_jump_update"] = text;
  }

  if (c.is_three_qubit()) {
    c.gamma_a = f.get_double("gamma_a", c.gamma_a);
    c.gamma_b = f.get_doubles("gamma_b", c.gamma_b);
    c.gamma_c = f.get_double("gamma_c", c.gamma_c);
    for (double g : c.gamma_b)
      if (g < 0.0) throw ConfigError(f.origin() + ": rates must be >= 0");
    if (c.gamma_a < 0.0 || c.gamma_c < 0.0) throw ConfigError(f.origin() + ": rates must be >= 0");
    static constexpr std::array<std::pair<ThreeQubitUnraveling, std::string_view>, 2> kUnr{
        {{ThreeQubitUnraveling::direct, "direct"}, {ThreeQubitUnraveling::beam_splitter_ab, "beam-splitter-ab"}}};
    c.unraveling = detail::parse_choice(f, "unraveling", kUnr, c.unraveling, text);
    echo["unraveling"] = text;
    c.initial_state = f.get_string("initial_state", c.initial_state);
    if (c.initial_state != "psi1" && c.initial_state != "psi2" && c.initial_state != "ghz3")
      throw ConfigError(f.origin() + ": 'initial_state' must be one of {psi1, psi2, ghz3}");
    c.excited_level = static_cast<int>(f.get_int("excited_level", c.excited_level));
    if (c.excited_level != 0 && c.excited_level != 1) throw ConfigError(f.origin() + ": 'excited_level' must be 0 or 1");
    echo["excited_level"] = std::to_string(c.excited_level);
    echo["gamma_a"] = detail::shortest_repr(c.gamma_a);
    echo["gamma_b"] = detail::join_list(c.gamma_b);
    echo["gamma_c"] = detail::shortest_repr(c.gamma_c);
    echo["initial_state"] = c.initial_state;
  }

  if (c.is_lmg()) {
    std::vector<long long> ns(c.n_spins.begin(), c.n_spins.end());
    ns = f.get_ints("n_spins", ns);
    c.n_spins.clear();
    for (long long n : ns) {
      if (n < 2 || n > 2000) throw ConfigError(f.origin() + ": 'n_spins' entries must be in [2, 2000]");
      c.n_spins.push_back(static_cast<int>(n));
    }
    c.h_over_lambda = f.get_doubles("h_over_lambda", c.h_over_lambda);
    c.gamma_b_over_lambda = f.get_double("gamma_b_over_lambda", c.gamma_b_over_lambda);
    c.gamma_aniso = f.get_double("gamma_aniso", c.gamma_aniso);
    c.rate_factor = f.get_double("rate_factor", c.rate_factor);
    c.initial_state = f.get_string("initial_state", c.initial_state);
    if (c.initial_state != "dicke-ground" && c.initial_state != "dicke-excited")
      throw ConfigError(f.origin() + ": 'initial_state' must be one of {dicke-ground, dicke-excited}");
    echo["n_spins"] = detail::join_list(c.n_spins);
    echo["h_over_lambda"] = detail::join_list(c.h_over_lambda);
    echo["gamma_b_over_lambda"] = detail::shortest_repr(c.gamma_b_over_lambda);
    echo["gamma_aniso"] = detail::shortest_repr(c.gamma_aniso);
    echo["rate_factor"] = detail::shortest_repr(c.rate_factor);
    echo["initial_state"] = c.initial_state;
    LMGParams probe;
    probe.gamma_b = c.gamma_b_over_lambda;
    probe.gamma_aniso = c.gamma_aniso;
    probe.rate_factor = c.rate_factor;
    try {
      probe.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(f.origin() + ": " + e.what());
    }
    if (t.method == UnravelingMethod::diffusive) {
      c.theta_deg = f.get_doubles("theta_deg", c.theta_deg);
      echo["theta_deg"] = detail::join_list(c.theta_deg);
      static constexpr std::array<std::pair<HamiltonianStep, std::string_view>, 2> kSteps{
          {{HamiltonianStep::euler, "euler"}, {HamiltonianStep::exact, "exact"}}};
      c.hamiltonian_step = detail::parse_choice(f, "hamiltonian_step", kSteps, c.hamiltonian_step, text);
      echo["hamiltonian_step"] = text;
    }
  }

  if (c.scenario == Scenario::oracle_check) {
    c.oracle_tolerance = f.get_double("oracle_tolerance", c.oracle_tolerance);
    echo["oracle_tolerance"] = detail::shortest_repr(c.oracle_tolerance);
  }

  f.reject_unused("scenario " + std::string(scenario_name(c.scenario)));
  return c;
}

inline ExperimentConfig parse_experiment(std::string_view text) { return parse_experiment(ConfigFile::parse(text)); }

/// Canonical config text; parse_experiment(canonical_text(c)) reproduces c.
inline std::string canonical_text(const ExperimentConfig& c) {
  std::string s;
  for (const auto& [k, v] : c.echo) s += k + " = " + v + "\n";
  return s;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string manifest_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_text(c) + "version = " GMCORR_VERSION "\n")));
  return buf;
}

// Sweep points ----------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Stream key for sweep point k. Points never share trajectory streams.
inline std::uint64_t point_seed(std::uint64_t master_seed, std::size_t k) {
  return splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(k)));
}

struct SweepPoint {
  std::size_t index = 0;
  std::vector<std::pair<std::string, double>> params;  // output columns
  ThreeQubitScenario three_qubit;
  LMGParams lmg;
  std::optional<double> theta_deg;  // homodyne points only
  TrajectoryConfig traj;
};

inline std::vector<SweepPoint> expand_sweep(const ExperimentConfig& c) {
  std::vector<SweepPoint> pts;
  auto add = [&](SweepPoint p) {
    p.index = pts.size();
    p.traj.master_seed = point_seed(c.traj.master_seed, p.index);
    pts.push_back(std::move(p));
  };
  if (c.is_three_qubit()) {
    for (double gb : c.gamma_b) {
      SweepPoint p;
      p.three_qubit = {c.gamma_a, gb, c.gamma_c, c.unraveling, c.excited_level};
      p.params = {{"gamma_a", c.gamma_a}, {"gamma_b", gb}, {"gamma_c", c.gamma_c}};
      p.traj = c.traj;
      add(std::move(p));
    }
  } else if (c.is_lmg()) {
    const bool homodyne = c.traj.method == UnravelingMethod::diffusive;
    for (int n : c.n_spins)
      for (double h : c.h_over_lambda)
        for (std::size_t a = 0; a < (homodyne ? c.theta_deg.size() : 1); ++a) {
          SweepPoint p;
          p.lmg.n_spins = n;
          p.lmg.h = h;
          p.lmg.lambda = 1.0;
          p.lmg.gamma_b = c.gamma_b_over_lambda;
          p.lmg.gamma_aniso = c.gamma_aniso;
          p.lmg.rate_factor = c.rate_factor;
          p.params = {{"N", n}, {"h_over_lambda", h}, {"gamma_b_over_lambda", c.gamma_b_over_lambda}};
          p.traj = c.traj;
          if (homodyne) {
            p.theta_deg = c.theta_deg[a];
            p.params.emplace_back("theta_deg", c.theta_deg[a]);
            p.traj.theta = c.theta_deg[a] * std::numbers::pi / 180.0;
          }
          if (!c.n_trajectories_set) p.traj.n_trajectories = n <= 25 ? 500 : 200;
          add(std::move(p));
        }
  }
  return pts;
}

inline StateVector initial_state(const ExperimentConfig& c, const SweepPoint& p) {
  if (c.initial_state == "psi1") return psi1();
  if (c.initial_state == "psi2") return psi2();
  if (c.initial_state == "ghz3") return ghz3();
  const int n = p.lmg.n_spins;
  return StateVector::dicke_state(c.initial_state == "dicke-excited" ? n : 0, n);
}

inline LindbladSpec point_spec(const ExperimentConfig& c, const SweepPoint& p) {
  return c.is_three_qubit() ? three_qubit_spec(p.three_qubit) : lmg_spec(p.lmg);
}

/// Pre-compute checks: the worst-case jump probability must respect the
/// per-step guard. Returns warnings for near misses.
inline std::vector<std::string> check_step_guards(const ExperimentConfig& c) {
  std::vector<std::string> warnings;
  for (const auto& p : expand_sweep(c)) {
    const auto spec = point_spec(c, p);
    if (p.traj.method == UnravelingMethod::jump) {
      double s = 0.0;
      for (const auto& j : spec.jumps) s += detail::spectral_norm_sq(j);
      const double worst = s * p.traj.dt;
      if (worst > kJumpProbabilityGuard)
        throw ConfigError("point " + std::to_string(p.index) + ": worst-case jump probability per step " +
                          detail::shortest_repr(worst) + " exceeds the guard 0.1; reduce dt");
      if (worst > 0.5 * kJumpProbabilityGuard)
        warnings.push_back("point " + std::to_string(p.index) + ": worst-case jump probability per step " +
                           detail::shortest_repr(worst) + " is within a factor 2 of the guard");
    } else {
      const double l2 = detail::spectral_norm_sq(spec.jumps.front());
      double bound = 2.0 * l2;
      if (c.hamiltonian_step == HamiltonianStep::euler) bound += std::sqrt(detail::spectral_norm_sq(spec.hamiltonian));
      if (bound * p.traj.dt > 0.1)
        warnings.push_back("point " + std::to_string(p.index) + ": drift bound * dt = " +
                           detail::shortest_repr(bound * p.traj.dt) + " exceeds 0.1; steps may be rejected");
    }
  }
  return warnings;
}

// Aggregation helpers ----------------------------------------------------------

/// Most frequent value; ties go to the smallest.
inline double histogram_mode(std::span<const double> v) {
  std::map<double, std::size_t> counts;
  for (double x : v) ++counts[x];
  double best = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_n = 0;
  for (const auto& [x, n] : counts)
    if (n > best_n) best = x, best_n = n;
  return best;
}

struct SteadyState {
  MeanEstimate correlation;  // C_U, per-trajectory time average over the window
  MeanEstimate max_entropy;
  double argmin_mode = 0.0;
  MeanEstimate first_half;
  MeanEstimate second_half;
  bool stationary = true;
  std::size_t window_records = 0;
};

/// Steady-state statistics of an ensemble whose records all lie in the
/// sampling window (TrajectoryConfig::burn_in excludes earlier times). Each
/// trajectory contributes the average over its window; stationarity compares
/// the window halves.
inline SteadyState steady_state_sampling(const EnsembleResult& res) {
  SteadyState s;
  const auto kc = res.index_of(kCorrelationName);
  const auto km = res.index_of(kMaxEntropyName);
  const auto ka = res.index_of(kArgminName);
  const auto n = static_cast<std::size_t>(res.n_trajectories);
  const std::size_t r = res.times.size();
  s.window_records = r;
  const std::size_t half = r / 2;
  std::vector<double> c(n), m(n), a, h1(n), h2(n);
  std::vector<double> row(r);
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t t = 0; t < r; ++t) row[t] = res.samples[kc](jj, static_cast<Eigen::Index>(t));
    c[j] = pairwise_sum(row) / static_cast<double>(r);
    if (half > 0) {
      h1[j] = pairwise_sum(std::span<const double>(row).first(half)) / static_cast<double>(half);
      h2[j] = pairwise_sum(std::span<const double>(row).subspan(half)) / static_cast<double>(r - half);
    }
    for (std::size_t t = 0; t < r; ++t) row[t] = res.samples[km](jj, static_cast<Eigen::Index>(t));
    m[j] = pairwise_sum(row) / static_cast<double>(r);
    for (std::size_t t = 0; t < r; ++t) a.push_back(res.samples[ka](jj, static_cast<Eigen::Index>(t)));
  }
  s.correlation = estimate_mean(c);
  s.max_entropy = estimate_mean(m);
  s.argmin_mode = histogram_mode(a);
  if (half > 0 && n >= 2) {
    s.first_half = estimate_mean(h1);
    s.second_half = estimate_mean(h2);
    const double combined = std::hypot(s.first_half.standard_error, s.second_half.standard_error);
    s.stationary = std::abs(s.first_half.mean - s.second_half.mean) <= 2.0 * combined;
  } else {
    s.stationary = false;
  }
  return s;
}

// Ensemble runners used by the scenarios and by tests ---------------------------

inline EnsembleResult three_qubit_ensemble(const ThreeQubitScenario& s, const StateVector& psi0,
                                           const TrajectoryConfig& cfg, EnsembleOptions opts = {false, false}) {
  return run_ensemble(psi0, JumpUnraveling(three_qubit_spec(s), cfg.dt, cfg.no_jump), cfg,
                      qubit_correlation_observables(3), opts);
}

/// LMG ensemble; cfg.method selects jump or homodyne (angle cfg.theta).
inline EnsembleResult lmg_ensemble(const LMGParams& p, const StateVector& psi0, const TrajectoryConfig& cfg,
                                   HamiltonianStep h_step = HamiltonianStep::euler,
                                   EnsembleOptions opts = {false, false}) {
  const auto obs = dicke_correlation_observables(p.n_spins);
  if (cfg.method == UnravelingMethod::jump)
    return run_ensemble(psi0, JumpUnraveling(lmg_spec(p), cfg.dt, cfg.no_jump), cfg, obs, opts);
  return run_ensemble(psi0, DiffusiveUnraveling(lmg_homodyne_model(p, cfg.theta), cfg.dt, h_step), cfg, obs, opts);
}

// Results ---------------------------------------------------------------------

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct PointReport {
  std::size_t index = 0;
  std::vector<std::pair<std::string, double>> params;
  std::uint64_t seed = 0;
  int n_trajectories = 0;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  /// (file suffix, table); the primary table has an empty suffix.
  std::vector<std::pair<std::string, Table>> tables;
  std::vector<PointReport> points;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::string> warnings;
  /// Non-empty when a validation scenario detected a numerical mismatch.
  std::vector<std::string> failures;

  const Table& table(const std::string& suffix = "") const {
    for (const auto& [s, t] : tables)
      if (s == suffix) return t;
    throw std::invalid_argument("ExperimentResult: no table '" + suffix + "'");
  }
};

namespace detail {

inline std::vector<std::string> param_names(const SweepPoint& p) {
  std::vector<std::string> out;
  for (const auto& [k, v] : p.params) out.push_back(k);
  return out;
}

inline std::vector<double> param_values(const SweepPoint& p) {
  std::vector<double> out;
  for (const auto& [k, v] : p.params) out.push_back(v);
  return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// First time at which a - b changes sign, by linear interpolation; NaN if none.
inline double first_crossing(const std::vector<double>& t, const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double d0 = a[k - 1] - b[k - 1], d1 = a[k] - b[k];
    if (d0 != 0.0 && (d0 < 0.0) != (d1 < 0.0))
      return t[k - 1] + (t[k] - t[k - 1]) * d0 / (d0 - d1);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline nlohmann::json point_json(const SweepPoint& p) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : p.params) j[k] = v;
  return j;
}

}  // namespace detail

using ProgressFn = std::function<void(const std::string&)>;

namespace detail {

inline void run_three_qubit(const ExperimentConfig& c, unsigned threads, ExperimentResult& out, const ProgressFn& log) {
  Table tab;
  const auto pts = expand_sweep(c);
  for (const auto& p : pts) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = p.traj;
    cfg.threads = threads;
    const auto res = three_qubit_ensemble(p.three_qubit, initial_state(c, p), cfg);
    if (tab.columns.empty()) {
      tab.columns = param_names(p);
      for (const char* col : {"time", "C_U_mean", "C_U_se", "argmin_mode", "max_entropy_mean", "max_entropy_se",
                              "S_A_mean", "S_A_se", "S_B_mean", "S_B_se", "S_C_mean", "S_C_se", "min_mean_entropy"})
        tab.columns.push_back(col);
    }
    std::vector<double> sb, sc, cu;
    double best = -1.0, best_t = 0.0, best_se = 0.0;
    for (std::size_t t = 0; t < res.times.size(); ++t) {
      auto row = param_values(p);
      const auto e = res.estimate(kCorrelationName, t);
      const auto m = res.estimate(kMaxEntropyName, t);
      const auto argmins = res.column(res.index_of(kArgminName), t);
      row.insert(row.end(), {res.times[t], e.mean, e.standard_error, histogram_mode(argmins), m.mean,
                             m.standard_error});
      double min_mean = std::numeric_limits<double>::infinity();
      for (const char* s : {"S_A", "S_B", "S_C"}) {
        const auto es = res.estimate(s, t);
        row.push_back(es.mean);
        row.push_back(es.standard_error);
        min_mean = std::min(min_mean, es.mean);
      }
      row.push_back(min_mean);
      tab.rows.push_back(std::move(row));
      sb.push_back(res.estimate("S_B", t).mean);
      sc.push_back(res.estimate("S_C", t).mean);
      if (e.mean > best) best = e.mean, best_t = res.times[t], best_se = e.standard_error;
    }
    auto js = point_json(p);
    js["max_C_U_mean"] = best;
    js["max_C_U_se"] = best_se;
    js["max_C_U_time"] = best_t;
    const double cross = first_crossing(res.times, sb, sc);
    if (!std::isnan(cross)) js["S_B_S_C_crossing_time"] = cross;
    out.summary["points"].push_back(js);
    out.points.push_back({p.index, p.params, cfg.master_seed, cfg.n_trajectories, seconds_since(t0)});
    if (log) log("point " + std::to_string(p.index + 1) + "/" + std::to_string(pts.size()) + " done");
  }
  out.tables.emplace_back("", std::move(tab));
}

inline void run_lmg_sweep(const ExperimentConfig& c, unsigned threads, ExperimentResult& out, const ProgressFn& log) {
  Table series, steady;
  const auto pts = expand_sweep(c);
  for (const auto& p : pts) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = p.traj;
    cfg.threads = threads;
    const auto res = lmg_ensemble(p.lmg, initial_state(c, p), cfg, c.hamiltonian_step);
    if (series.columns.empty()) {
      series.columns = param_names(p);
      for (const char* col : {"time", "C_U_mean", "C_U_se", "argmin_mode", "max_entropy_mean", "max_entropy_se"})
        series.columns.push_back(col);
      steady.columns = param_names(p);
      for (const char* col : {"n_trajectories", "window_records", "C_U_mean", "C_U_se", "max_entropy_mean",
                              "max_entropy_se", "argmin_mode", "first_half_mean", "second_half_mean", "stationary"})
        steady.columns.push_back(col);
    }
    for (std::size_t t = 0; t < res.times.size(); ++t) {
      auto row = param_values(p);
      const auto e = res.estimate(kCorrelationName, t);
      const auto m = res.estimate(kMaxEntropyName, t);
      const auto argmins = res.column(res.index_of(kArgminName), t);
      row.insert(row.end(), {res.times[t], e.mean, e.standard_error, histogram_mode(argmins), m.mean,
                             m.standard_error});
      series.rows.push_back(std::move(row));
    }
    const auto ss = steady_state_sampling(res);
    auto row = param_values(p);
    row.insert(row.end(), {static_cast<double>(cfg.n_trajectories), static_cast<double>(ss.window_records),
                           ss.correlation.mean, ss.correlation.standard_error, ss.max_entropy.mean,
                           ss.max_entropy.standard_error, ss.argmin_mode, ss.first_half.mean, ss.second_half.mean,
                           ss.stationary ? 1.0 : 0.0});
    steady.rows.push_back(std::move(row));
    if (!ss.stationary)
      out.warnings.push_back("point " + std::to_string(p.index) +
                             ": window halves differ by more than 2 combined standard errors; burn_in may be short");
    out.points.push_back({p.index, p.params, cfg.master_seed, cfg.n_trajectories, seconds_since(t0)});
    if (log) log("point " + std::to_string(p.index + 1) + "/" + std::to_string(pts.size()) + " done");
  }
  out.tables.emplace_back("", std::move(series));
  out.tables.emplace_back("steady", std::move(steady));
}

inline void run_oracle_check(const ExperimentConfig& c, unsigned threads, ExperimentResult& out, const ProgressFn& log) {
  Table tab;
  double worst = 0.0;
  const auto pts = expand_sweep(c);
  for (const auto& p : pts) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = p.traj;
    cfg.threads = threads;
    const auto psi0 = initial_state(c, p);
    const auto spec = point_spec(c, p);
    const EnsembleOptions opts{true, false};
    EnsembleResult res;
    if (c.is_three_qubit())
      res = run_ensemble(psi0, JumpUnraveling(spec, cfg.dt, cfg.no_jump), cfg, {}, opts);
    else if (cfg.method == UnravelingMethod::jump)
      res = run_ensemble(psi0, JumpUnraveling(spec, cfg.dt, cfg.no_jump), cfg, {}, opts);
    else
      res = run_ensemble(psi0, DiffusiveUnraveling(lmg_homodyne_model(p.lmg, cfg.theta), cfg.dt, c.hamiltonian_step),
                         cfg, {}, opts);
    // The oracle step divides the trajectory step and keeps RK4 well inside
    // its stability region.
    double max_rate = 0.0;
    for (const auto& j : spec.jumps) max_rate = std::max(max_rate, detail::spectral_norm_sq(j));
    const double stiff = 2.0 * std::sqrt(detail::spectral_norm_sq(spec.hamiltonian)) + spec.jumps.size() * max_rate;
    int sub = 1;
    while (cfg.dt / sub * stiff > 0.5 || cfg.dt / sub * max_rate > 0.05) ++sub;
    const auto oracle =
        integrate_master(spec, DensityOperator::pure(psi0), cfg.dt / sub, cfg.t_final, cfg.record_stride * sub);
    if (tab.columns.empty()) {
      tab.columns = param_names(p);
      for (const char* col : {"time", "trace_distance", "max_element_se"}) tab.columns.push_back(col);
    }
    for (std::size_t t = 0; t < res.times.size(); ++t) {
      const auto k = static_cast<std::size_t>(std::llround(res.times[t] / (cfg.dt * cfg.record_stride)));
      const double d = trace_distance(res.density[t], oracle.states.at(k));
      worst = std::max(worst, d);
      auto row = param_values(p);
      row.insert(row.end(), {res.times[t], d, res.density_se[t].maxCoeff()});
      tab.rows.push_back(std::move(row));
    }
    out.points.push_back({p.index, p.params, cfg.master_seed, cfg.n_trajectories, seconds_since(t0)});
    if (log) log("point " + std::to_string(p.index + 1) + "/" + std::to_string(pts.size()) + " done");
  }
  out.summary["max_trace_distance"] = worst;
  out.summary["tolerance"] = c.oracle_tolerance;
  out.summary["pass"] = worst < c.oracle_tolerance;
  if (worst >= c.oracle_tolerance)
    out.failures.push_back("maximum trace distance " + shortest_repr(worst) + " is not below the tolerance " +
                           shortest_repr(c.oracle_tolerance));
  out.tables.emplace_back("", std::move(tab));
}

inline void run_dicke_validate(const ExperimentConfig& c, ExperimentResult& out) {
  Table ent{{"N", "m", "N1", "entropy_dicke", "entropy_register", "abs_diff"}, {}};
  double worst = 0.0;
  for (int n = 2; n <= c.dicke_max_n; ++n)
    for (int m = 0; m <= n; ++m) {
      const auto dicke = StateVector::dicke_state(m, n);
      const auto reg = dicke_to_register(dicke);
      for (int b = 1; b <= n - 1; ++b) {
        const double sd = von_neumann_entropy(dicke_reduced_state(dicke, b));
        std::vector<int> keep;
        for (int q = b; q < n; ++q) keep.push_back(q);
        const double sr = von_neumann_entropy(partial_trace(reg, Bipartition::qubits(n, keep)));
        worst = std::max(worst, std::abs(sd - sr));
        ent.rows.push_back({double(n), double(m), double(b), sd, sr, std::abs(sd - sr)});
      }
    }
  Table norm{{"N", "max_normalization_error"}, {}};
  double worst_norm = 0.0;
  for (int n = 2; n <= c.schmidt_max_n; ++n) {
    double e = 0.0;
    for (int b = 1; b <= n - 1; ++b)
      for (int m = 0; m <= n; ++m) {
        const auto row = schmidt_row(m, n, b);
        double s = 0.0;
        for (double x : row.coefficients) s += x * x;
        e = std::max(e, std::abs(s - 1.0));
      }
    worst_norm = std::max(worst_norm, e);
    norm.rows.push_back({double(n), e});
  }
  out.summary["max_entropy_abs_diff"] = worst;
  out.summary["max_normalization_error"] = worst_norm;
  if (worst > 1e-10) out.failures.push_back("Dicke entropy differs from the register computation by " + shortest_repr(worst));
  if (worst_norm > 1e-12) out.failures.push_back("Schmidt normalization error " + shortest_repr(worst_norm));
  out.tables.emplace_back("", std::move(ent));
  out.tables.emplace_back("schmidt", std::move(norm));
}

}  // namespace detail

/// Runs the configured scenario in-process. Numerical failures propagate as
/// NumericalError / TrajectoryFailure.
inline ExperimentResult run_experiment(const ExperimentConfig& c, unsigned threads, const ProgressFn& log = {}) {
  ExperimentResult out;
  if (c.scenario != Scenario::dicke_validate) out.warnings = check_step_guards(c);
  switch (c.scenario) {
    case Scenario::oracle_check:
      detail::run_oracle_check(c, threads, out, log);
      break;
    case Scenario::three_qubit_entropy_cross:
    case Scenario::three_qubit_beamsplitter:
      detail::run_three_qubit(c, threads, out, log);
      break;
    case Scenario::lmg_jump_sweep:
    case Scenario::lmg_homodyne_sweep:
      detail::run_lmg_sweep(c, threads, out, log);
      break;
    case Scenario::dicke_validate:
      detail::run_dicke_validate(c, out);
      break;
  }
  return out;
}

// Files -----------------------------------------------------------------------

inline std::string units_note(const ExperimentConfig& c) {
  if (c.scenario == Scenario::dicke_validate) return "entropies in bits";
  if (c.is_lmg())
    return "time in 1/lambda; h and gamma_b in units of lambda; theta in degrees; correlations and entropies in bits; "
           "argmin_mode is the block size N1";
  return "time in inverse units of the gamma rates; correlations and entropies in bits; argmin_mode is a party bit "
         "mask with A = 1, B = 2, C = 4 (basis index order A,B,C with A the most significant bit)";
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const std::filesystem::path& path, const ExperimentConfig& c, const Table& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "# gmcorr " GMCORR_VERSION " scenario=" << scenario_name(c.scenario) << "\n";
  f << "# manifest_hash=" << manifest_hash(c) << "\n";
  f << "# units: " << units_note(c) << "\n";
  for (std::size_t k = 0; k < t.columns.size(); ++k) f << (k ? "," : "") << t.columns[k];
  f << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) f << (k ? "," : "") << format_number(row[k]);
    f << "\n";
  }
}

inline void write_json_table(const std::filesystem::path& path, const ExperimentConfig& c, const Table& t) {
  nlohmann::json j;
  j["scenario"] = scenario_name(c.scenario);
  j["version"] = GMCORR_VERSION;
  j["manifest_hash"] = manifest_hash(c);
  j["units"] = units_note(c);
  j["columns"] = t.columns;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::object();
    for (std::size_t k = 0; k < row.size(); ++k) r[t.columns[k]] = row[k];
    j["rows"].push_back(std::move(r));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(1) << "\n";
}

/// Creates the directory and confirms it accepts files.
inline void ensure_writable(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("output directory '" + dir.string() + "' cannot be created: " + ec.message());
  const auto probe = dir / ".gmcorr-write-probe";
  {
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory '" + dir.string() + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
}

struct RunInfo {
  unsigned threads = 1;
  double wall_seconds = 0.0;
};

/// Writes data files plus <name>.manifest.json; returns the written paths.
inline std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const ExperimentConfig& c,
                                                        const ExperimentResult& r, const RunInfo& info) {
  std::vector<std::filesystem::path> files;
  for (const auto& [suffix, t] : r.tables) {
    const std::string stem = c.name + (suffix.empty() ? "" : "_" + suffix);
    if (c.format != OutputFormat::json) {
      files.push_back(dir / (stem + ".csv"));
      write_csv(files.back(), c, t);
    }
    if (c.format != OutputFormat::csv) {
      files.push_back(dir / (stem + ".json"));
      write_json_table(files.back(), c, t);
    }
  }
  nlohmann::json m;
  m["tool"] = "gmcorr";
  m["version"] = GMCORR_VERSION;
  m["scenario"] = scenario_name(c.scenario);
  m["manifest_hash"] = manifest_hash(c);
  m["master_seed"] = c.traj.master_seed;
  m["config"] = c.echo;
  m["threads"] = info.threads;
  m["wall_clock_seconds"] = info.wall_seconds;
  m["points"] = nlohmann::json::array();
  for (const auto& p : r.points) {
    nlohmann::json jp;
    jp["index"] = p.index;
    for (const auto& [k, v] : p.params) jp["params"][k] = v;
    jp["seed"] = p.seed;
    jp["n_trajectories"] = p.n_trajectories;
    jp["wall_clock_seconds"] = p.wall_seconds;
    m["points"].push_back(std::move(jp));
  }
  m["warnings"] = r.warnings;
  m["failures"] = r.failures;
  m["summary"] = r.summary;
  m["files"] = nlohmann::json::array();
  for (const auto& f : files) m["files"].push_back(f.filename().string());
  const auto manifest = dir / (c.name + ".manifest.json");
  std::ofstream f(manifest, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + manifest.string());
  f << m.dump(1) << "\n";
  files.push_back(manifest);
  return files;
}

/// Reads a config file, or the "config" object of a run manifest.
inline ConfigFile load_config(const std::string& path) {
  if (path.size() > 5 && path.ends_with(".json")) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object())
      throw ConfigError(path + ": manifest has no 'config' object");
    std::string text;
    for (const auto& [k, v] : j["config"].items()) {
      if (!v.is_string()) throw ConfigError(path + ": config value for '" + k + "' must be a string");
      text += k + " = " + v.get<std::string>() + "\n";
    }
    return ConfigFile::parse(text, path);
  }
  return ConfigFile::load(path);
}

}  // namespace gmcorr
