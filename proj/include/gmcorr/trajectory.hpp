#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "gmcorr/common.hpp"
#include "gmcorr/lindblad.hpp"
#include "gmcorr/parallel.hpp"
#include "gmcorr/quantum_state.hpp"
#include "gmcorr/rng.hpp"
#include "gmcorr/stats.hpp"

namespace gmcorr {

enum class UnravelingMethod { jump, diffusive };

/// How the state evolves between jumps. `exponential` applies
/// exp(-i H_eff dt) (precomputed once); `first_order` applies 1 - i H_eff dt.
/// Both are followed by renormalization.
enum class NoJumpUpdate { exponential, first_order };

struct TrajectoryConfig {
  UnravelingMethod method = UnravelingMethod::jump;
  double dt = 1e-3;
  double t_final = 1.0;
  double burn_in = 0.0;  // no records before this time
  int record_stride = 1;
  int n_trajectories = 1;
  std::uint64_t master_seed = 0;
  double theta = 0.0;  // radians, diffusive only
  NoJumpUpdate no_jump = NoJumpUpdate::exponential;
  unsigned threads = 0;  // 0 = all cores

  void validate() const {
    detail::require(dt > 0.0 && std::isfinite(dt), "TrajectoryConfig: dt must be positive");
    detail::require(t_final >= 0.0, "TrajectoryConfig: t_final must be nonnegative");
    detail::require(burn_in >= 0.0 && burn_in <= t_final, "TrajectoryConfig: burn_in must be in [0, t_final]");
    detail::require(record_stride >= 1, "TrajectoryConfig: record_stride must be >= 1");
    detail::require(n_trajectories >= 1, "TrajectoryConfig: n_trajectories must be >= 1");
  }

  long total_steps() const { return std::llround(t_final / dt); }

  bool records_step(long step) const {
    return step % record_stride == 0 && step * dt >= burn_in - 1e-9 * dt;
  }

  std::vector<double> record_times() const {
    std::vector<double> t;
    for (long s = 0; s <= total_steps(); ++s)
      if (records_step(s)) t.push_back(s * dt);
    return t;
  }
};

struct JumpEvent {
  double time;
  int channel;
  friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<JumpEvent> jump_log;
};

inline constexpr double kJumpProbabilityGuard = 0.1;

/// Per-trajectory scratch vectors, reused across steps.
struct StepWorkspace {
  CVector a;
  CVector b;
  explicit StepWorkspace(Eigen::Index dim) : a(dim), b(dim) {}
};

/// Monte Carlo wave function unraveling of a Lindblad generator: per step,
/// channel i fires with probability <J_i^dag J_i> dt, otherwise the state
/// follows the non-Hermitian effective Hamiltonian.
class JumpUnraveling {
 public:
  JumpUnraveling(const LindbladSpec& spec, double dt, NoJumpUpdate update = NoJumpUpdate::exponential)
      : jumps_(spec.jumps), dt_(dt) {
    detail::require(dt > 0.0, "JumpUnraveling: dt must be positive");
    const CMatrix heff = effective_hamiltonian(spec);
    const Eigen::Index d = spec.dim();
    if (update == NoJumpUpdate::exponential)
      no_jump_ = (-I * dt * heff).exp();
    else
      no_jump_ = CMatrix::Identity(d, d) - I * dt * heff;
  }

  Eigen::Index dim() const { return no_jump_.rows(); }
  double dt() const { return dt_; }
  std::size_t channels() const { return jumps_.size(); }

  /// Upper bound of sum_i p_i over all states.
  double worst_case_jump_probability() const {
    double s = 0.0;
    for (const auto& j : jumps_) s += detail::spectral_norm_sq(j);
    return s * dt_;
  }

  /// Advances psi in place; returns the channel that fired, or -1.
  int step(CVector& psi, TrajectoryRng& rng, StepWorkspace& ws) const {
    CVector& scratch = ws.a;
    const double r = rng.uniform();
    double cumulative = 0.0;
    int fired = -1;
    for (std::size_t i = 0; i < jumps_.size(); ++i) {
      scratch.noalias() = jumps_[i] * psi;
      cumulative += scratch.squaredNorm() * dt_;
      if (fired < 0 && r < cumulative) fired = static_cast<int>(i);
    }
    if (cumulative > kJumpProbabilityGuard)
      throw NumericalError("jump_step: total jump probability " + std::to_string(cumulative) +
                           " exceeds guard 0.1; reduce dt");
    if (fired >= 0) {
      scratch.noalias() = jumps_[static_cast<std::size_t>(fired)] * psi;
      const double n = scratch.norm();
      if (!(n > 0.0)) throw NumericalError("jump_step: zero-norm post-jump state");
      psi = scratch / n;
      return fired;
    }
    scratch.noalias() = no_jump_ * psi;
    const double n = scratch.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("jump_step: no-jump update lost the state");
    psi = scratch / n;
    return -1;
  }

 private:
  std::vector<CMatrix> jumps_;
  CMatrix no_jump_;
  double dt_;
};

/// Homodyne measurement of a single channel L. The measured operator is
/// e^{-i theta} L; with L = sqrt(rate) J+ this records
/// sqrt(rate) <e^{-i theta} J+ + e^{i theta} J->, i.e. 2 Jx at theta = 0
/// and 2 Jy at theta = pi/2.
struct DiffusiveModel {
  CMatrix hamiltonian;
  CMatrix jump;
  double theta = 0.0;

  static DiffusiveModel from_spec(const LindbladSpec& spec, double theta) {
    detail::require(spec.jumps.size() == 1, "DiffusiveModel: homodyne unraveling needs exactly one jump operator");
    return {spec.hamiltonian, spec.jumps.front(), theta};
  }

  LindbladSpec spec() const { return LindbladSpec(hamiltonian, {jump}); }
};

/// How the Hamiltonian part of the homodyne equation is advanced.
/// `euler` treats -iH like every other drift term. `exact` applies
/// exp(-iH dt) first and integrates the remaining terms by Euler-Maruyama;
/// this removes the O(E^2 dt) per-unit-time amplitude bias that plain Euler
/// plus renormalization imposes on large-norm Hamiltonians.
enum class HamiltonianStep { euler, exact };

/// Euler-Maruyama integration of the normalized homodyne stochastic
/// Schroedinger equation
///   dpsi = [-iH - (L^dag L - x L + x^2/4)/2] psi dt + (L - x/2) psi dW,
/// x = <L + L^dag>, followed by renormalization.
class DiffusiveUnraveling {
 public:
  DiffusiveUnraveling(const DiffusiveModel& model, double dt, HamiltonianStep h_step = HamiltonianStep::euler)
      : dt_(dt), sqrt_dt_(std::sqrt(dt)) {
    detail::require(dt > 0.0, "DiffusiveUnraveling: dt must be positive");
    detail::require(model.hamiltonian.rows() == model.jump.rows() && model.jump.rows() == model.jump.cols(),
                    "DiffusiveUnraveling: dimension mismatch");
    const double phase = std::remainder(model.theta, 2.0 * std::numbers::pi);
    l_ = std::polar(1.0, -phase) * model.jump;
    drift_ = -0.5 * (l_.adjoint() * l_);
    if (h_step == HamiltonianStep::euler) {
      drift_ += -I * model.hamiltonian;
    } else {
      const CMatrix gen = -I * dt * model.hamiltonian;
      unitary_ = gen.exp();
    }
  }

  Eigen::Index dim() const { return drift_.rows(); }
  double dt() const { return dt_; }

  /// Advances psi in place using one Wiener increment dW = sqrt(dt) * normal.
  int step(CVector& psi, TrajectoryRng& rng, StepWorkspace& ws) const {
    return step_with_increment(psi, sqrt_dt_ * rng.normal(), ws);
  }

  /// Drift a(psi) and noise b(psi) of dpsi = a dt + b dW. With
  /// HamiltonianStep::exact the drift excludes -iH.
  void drift_and_noise(const CVector& psi, CVector& drift, CVector& noise) const {
    noise.noalias() = l_ * psi;
    const double x = 2.0 * psi.dot(noise).real();  // <L + L^dag>
    drift.noalias() = drift_ * psi;
    drift += (0.5 * x) * noise - (0.125 * x * x) * psi;
    noise -= (0.5 * x) * psi;
  }

  int step_with_increment(CVector& psi, double dw, StepWorkspace& ws) const {
    CVector& noise = ws.a;
    CVector& drift = ws.b;
    if (unitary_.size() > 0) {
      drift.noalias() = unitary_ * psi;
      psi = drift;
    }
    drift_and_noise(psi, drift, noise);
    if (drift.norm() * dt_ > 0.1) throw NumericalError("diffusive_step: drift*dt exceeds 0.1; reduce dt");
    psi += dt_ * drift + dw * noise;
    const double n = psi.norm();
    if (!std::isfinite(n) || !(n > 0.0)) throw NumericalError("diffusive_step: non-finite amplitudes; reduce dt");
    psi /= n;
    return -1;
  }

 private:
  CMatrix l_;
  CMatrix drift_;
  CMatrix unitary_;  // empty unless HamiltonianStep::exact
  double dt_;
  double sqrt_dt_;
};

// ---------------------------------------------------------------------------

/// Single MCWF step. The post-step state is normalized; the second member is
/// the channel that fired.
inline std::pair<StateVector, std::optional<int>> jump_step(const StateVector& psi, const LindbladSpec& spec,
                                                            double dt, TrajectoryRng& rng,
                                                            NoJumpUpdate update = NoJumpUpdate::first_order) {
  detail::require(psi.dim() == spec.dim(), "jump_step: dimension mismatch");
  const JumpUnraveling engine(spec, dt, update);
  CVector a = psi.amplitudes();
  StepWorkspace ws(a.size());
  const int ch = engine.step(a, rng, ws);
  return {StateVector(psi.basis(), std::move(a)), ch >= 0 ? std::optional<int>(ch) : std::nullopt};
}

inline StateVector diffusive_step(const StateVector& psi, const DiffusiveModel& model, double dt, TrajectoryRng& rng) {
  detail::require(psi.dim() == model.hamiltonian.rows(), "diffusive_step: dimension mismatch");
  const DiffusiveUnraveling engine(model, dt);
  CVector a = psi.amplitudes();
  StepWorkspace ws(a.size());
  engine.step(a, rng, ws);
  return {psi.basis(), std::move(a)};
}

/// Runs one trajectory; `visit(record_index, time, state)` is called at every
/// recorded time. Returns the jump log.
template <class Unraveling, class Visitor>
std::vector<JumpEvent> simulate_trajectory(const Unraveling& engine, const StateVector& psi0,
                                           const TrajectoryConfig& cfg, std::uint64_t index, Visitor&& visit) {
  detail::require(psi0.dim() == engine.dim(), "trajectory: initial state dimension mismatch");
  detail::require(std::abs(psi0.norm() - 1.0) <= 1e-9, "trajectory: initial state must be normalized");
  TrajectoryRng rng(cfg.master_seed, index);
  CVector psi = psi0.amplitudes();
  StepWorkspace ws(psi.size());
  std::vector<JumpEvent> log;
  const long steps = cfg.total_steps();
  std::size_t rec = 0;
  if (cfg.records_step(0)) visit(rec++, 0.0, psi);
  for (long s = 1; s <= steps; ++s) {
    const int ch = engine.step(psi, rng, ws);
    if (ch >= 0) log.push_back({s * cfg.dt, ch});
    if (cfg.records_step(s)) visit(rec++, s * cfg.dt, psi);
  }
  return log;
}

template <class Unraveling>
TrajectoryRecord run_trajectory(const Unraveling& engine, const StateVector& psi0, const TrajectoryConfig& cfg,
                                std::uint64_t index) {
  cfg.validate();
  TrajectoryRecord r;
  r.jump_log = simulate_trajectory(engine, psi0, cfg, index, [&](std::size_t, double t, const CVector& psi) {
    r.times.push_back(t);
    r.states.emplace_back(psi0.basis(), psi);
  });
  return r;
}

inline TrajectoryRecord run_jump_trajectory(const StateVector& psi0, const LindbladSpec& spec,
                                            const TrajectoryConfig& cfg, std::uint64_t index) {
  return run_trajectory(JumpUnraveling(spec, cfg.dt, cfg.no_jump), psi0, cfg, index);
}

inline TrajectoryRecord run_diffusive_trajectory(const StateVector& psi0, const DiffusiveModel& model,
                                                 const TrajectoryConfig& cfg, std::uint64_t index) {
  return run_trajectory(DiffusiveUnraveling(model, cfg.dt), psi0, cfg, index);
}

// ---------------------------------------------------------------------------

/// A family of scalar observables evaluated together on each recorded state.
struct ObservableSet {
  std::vector<std::string> names;
  std::function<void(const StateVector&, std::span<double>)> evaluate;
};

inline ObservableSet expectation_values(std::vector<std::string> names, std::vector<CMatrix> operators) {
  detail::require(names.size() == operators.size(), "expectation_values: one name per operator");
  return {std::move(names), [ops = std::move(operators)](const StateVector& psi, std::span<double> out) {
            for (std::size_t i = 0; i < ops.size(); ++i)
              out[i] = psi.amplitudes().dot(ops[i] * psi.amplitudes()).real();
          }};
}

struct EnsembleOptions {
  bool reconstruct_density = true;
  bool keep_records = false;
};

struct EnsembleResult {
  std::vector<double> times;
  std::vector<std::string> names;
  /// samples[k](j, t): observable k of trajectory j at record t.
  std::vector<Eigen::MatrixXd> samples;
  /// Reconstructed density operator per recorded time (empty if disabled).
  std::vector<DensityOperator> density;
  /// Element-wise standard error of `density` (sqrt of complex variance / n).
  std::vector<Eigen::MatrixXd> density_se;
  std::vector<std::vector<JumpEvent>> jump_logs;
  std::vector<TrajectoryRecord> records;  // only with keep_records
  int n_trajectories = 0;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return k;
    throw std::invalid_argument("EnsembleResult: unknown observable '" + name + "'");
  }

  std::vector<double> column(std::size_t k, std::size_t t) const {
    const Eigen::VectorXd c = samples[k].col(static_cast<Eigen::Index>(t));
    return {c.data(), c.data() + c.size()};
  }

  MeanEstimate estimate(std::size_t k, std::size_t t) const {
    const auto c = column(k, t);
    return estimate_mean(c);
  }
  MeanEstimate estimate(const std::string& name, std::size_t t) const { return estimate(index_of(name), t); }

  std::vector<MeanEstimate> series(const std::string& name) const {
    std::vector<MeanEstimate> out;
    for (std::size_t t = 0; t < times.size(); ++t) out.push_back(estimate(name, t));
    return out;
  }
};

namespace detail {

// Pairwise sum over trajectories of |psi><psi| and of |psi_i|^2 |psi_j|^2.
inline void pairwise_projectors(const std::vector<CVector>& states, std::size_t lo, std::size_t hi, CMatrix& sum,
                                Eigen::MatrixXd& sum_sq) {
  const Eigen::Index d = states[lo].size();
  if (hi - lo <= 8) {
    sum = CMatrix::Zero(d, d);
    sum_sq = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t j = lo; j < hi; ++j) {
      sum.noalias() += states[j] * states[j].adjoint();
      const Eigen::VectorXd p = states[j].cwiseAbs2();
      sum_sq.noalias() += p * p.transpose();
    }
    return;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  CMatrix s2;
  Eigen::MatrixXd q2;
  pairwise_projectors(states, lo, mid, sum, sum_sq);
  pairwise_projectors(states, mid, hi, s2, q2);
  sum += s2;
  sum_sq += q2;
}

}  // namespace detail

/// Runs cfg.n_trajectories independent trajectories in parallel. Trajectory j
/// draws from stream (master_seed, j); every aggregate is reduced in index
/// order, so results are bitwise independent of the thread count.
template <class Unraveling>
EnsembleResult run_ensemble(const StateVector& psi0, const Unraveling& engine, const TrajectoryConfig& cfg,
                            const ObservableSet& observables, EnsembleOptions opts = {}) {
  cfg.validate();
  EnsembleResult res;
  res.times = cfg.record_times();
  res.names = observables.names;
  res.n_trajectories = cfg.n_trajectories;
  const auto n = static_cast<std::size_t>(cfg.n_trajectories);
  const std::size_t n_times = res.times.size();
  const std::size_t n_obs = observables.names.size();
  res.samples.assign(n_obs, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_times)));
  res.jump_logs.resize(n);
  if (opts.keep_records) res.records.resize(n);

  // states[t][j]
  std::vector<std::vector<CVector>> states;
  if (opts.reconstruct_density) states.assign(n_times, std::vector<CVector>(n));

  parallel_for(n, cfg.threads, [&](std::size_t j) {
    std::vector<double> buf(n_obs);
    TrajectoryRecord* rec = opts.keep_records ? &res.records[j] : nullptr;
    res.jump_logs[j] = simulate_trajectory(engine, psi0, cfg, j, [&](std::size_t t, double time, const CVector& psi) {
      const StateVector sv(psi0.basis(), psi);
      if (n_obs > 0 && observables.evaluate) {
        observables.evaluate(sv, buf);
        for (std::size_t k = 0; k < n_obs; ++k)
          res.samples[k](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t)) = buf[k];
      }
      if (opts.reconstruct_density) states[t][j] = psi;
      if (rec) {
        rec->times.push_back(time);
        rec->states.push_back(sv);
      }
    });
    if (rec) rec->jump_log = res.jump_logs[j];
  });

  if (opts.reconstruct_density) {
    const double nn = static_cast<double>(n);
    for (std::size_t t = 0; t < n_times; ++t) {
      CMatrix sum;
      Eigen::MatrixXd sum_sq;
      detail::pairwise_projectors(states[t], 0, n, sum, sum_sq);
      CMatrix rho = sum / nn;
      rho = 0.5 * (rho + rho.adjoint()).eval();
      Eigen::MatrixXd se = Eigen::MatrixXd::Constant(rho.rows(), rho.cols(), std::numeric_limits<double>::quiet_NaN());
      if (n >= 2) {
        const Eigen::MatrixXd var = ((sum_sq - nn * rho.cwiseAbs2()) / (nn - 1.0)).cwiseMax(0.0);
        se = (var / nn).cwiseSqrt();
      }
      res.density.emplace_back(std::move(rho));
      res.density_se.push_back(std::move(se));
      std::vector<CVector>().swap(states[t]);
    }
  }
  return res;
}

}  // namespace gmcorr
