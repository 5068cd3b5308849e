#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "gmcorr/common.hpp"
#include "gmcorr/quantum_state.hpp"

namespace gmcorr {

/// Generator of  d rho/dt = -i[H, rho] + sum_i D[J_i] rho  (hbar = 1).
struct LindbladSpec {
  CMatrix hamiltonian;
  std::vector<CMatrix> jumps;

  LindbladSpec() = default;
  LindbladSpec(CMatrix h, std::vector<CMatrix> j) : hamiltonian(std::move(h)), jumps(std::move(j)) {
    validate();
  }

  Eigen::Index dim() const { return hamiltonian.rows(); }

  void validate() const {
    detail::require(hamiltonian.rows() > 0 && hamiltonian.rows() == hamiltonian.cols(),
                    "LindbladSpec: Hamiltonian must be square and nonempty");
    detail::require(detail::is_hermitian(hamiltonian, 1e-10), "LindbladSpec: Hamiltonian is not Hermitian");
    for (const auto& j : jumps)
      detail::require(j.rows() == dim() && j.cols() == dim(), "LindbladSpec: jump operator has wrong shape");
  }
};

/// J_i -> sum_j u_ij J_j + alpha_i, with the compensating Hamiltonian shift.
struct UnravelingTransform {
  CMatrix u;
  CVector alpha;  // empty means all zero
};

inline CMatrix dissipator(const CMatrix& op, const CMatrix& rho) {
  detail::require(op.rows() == rho.rows() && op.cols() == rho.cols() && rho.rows() == rho.cols(),
                  "dissipator: dimension mismatch");
  const CMatrix opd_op = op.adjoint() * op;
  return op * rho * op.adjoint() - 0.5 * (opd_op * rho + rho * opd_op);
}

inline CMatrix liouvillian_apply(const LindbladSpec& spec, const CMatrix& rho) {
  detail::require(rho.rows() == spec.dim() && rho.cols() == spec.dim(), "liouvillian_apply: dimension mismatch");
  CMatrix out = -I * (spec.hamiltonian * rho - rho * spec.hamiltonian);
  for (const auto& j : spec.jumps) out += dissipator(j, rho);
  return out;
}

inline CMatrix liouvillian_apply(const LindbladSpec& spec, const DensityOperator& rho) {
  return liouvillian_apply(spec, rho.matrix());
}

namespace detail {

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Largest eigenvalue of the positive operator A^dagger A, i.e. ||A||^2.
inline double spectral_norm_sq(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  return std::max(0.0, hermitian_eigenvalues(a.adjoint() * a).maxCoeff());
}

}  // namespace detail

/// Liouvillian as a dim^2 x dim^2 matrix acting on column-stacked vec(rho).
inline CMatrix liouvillian_superoperator(const LindbladSpec& spec) {
  const Eigen::Index d = spec.dim();
  const CMatrix id = CMatrix::Identity(d, d);
  const CMatrix& h = spec.hamiltonian;
  CMatrix out = -I * (detail::kron(id, h) - detail::kron(h.transpose(), id));
  for (const auto& j : spec.jumps) {
    const CMatrix jdj = j.adjoint() * j;
    out += detail::kron(j.conjugate(), j) - 0.5 * detail::kron(id, jdj) - 0.5 * detail::kron(jdj.transpose(), id);
  }
  return out;
}

/// H - (i/2) sum_i J_i^dagger J_i
inline CMatrix effective_hamiltonian(const LindbladSpec& spec) {
  CMatrix out = spec.hamiltonian;
  for (const auto& j : spec.jumps) out -= 0.5 * I * (j.adjoint() * j);
  return out;
}

/// The Hamiltonian shift is summed over all transformed channels and uses the
/// unitarily mixed operators, so the Liouvillian is left unchanged.
inline LindbladSpec apply_unraveling(const LindbladSpec& spec, const UnravelingTransform& t) {
  const auto n = static_cast<Eigen::Index>(spec.jumps.size());
  detail::require(t.u.rows() == n && t.u.cols() == n, "apply_unraveling: u must be square with one row per jump");
  detail::require(t.alpha.size() == 0 || t.alpha.size() == n, "apply_unraveling: alpha size must match jumps");
  if (n > 0 && detail::max_abs(t.u.adjoint() * t.u - CMatrix::Identity(n, n)) > 1e-8)
    throw std::invalid_argument("apply_unraveling: u is not unitary");

  const Eigen::Index d = spec.dim();
  const CMatrix id = CMatrix::Identity(d, d);
  CMatrix h = spec.hamiltonian;
  std::vector<CMatrix> jumps;
  jumps.reserve(spec.jumps.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    CMatrix mixed = CMatrix::Zero(d, d);
    for (Eigen::Index j = 0; j < n; ++j) mixed += t.u(i, j) * spec.jumps[j];
    const Complex a = t.alpha.size() ? t.alpha(i) : Complex{};
    if (a != Complex{}) {
      h += (std::conj(a) * mixed - a * mixed.adjoint()) / (2.0 * I);
      jumps.push_back(mixed + a * id);
    } else {
      jumps.push_back(std::move(mixed));
    }
  }
  // restore exact Hermiticity lost to rounding in the shift
  h = 0.5 * (h + h.adjoint()).eval();
  return LindbladSpec(std::move(h), std::move(jumps));
}

struct MasterSolution {
  std::vector<double> times;
  std::vector<DensityOperator> states;
};

/// Classical RK4 on the Liouvillian. Every step is re-Hermitized and
/// trace-renormalized. Records t = 0 and every `record_stride` steps.
inline MasterSolution integrate_master(const LindbladSpec& spec, const DensityOperator& rho0, double dt,
                                       double t_final, int record_stride = 1) {
  detail::require(dt > 0.0 && t_final >= 0.0 && record_stride >= 1, "integrate_master: invalid time grid");
  detail::require(rho0.dim() == spec.dim(), "integrate_master: dimension mismatch");
  double max_rate = 0.0;
  for (const auto& j : spec.jumps) max_rate = std::max(max_rate, detail::spectral_norm_sq(j));
  if (dt * max_rate > 0.05) throw std::invalid_argument("integrate_master: step-size guard violated (dt*max||J^dag J|| > 0.05)");
  const double h_norm = std::sqrt(detail::spectral_norm_sq(spec.hamiltonian));
  if (dt * (2.0 * h_norm + spec.jumps.size() * max_rate) > 2.5)
    throw std::invalid_argument("integrate_master: step-size guard violated (RK4 stability)");

  const auto steps = static_cast<long>(std::llround(t_final / dt));
  MasterSolution sol;
  CMatrix rho = rho0.matrix();
  sol.times.push_back(0.0);
  sol.states.emplace_back(rho);
  for (long s = 1; s <= steps; ++s) {
    const CMatrix k1 = liouvillian_apply(spec, rho);
    const CMatrix k2 = liouvillian_apply(spec, rho + 0.5 * dt * k1);
    const CMatrix k3 = liouvillian_apply(spec, rho + 0.5 * dt * k2);
    const CMatrix k4 = liouvillian_apply(spec, rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace().real();
    if (!rho.allFinite()) throw NumericalError("integrate_master: non-finite density matrix");
    if (s % record_stride == 0) {
      sol.times.push_back(s * dt);
      sol.states.emplace_back(rho);
    }
  }
  return sol;
}

/// Half the trace norm of a - b.
inline double trace_distance(const CMatrix& a, const CMatrix& b) {
  const RVector ev = hermitian_eigenvalues(0.5 * ((a - b) + (a - b).adjoint()));
  return 0.5 * ev.cwiseAbs().sum();
}

inline double trace_distance(const DensityOperator& a, const DensityOperator& b) {
  return trace_distance(a.matrix(), b.matrix());
}

}  // namespace gmcorr
