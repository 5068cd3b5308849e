#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "gmcorr/lindblad.hpp"
#include "gmcorr/quantum_state.hpp"
#include "gmcorr/trajectory.hpp"

namespace gmcorr {

// Three qubits with spontaneous emission ------------------------------------

enum class ThreeQubitUnraveling {
  direct,            // {sqrt(gA) a, sqrt(gB) b, sqrt(gC) c}
  beam_splitter_ab,  // A and B outputs mixed on a 50:50 beam splitter
};

struct ThreeQubitScenario {
  double gamma_a = 0.0;
  double gamma_b = 0.0;
  double gamma_c = 0.0;
  ThreeQubitUnraveling unraveling = ThreeQubitUnraveling::direct;
  /// Basis label of the excited level. 1 gives a = |0><1|; 0 swaps the roles
  /// and gives a = |1><0|.
  int excited_level = 1;
};

/// Decay |excited> -> |ground> on `party` of an n-qubit register (party 0
/// most significant). The default is |0><1|.
inline CMatrix qubit_lowering(int party, int n_qubits, int excited_level = 1) {
  detail::require(party >= 0 && party < n_qubits, "qubit_lowering: party out of range");
  detail::require(excited_level == 0 || excited_level == 1, "qubit_lowering: excited level must be 0 or 1");
  const Eigen::Index d = Eigen::Index{1} << n_qubits;
  const Eigen::Index bit = Eigen::Index{1} << (n_qubits - 1 - party);
  CMatrix op = CMatrix::Zero(d, d);
  for (Eigen::Index idx = 0; idx < d; ++idx)
    if (((idx & bit) != 0) == (excited_level == 1)) op(idx ^ bit, idx) = 1.0;
  return op;
}

/// 50:50 beam splitter on the first two channels, identity on the third.
inline CMatrix beam_splitter_ab_unitary() {
  const double s = 1.0 / std::sqrt(2.0);
  CMatrix u = CMatrix::Zero(3, 3);
  u(0, 0) = s;
  u(0, 1) = I * s;
  u(1, 0) = I * s;
  u(1, 1) = s;
  u(2, 2) = 1.0;
  return u;
}

/// H = 0. Channels are listed in (A, B, C) order for the direct scheme and
/// as (J1, J2, J3) for the beam-splitter scheme.
inline LindbladSpec three_qubit_spec(const ThreeQubitScenario& s) {
  detail::require(s.gamma_a >= 0.0 && s.gamma_b >= 0.0 && s.gamma_c >= 0.0, "three_qubit_spec: rates must be >= 0");
  const CMatrix a = std::sqrt(s.gamma_a) * qubit_lowering(0, 3, s.excited_level);
  const CMatrix b = std::sqrt(s.gamma_b) * qubit_lowering(1, 3, s.excited_level);
  const CMatrix c = std::sqrt(s.gamma_c) * qubit_lowering(2, 3, s.excited_level);
  const CMatrix h = CMatrix::Zero(8, 8);
  if (s.unraveling == ThreeQubitUnraveling::direct) return LindbladSpec(h, {a, b, c});
  const double r = 1.0 / std::sqrt(2.0);
  return LindbladSpec(h, {r * (a + I * b), r * (I * a + b), c});
}

/// (2|011> + 2|101> + |110>) / 3
inline StateVector psi1() {
  CVector v = CVector::Zero(8);
  v(0b011) = 2.0 / 3.0;
  v(0b101) = 2.0 / 3.0;
  v(0b110) = 1.0 / 3.0;
  return StateVector::qubits(3, v);
}

/// (|010> + |001>) / sqrt(2)
inline StateVector psi2() {
  CVector v = CVector::Zero(8);
  v(0b010) = 1.0 / std::sqrt(2.0);
  v(0b001) = 1.0 / std::sqrt(2.0);
  return StateVector::qubits(3, v);
}

inline StateVector ghz3() {
  CVector v = CVector::Zero(8);
  v(0b000) = 1.0 / std::sqrt(2.0);
  v(0b111) = 1.0 / std::sqrt(2.0);
  return StateVector::qubits(3, v);
}

// Dissipative Lipkin-Meshkov-Glick model -----------------------------------

struct LMGParams {
  double h = 0.0;
  double lambda = 1.0;
  double gamma_aniso = 0.0;
  double gamma_b = 0.0;  // collective pumping rate
  int n_spins = 2;
  /// Multiplies gamma_b/N in the jump amplitude; 1 reproduces the
  /// dissipator (gamma_b/N) D[J+], 2 the alternative sqrt(2 gamma_b/N) J+.
  double rate_factor = 1.0;

  void validate() const {
    detail::require(n_spins >= 2, "LMGParams: N must be >= 2");
    detail::require(gamma_b >= 0.0, "LMGParams: Gamma_b must be >= 0");
    detail::require(gamma_aniso >= -1.0 && gamma_aniso <= 1.0, "LMGParams: anisotropy must be in [-1, 1]");
    detail::require(rate_factor > 0.0, "LMGParams: rate factor must be positive");
    detail::require(std::isfinite(h) && std::isfinite(lambda), "LMGParams: h and lambda must be finite");
  }
};

/// H = -2h Jz - 2(lambda/N)(Jx^2 + gamma Jy^2) on the symmetric sector.
inline CMatrix lmg_hamiltonian(const LMGParams& p) {
  p.validate();
  const CMatrix jx = collective_operator(CollectiveOp::x, p.n_spins);
  const CMatrix jy = collective_operator(CollectiveOp::y, p.n_spins);
  const CMatrix jz = collective_operator(CollectiveOp::z, p.n_spins);
  CMatrix h = -2.0 * p.h * jz - (2.0 * p.lambda / p.n_spins) * (jx * jx + p.gamma_aniso * (jy * jy));
  return 0.5 * (h + h.adjoint());
}

inline CMatrix lmg_jump(const LMGParams& p) {
  return std::sqrt(p.rate_factor * p.gamma_b / p.n_spins) * collective_operator(CollectiveOp::raise, p.n_spins);
}

/// Single jump sqrt(Gamma_b/N) J+ (times rate_factor under the root).
inline LindbladSpec lmg_spec(const LMGParams& p) { return LindbladSpec(lmg_hamiltonian(p), {lmg_jump(p)}); }

/// X_theta = e^{i theta} J+ + e^{-i theta} J-; X_0 = 2Jx, X_{pi/2} = -2Jy.
inline CMatrix spin_quadrature(double theta, int n_spins) {
  const CMatrix plus = collective_operator(CollectiveOp::raise, n_spins);
  const Complex ph = std::polar(1.0, theta);
  return ph * plus + std::conj(ph) * plus.adjoint();
}

/// Homodyne unraveling of lmg_spec(p) at detection angle theta (radians).
/// The record is proportional to <X_{-theta}>, so theta = pi/2 resolves Jy
/// and theta = 0 resolves Jx.
inline DiffusiveModel lmg_homodyne_model(const LMGParams& p, double theta) {
  return {lmg_hamiltonian(p), lmg_jump(p), theta};
}

}  // namespace gmcorr
