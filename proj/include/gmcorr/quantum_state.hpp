#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gmcorr/common.hpp"

namespace gmcorr {

/// n qubits, party 0 (qubit A) is the most significant bit of the basis index.
struct QubitRegister {
  int n_qubits;
  friend bool operator==(const QubitRegister&, const QubitRegister&) = default;
};

/// Symmetric (maximal spin) sector of N qubits; amplitude index m counts
/// excitations, m = 0..N.
struct DickeBasis {
  int n_spins;
  friend bool operator==(const DickeBasis&, const DickeBasis&) = default;
};

using BasisTag = std::variant<QubitRegister, DickeBasis>;

inline Eigen::Index basis_dimension(const BasisTag& tag) {
  if (const auto* q = std::get_if<QubitRegister>(&tag))
    return Eigen::Index{1} << q->n_qubits;
  return std::get<DickeBasis>(tag).n_spins + 1;
}

class StateVector {
 public:
  StateVector(BasisTag tag, CVector amplitudes)
      : tag_(tag), amplitudes_(std::move(amplitudes)) {
    detail::require(amplitudes_.size() == basis_dimension(tag_),
                    "StateVector: amplitude count does not match basis");
  }

  static StateVector qubits(int n_qubits, CVector amplitudes) {
    detail::require(n_qubits >= 1 && n_qubits <= 24, "StateVector: qubit count out of range");
    return {QubitRegister{n_qubits}, std::move(amplitudes)};
  }

  static StateVector dicke(int n_spins, CVector amplitudes) {
    detail::require(n_spins >= 1, "StateVector: Dicke basis needs N >= 1");
    return {DickeBasis{n_spins}, std::move(amplitudes)};
  }

  /// Computational basis state |index> of a qubit register.
  static StateVector basis_state(int n_qubits, Eigen::Index index) {
    CVector a = CVector::Zero(Eigen::Index{1} << n_qubits);
    detail::require(index >= 0 && index < a.size(), "StateVector: basis index out of range");
    a(index) = 1.0;
    return qubits(n_qubits, std::move(a));
  }

  /// Dicke state |m,N> in the symmetric-sector basis.
  static StateVector dicke_state(int m, int n_spins) {
    detail::require(m >= 0 && m <= n_spins, "StateVector: excitation count out of range");
    CVector a = CVector::Zero(n_spins + 1);
    a(m) = 1.0;
    return dicke(n_spins, std::move(a));
  }

  const BasisTag& basis() const { return tag_; }
  const CVector& amplitudes() const { return amplitudes_; }
  Eigen::Index dim() const { return amplitudes_.size(); }
  Complex operator()(Eigen::Index i) const { return amplitudes_(i); }

  bool is_qubit_register() const { return std::holds_alternative<QubitRegister>(tag_); }
  bool is_dicke() const { return std::holds_alternative<DickeBasis>(tag_); }
  int n_qubits() const { return std::get<QubitRegister>(tag_).n_qubits; }
  int n_spins() const { return std::get<DickeBasis>(tag_).n_spins; }

  double norm() const { return amplitudes_.norm(); }

  StateVector normalized() const {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("StateVector: cannot normalize zero or non-finite state");
    return {tag_, amplitudes_ / n};
  }

 private:
  BasisTag tag_;
  CVector amplitudes_;
};

/// Hermitian, positive, unit-trace operator. The constructor does not check
/// the invariants; call validate() on untrusted input.
class DensityOperator {
 public:
  DensityOperator() = default;
  explicit DensityOperator(CMatrix matrix) : matrix_(std::move(matrix)) {
    detail::require(matrix_.rows() == matrix_.cols() && matrix_.rows() > 0,
                    "DensityOperator: matrix must be square and nonempty");
  }

  static DensityOperator pure(const StateVector& psi) {
    return DensityOperator(psi.amplitudes() * psi.amplitudes().adjoint());
  }

  const CMatrix& matrix() const { return matrix_; }
  Eigen::Index dim() const { return matrix_.rows(); }
  Complex operator()(Eigen::Index r, Eigen::Index c) const { return matrix_(r, c); }

  Complex trace() const { return matrix_.trace(); }

  /// Throws std::invalid_argument if any invariant is violated.
  void validate(double herm_tol = 1e-10, double trace_tol = 1e-9, double eig_tol = 1e-9) const {
    detail::require(detail::is_hermitian(matrix_, herm_tol), "DensityOperator: not Hermitian");
    detail::require(std::abs(trace() - 1.0) <= trace_tol, "DensityOperator: trace differs from 1");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(matrix_, Eigen::EigenvaluesOnly);
    detail::require(es.eigenvalues().minCoeff() >= -eig_tol, "DensityOperator: negative eigenvalue");
  }

 private:
  CMatrix matrix_;
};

/// A cut of the parties into a kept subset and its complement.
///
/// Qubit form: the subset is stored in canonical form, the side with fewer
/// parties, and on equal size the side containing party 0. Dicke form: the
/// block size N1 is stored as min(N1, N - N1).
class Bipartition {
 public:
  static Bipartition qubits(int n_parties, std::vector<int> subset) {
    detail::require(n_parties >= 2 && n_parties <= 24, "Bipartition: party count out of range");
    std::uint32_t mask = 0;
    for (int p : subset) {
      detail::require(p >= 0 && p < n_parties, "Bipartition: party index out of range");
      mask |= std::uint32_t{1} << p;
    }
    return from_mask(n_parties, mask);
  }

  static Bipartition from_mask(int n_parties, std::uint32_t mask) {
    const std::uint32_t full = (std::uint32_t{1} << n_parties) - 1;
    detail::require(mask != 0 && (mask & full) != full && (mask & ~full) == 0,
                    "Bipartition: subset must be a nonempty proper subset");
    Bipartition b;
    b.n_parties_ = n_parties;
    b.mask_ = canonical_mask(n_parties, mask);
    return b;
  }

  static Bipartition dicke(int n_spins, int block) {
    detail::require(n_spins >= 2, "Bipartition: Dicke cut needs N >= 2");
    detail::require(block >= 1 && block <= n_spins - 1, "Bipartition: block size must be in 1..N-1");
    Bipartition b;
    b.n_parties_ = n_spins;
    b.block_ = std::min(block, n_spins - block);
    b.is_dicke_ = true;
    return b;
  }

  /// All 2^(n-1) - 1 canonical cuts, ordered by lexicographic subset order.
  static std::vector<Bipartition> enumerate_qubits(int n_parties) {
    std::vector<Bipartition> out;
    const std::uint32_t full = (std::uint32_t{1} << n_parties) - 1;
    for (std::uint32_t mask = 1; mask < full; ++mask) {
      if (canonical_mask(n_parties, mask) == mask) out.push_back(from_mask(n_parties, mask));
    }
    std::sort(out.begin(), out.end(),
              [](const Bipartition& a, const Bipartition& b) { return a.parties() < b.parties(); });
    return out;
  }

  bool is_dicke() const { return is_dicke_; }
  int n_parties() const { return n_parties_; }
  std::uint32_t mask() const { return mask_; }
  int block_size() const { return block_; }

  std::vector<int> parties() const {
    std::vector<int> out;
    if (is_dicke_) {
      for (int p = 0; p < block_; ++p) out.push_back(p);
      return out;
    }
    for (int p = 0; p < n_parties_; ++p)
      if (mask_ & (std::uint32_t{1} << p)) out.push_back(p);
    return out;
  }

  /// "{A,C}" for qubit cuts, "N1=3" for Dicke cuts.
  std::string label() const {
    if (is_dicke_) return "N1=" + std::to_string(block_);
    std::string s = "{";
    bool first = true;
    for (int p : parties()) {
      if (!first) s += ',';
      first = false;
      if (n_parties_ <= 26)
        s += static_cast<char>('A' + p);
      else
        s += std::to_string(p);
    }
    return s + "}";
  }

  friend bool operator==(const Bipartition&, const Bipartition&) = default;

 private:
  static std::uint32_t canonical_mask(int n_parties, std::uint32_t mask) {
    const std::uint32_t full = (std::uint32_t{1} << n_parties) - 1;
    const std::uint32_t comp = full & ~mask;
    const int a = std::popcount(mask);
    const int b = std::popcount(comp);
    if (a != b) return a < b ? mask : comp;
    return (mask & 1u) ? mask : comp;
  }

  int n_parties_ = 0;
  std::uint32_t mask_ = 0;
  int block_ = 0;
  bool is_dicke_ = false;
};

/// Schmidt coefficients of |m,N> across the cut (first N1 | last N - N1):
/// coefficients[i] multiplies |k,N1> (x) |m-k,N-N1> with k = k_min + i.
struct SchmidtRow {
  int m;
  int n_spins;
  int block;
  int k_min;
  std::vector<double> coefficients;

  int k_max() const { return k_min + static_cast<int>(coefficients.size()) - 1; }
};

// ---------------------------------------------------------------------------

inline StateVector tensor_product(const StateVector& a, const StateVector& b) {
  if (!a.is_qubit_register() || !b.is_qubit_register())
    throw std::invalid_argument("tensor_product: both states must be qubit registers");
  const auto& x = a.amplitudes();
  const auto& y = b.amplitudes();
  CVector out(x.size() * y.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out.segment(i * y.size(), y.size()) = x(i) * y;
  return StateVector::qubits(a.n_qubits() + b.n_qubits(), std::move(out));
}

namespace detail {

// Maps the amplitude vector of an n-qubit pure state to a matrix whose rows
// index the kept parties and whose columns index the traced-out ones.
inline CMatrix split_amplitudes(const CVector& amps, int n, std::uint32_t keep_mask) {
  std::vector<int> kept, traced;
  for (int p = 0; p < n; ++p) ((keep_mask >> p) & 1u ? kept : traced).push_back(p);
  const Eigen::Index rows = Eigen::Index{1} << kept.size();
  const Eigen::Index cols = Eigen::Index{1} << traced.size();
  CMatrix m(rows, cols);
  for (Eigen::Index idx = 0; idx < amps.size(); ++idx) {
    Eigen::Index r = 0, c = 0;
    for (int p : kept) r = (r << 1) | ((idx >> (n - 1 - p)) & 1);
    for (int p : traced) c = (c << 1) | ((idx >> (n - 1 - p)) & 1);
    m(r, c) = amps(idx);
  }
  return m;
}

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace detail

/// Reduced state of the parties in `keep` (the subset stored in the cut).
inline DensityOperator partial_trace(const StateVector& psi, const Bipartition& keep) {
  if (!psi.is_qubit_register()) throw std::invalid_argument("partial_trace: state must be a qubit register");
  detail::require(!keep.is_dicke() && keep.n_parties() == psi.n_qubits(),
                  "partial_trace: bipartition does not match the register");
  const CMatrix m = detail::split_amplitudes(psi.amplitudes(), psi.n_qubits(), keep.mask());
  return DensityOperator(m * m.adjoint());
}

/// Qubit-register partial trace of a mixed state; `n_qubits` must match rho.
inline DensityOperator partial_trace(const DensityOperator& rho, int n_qubits, const Bipartition& keep) {
  detail::require((Eigen::Index{1} << n_qubits) == rho.dim(), "partial_trace: dimension is not 2^n");
  detail::require(!keep.is_dicke() && keep.n_parties() == n_qubits,
                  "partial_trace: bipartition does not match the register");
  std::vector<int> kept, traced;
  for (int p = 0; p < n_qubits; ++p) ((keep.mask() >> p) & 1u ? kept : traced).push_back(p);
  const Eigen::Index dk = Eigen::Index{1} << kept.size();
  auto sub_index = [&](Eigen::Index idx, const std::vector<int>& parties) {
    Eigen::Index r = 0;
    for (int p : parties) r = (r << 1) | ((idx >> (n_qubits - 1 - p)) & 1);
    return r;
  };
  CMatrix out = CMatrix::Zero(dk, dk);
  const Eigen::Index d = rho.dim();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (sub_index(i, traced) != sub_index(j, traced)) continue;
      out(sub_index(i, kept), sub_index(j, kept)) += rho(i, j);
    }
  }
  return DensityOperator(std::move(out));
}

/// Eigenvalues of a Hermitian operator in ascending order.
inline RVector hermitian_eigenvalues(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Von Neumann entropy in bits. Eigenvalues below 1e-12 contribute zero, and
/// a state whose largest eigenvalue is within 1e-12 of one counts as pure.
inline double von_neumann_entropy(const DensityOperator& rho) {
  if (!detail::is_hermitian(rho.matrix(), 1e-10))
    throw std::invalid_argument("von_neumann_entropy: input is not Hermitian");
  const RVector p = hermitian_eigenvalues(rho.matrix());
  if (p.maxCoeff() >= 1.0 - 1e-12) return 0.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 1e-12) s -= p(i) * std::log2(p(i));
  return std::max(s, 0.0);
}

inline constexpr int kMaxRegisterSpins = 14;

/// Expands a symmetric-sector state into the full 2^N register.
inline StateVector dicke_to_register(const StateVector& c) {
  detail::require(c.is_dicke(), "dicke_to_register: state must be Dicke-tagged");
  const int n = c.n_spins();
  detail::require(n <= kMaxRegisterSpins, "dicke_to_register: N too large for register expansion");
  CVector out = CVector::Zero(Eigen::Index{1} << n);
  for (Eigen::Index idx = 0; idx < out.size(); ++idx) {
    const int m = std::popcount(static_cast<std::uint64_t>(idx));
    out(idx) = c(m) * std::exp(-0.5 * detail::log_binomial(n, m));
  }
  return StateVector::qubits(n, std::move(out));
}

/// |m,N> as an N-qubit register state.
inline StateVector dicke_to_register(int m, int n_spins) {
  detail::require(n_spins >= 1 && n_spins <= kMaxRegisterSpins, "dicke_to_register: N out of range");
  detail::require(m >= 0 && m <= n_spins, "dicke_to_register: m out of range");
  return dicke_to_register(StateVector::dicke_state(m, n_spins));
}

enum class CollectiveOp { raise, lower, x, y, z };

/// Collective spin operators on the Dicke basis |m,N>, m = 0..N, with
/// Jz|m> = (m - N/2)|m> and <m+1|J+|m> = sqrt((m+1)(N-m)).
inline CMatrix collective_operator(CollectiveOp kind, int n_spins) {
  detail::require(n_spins >= 1, "collective_operator: N must be >= 1");
  const Eigen::Index d = n_spins + 1;
  CMatrix plus = CMatrix::Zero(d, d);
  for (int m = 0; m < n_spins; ++m)
    plus(m + 1, m) = std::sqrt(static_cast<double>(m + 1) * static_cast<double>(n_spins - m));
  switch (kind) {
    case CollectiveOp::raise: return plus;
    case CollectiveOp::lower: return plus.adjoint();
    case CollectiveOp::x: return (plus + plus.adjoint()) * 0.5;
    case CollectiveOp::y: return (plus - plus.adjoint()) / Complex(0.0, 2.0);
    case CollectiveOp::z: {
      CMatrix z = CMatrix::Zero(d, d);
      for (int m = 0; m <= n_spins; ++m) z(m, m) = m - 0.5 * n_spins;
      return z;
    }
  }
  throw std::invalid_argument("collective_operator: unknown kind");
}

/// Computed in log space so that N in the hundreds does not overflow.
inline SchmidtRow schmidt_row(int m, int n_spins, int block) {
  detail::require(n_spins >= 2, "schmidt_row: N must be >= 2");
  detail::require(m >= 0 && m <= n_spins, "schmidt_row: m out of range");
  detail::require(block >= 1 && block <= n_spins - 1, "schmidt_row: N1 out of range");
  const int rest = n_spins - block;
  SchmidtRow row{m, n_spins, block, std::max(0, m - rest), {}};
  const int k_max = std::min(m, block);
  const double log_norm = detail::log_binomial(n_spins, m);
  for (int k = row.k_min; k <= k_max; ++k) {
    const double lg = 0.5 * (detail::log_binomial(block, k) + detail::log_binomial(rest, m - k) - log_norm);
    row.coefficients.push_back(std::exp(lg));
  }
  return row;
}

/// Full table of Schmidt rows for one cut, indexed by m.
inline std::vector<SchmidtRow> schmidt_table(int n_spins, int block) {
  std::vector<SchmidtRow> rows;
  rows.reserve(n_spins + 1);
  for (int m = 0; m <= n_spins; ++m) rows.push_back(schmidt_row(m, n_spins, block));
  return rows;
}

/// State of the last N - N1 spins after tracing out the first N1, expressed
/// on the Dicke basis |j, N - N1>, j = 0..N-N1.
inline DensityOperator dicke_reduced_state(const CVector& c, const std::vector<SchmidtRow>& table) {
  const int n = static_cast<int>(c.size()) - 1;
  detail::require(!table.empty() && table.front().n_spins == n, "dicke_reduced_state: table does not match N");
  const int block = table.front().block;
  const int rest = n - block;
  CMatrix rho = CMatrix::Zero(rest + 1, rest + 1);
  CVector v(rest + 1);
  for (int k = 0; k <= block; ++k) {
    v.setZero();
    for (int j = 0; j <= rest; ++j) {
      const int m = j + k;
      const SchmidtRow& row = table[m];
      v(j) = row.coefficients[k - row.k_min] * c(m);
    }
    rho.selfadjointView<Eigen::Lower>().rankUpdate(v);
  }
  rho.triangularView<Eigen::StrictlyUpper>() = rho.adjoint();
  return DensityOperator(std::move(rho));
}

inline DensityOperator dicke_reduced_state(const StateVector& c, int block) {
  detail::require(c.is_dicke(), "dicke_reduced_state: state must be Dicke-tagged");
  const int n = c.n_spins();
  detail::require(n >= 2 && block >= 1 && block <= n - 1, "dicke_reduced_state: N1 must be in 1..N-1");
  return dicke_reduced_state(c.amplitudes(), schmidt_table(n, block));
}

}  // namespace gmcorr
