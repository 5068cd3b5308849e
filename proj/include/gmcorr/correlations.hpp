#pragma once

#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gmcorr/quantum_state.hpp"
#include "gmcorr/stats.hpp"
#include "gmcorr/trajectory.hpp"

namespace gmcorr {

/// Genuine n-partite correlations of a pure state: the minimum reduced-state
/// entropy over all bipartitions. For pure states the genuine classical and
/// quantum parts coincide with this value and the total is twice it.
struct CorrelationSample {
  double time = 0.0;
  double value = 0.0;  // bits
  Bipartition argmin;
  double max_value = 0.0;  // bits, maximum over the same cuts
  Bipartition argmax;

  double classical() const { return value; }
  double quantum() const { return value; }
  double total() const { return 2.0 * value; }
};

namespace detail {
inline constexpr double kTieTolerance = 1e-12;
}

/// Minimum over all 2^(n-1) - 1 bipartitions. Ties resolve to the
/// lexicographically smallest subset.
inline CorrelationSample genuine_correlations_qubits(const StateVector& psi) {
  if (!psi.is_qubit_register()) throw std::invalid_argument("genuine_correlations_qubits: state must be a qubit register");
  const int n = psi.n_qubits();
  detail::require(n >= 2, "genuine_correlations_qubits: need at least two qubits");
  CorrelationSample out;
  out.value = std::numeric_limits<double>::infinity();
  out.max_value = -1.0;
  for (const auto& cut : Bipartition::enumerate_qubits(n)) {
    const double s = von_neumann_entropy(partial_trace(psi, cut));
    if (s < out.value - detail::kTieTolerance) {
      out.value = s;
      out.argmin = cut;
    }
    if (s > out.max_value + detail::kTieTolerance) {
      out.max_value = s;
      out.argmax = cut;
    }
  }
  return out;
}

/// Entropy of each single qubit, in party order.
inline std::vector<double> single_party_entropies(const StateVector& psi) {
  if (!psi.is_qubit_register()) throw std::invalid_argument("single_party_entropies: state must be a qubit register");
  std::vector<double> out;
  for (int p = 0; p < psi.n_qubits(); ++p)
    out.push_back(von_neumann_entropy(partial_trace(psi, Bipartition::qubits(psi.n_qubits(), {p}))));
  return out;
}

/// Dicke-sector evaluator with the Schmidt tables for every block size
/// precomputed. Immutable; share freely between threads.
class DickeCorrelator {
 public:
  explicit DickeCorrelator(int n_spins) : n_(n_spins) {
    detail::require(n_spins >= 2, "DickeCorrelator: need N >= 2");
    for (int b = 1; b <= n_spins - 1; ++b) tables_.push_back(schmidt_table(n_spins, b));
  }

  int n_spins() const { return n_; }

  double block_entropy(const CVector& c, int block) const {
    detail::require(block >= 1 && block <= n_ - 1, "DickeCorrelator: block size out of range");
    return von_neumann_entropy(dicke_reduced_state(c, tables_[static_cast<std::size_t>(block - 1)]));
  }

  /// Uses S(rho_N1) = S(rho_{N-N1}) and scans N1 = 1..floor(N/2) unless
  /// `all_blocks` is set.
  CorrelationSample evaluate(const StateVector& c, bool all_blocks = false) const {
    detail::require(c.is_dicke() && c.n_spins() == n_, "DickeCorrelator: state does not match N");
    CorrelationSample out;
    out.value = std::numeric_limits<double>::infinity();
    out.max_value = -1.0;
    const int last = all_blocks ? n_ - 1 : n_ / 2;
    for (int b = 1; b <= last; ++b) {
      const double s = block_entropy(c.amplitudes(), b);
      if (s < out.value - detail::kTieTolerance) {
        out.value = s;
        out.argmin = Bipartition::dicke(n_, b);
      }
      if (s > out.max_value + detail::kTieTolerance) {
        out.max_value = s;
        out.argmax = Bipartition::dicke(n_, b);
      }
    }
    return out;
  }

 private:
  int n_;
  std::vector<std::vector<SchmidtRow>> tables_;
};

inline CorrelationSample genuine_correlations_dicke(const StateVector& c) {
  if (!c.is_dicke()) throw std::invalid_argument("genuine_correlations_dicke: state must be Dicke-tagged");
  detail::require(c.n_spins() >= 2, "genuine_correlations_dicke: need N >= 2");
  return DickeCorrelator(c.n_spins()).evaluate(c);
}

inline CorrelationSample genuine_correlations(const StateVector& psi) {
  return psi.is_dicke() ? genuine_correlations_dicke(psi) : genuine_correlations_qubits(psi);
}

/// Per-time mean and standard error of the per-trajectory minimum. The
/// minimum is taken on each trajectory before averaging.
inline std::vector<MeanEstimate> average_genuine_correlations(std::span<const TrajectoryRecord> records) {
  detail::require(!records.empty(), "average_genuine_correlations: no records");
  const auto& grid = records.front().times;
  for (const auto& r : records)
    detail::require(r.times == grid && r.states.size() == grid.size(),
                    "average_genuine_correlations: records do not share a time grid");
  std::unique_ptr<DickeCorrelator> dicke;
  if (!records.front().states.empty() && records.front().states.front().is_dicke())
    dicke = std::make_unique<DickeCorrelator>(records.front().states.front().n_spins());
  std::vector<MeanEstimate> out;
  std::vector<double> column(records.size());
  for (std::size_t t = 0; t < grid.size(); ++t) {
    for (std::size_t j = 0; j < records.size(); ++j) {
      const auto& psi = records[j].states[t];
      column[j] = dicke ? dicke->evaluate(psi).value : genuine_correlations_qubits(psi).value;
    }
    out.push_back(estimate_mean(column));
  }
  return out;
}

// Observable sets for run_ensemble --------------------------------------------

inline constexpr const char* kCorrelationName = "C_U";
inline constexpr const char* kMaxEntropyName = "max_entropy";
inline constexpr const char* kArgminName = "argmin";

/// C_U, max_entropy, argmin (subset bit mask) and S_<party> for each qubit.
inline ObservableSet qubit_correlation_observables(int n_qubits) {
  std::vector<std::string> names{kCorrelationName, kMaxEntropyName, kArgminName};
  for (int p = 0; p < n_qubits; ++p) names.push_back(std::string("S_") + static_cast<char>('A' + p));
  return {names, [](const StateVector& psi, std::span<double> out) {
            const auto c = genuine_correlations_qubits(psi);
            out[0] = c.value;
            out[1] = c.max_value;
            out[2] = static_cast<double>(c.argmin.mask());
            const auto s = single_party_entropies(psi);
            for (std::size_t p = 0; p < s.size(); ++p) out[3 + p] = s[p];
          }};
}

/// C_U, max_entropy and argmin (block size N1).
inline ObservableSet dicke_correlation_observables(int n_spins) {
  auto corr = std::make_shared<const DickeCorrelator>(n_spins);
  return {{kCorrelationName, kMaxEntropyName, kArgminName}, [corr](const StateVector& psi, std::span<double> out) {
            const auto c = corr->evaluate(psi);
            out[0] = c.value;
            out[1] = c.max_value;
            out[2] = c.argmin.block_size();
          }};
}

}  // namespace gmcorr
