#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gmcorr/quantum_state.hpp"
#include "test_util.hpp"

using namespace gmcorr;
using gmcorr::testing::binary_entropy;
using gmcorr::testing::random_state;

TEST(TensorProduct, BasisStates) {
  const auto s = tensor_product(StateVector::basis_state(1, 0), StateVector::basis_state(1, 1));
  ASSERT_EQ(s.dim(), 4);
  EXPECT_EQ(s.n_qubits(), 2);
  EXPECT_NEAR(std::abs(s(1) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(s.norm(), 1.0, 1e-15);
}

TEST(TensorProduct, PlusTimesZero) {
  CVector plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const auto s = tensor_product(StateVector::qubits(1, plus), StateVector::basis_state(1, 0));
  EXPECT_NEAR(s(0).real(), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s(2).real(), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(std::abs(s(1)) + std::abs(s(3)), 0.0, 1e-15);
}

TEST(TensorProduct, NormIsMultiplicative) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_state(2, gen);
    const auto b = random_state(3, gen);
    EXPECT_NEAR(tensor_product(a, b).norm(), 1.0, 1e-12);
  }
}

TEST(TensorProduct, RejectsDicke) {
  EXPECT_THROW(tensor_product(StateVector::dicke_state(0, 2), StateVector::basis_state(1, 0)),
               std::invalid_argument);
}

TEST(Bipartition, CanonicalFormAndEnumeration) {
  EXPECT_EQ(Bipartition::qubits(3, {1, 2}), Bipartition::qubits(3, {0}));
  EXPECT_EQ(Bipartition::qubits(4, {2, 3}).parties(), (std::vector<int>{0, 1}));
  EXPECT_EQ(Bipartition::enumerate_qubits(3).size(), 3u);
  EXPECT_EQ(Bipartition::enumerate_qubits(4).size(), 7u);
  EXPECT_EQ(Bipartition::enumerate_qubits(5).size(), 15u);
  const auto cuts = Bipartition::enumerate_qubits(3);
  EXPECT_EQ(cuts[0].label(), "{A}");
  EXPECT_EQ(cuts[1].label(), "{B}");
  EXPECT_EQ(cuts[2].label(), "{C}");
  EXPECT_EQ(Bipartition::dicke(10, 7).block_size(), 3);
  EXPECT_THROW(Bipartition::qubits(3, {}), std::invalid_argument);
  EXPECT_THROW(Bipartition::qubits(3, {0, 1, 2}), std::invalid_argument);
  EXPECT_THROW(Bipartition::dicke(4, 0), std::invalid_argument);
  EXPECT_THROW(Bipartition::dicke(4, 4), std::invalid_argument);
}

TEST(PartialTrace, Psi2KeepA) {
  CVector v = CVector::Zero(8);
  v(0b010) = v(0b001) = 1.0 / std::sqrt(2.0);
  const auto rho = partial_trace(StateVector::qubits(3, v), Bipartition::qubits(3, {0}));
  EXPECT_NEAR(std::abs(rho(0, 0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(rho(1, 1)) + std::abs(rho(0, 1)), 0.0, 1e-15);
}

TEST(PartialTrace, Psi1KeepC) {
  CVector v = CVector::Zero(8);
  v(0b011) = 2.0 / 3.0;
  v(0b101) = 2.0 / 3.0;
  v(0b110) = 1.0 / 3.0;
  const auto rho = partial_trace(StateVector::qubits(3, v), Bipartition::qubits(3, {2}));
  EXPECT_NEAR(rho(0, 0).real(), 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(rho(1, 1).real(), 8.0 / 9.0, 1e-15);
  EXPECT_NEAR(std::abs(rho(0, 1)), 0.0, 1e-15);
}

TEST(PartialTrace, GhzSingleQubitIsMaximallyMixed) {
  CVector v = CVector::Zero(8);
  v(0) = v(7) = 1.0 / std::sqrt(2.0);
  const auto rho = partial_trace(StateVector::qubits(3, v), Bipartition::qubits(3, {0}));
  EXPECT_LT(detail::max_abs(rho.matrix() - 0.5 * CMatrix::Identity(2, 2)), 1e-15);
}

TEST(PartialTrace, MixedInputMatchesPureInput) {
  std::mt19937_64 gen(11);
  const auto psi = random_state(4, gen);
  const auto cut = Bipartition::qubits(4, {1, 3});
  const auto a = partial_trace(psi, cut);
  const auto b = partial_trace(DensityOperator::pure(psi), 4, cut);
  EXPECT_LT(detail::max_abs(a.matrix() - b.matrix()), 1e-14);
}

TEST(PartialTrace, PureStateDuality) {
  std::mt19937_64 gen(3);
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto psi = random_state(n, gen);
      const std::uint32_t full = (1u << n) - 1;
      for (std::uint32_t mask = 1; mask < full; ++mask) {
        // partial_trace keeps the canonical subset, so compare explicit sides
        const auto keep = Bipartition::from_mask(n, mask);
        const CMatrix m = detail::split_amplitudes(psi.amplitudes(), n, mask);
        const DensityOperator side(m * m.adjoint());
        const DensityOperator other(m.transpose() * m.conjugate());
        EXPECT_NEAR(von_neumann_entropy(side), von_neumann_entropy(other), 1e-9);
        EXPECT_NEAR(von_neumann_entropy(partial_trace(psi, keep)), von_neumann_entropy(side), 1e-9);
        EXPECT_NEAR(side.trace().real(), 1.0, 1e-12);
      }
    }
  }
}

TEST(PartialTrace, RejectsDickeState) {
  EXPECT_THROW(partial_trace(StateVector::dicke_state(1, 3), Bipartition::qubits(3, {0})), std::invalid_argument);
}

TEST(Entropy, KnownValues) {
  CMatrix half = 0.5 * CMatrix::Identity(2, 2);
  EXPECT_NEAR(von_neumann_entropy(DensityOperator(half)), 1.0, 1e-15);
  CMatrix pure = CMatrix::Zero(2, 2);
  pure(0, 0) = 1.0;
  EXPECT_EQ(von_neumann_entropy(DensityOperator(pure)), 0.0);
  CMatrix ninth = CMatrix::Zero(2, 2);
  ninth(0, 0) = 1.0 / 9.0;
  ninth(1, 1) = 8.0 / 9.0;
  EXPECT_NEAR(von_neumann_entropy(DensityOperator(ninth)), binary_entropy(1.0 / 9.0), 1e-14);
  EXPECT_NEAR(von_neumann_entropy(DensityOperator(ninth)), 0.50326, 5e-6);
}

TEST(Entropy, BoundsOnRandomStates) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto psi = random_state(5, gen);
    for (const auto& cut : Bipartition::enumerate_qubits(5)) {
      const auto rho = partial_trace(psi, cut);
      const double s = von_neumann_entropy(rho);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, std::log2(static_cast<double>(rho.dim())) + 1e-9);
    }
  }
}

TEST(Entropy, RejectsNonHermitian) {
  CMatrix m = 0.5 * CMatrix::Identity(2, 2);
  m(0, 1) = 0.1;
  EXPECT_THROW(von_neumann_entropy(DensityOperator(m)), std::invalid_argument);
}

TEST(DensityOperator, Validate) {
  EXPECT_NO_THROW(DensityOperator(0.5 * CMatrix::Identity(2, 2)).validate());
  EXPECT_THROW(DensityOperator(CMatrix::Identity(2, 2)).validate(), std::invalid_argument);
  CMatrix neg = CMatrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  EXPECT_THROW(DensityOperator(neg).validate(), std::invalid_argument);
}

TEST(DickeToRegister, Examples) {
  const auto z = dicke_to_register(0, 3);
  EXPECT_NEAR(std::abs(z(0) - 1.0), 0.0, 1e-15);
  const auto w = dicke_to_register(1, 3);
  for (int idx : {0b100, 0b010, 0b001}) EXPECT_NEAR(w(idx).real(), 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(w.norm(), 1.0, 1e-15);
  const auto full = dicke_to_register(5, 5);
  EXPECT_NEAR(std::abs(full(31) - 1.0), 0.0, 1e-15);
  EXPECT_THROW(dicke_to_register(4, 3), std::invalid_argument);
  EXPECT_THROW(dicke_to_register(0, 15), std::invalid_argument);
}

TEST(CollectiveOperator, Ladder) {
  const CMatrix jp = collective_operator(CollectiveOp::raise, 3);
  const CVector up = jp * StateVector::dicke_state(1, 3).amplitudes();
  EXPECT_NEAR(up(2).real(), 2.0, 1e-15);
  for (int n : {1, 4, 9}) {
    const CVector v = collective_operator(CollectiveOp::raise, n) * StateVector::dicke_state(0, n).amplitudes();
    EXPECT_NEAR(v(1).real(), std::sqrt(static_cast<double>(n)), 1e-14);
  }
  const CMatrix jz = collective_operator(CollectiveOp::z, 4);
  EXPECT_NEAR(jz(0, 0).real(), -2.0, 1e-15);
  EXPECT_NEAR(jz(4, 4).real(), 2.0, 1e-15);
  EXPECT_THROW(collective_operator(CollectiveOp::x, 0), std::invalid_argument);
}

TEST(CollectiveOperator, Su2Algebra) {
  for (int n : {1, 2, 7, 30, 100}) {
    const CMatrix x = collective_operator(CollectiveOp::x, n);
    const CMatrix y = collective_operator(CollectiveOp::y, n);
    const CMatrix z = collective_operator(CollectiveOp::z, n);
    EXPECT_LT(detail::max_abs(x * y - y * x - I * z), 1e-12) << n;
    EXPECT_LT(detail::max_abs(y * z - z * y - I * x), 1e-12) << n;
    EXPECT_LT(detail::max_abs(z * x - x * z - I * y), 1e-12) << n;
  }
}

TEST(CollectiveOperator, MatchesRegisterSum) {
  // J+ = sum_j |1_j><0_j| restricted to the symmetric sector
  const int n = 4;
  const CMatrix jp = collective_operator(CollectiveOp::raise, n);
  for (int m = 0; m < n; ++m) {
    CVector reg = CVector::Zero(1 << n);
    const auto psi = dicke_to_register(m, n);
    for (int idx = 0; idx < (1 << n); ++idx)
      for (int q = 0; q < n; ++q)
        if (!(idx & (1 << q))) reg(idx | (1 << q)) += psi(idx);
    const auto expect = dicke_to_register(StateVector::dicke(n, jp * StateVector::dicke_state(m, n).amplitudes()));
    EXPECT_LT((reg - expect.amplitudes()).norm(), 1e-12);
  }
}

TEST(SchmidtRow, Examples) {
  const auto r = schmidt_row(1, 2, 1);
  ASSERT_EQ(r.coefficients.size(), 2u);
  EXPECT_NEAR(r.coefficients[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r.coefficients[1], 1.0 / std::sqrt(2.0), 1e-15);
  const auto w = schmidt_row(1, 3, 1);
  EXPECT_EQ(w.k_min, 0);
  EXPECT_NEAR(w.coefficients[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(w.coefficients[1], std::sqrt(1.0 / 3.0), 1e-15);
  EXPECT_THROW(schmidt_row(4, 3, 1), std::invalid_argument);
  EXPECT_THROW(schmidt_row(1, 3, 3), std::invalid_argument);
}

TEST(SchmidtRow, Normalization) {
  for (int n = 2; n <= 60; ++n)
    for (int b = 1; b < n; ++b)
      for (int m = 0; m <= n; ++m) {
        const auto r = schmidt_row(m, n, b);
        double s = 0.0;
        for (double c : r.coefficients) {
          EXPECT_GE(c, 0.0);
          s += c * c;
        }
        ASSERT_NEAR(s, 1.0, 1e-12) << "m=" << m << " N=" << n << " N1=" << b;
      }
  const auto big = schmidt_row(100, 200, 77);
  double s = 0.0;
  for (double c : big.coefficients) s += c * c;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(DickeReducedState, Examples) {
  const auto rho = dicke_reduced_state(StateVector::dicke_state(1, 3), 1);
  ASSERT_EQ(rho.dim(), 3);
  // the traced spin is up with probability 1/3, leaving no excitation behind
  EXPECT_NEAR(rho(0, 0).real(), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(rho(1, 1).real(), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(von_neumann_entropy(rho), binary_entropy(1.0 / 3.0), 1e-14);
  EXPECT_NEAR(von_neumann_entropy(rho), 0.9183, 5e-5);

  const auto ground = dicke_reduced_state(StateVector::dicke_state(0, 6), 2);
  EXPECT_EQ(ground.dim(), 5);
  EXPECT_NEAR(ground(0, 0).real(), 1.0, 1e-15);
  EXPECT_NEAR(ground.trace().real(), 1.0, 1e-15);
  EXPECT_THROW(dicke_reduced_state(StateVector::dicke_state(0, 6), 6), std::invalid_argument);
}

// Brute-force oracle: expand to 2^N amplitudes and trace out the first N1
// qubits directly.
TEST(DickeReducedState, MatchesRegisterPartialTrace) {
  std::mt19937_64 gen(17);
  for (int n = 2; n <= 8; ++n) {
    std::vector<StateVector> states;
    for (int m = 0; m <= n; ++m) states.push_back(StateVector::dicke_state(m, n));
    for (int trial = 0; trial < 3; ++trial) states.push_back(gmcorr::testing::random_dicke_state(n, gen));
    for (const auto& c : states) {
      const auto reg = dicke_to_register(c);
      for (int b = 1; b < n; ++b) {
        // keep the last n - b qubits
        std::uint32_t keep_mask = 0;
        for (int p = b; p < n; ++p) keep_mask |= 1u << p;
        const CMatrix a = detail::split_amplitudes(reg.amplitudes(), n, keep_mask);
        const DensityOperator brute(a * a.adjoint());
        const auto fast = dicke_reduced_state(c, b);
        EXPECT_NEAR(fast.trace().real(), 1.0, 1e-9);
        EXPECT_NEAR(von_neumann_entropy(fast), von_neumann_entropy(brute), 1e-10);
        // eigenvalue multisets (nonzero parts)
        RVector ef = hermitian_eigenvalues(fast.matrix());
        RVector eb = hermitian_eigenvalues(brute.matrix());
        const Eigen::Index k = std::min(ef.size(), eb.size());
        EXPECT_LT((ef.tail(k) - eb.tail(k)).cwiseAbs().maxCoeff(), 1e-10);
      }
    }
  }
}
