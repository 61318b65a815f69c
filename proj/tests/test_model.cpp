#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "qwalk/model.hpp"
#include "reference.hpp"

using namespace qwalk;

namespace {

SystemParams one_d(double g, double drive, double decay, int n) {
  SystemParams p;
  p.couplings = {g};
  p.drive = drive;
  p.decay = decay;
  p.initial_photon = n;
  return p;
}

SystemParams two_d(double g1, double g2, int n) {
  SystemParams p;
  p.dimension = 2;
  p.couplings = {g1, g2};
  p.initial_photon = n;
  return p;
}

}  // namespace

TEST(SystemParams, RejectsInconsistentInput) {
  SystemParams p = one_d(1, 1, 1, 1);
  p.dimension = 2;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = one_d(1, 1, -1, 1);
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = one_d(1, 1, 1, 1);
  p.dephase = -0.5;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = one_d(1, -2, 1, 1);
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = one_d(1, 1, 1, -1);
  EXPECT_THROW(p.validate(), ConfigurationError);
  p.dimension = 3;
  EXPECT_THROW(p.validate(), ConfigurationError);
}

TEST(HilbertSpace, LargeTruncationOneMode) {
  const auto space = build_hilbert_space(one_d(1, 0, 0, 100), {320});
  EXPECT_EQ(space.dim(), 640);
}

TEST(HilbertSpace, SmallestLegalSpace) {
  const auto space = build_hilbert_space(one_d(1, 0, 0, 0), {2});
  ASSERT_EQ(space.dim(), 4);
  std::set<std::pair<int, int>> seen;
  for (Index i = 0; i < 4; ++i) {
    const auto l = space.label(i);
    seen.insert({static_cast<int>(l.qubit), l.photons[0]});
  }
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_TRUE(seen.count({0, 0}) && seen.count({0, 1}) && seen.count({1, 0}) && seen.count({1, 1}));
}

TEST(HilbertSpace, TruncationTwoModes) {
  const auto space = build_hilbert_space(two_d(2, 1, 5), {20, 20});
  EXPECT_EQ(space.dim(), 800);
}

TEST(HilbertSpace, TruncationMustLeaveRoomAboveN) {
  EXPECT_THROW(build_hilbert_space(one_d(1, 0, 0, 5), {6}), ConfigurationError);
  EXPECT_NO_THROW(build_hilbert_space(one_d(1, 0, 0, 5), {7}));
  EXPECT_THROW(build_hilbert_space(two_d(2, 1, 5), {20}), ConfigurationError);
}

TEST(HilbertSpace, IndexRoundTrip) {
  for (const auto& t : std::vector<std::vector<int>>{{9}, {7, 8}}) {
    SystemParams p = t.size() == 1 ? one_d(1, 0, 0, 1) : two_d(2, 1, 1);
    const auto space = build_hilbert_space(p, t);
    for (Index i = 0; i < space.dim(); ++i) {
      const auto l = space.label(i);
      EXPECT_EQ(space.index(l.qubit, l.photons), i);
    }
  }
}

TEST(HilbertSpace, DefaultTruncation) {
  EXPECT_EQ(default_truncation(0), 16);
  EXPECT_EQ(default_truncation(5), 5 + 8 * 3 + 8);
  EXPECT_EQ(default_truncation(100), 100 + 8 * 11 + 8);
  const auto space = build_hilbert_space(two_d(2, 1, 5));
  EXPECT_EQ(space.truncations(), (std::vector<int>{37, 37}));
}

TEST(Hamiltonian, LadderElementsOnly) {
  const auto p = one_d(1, 0, 0, 3);
  const auto space = build_hilbert_space(p, {8});
  const Matrix& h = build_effective_hamiltonian(p, space).matrix();
  EXPECT_EQ(h(space.index(Qubit::excited, {0}), space.index(Qubit::ground, {1})), Complex(1.0, 0.0));
  for (Index i = 0; i < h.rows(); ++i)
    for (Index j = 0; j < h.cols(); ++j) {
      const auto a = space.label(i), b = space.label(j);
      Complex expect(0.0);
      if (a.qubit == Qubit::excited && b.qubit == Qubit::ground && a.photons[0] == b.photons[0] - 1)
        expect = std::sqrt(static_cast<double>(b.photons[0]));
      if (a.qubit == Qubit::ground && b.qubit == Qubit::excited && b.photons[0] == a.photons[0] - 1)
        expect = std::sqrt(static_cast<double>(a.photons[0]));
      EXPECT_EQ(h(i, j), expect) << i << "," << j;
    }
}

TEST(Hamiltonian, DecayOnExcitedDiagonal) {
  const auto p = one_d(1, 0.7, 4, 3);
  const auto space = build_hilbert_space(p, {8});
  const Matrix& h = build_effective_hamiltonian(p, space).matrix();
  for (int n = 0; n < 8; ++n) {
    EXPECT_DOUBLE_EQ(h(space.index(Qubit::excited, {n}), space.index(Qubit::excited, {n})).imag(), -2.0);
    EXPECT_DOUBLE_EQ(h(space.index(Qubit::ground, {n}), space.index(Qubit::ground, {n})).imag(), 0.0);
  }
}

TEST(Hamiltonian, TwoModeLadderElement) {
  const auto p = two_d(2, 1, 3);
  const auto space = build_hilbert_space(p, {6, 6});
  const Matrix& h = build_effective_hamiltonian(p, space).matrix();
  for (int n1 = 1; n1 < 6; ++n1)
    for (int n2 = 0; n2 < 6; ++n2) {
      EXPECT_NEAR(std::abs(h(space.index(Qubit::excited, {n1 - 1, n2}), space.index(Qubit::ground, {n1, n2})) -
                           2.0 * std::sqrt(static_cast<double>(n1))),
                  0.0, 1e-15);
    }
  EXPECT_NEAR(h(space.index(Qubit::excited, {2, 1}), space.index(Qubit::ground, {2, 2})).real(), std::sqrt(2.0),
              1e-15);
}

TEST(Hamiltonian, HermitianApartFromDecay) {
  SystemParams p = two_d(2, 1, 3);
  p.drive = 3.3;
  p.detuning = 0.4;
  p.decay = 7.0;
  const auto space = build_hilbert_space(p, {6, 7});
  Matrix h = build_effective_hamiltonian(p, space).matrix();
  for (Index i = space.photon_dim(); i < space.dim(); ++i) h(i, i) += Complex(0.0, 0.5 * p.decay);
  EXPECT_LE((h - h.adjoint()).cwiseAbs().maxCoeff(), 1e-12);

  p.decay = 0.0;
  const Matrix& h0 = build_effective_hamiltonian(p, space).matrix();
  EXPECT_LE((h0 - h0.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(InitialState, FockProjector) {
  const auto p = one_d(1, 0, 0, 5);
  const auto space = build_hilbert_space(p, {12});
  const auto rho = build_initial_state(InitialKind::fock, 5, space);
  const Index at = space.index(Qubit::ground, {5});
  EXPECT_DOUBLE_EQ(rho.trace(), 1.0);
  EXPECT_EQ(rho.matrix()(at, at), Complex(1.0));
  EXPECT_DOUBLE_EQ(rho.matrix().cwiseAbs().sum(), 1.0);
}

TEST(InitialState, FockVacuum) {
  const auto p = one_d(1, 0, 0, 0);
  const auto space = build_hilbert_space(p, {4});
  const auto rho = build_initial_state(InitialKind::fock, 0, space);
  EXPECT_EQ(rho.matrix()(0, 0), Complex(1.0));
  EXPECT_DOUBLE_EQ(rho.matrix().cwiseAbs().sum(), 1.0);
}

TEST(InitialState, CoherentWeightMatchesPoisson) {
  const double expected = ref::poisson_pmf(100, 100.0);
  EXPECT_NEAR(expected, 0.0399, 5e-5);
  const auto amps = coherent_amplitudes(100.0, 320);
  EXPECT_NEAR(amps[100] * amps[100], expected, 1e-12 * expected);

  const auto p = one_d(1, 0, 0, 100);
  const auto space = build_hilbert_space(p, {320});
  const auto rho = build_initial_state(InitialKind::coherent, 100, space);
  const Index at = space.index(Qubit::ground, {100});
  EXPECT_NEAR(rho.matrix()(at, at).real(), expected, 1e-9);
  EXPECT_NEAR(rho.trace(), 1.0, 1e-12);
  // Coherences are kept.
  EXPECT_GT(std::abs(rho.matrix()(at, at + 1)), 0.03);
}

TEST(InitialState, CoherentTruncationLossIsAnError) {
  const auto p = one_d(1, 0, 0, 100);
  EXPECT_THROW(build_initial_state(InitialKind::coherent, 100, build_hilbert_space(p, {130})), ConfigurationError);
}

TEST(InitialState, TraceOneAndPositive) {
  for (auto kind : {InitialKind::fock, InitialKind::coherent}) {
    const auto p = two_d(2, 1, 3);
    const auto space = build_hilbert_space(p, {16, 16});
    const auto rho = build_initial_state(kind, 3, space);
    EXPECT_NEAR(rho.trace(), 1.0, 1e-12);
    EXPECT_GE(rho.min_eigenvalue(), -1e-12);
    EXPECT_NO_THROW(rho.check_invariants());
    EXPECT_TRUE(rho.pure_state().has_value());
  }
}

TEST(DensityMatrix, InvariantViolationsAreReported) {
  const auto space = build_hilbert_space(one_d(1, 0, 0, 0), {2});
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = 1.0;
  m(0, 1) = 0.1;
  EXPECT_THROW(DensityMatrix(space, m).check_invariants(), ConfigurationError);
  m(0, 1) = 0.0;
  m(1, 1) = -0.5;
  m(0, 0) = 1.5;
  EXPECT_THROW(DensityMatrix(space, m).check_invariants(), ConfigurationError);
  EXPECT_THROW(DensityMatrix(space, Matrix::Identity(3, 3)), ConfigurationError);
}
