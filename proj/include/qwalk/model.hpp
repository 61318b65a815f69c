#pragma once

// Qubit ⊗ truncated resonator model: index map, effective non-Hermitian
// Hamiltonian and initial density matrices.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qwalk/errors.hpp"

namespace qwalk {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using Index = Eigen::Index;

enum class Qubit : int { ground = 0, excited = 1 };

enum class InitialKind { fock, coherent };

inline std::string to_string(InitialKind kind) { return kind == InitialKind::fock ? "fock" : "coherent"; }

/// Physical rates of the model. Rates are dimensionless multiples of the
/// first coupling, which is conventionally 1.
struct SystemParams {
  int dimension = 1;
  std::vector<double> couplings{1.0};  ///< g (1D) or g1, g2 (2D)
  double drive = 0.0;                  ///< Rabi frequency Ω
  double detuning = 0.0;               ///< Δε
  double decay = 0.0;                  ///< qubit decay γ
  double dephase = 0.0;                ///< qubit dephasing d
  int initial_photon = 0;              ///< starting unit N

  bool operator==(const SystemParams&) const = default;

  void validate() const {
    if (dimension != 1 && dimension != 2)
      throw ConfigurationError("dimension must be 1 or 2, got " + std::to_string(dimension));
    if (static_cast<int>(couplings.size()) != dimension)
      throw ConfigurationError("dimension " + std::to_string(dimension) + " requires " +
                               std::to_string(dimension) + " coupling(s), got " +
                               std::to_string(couplings.size()));
    for (double g : couplings)
      if (!std::isfinite(g)) throw ConfigurationError("couplings must be finite");
    if (!std::isfinite(drive) || drive < 0.0) throw ConfigurationError("drive must be finite and >= 0");
    if (!std::isfinite(detuning)) throw ConfigurationError("detuning must be finite");
    if (!std::isfinite(decay) || decay < 0.0) throw ConfigurationError("decay must be finite and >= 0");
    if (!std::isfinite(dephase) || dephase < 0.0) throw ConfigurationError("dephase must be finite and >= 0");
    if (initial_photon < 0) throw ConfigurationError("initial photon number must be >= 0");
  }
};

/// Adaptive per-mode truncation used when none is given.
inline int default_truncation(int initial_photon) {
  const int spread = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(initial_photon) + 1.0)));
  return std::max(initial_photon + 8 * spread + 8, 16);
}

/// Qubit ⊗ Fock-ladder basis. Flat index = qubit * photon_dim + photon index,
/// with photon tuples flattened row-major (last mode fastest). The ground
/// block therefore occupies [0, photon_dim) and the excited block the rest.
class HilbertSpace {
 public:
  struct Label {
    Qubit qubit;
    std::vector<int> photons;
    bool operator==(const Label&) const = default;
  };

  explicit HilbertSpace(std::vector<int> truncations) : truncations_(std::move(truncations)) {
    if (truncations_.empty()) throw ConfigurationError("at least one mode is required");
    photon_dim_ = 1;
    for (int t : truncations_) {
      if (t < 1) throw ConfigurationError("mode truncation must be >= 1");
      photon_dim_ *= t;
    }
    strides_.assign(truncations_.size(), 1);
    for (int a = static_cast<int>(truncations_.size()) - 2; a >= 0; --a)
      strides_[a] = strides_[a + 1] * truncations_[a + 1];
  }

  int modes() const { return static_cast<int>(truncations_.size()); }
  const std::vector<int>& truncations() const { return truncations_; }
  Index photon_dim() const { return photon_dim_; }
  Index dim() const { return 2 * photon_dim_; }

  Index photon_index(std::span<const int> photons) const {
    if (static_cast<int>(photons.size()) != modes()) throw ConfigurationError("photon tuple has wrong arity");
    Index p = 0;
    for (int a = 0; a < modes(); ++a) {
      if (photons[a] < 0 || photons[a] >= truncations_[a])
        throw ConfigurationError("photon number outside truncation");
      p += photons[a] * strides_[a];
    }
    return p;
  }

  Index index(Qubit q, std::span<const int> photons) const {
    return static_cast<Index>(q) * photon_dim_ + photon_index(photons);
  }
  Index index(Qubit q, std::initializer_list<int> photons) const {
    return index(q, std::span<const int>(photons.begin(), photons.size()));
  }

  /// Photon number of `mode` for a flat photon index.
  int photon(Index photon_flat, int mode) const {
    return static_cast<int>((photon_flat / strides_[mode]) % truncations_[mode]);
  }

  Index stride(int mode) const { return strides_[mode]; }

  Label label(Index flat) const {
    if (flat < 0 || flat >= dim()) throw ConfigurationError("flat index out of range");
    Label out{flat < photon_dim_ ? Qubit::ground : Qubit::excited, std::vector<int>(truncations_.size())};
    const Index p = flat % photon_dim_;
    for (int a = 0; a < modes(); ++a) out.photons[a] = photon(p, a);
    return out;
  }

  static Qubit qubit_of(Index flat, Index photon_dim) {
    return flat < photon_dim ? Qubit::ground : Qubit::excited;
  }
  Qubit qubit(Index flat) const { return qubit_of(flat, photon_dim_); }

  bool operator==(const HilbertSpace& o) const { return truncations_ == o.truncations_; }

 private:
  std::vector<int> truncations_;
  std::vector<Index> strides_;
  Index photon_dim_ = 0;
};

inline HilbertSpace build_hilbert_space(const SystemParams& params, std::vector<int> truncations) {
  params.validate();
  if (static_cast<int>(truncations.size()) != params.dimension)
    throw ConfigurationError("expected " + std::to_string(params.dimension) + " truncation(s), got " +
                             std::to_string(truncations.size()));
  for (std::size_t a = 0; a < truncations.size(); ++a)
    if (truncations[a] < params.initial_photon + 2)
      throw ConfigurationError("truncation " + std::to_string(truncations[a]) + " of mode " +
                               std::to_string(a + 1) + " is below N + 2 = " +
                               std::to_string(params.initial_photon + 2));
  return HilbertSpace(std::move(truncations));
}

inline HilbertSpace build_hilbert_space(const SystemParams& params) {
  return build_hilbert_space(params,
                             std::vector<int>(params.dimension, default_truncation(params.initial_photon)));
}

class OperatorMatrix {
 public:
  OperatorMatrix(HilbertSpace space, Matrix m) : space_(std::move(space)), m_(std::move(m)) {
    if (m_.rows() != space_.dim() || m_.cols() != space_.dim())
      throw ConfigurationError("operator size does not match Hilbert space");
  }
  const HilbertSpace& space() const { return space_; }
  const Matrix& matrix() const { return m_; }
  Complex operator()(Index i, Index j) const { return m_(i, j); }

 private:
  HilbertSpace space_;
  Matrix m_;
};

/// Dense density matrix. Trace may fall below one under non-Hermitian
/// evolution.
class DensityMatrix {
 public:
  static constexpr double kHermiticityTol = 1e-10;
  static constexpr double kTraceTol = 1e-9;
  static constexpr double kPositivityTol = 1e-8;

  DensityMatrix(HilbertSpace space, Matrix rho) : space_(std::move(space)), rho_(std::move(rho)) {
    if (rho_.rows() != space_.dim() || rho_.cols() != space_.dim())
      throw ConfigurationError("density matrix size does not match Hilbert space");
  }

  static DensityMatrix from_pure(HilbertSpace space, const Vector& psi) {
    Matrix rho = psi * psi.adjoint();
    return DensityMatrix(std::move(space), std::move(rho));
  }

  const HilbertSpace& space() const { return space_; }
  const Matrix& matrix() const { return rho_; }
  Complex operator()(Index i, Index j) const { return rho_(i, j); }

  double trace() const { return rho_.diagonal().real().sum(); }

  double hermiticity_defect() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

  double min_eigenvalue() const {
    Matrix herm = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Throws ConfigurationError when a contract is violated.
  void check_invariants() const {
    if (!rho_.allFinite()) throw ConfigurationError("density matrix has non-finite entries");
    if (hermiticity_defect() > kHermiticityTol) throw ConfigurationError("density matrix is not Hermitian");
    const double tr = trace();
    if (tr < -kTraceTol || tr > 1.0 + kTraceTol) throw ConfigurationError("density matrix trace outside [0, 1]");
    if (min_eigenvalue() < -kPositivityTol) throw ConfigurationError("density matrix is not positive");
  }

  /// Returns ψ with ρ = ψψ† when ρ is rank one to `tol`.
  std::optional<Vector> pure_state(double tol = 1e-12) const {
    Index j = 0;
    const double pivot = rho_.diagonal().real().maxCoeff(&j);
    if (!(pivot > 0.0)) return std::nullopt;
    Vector psi = rho_.col(j) / std::sqrt(pivot);
    if ((rho_ - psi * psi.adjoint()).cwiseAbs().maxCoeff() > tol) return std::nullopt;
    return psi;
  }

 private:
  HilbertSpace space_;
  Matrix rho_;
};

/// H = Σ g_α(σ⁺a_α + σ⁻a_α†) + (Ω/2)(σ⁺+σ⁻) + (Δε/2)σᶻ − (iγ/2)|e⟩⟨e| with
/// exact ladder elements ⟨n−1|a|n⟩ = √n.
inline OperatorMatrix build_effective_hamiltonian(const SystemParams& params, const HilbertSpace& space) {
  params.validate();
  if (space.modes() != params.dimension) throw ConfigurationError("Hilbert space arity does not match dimension");
  const Index pd = space.photon_dim();
  Matrix h = Matrix::Zero(space.dim(), space.dim());
  const Complex ground_energy(-0.5 * params.detuning, 0.0);
  const Complex excited_energy(0.5 * params.detuning, -0.5 * params.decay);
  const double half_drive = 0.5 * params.drive;
  for (Index p = 0; p < pd; ++p) {
    const Index g = p;
    const Index e = pd + p;
    h(g, g) = ground_energy;
    h(e, e) = excited_energy;
    h(e, g) += half_drive;
    h(g, e) += half_drive;
    for (int a = 0; a < space.modes(); ++a) {
      const int n = space.photon(p, a);
      if (n == 0) continue;
      // |g, n⟩ -> |e, n - 1_α⟩ through σ⁺a_α and its conjugate σ⁻a_α†.
      const Index e_lower = pd + p - space.stride(a);
      const double amp = params.couplings[a] * std::sqrt(static_cast<double>(n));
      h(e_lower, g) += amp;
      h(g, e_lower) += amp;
    }
  }
  return OperatorMatrix(space, std::move(h));
}

/// Number-basis amplitudes e^{-N/2} N^{n/2} / √(n!) for n < maxn, before
/// renormalization.
inline std::vector<double> coherent_amplitudes(double mean_photon, int maxn) {
  std::vector<double> amp(static_cast<std::size_t>(maxn), 0.0);
  for (int n = 0; n < maxn; ++n) {
    if (mean_photon == 0.0) {
      amp[n] = n == 0 ? 1.0 : 0.0;
      continue;
    }
    const double log_amp = 0.5 * (-mean_photon + n * std::log(mean_photon) - std::lgamma(n + 1.0));
    amp[n] = std::exp(log_amp);
  }
  return amp;
}

/// Qubit in |g⟩; each resonator mode in |N⟩ (Fock) or the coherent state
/// |α = √N⟩ including off-diagonal coherences.
inline DensityMatrix build_initial_state(InitialKind kind, int initial_photon, const HilbertSpace& space) {
  if (initial_photon < 0) throw ConfigurationError("initial photon number must be >= 0");
  for (int t : space.truncations())
    if (initial_photon >= t) throw ConfigurationError("initial photon number outside truncation");

  Vector psi = Vector::Zero(space.dim());
  if (kind == InitialKind::fock) {
    std::vector<int> photons(space.modes(), initial_photon);
    psi(space.index(Qubit::ground, photons)) = 1.0;
    return DensityMatrix::from_pure(space, psi);
  }

  std::vector<std::vector<double>> mode_amps;
  for (int a = 0; a < space.modes(); ++a) {
    auto amp = coherent_amplitudes(static_cast<double>(initial_photon), space.truncations()[a]);
    double kept = 0.0;
    for (double x : amp) kept += x * x;
    if (1.0 - kept > 1e-6)
      throw ConfigurationError("coherent state truncation of mode " + std::to_string(a + 1) + " loses " +
                               std::to_string(1.0 - kept) + " of its weight");
    const double norm = std::sqrt(kept);
    for (double& x : amp) x /= norm;
    mode_amps.push_back(std::move(amp));
  }
  for (Index p = 0; p < space.photon_dim(); ++p) {
    double amp = 1.0;
    for (int a = 0; a < space.modes(); ++a) amp *= mode_amps[a][space.photon(p, a)];
    psi(p) = amp;
  }
  return DensityMatrix::from_pure(space, psi);
}

}  // namespace qwalk
