#pragma once

// Quantum-jump unraveling of the decay channel. Dephasing is not unraveled:
// trajectories carry density matrices (or state vectors when d = 0 and the
// start is pure). Each trajectory stops at its first decay, where the photon
// number is measured.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qwalk/errors.hpp"
#include "qwalk/integrator.hpp"
#include "qwalk/model.hpp"

namespace qwalk {

struct TrajectoryConfig {
  int n_trajectories = 2000;
  std::uint64_t rng_seed = 1;
  double jump_dt = 5e-3;

  bool operator==(const TrajectoryConfig&) const = default;

  void validate() const {
    if (n_trajectories < 1) throw ConfigurationError("n_trajectories must be >= 1");
    if (!(jump_dt > 0.0)) throw ConfigurationError("jump_dt must be > 0");
  }
};

struct JumpResult {
  DecayRecord record;          ///< fraction of trajectories decaying at each photon tuple
  std::vector<double> standard_error;  ///< binomial standard error per photon tuple
  std::vector<double> mean_photon;
  std::vector<double> mean_stderr;  ///< standard error of ⟨N⟩ per mode
  std::vector<double> jump_time;    ///< per trajectory; NaN when it never decayed
  int decayed = 0;
  double step = 0.0;
};

/// Independent generator for trajectory `index`; the stream depends only on
/// (seed, index), never on scheduling.
inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace detail {

inline constexpr double kMaxJumpProbability = 0.1;
inline constexpr int kMaxJumpHalvings = 10;

/// Renormalized no-jump evolution: exp(-iHt) conjugation, with dephasing
/// split symmetrically around it when d > 0.
class NoJumpPath {
 public:
  NoJumpPath(const OperatorMatrix& h, const DensityMatrix& rho0, double dephase, double dt)
      : pd_(h.space().photon_dim()), dt_(dt) {
    u_ = Matrix(Complex(0.0, -dt) * h.matrix()).exp();
    coherence_decay_ = std::exp(-dephase * dt);  // e^{-2d dt/2} for half a step
    if (dephase == 0.0) {
      if (auto psi = rho0.pure_state()) {
        pure_ = true;
        psi_ = *psi / psi->norm();
        return;
      }
    }
    rho_ = rho0.matrix() / rho0.trace();
  }

  /// Probability that the qubit is excited in the normalized state.
  double excited() const {
    return pure_ ? psi_.tail(pd_).squaredNorm() : rho_.diagonal().tail(pd_).real().sum();
  }

  /// Normalized photon distribution after σ⁻ρσ⁺.
  Eigen::ArrayXd jump_distribution() const {
    Eigen::ArrayXd w = pure_ ? Eigen::ArrayXd(psi_.tail(pd_).array().abs2())
                             : Eigen::ArrayXd(rho_.diagonal().tail(pd_).real().array());
    w = w.max(0.0);
    return w / w.sum();
  }

  double population(const std::vector<Index>& idx) const {
    double s = 0.0;
    for (Index i : idx) s += pure_ ? std::norm(psi_(i)) : rho_(i, i).real();
    return s;
  }

  void advance() {
    if (pure_) {
      psi_ = u_ * psi_;
      psi_ /= psi_.norm();
      return;
    }
    dephase_half();
    rho_ = u_ * rho_ * u_.adjoint();
    dephase_half();
    rho_ /= rho_.diagonal().real().sum();
  }

  bool finite() const { return pure_ ? psi_.allFinite() : rho_.allFinite(); }

 private:
  void dephase_half() {
    if (coherence_decay_ == 1.0) return;
    rho_.topRightCorner(pd_, pd_) *= coherence_decay_;
    rho_.bottomLeftCorner(pd_, pd_) *= coherence_decay_;
  }

  Index pd_;
  double dt_;
  Matrix u_;
  double coherence_decay_ = 1.0;
  bool pure_ = false;
  Vector psi_;
  Matrix rho_;
};

struct StepTooCoarse {};

inline JumpResult run_trajectories(const SystemParams& params, const DensityMatrix& rho0,
                                   const TrajectoryConfig& traj, const EvolutionConfig& cfg, double dt) {
  const HilbertSpace& space = rho0.space();
  const Index pd = space.photon_dim();
  const int k = traj.n_trajectories;
  const OperatorMatrix h = build_effective_hamiltonian(params, space);
  NoJumpPath path(h, rho0, params.dephase, dt);
  const auto top = top_level_indices(space);

  std::vector<std::mt19937_64> rngs;
  rngs.reserve(k);
  for (int i = 0; i < k; ++i) rngs.push_back(trajectory_rng(traj.rng_seed, static_cast<std::uint64_t>(i)));
  std::vector<int> alive(k);
  for (int i = 0; i < k; ++i) alive[i] = i;
  std::vector<Index> outcome(k, -1);
  std::vector<double> jump_time(k, std::numeric_limits<double>::quiet_NaN());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  // Survival of the no-jump path, S(t) = Π (1 − ΔP_k), drives the same
  // stopping rule as the deterministic integrator.
  std::vector<double> survival{1.0};
  const double settle = settle_time(params);
  bool plateau = false;
  double t = 0.0;
  long steps = 0;
  while (!alive.empty() && survival.back() >= cfg.convergence_trace) {
    const double s = survival.back();
    const double floor = std::max(cfg.convergence_trace, cfg.plateau_tol * (1.0 - s));
    if (t >= settle && steps >= 2 && survival[steps / 2] - s < floor) {
      plateau = true;
      break;
    }
    if (t >= cfg.max_time) {
      if (s > 100.0 * cfg.convergence_trace) {
        std::ostringstream os;
        os << "no-jump survival " << s << " after max_time " << cfg.max_time;
        throw ConvergenceError(os.str());
      }
      break;
    }
    const double jump_probability = params.decay * dt * path.excited();
    if (jump_probability > kMaxJumpProbability) throw StepTooCoarse{};
    survival.push_back(s * (1.0 - jump_probability));
    Eigen::ArrayXd cumulative;
    std::vector<int> still;
    still.reserve(alive.size());
    for (int i : alive) {
      const double r = uniform(rngs[i]);
      if (r >= jump_probability) {
        still.push_back(i);
        continue;
      }
      if (cumulative.size() == 0) {
        Eigen::ArrayXd w = path.jump_distribution();
        cumulative.resize(w.size());
        std::partial_sum(w.begin(), w.end(), cumulative.begin());
      }
      const double s = uniform(rngs[i]) * cumulative[cumulative.size() - 1];
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
      outcome[i] = std::min<Index>(static_cast<Index>(it - cumulative.begin()), pd - 1);
      jump_time[i] = t + dt;
    }
    alive.swap(still);
    path.advance();
    t += dt;
    ++steps;
    if (!path.finite()) throw NumericalInstabilityError("no-jump evolution became non-finite");
    for (int a = 0; a < space.modes(); ++a) {
      // The path is renormalized; the guard applies to the unconditioned state.
      const double pop = survival.back() * path.population(top[a]);
      if (pop > cfg.leakage_tol) {
        std::ostringstream os;
        os << "no-jump population " << pop << " reached the top Fock level of mode " << (a + 1);
        throw TruncationError(os.str(), a);
      }
    }
  }

  JumpResult out;
  out.step = dt;
  out.jump_time = std::move(jump_time);
  DecayRecord& rec = out.record;
  rec.truncations = space.truncations();
  rec.joint.assign(static_cast<std::size_t>(pd), 0.0);
  rec.initial_trace = 1.0;
  rec.elapsed_time = t;
  rec.step = dt;
  rec.steps = steps;
  rec.plateau = plateau;
  // Aggregation in trajectory-index order keeps the sums bitwise reproducible.
  for (int i = 0; i < k; ++i)
    if (outcome[i] >= 0) {
      rec.joint[outcome[i]] += 1.0;
      ++out.decayed;
    }
  for (double& p : rec.joint) p /= k;
  rec.surviving_trace = static_cast<double>(k - out.decayed) / k;
  out.standard_error.resize(rec.joint.size());
  for (std::size_t p = 0; p < rec.joint.size(); ++p)
    out.standard_error[p] = std::sqrt(rec.joint[p] * (1.0 - rec.joint[p]) / k);

  if (out.decayed > 0) {
    for (int a = 0; a < space.modes(); ++a) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < k; ++i) {
        if (outcome[i] < 0) continue;
        const double n = space.photon(outcome[i], a);
        sum += n;
        sq += n * n;
      }
      const double m = out.decayed;
      const double mean = sum / m;
      const double var = m > 1 ? std::max(0.0, (sq - m * mean * mean) / (m - 1.0)) : 0.0;
      out.mean_photon.push_back(mean);
      out.mean_stderr.push_back(std::sqrt(var / m));
    }
  }
  return out;
}

}  // namespace detail

/// Monte Carlo unraveling of the decay channel. Steps whose jump probability
/// exceeds 0.1 trigger a restart with half the step.
inline JumpResult jump_monte_carlo(const SystemParams& params, const DensityMatrix& rho0,
                                   const TrajectoryConfig& traj, const EvolutionConfig& cfg) {
  params.validate();
  traj.validate();
  cfg.validate();
  if (params.decay == 0.0) {
    JumpResult out;
    out.record.truncations = rho0.space().truncations();
    out.record.joint.assign(static_cast<std::size_t>(rho0.space().photon_dim()), 0.0);
    out.record.surviving_trace = 1.0;
    out.standard_error.assign(out.record.joint.size(), 0.0);
    out.step = traj.jump_dt;
    return out;
  }
  double dt = traj.jump_dt;
  for (int attempt = 0; attempt <= detail::kMaxJumpHalvings; ++attempt, dt *= 0.5) {
    try {
      return detail::run_trajectories(params, rho0, traj, cfg, dt);
    } catch (const detail::StepTooCoarse&) {
    }
  }
  throw JumpStepError("jump probability per step stays above 0.1 after " +
                      std::to_string(detail::kMaxJumpHalvings) + " halvings of jump_dt");
}

}  // namespace qwalk
