#pragma once

// Deterministic propagation of the decay-conditioned walk.
//
// Three step schemes share one driver:
//  * pure state, d = 0: exact propagator exp(-iH h/2) applied twice per step;
//  * mixed state, d = 0: exact conjugation ρ -> UρU† with the same half steps;
//  * d > 0: exponential time differencing RK4 (Cox–Matthews) where the
//    elementwise-diagonal part of the Liouvillian (decay, detuning and
//    dephasing) is integrated exactly and the off-diagonal hopping part by the
//    RK4 stages.
// The decay integral γ∫ρ^{ee}_{nn} dt is accumulated with Simpson weights on
// the exact paths and with the RK4 stage weights on the ETD path, so every
// scheme is fourth order in the step. Each step distributes the exact trace
// loss over photon numbers in proportion to those weights, which keeps
// Σ P_n + Tr ρ equal to the initial trace up to rounding.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include "qwalk/errors.hpp"
#include "qwalk/model.hpp"

namespace qwalk {

/// Global order in the time step of every deterministic scheme.
inline constexpr int kSchemeOrder = 4;

struct EvolutionConfig {
  double initial_dt = 0.05;
  double convergence_trace = 1e-6;  ///< stop once Tr ρ falls below this
  int richardson_levels = 8;        ///< maximum number of halvings
  double richardson_tol = 1e-4;
  double leakage_tol = 1e-6;        ///< max population on a top Fock level
  double max_time = 5000.0;
  double plateau_tol = 1e-4;        ///< relative loss per doubling of t that counts as a plateau
  bool record_history = false;
  bool force_density_path = false;  ///< skip the state-vector shortcut

  bool operator==(const EvolutionConfig&) const = default;

  void validate() const {
    if (!(initial_dt > 0.0) || !(convergence_trace > 0.0) || !(richardson_tol > 0.0) || !(leakage_tol > 0.0) ||
        !(max_time > 0.0) || !(plateau_tol >= 0.0))
      throw ConfigurationError("evolution tolerances, step and max_time must be > 0");
    if (richardson_levels < 2) throw ConfigurationError("richardson_levels must be >= 2");
  }
};

struct Checkpoint {
  double time;
  double decayed;  ///< Σ P_n so far
  double trace;
};

/// Decay-conditioned photon-number distribution. `joint` is indexed by the
/// flat photon index of the Hilbert space (row-major over modes).
struct DecayRecord {
  std::vector<int> truncations;
  std::vector<double> joint;
  double initial_trace = 1.0;
  double surviving_trace = 1.0;
  double elapsed_time = 0.0;
  double step = 0.0;
  long steps = 0;
  double quadrature_total = 0.0;  ///< Σ of raw quadrature weights before rescaling
  double max_bookkeeping_defect = 0.0;
  bool plateau = false;  ///< stopped on a converged, non-decaying trace
  std::vector<Checkpoint> history;

  int modes() const { return static_cast<int>(truncations.size()); }

  double total() const {
    double s = 0.0;
    for (double p : joint) s += p;
    return s;
  }

  std::vector<double> marginal(int mode) const {
    if (mode < 0 || mode >= modes()) throw ConfigurationError("mode index out of range");
    std::vector<double> out(static_cast<std::size_t>(truncations[mode]), 0.0);
    Index stride = 1;
    for (int a = modes() - 1; a > mode; --a) stride *= truncations[a];
    for (std::size_t p = 0; p < joint.size(); ++p)
      out[(static_cast<Index>(p) / stride) % truncations[mode]] += joint[p];
    return out;
  }

  std::vector<double> normalized_marginal(int mode) const {
    auto m = marginal(mode);
    const double s = total();
    if (!(s > 0.0)) throw ConfigurationError("decay record is empty");
    for (double& x : m) x /= s;
    return m;
  }
};

/// ⟨N⟩ = Σ n P_n / Σ P_n over the marginal of `mode`.
inline double average_photon(const DecayRecord& record, int mode = 0) {
  const auto m = record.marginal(mode);
  double s = 0.0, w = 0.0;
  for (std::size_t n = 0; n < m.size(); ++n) {
    s += m[n];
    w += static_cast<double>(n) * m[n];
  }
  if (!(s > 0.0)) throw ConfigurationError("decay record is empty");
  return w / s;
}

/// ⟨Δn⟩ = ⟨N⟩ − N.
inline double average_displacement(const DecayRecord& record, int initial_photon, int mode = 0) {
  return average_photon(record, mode) - initial_photon;
}

namespace detail {

inline std::vector<std::vector<Index>> top_level_indices(const HilbertSpace& space) {
  std::vector<std::vector<Index>> out(space.modes());
  for (Index i = 0; i < space.dim(); ++i) {
    const Index p = i % space.photon_dim();
    for (int a = 0; a < space.modes(); ++a)
      if (space.photon(p, a) == space.truncations()[a] - 1) out[a].push_back(i);
  }
  return out;
}

/// Exponential integrator coefficients for one exponent z = λh, scaled by h.
struct EtdCoefficients {
  Complex e, e_half, q, f1, f2, f3;
};

inline EtdCoefficients etd_coefficients(Complex lambda, double h) {
  const Complex z = lambda * h;
  auto direct = [](Complex x) {
    const Complex ex = std::exp(x);
    const Complex x3 = x * x * x;
    return std::array<Complex, 4>{(std::exp(0.5 * x) - 1.0) / x,
                                  (-4.0 - x + ex * (4.0 - 3.0 * x + x * x)) / x3,
                                  (2.0 + x + ex * (x - 2.0)) / x3,
                                  (-4.0 - 3.0 * x - x * x + ex * (4.0 - x)) / x3};
  };
  std::array<Complex, 4> phi{};
  if (std::abs(z) > 1.0) {
    phi = direct(z);
  } else {
    // Mean over a unit circle around z; trapezoid rule on a circle converges
    // geometrically for these entire functions.
    constexpr int kPoints = 64;
    for (int j = 0; j < kPoints; ++j) {
      const double theta = 2.0 * M_PI * (j + 0.5) / kPoints;
      const auto v = direct(z + std::polar(1.0, theta));
      for (int k = 0; k < 4; ++k) phi[k] += v[k];
    }
    for (auto& x : phi) x /= static_cast<double>(kPoints);
  }
  return {std::exp(z), std::exp(0.5 * z), h * phi[0], h * phi[1], h * phi[2], h * phi[3]};
}

/// Column-sum norm of H minus its diagonal.
inline double offdiagonal_norm(const Matrix& h) {
  double best = 0.0;
  for (Index j = 0; j < h.cols(); ++j) {
    double s = 0.0;
    for (Index i = 0; i < h.rows(); ++i)
      if (i != j) s += std::abs(h(i, j));
    best = std::max(best, s);
  }
  return best;
}

}  // namespace detail

/// Largest step accepted by the ETD scheme for this Hamiltonian. The exact
/// paths have no stability limit.
inline double max_stable_step(const OperatorMatrix& h) {
  const double norm = detail::offdiagonal_norm(h.matrix());
  return norm > 0.0 ? 1.0 / norm : std::numeric_limits<double>::infinity();
}

/// Pure-state propagation under exp(-iHt) for d = 0.
class StateVectorPropagator {
 public:
  StateVectorPropagator(const OperatorMatrix& h, Vector psi, double dt)
      : space_(h.space()), half_(Matrix(Complex(0.0, -0.5 * dt) * h.matrix()).exp()), psi_(std::move(psi)), dt_(dt) {}

  double trace() const { return psi_.squaredNorm(); }
  bool finite() const { return psi_.allFinite(); }
  const Vector& state() const { return psi_; }

  /// Advances one step; `weights` receives ∫ρ^{ee}_{pp} dt over the step.
  void step(Eigen::ArrayXd& weights) {
    const Index pd = space_.photon_dim();
    Vector mid = half_ * psi_;
    Vector next = half_ * mid;
    weights = (dt_ / 6.0) * (psi_.tail(pd).array().abs2() + 4.0 * mid.tail(pd).array().abs2() +
                             next.tail(pd).array().abs2());
    psi_ = std::move(next);
  }

  double population(const std::vector<Index>& idx) const {
    double s = 0.0;
    for (Index i : idx) s += std::norm(psi_(i));
    return s;
  }

  DensityMatrix density() const { return DensityMatrix::from_pure(space_, psi_); }

 private:
  HilbertSpace space_;
  Matrix half_;
  Vector psi_;
  double dt_;
};

/// Density-matrix propagation of dρ/dt = −i(Hρ − ρH†) + d(σᶻρσᶻ − ρ).
class DensityPropagator {
 public:
  DensityPropagator(const OperatorMatrix& h, double dephase, Matrix rho, double dt)
      : space_(h.space()), rho_(std::move(rho)), dt_(dt), dephase_(dephase) {
    if (!(dt > 0.0)) throw ConfigurationError("time step must be > 0");
    if (dephase < 0.0) throw ConfigurationError("dephase rate must be >= 0");
    if (dephase == 0.0) {
      half_ = Matrix(Complex(0.0, -0.5 * dt) * h.matrix()).exp();
    } else {
      setup_etd(h);
    }
  }

  double trace() const { return rho_.diagonal().real().sum(); }
  bool finite() const { return rho_.allFinite(); }
  const Matrix& state() const { return rho_; }
  DensityMatrix density() const { return DensityMatrix(space_, rho_); }

  double population(const std::vector<Index>& idx) const {
    double s = 0.0;
    for (Index i : idx) s += rho_(i, i).real();
    return s;
  }

  void step(Eigen::ArrayXd& weights) {
    const Index pd = space_.photon_dim();
    auto ee = [pd](const Matrix& m) { return m.diagonal().tail(pd).real().array(); };
    if (dephase_ == 0.0) {
      Matrix mid = half_ * rho_ * half_.adjoint();
      Matrix next = half_ * mid * half_.adjoint();
      weights = (dt_ / 6.0) * (ee(rho_) + 4.0 * ee(mid) + ee(next));
      rho_ = std::move(next);
      return;
    }
    const Matrix& u = rho_;
    hopping(u, nu_);
    blend(a_, e_half_, u, q_, nu_);
    hopping(a_, na_);
    blend(b_, e_half_, u, q_, na_);
    hopping(b_, nb_);
    work_ = 2.0 * nb_ - nu_;
    blend(c_, e_half_, a_, q_, work_);
    hopping(c_, nc_);
    weights = (dt_ / 6.0) * (ee(u) + 2.0 * ee(a_) + 2.0 * ee(b_) + ee(c_));
    for (int qi = 0; qi < 2; ++qi)
      for (int qj = 0; qj < 2; ++qj) {
        auto blk = [&](Matrix& m) { return m.block(qi * pd, qj * pd, pd, pd); };
        blk(rho_) = e_[qi][qj] * blk(rho_) + f1_[qi][qj] * blk(nu_) +
                    (2.0 * f2_[qi][qj]) * (blk(na_) + blk(nb_)) + f3_[qi][qj] * blk(nc_);
      }
  }

 private:
  using SparseMatrix = Eigen::SparseMatrix<Complex>;
  using BlockCoefficients = std::array<std::array<Complex, 2>, 2>;

  // out = −i(H_off ρ − ρ H_off†)
  void hopping(const Matrix& rho, Matrix& out) {
    if (ladder_) {
      ladder_right(rho, work_);
      // ρ and H_off Hermitian: H_off ρ = (ρ H_off)†.
      out.noalias() = Complex(0.0, 1.0) * (work_ - work_.adjoint());
      return;
    }
    work_.noalias() = off_ * rho;
    if (off_hermitian_) {
      out.noalias() = Complex(0.0, -1.0) * (work_ - work_.adjoint());
      return;
    }
    out.noalias() = rho * off_adj_;
    out = Complex(0.0, -1.0) * (work_ - out);
  }

  // out = ρ H_off with H_off = [[0, A†], [A, 0]] and A = Ω/2 + Σ g_α a_α,
  // applied as shifts of column blocks.
  void ladder_right(const Matrix& rho, Matrix& out) const {
    const Index pd = space_.photon_dim();
    auto out_g = out.leftCols(pd);
    auto out_e = out.rightCols(pd);
    const auto rho_g = rho.leftCols(pd);
    const auto rho_e = rho.rightCols(pd);
    out_g = half_drive_ * rho_e;
    out_e = std::conj(half_drive_) * rho_g;
    for (int a = 0; a < space_.modes(); ++a) {
      const Index s = space_.stride(a);
      const int m = space_.truncations()[a];
      for (Index base = 0; base < pd; base += s * m)
        for (int k = 1; k < m; ++k) {
          const Complex c = couplings_[a] * std::sqrt(static_cast<double>(k));
          out_g.middleCols(base + k * s, s) += c * rho_e.middleCols(base + (k - 1) * s, s);
          out_e.middleCols(base + (k - 1) * s, s) += std::conj(c) * rho_g.middleCols(base + k * s, s);
        }
    }
  }

  // Recognizes H_off = [[0, A†], [A, 0]] with A = Ω/2 + Σ g_α a_α.
  bool detect_ladder(const Matrix& off) {
    const Index pd = space_.photon_dim();
    const Index n = off.rows();
    half_drive_ = off(pd, 0);
    couplings_.clear();
    for (int a = 0; a < space_.modes(); ++a)
      couplings_.push_back(space_.truncations()[a] > 1 ? off(pd, space_.stride(a)) : Complex(0.0));
    Matrix probe = Matrix::Identity(n, n);
    Matrix rebuilt(n, n);
    ladder_right(probe, rebuilt);
    return (rebuilt - off).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + off.cwiseAbs().maxCoeff());
  }

  // out = x ∘ u + y ∘ v with coefficients constant on each qubit block.
  void blend(Matrix& out, const BlockCoefficients& x, const Matrix& u, const BlockCoefficients& y,
             const Matrix& v) const {
    const Index pd = space_.photon_dim();
    for (int qi = 0; qi < 2; ++qi)
      for (int qj = 0; qj < 2; ++qj)
        out.block(qi * pd, qj * pd, pd, pd) =
            x[qi][qj] * u.block(qi * pd, qj * pd, pd, pd) + y[qi][qj] * v.block(qi * pd, qj * pd, pd, pd);
  }

  void setup_etd(const OperatorMatrix& h) {
    const Matrix& m = h.matrix();
    const Index n = m.rows();
    const Index pd = space_.photon_dim();
    Matrix off = m;
    off.diagonal().setZero();
    off_hermitian_ = (off - off.adjoint()).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + off.cwiseAbs().maxCoeff());
    off_ = off.sparseView();
    off_adj_ = SparseMatrix(off_.adjoint());

    // H is diagonal-constant on each qubit block, so λ_ij = −iH_ii + i conj(H_jj)
    // − 2d [qubit_i ≠ qubit_j] takes four values.
    for (Index i = 0; i < n; ++i)
      if (m(i, i) != m(i < pd ? 0 : pd, i < pd ? 0 : pd))
        throw ConfigurationError("ETD scheme needs a diagonal constant on each qubit block");
    for (int qi = 0; qi < 2; ++qi)
      for (int qj = 0; qj < 2; ++qj) {
        const Complex hi = m(qi * pd, qi * pd);
        const Complex hj = m(qj * pd, qj * pd);
        const Complex lambda =
            Complex(0.0, -1.0) * hi + Complex(0.0, 1.0) * std::conj(hj) - (qi != qj ? 2.0 * dephase_ : 0.0);
        const auto c = detail::etd_coefficients(lambda, dt_);
        e_[qi][qj] = c.e;
        e_half_[qi][qj] = c.e_half;
        q_[qi][qj] = c.q;
        f1_[qi][qj] = c.f1;
        f2_[qi][qj] = c.f2;
        f3_[qi][qj] = c.f3;
      }
    for (Matrix* w : {&work_, &nu_, &a_, &na_, &b_, &nb_, &c_, &nc_}) w->resize(n, n);
    ladder_ = off_hermitian_ && detect_ladder(off);
  }

  HilbertSpace space_;
  Matrix rho_;
  double dt_;
  double dephase_;
  Matrix half_;
  SparseMatrix off_, off_adj_;
  bool off_hermitian_ = true;
  bool ladder_ = false;
  Complex half_drive_{};
  std::vector<Complex> couplings_;
  BlockCoefficients e_{}, e_half_{}, q_{}, f1_{}, f2_{}, f3_{};
  Matrix work_, nu_, a_, na_, b_, nb_, c_, nc_;
};

/// Advances ρ by one step of length dt.
inline DensityMatrix lindblad_step(const DensityMatrix& rho, const OperatorMatrix& h, double dephase, double dt) {
  if (!(rho.space() == h.space())) throw ConfigurationError("ρ and H live on different Hilbert spaces");
  DensityPropagator prop(h, dephase, rho.matrix(), dt);
  Eigen::ArrayXd weights;
  prop.step(weights);
  if (!prop.finite()) throw NumericalInstabilityError("non-finite density matrix after step");
  return prop.density();
}

namespace detail {

/// Minimum simulated time before a trace plateau may end a run.
inline double settle_time(const SystemParams& p) {
  double rate = p.decay + 0.5 * p.drive;
  for (double g : p.couplings) rate += std::abs(g) * std::sqrt(p.initial_photon + 1.0);
  return rate > 0.0 ? 10.0 * std::max(1.0 / rate, p.decay > 0.0 ? 1.0 / p.decay : 0.0) : 0.0;
}

template <class Propagator>
DecayRecord drive_to_decay(Propagator& prop, const SystemParams& params, const HilbertSpace& space,
                           const EvolutionConfig& cfg, double dt) {
  DecayRecord rec;
  rec.truncations = space.truncations();
  rec.joint.assign(static_cast<std::size_t>(space.photon_dim()), 0.0);
  rec.initial_trace = prop.trace();
  rec.surviving_trace = rec.initial_trace;
  rec.step = dt;
  const auto top = top_level_indices(space);
  const double gamma = params.decay;
  Eigen::ArrayXd weights;
  double decayed = 0.0;
  double trace = rec.initial_trace;
  double t = 0.0;
  if (cfg.record_history) rec.history.push_back({0.0, 0.0, trace});

  std::vector<double> traces{trace};
  const double settle = settle_time(params);
  while (trace >= cfg.convergence_trace) {
    // A dark component (|g⟩ ⊗ any state annihilated by Ω/2 + Σ g_α a_α) never
    // decays except through the truncation boundary; stop once the trace lost
    // over [t/2, t] is negligible against ε_stop or the mass already decayed.
    const double floor = std::max(cfg.convergence_trace, cfg.plateau_tol * decayed);
    if (t >= settle && rec.steps >= 2 && traces[rec.steps / 2] - trace < floor) {
      rec.plateau = true;
      break;
    }
    if (t >= cfg.max_time) {
      if (trace > 100.0 * cfg.convergence_trace) {
        std::ostringstream os;
        os << "surviving trace " << trace << " after max_time " << cfg.max_time;
        throw ConvergenceError(os.str());
      }
      break;
    }
    prop.step(weights);
    t += dt;
    ++rec.steps;
    const double next = prop.trace();
    if (!prop.finite() || !std::isfinite(next) || next > 1.5 * rec.initial_trace + 1e-12)
      throw NumericalInstabilityError("propagation became unstable at t = " + std::to_string(t) +
                                      " with step " + std::to_string(dt));
    weights = gamma * weights.max(0.0);
    const double raw = weights.sum();
    rec.quadrature_total += raw;
    const double loss = trace - next;
    if (loss > 0.0 && raw > 0.0) {
      const double scale = loss / raw;
      for (Index p = 0; p < weights.size(); ++p) rec.joint[p] += weights[p] * scale;
      decayed += loss;
    }
    trace = next;
    traces.push_back(trace);
    rec.max_bookkeeping_defect =
        std::max(rec.max_bookkeeping_defect, std::abs(decayed + trace - rec.initial_trace));
    for (int a = 0; a < space.modes(); ++a) {
      const double pop = prop.population(top[a]);
      if (pop > cfg.leakage_tol) {
        std::ostringstream os;
        os << "population " << pop << " reached the top Fock level of mode " << (a + 1) << " (truncation "
           << space.truncations()[a] << ")";
        throw TruncationError(os.str(), a);
      }
    }
    if (cfg.record_history) rec.history.push_back({t, decayed, trace});
  }
  rec.surviving_trace = trace;
  rec.elapsed_time = t;
  return rec;
}

}  // namespace detail

/// Integrates until the surviving trace drops below `cfg.convergence_trace`,
/// accumulating γ ρ^{ee}_{nn} dt into P_n. Uses `dt`, capped to the ETD
/// stability limit when dephasing forces the density-matrix scheme.
inline DecayRecord run_to_decay(const SystemParams& params, const DensityMatrix& rho0, const EvolutionConfig& cfg,
                                double dt) {
  params.validate();
  cfg.validate();
  if (!(dt > 0.0)) throw ConfigurationError("time step must be > 0");
  const HilbertSpace& space = rho0.space();
  const OperatorMatrix h = build_effective_hamiltonian(params, space);
  if (params.dephase == 0.0 && !cfg.force_density_path) {
    if (auto psi = rho0.pure_state()) {
      StateVectorPropagator prop(h, *psi, dt);
      return detail::drive_to_decay(prop, params, space, cfg, dt);
    }
  }
  if (params.dephase > 0.0) dt = std::min(dt, max_stable_step(h));
  DensityPropagator prop(h, params.dephase, rho0.matrix(), dt);
  return detail::drive_to_decay(prop, params, space, cfg, dt);
}

inline DecayRecord run_to_decay(const SystemParams& params, const DensityMatrix& rho0, const EvolutionConfig& cfg) {
  return run_to_decay(params, rho0, cfg, cfg.initial_dt);
}

/// Richardson tableau over successive halvings for a scheme whose error
/// expands as c_p h^p + c_{p+1} h^{p+1} + ….
class RichardsonTableau {
 public:
  explicit RichardsonTableau(int order) : order_(order) {}

  void add(double value) {
    std::vector<double> row{value};
    for (std::size_t j = 1; j <= rows_.size(); ++j) {
      const double factor = std::pow(2.0, order_ + static_cast<int>(j) - 1) - 1.0;
      row.push_back(row[j - 1] + (row[j - 1] - rows_.back()[j - 1]) / factor);
    }
    rows_.push_back(std::move(row));
  }

  std::size_t levels() const { return rows_.size(); }
  double best() const { return rows_.back().back(); }
  /// Difference between the two highest-order estimates on the finest level.
  double error() const {
    const auto& r = rows_.back();
    return r.size() < 2 ? std::numeric_limits<double>::infinity() : std::abs(r.back() - r[r.size() - 2]);
  }
  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  int order_;
  std::vector<std::vector<double>> rows_;
};

struct RichardsonResult {
  std::vector<double> values;  ///< extrapolated ⟨N⟩ per mode
  double error_estimate = 0.0;
  int runs = 0;
  double base_step = 0.0;
  std::vector<std::vector<double>> raw;  ///< ⟨N⟩ per run per mode
  DecayRecord finest;
  double max_bookkeeping_defect = 0.0;
};

/// Repeats run_to_decay at dt, dt/2, dt/4, … and extrapolates ⟨N⟩ until the
/// two highest-order estimates agree to `richardson_tol` relative to
/// max(1, |⟨N⟩|) for every mode.
inline RichardsonResult richardson_run(const SystemParams& params, const DensityMatrix& rho0,
                                       const EvolutionConfig& cfg) {
  cfg.validate();
  double base = cfg.initial_dt;
  if (params.dephase > 0.0 || cfg.force_density_path)
    base = std::min(base, max_stable_step(build_effective_hamiltonian(params, rho0.space())));
  const int modes = rho0.space().modes();
  std::vector<RichardsonTableau> tables(modes, RichardsonTableau(kSchemeOrder));
  RichardsonResult out;
  out.base_step = base;
  for (int level = 0; level <= cfg.richardson_levels; ++level) {
    const double dt = base / std::pow(2.0, level);
    DecayRecord rec = run_to_decay(params, rho0, cfg, dt);
    out.max_bookkeeping_defect = std::max(out.max_bookkeeping_defect, rec.max_bookkeeping_defect);
    std::vector<double> row;
    for (int a = 0; a < modes; ++a) {
      row.push_back(average_photon(rec, a));
      tables[a].add(row.back());
    }
    out.raw.push_back(row);
    out.runs = level + 1;
    out.finest = std::move(rec);
    if (level == 0) continue;
    bool converged = true;
    double err = 0.0;
    for (const auto& t : tables) {
      err = std::max(err, t.error());
      if (t.error() >= cfg.richardson_tol * std::max(1.0, std::abs(t.best()))) converged = false;
    }
    out.error_estimate = err;
    if (converged) {
      for (const auto& t : tables) out.values.push_back(t.best());
      return out;
    }
  }
  std::ostringstream os;
  os << "Richardson extrapolation did not converge within " << cfg.richardson_levels
     << " halvings (last error " << out.error_estimate << ")";
  throw ConvergenceError(os.str(), tables.front().rows());
}

}  // namespace qwalk
