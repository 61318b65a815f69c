#pragma once

// Closed-form and contour oracles for the non-Hermitian walk: winding-number
// displacement, classical incoherent baseline, momentum-space spectrum and the
// piecewise 2D displacement.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "qwalk/errors.hpp"
#include "qwalk/model.hpp"

namespace qwalk {

/// Hoppings of the ideal lattice: v = Ω/2 inside a unit, g_α√N between units.
struct BlochParams {
  double intra = 0.0;
  std::vector<double> inter;
  double detuning = 0.0;
  double decay = 0.0;

  static BlochParams from(const SystemParams& p) {
    p.validate();
    BlochParams b;
    b.intra = 0.5 * p.drive;
    const double root_n = std::sqrt(static_cast<double>(p.initial_photon));
    for (double g : p.couplings) {
      if (g < 0.0) throw ConfigurationError("couplings must be >= 0 for the lattice mapping");
      b.inter.push_back(g * root_n);
    }
    b.detuning = p.detuning;
    b.decay = p.decay;
    return b;
  }

  /// A_k = v + Σ_α v_α e^{−i k_α}.
  Complex amplitude(const std::vector<double>& k) const {
    Complex a(intra, 0.0);
    for (std::size_t i = 0; i < inter.size(); ++i) a += inter[i] * std::polar(1.0, -k[i]);
    return a;
  }

  /// Exact min over the torus of |A_k|.
  double min_amplitude() const {
    double sum = intra, largest = intra;
    for (double x : inter) {
      sum += x;
      largest = std::max(largest, x);
    }
    return std::max(0.0, 2.0 * largest - sum);
  }
};

namespace detail {

inline constexpr double kCriticalAmplitude = 1e-9;
inline constexpr double kIntegralTol = 1e-6;

/// Winding of z(k) = conj(c + r e^{−ik}) around the origin over k ∈ [0, 2π),
/// by summing unwrapped phase increments on a uniform grid and bisecting any
/// interval whose increment exceeds π/4. Throws CriticalPointError when a
/// grid sample has |z| < 1e-9 and `strict` is set.
inline int inner_winding(Complex c, double r, int resolution, bool strict) {
  const double two_pi = 2.0 * std::numbers::pi;
  auto z = [&](double k) { return std::conj(c + r * std::polar(1.0, -k)); };
  std::function<double(double, double, Complex, Complex, int)> increment =
      [&](double k0, double k1, Complex z0, Complex z1, int depth) -> double {
    const double d = std::arg(z1 / z0);
    if (std::abs(d) <= 0.25 * std::numbers::pi || depth >= 48) return d;
    const double km = 0.5 * (k0 + k1);
    const Complex zm = z(km);
    return increment(k0, km, z0, zm, depth + 1) + increment(km, k1, zm, z1, depth + 1);
  };
  double total = 0.0;
  Complex prev = z(0.0);
  if (strict && std::abs(prev) < kCriticalAmplitude)
    throw CriticalPointError("|A_k| vanishes on the sampled grid; winding undefined");
  const Complex first = prev;
  for (int j = 1; j <= resolution; ++j) {
    const double k = two_pi * j / resolution;
    const Complex cur = j == resolution ? first : z(k);
    if (strict && std::abs(cur) < kCriticalAmplitude)
      throw CriticalPointError("|A_k| vanishes on the sampled grid; winding undefined");
    total += increment(two_pi * (j - 1) / resolution, k, prev, cur, 0);
    prev = cur;
  }
  const double w = total / two_pi;
  const double rounded = std::round(w);
  if (std::abs(w - rounded) > kIntegralTol)
    throw CriticalPointError("phase winding is not integral (" + std::to_string(w) + ")");
  return static_cast<int>(rounded);
}

/// ∫ dk/2π of a piecewise-constant integer function on the circle. Grid
/// intervals whose endpoint values differ are split at the jump located by
/// bisection.
inline double integrate_steps(const std::function<int(double, bool)>& f, int resolution) {
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<int> values(resolution);
  for (int j = 0; j < resolution; ++j) values[j] = f(two_pi * j / resolution, true);
  double acc = 0.0;
  for (int j = 0; j < resolution; ++j) {
    const double k0 = two_pi * j / resolution;
    const double k1 = two_pi * (j + 1) / resolution;
    const int w0 = values[j];
    const int w1 = values[(j + 1) % resolution];
    if (w0 == w1) {
      acc += w0 * (k1 - k0);
      continue;
    }
    double lo = k0, hi = k1;
    for (int it = 0; it < 48; ++it) {
      const double mid = 0.5 * (lo + hi);
      int wm;
      try {
        wm = f(mid, false);
      } catch (const CriticalPointError&) {
        break;
      }
      (wm == w0 ? lo : hi) = mid;
    }
    const double split = 0.5 * (lo + hi);
    acc += w0 * (split - k0) + w1 * (k1 - split);
  }
  return acc / two_pi;
}

}  // namespace detail

/// ⟨Δn_α⟩ = −∮ d^{d−1}k/(2π)^{d−1} w_α, with w_α the winding of conj(A_k)
/// along k_α. One-dimensional input returns exactly 0 or −1.
inline double winding_displacement(double intra, const std::vector<double>& inter, int mode, int resolution) {
  if (resolution < 256) throw ConfigurationError("winding resolution must be >= 256");
  if (inter.empty()) throw ConfigurationError("at least one inter-unit hopping is required");
  if (mode < 0 || mode >= static_cast<int>(inter.size())) throw ConfigurationError("mode index out of range");
  if (intra < 0.0) throw ConfigurationError("hoppings must be >= 0");
  for (double x : inter)
    if (x < 0.0) throw ConfigurationError("hoppings must be >= 0");

  std::vector<int> others;
  for (int b = 0; b < static_cast<int>(inter.size()); ++b)
    if (b != mode) others.push_back(b);
  const double r = inter[mode];
  if (others.empty()) return -static_cast<double>(detail::inner_winding(Complex(intra, 0.0), r, resolution, true));

  // Midpoint tensor grid over all but the last transverse momentum, which is
  // integrated with located jumps.
  const double two_pi = 2.0 * std::numbers::pi;
  const int outer = static_cast<int>(others.size()) - 1;
  long cells = 1;
  for (int i = 0; i < outer; ++i) cells *= resolution;
  const int last = others.back();
  double acc = 0.0;
  std::vector<int> digits(outer, 0);
  for (long cell = 0; cell < cells; ++cell) {
    long rem = cell;
    Complex base(intra, 0.0);
    for (int i = 0; i < outer; ++i) {
      digits[i] = static_cast<int>(rem % resolution);
      rem /= resolution;
      base += inter[others[i]] * std::polar(1.0, -two_pi * (digits[i] + 0.5) / resolution);
    }
    auto winding_at = [&](double k_last, bool strict) {
      return detail::inner_winding(base + inter[last] * std::polar(1.0, -k_last), r, resolution, strict);
    };
    acc += detail::integrate_steps(winding_at, resolution);
  }
  return -acc / static_cast<double>(cells);
}

inline double winding_displacement(const SystemParams& params, int mode, int resolution) {
  const auto b = BlochParams::from(params);
  return winding_displacement(b.intra, b.inter, mode, resolution);
}

/// Incoherent-hopping displacement −v′/(v′ + v).
inline double classical_displacement(double intra, double inter) {
  if (intra < 0.0 || inter < 0.0) throw ConfigurationError("hoppings must be >= 0");
  if (!(intra + inter > 0.0)) throw ConfigurationError("at least one hopping must be nonzero");
  return -inter / (inter + intra);
}

/// Classical rate-equation walker on units −span..span. The chain alternates
/// g_m -(v)- e_m -(v′)- g_{m+1}; hop rates equal the hopping amplitudes and
/// decay sites leak at rate γ. Expected occupation times τ solve the
/// tridiagonal system (−Q)τ = δ_start; the result is Σ_m m γτ(e_m) / Σ_m γτ(e_m).
inline double classical_walk_oracle(double intra, double inter, double decay, int span) {
  if (span < 50) throw ConfigurationError("span must be >= 50 units each side");
  if (intra < 0.0 || inter < 0.0) throw ConfigurationError("hoppings must be >= 0");
  if (!(intra + inter > 0.0)) throw ConfigurationError("at least one hopping must be nonzero");
  if (!(decay > 0.0)) throw ConfigurationError("decay must be > 0");
  const int units = 2 * span + 1;
  const int n = 2 * units;  // site 2u = g, 2u+1 = e of unit u - span
  // Rate of the link between site i and i+1.
  auto link = [&](int i) { return i % 2 == 0 ? intra : inter; };
  std::vector<double> diag(n), off(n - 1), rhs(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double out = (i % 2 == 1) ? decay : 0.0;
    out += i > 0 ? link(i - 1) : inter;      // left end leaks into e_{−span−1}
    out += i < n - 1 ? link(i) : inter;      // right end leaks into g_{span+1}
    diag[i] = out;
  }
  for (int i = 0; i < n - 1; ++i) off[i] = -link(i);
  rhs[2 * span] = 1.0;
  // Thomas algorithm on the symmetric tridiagonal system.
  std::vector<double> c(n - 1), d(n);
  c[0] = off[0] / diag[0];
  d[0] = rhs[0] / diag[0];
  for (int i = 1; i < n; ++i) {
    const double m = diag[i] - off[i - 1] * c[i - 1];
    if (i < n - 1) c[i] = off[i] / m;
    d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
  }
  std::vector<double> tau(n);
  tau[n - 1] = d[n - 1];
  for (int i = n - 2; i >= 0; --i) tau[i] = d[i] - c[i] * tau[i + 1];

  const double boundary = inter * (tau.front() + tau.back());
  if (boundary > 1e-8)
    throw ConfigurationError("span too small: boundary flux " + std::to_string(boundary) + " exceeds 1e-8");
  double decayed = 0.0, moment = 0.0;
  for (int u = 0; u < units; ++u) {
    const double flux = decay * tau[2 * u + 1];
    decayed += flux;
    moment += (u - span) * flux;
  }
  return moment / decayed;
}

/// Eigenvalues of H_k = [[0, A_k], [A_k*, Δε − iγ/2]] on a k grid.
struct PTClassification {
  struct Point {
    std::vector<double> k;
    Complex amplitude;
    Complex lower, upper;  ///< full eigenvalues
    bool unbroken;         ///< trace-shifted pair is real
  };
  std::vector<Point> points;
  bool all_unbroken = true;        ///< from the exact minimum of |A_k|
  bool sampled_all_unbroken = true;
  double min_amplitude = 0.0;      ///< exact min_k |A_k|
  double sampled_min_amplitude = 0.0;
  double breaking_threshold = 0.0; ///< |A_k| below which the shifted pair is complex
  bool drive_criterion_unbroken = false;  ///< Ω/2 > Σ g_α√N
  double max_residual = 0.0;       ///< characteristic polynomial residual
};

/// The shifted pair ±√(c²/4 + |A_k|²), c = Δε − iγ/2, counts as real when
/// Re(c²/4 + |A_k|²) ≥ 0; for Δε = 0 this is exactly |A_k| ≥ γ/4.
inline PTClassification pt_spectrum(const SystemParams& params, int k_samples) {
  if (k_samples < 64) throw ConfigurationError("k_samples must be >= 64");
  const auto b = BlochParams::from(params);
  const Complex c(b.detuning, -0.5 * b.decay);
  const double two_pi = 2.0 * std::numbers::pi;
  PTClassification out;
  out.min_amplitude = b.min_amplitude();
  const double shift_sq = (0.25 * b.decay * b.decay - b.detuning * b.detuning) / 4.0;
  out.breaking_threshold = shift_sq > 0.0 ? std::sqrt(shift_sq) : 0.0;
  out.all_unbroken = out.min_amplitude * out.min_amplitude >= shift_sq;
  double inter_sum = 0.0;
  for (double x : b.inter) inter_sum += x;
  out.drive_criterion_unbroken = b.intra > inter_sum;
  out.sampled_min_amplitude = std::numeric_limits<double>::infinity();

  const int dims = static_cast<int>(b.inter.size());
  long total = 1;
  for (int i = 0; i < dims; ++i) total *= k_samples;
  std::vector<double> k(dims);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int i = 0; i < dims; ++i) {
      k[i] = two_pi * static_cast<double>(rem % k_samples) / k_samples;
      rem /= k_samples;
    }
    const Complex a = b.amplitude(k);
    const double a2 = std::norm(a);
    const Complex disc = 0.25 * c * c + a2;
    Complex root = std::sqrt(disc);
    // Order the pair by imaginary part, then real part, whatever the sign of zero.
    if (root.imag() < 0.0 || (root.imag() == 0.0 && root.real() < 0.0)) root = -root;
    PTClassification::Point pt{k, a, 0.5 * c - root, 0.5 * c + root, disc.real() >= 0.0};
    for (Complex lam : {pt.lower, pt.upper}) {
      const double scale = std::max({1.0, std::norm(lam), a2});
      out.max_residual = std::max(out.max_residual, std::abs(lam * (lam - c) - a2) / scale);
    }
    out.sampled_all_unbroken = out.sampled_all_unbroken && pt.unbroken;
    out.sampled_min_amplitude = std::min(out.sampled_min_amplitude, std::abs(a));
    out.points.push_back(std::move(pt));
  }
  return out;
}

/// Piecewise 2D displacement for g₁ > g₂ > 0 with v = Ω/2, v′ = √N g₁,
/// v″ = √N g₂:
///   Δn₁ = −1 (v′ > v + v″), −1 + θ₁/π (|v − v″| ≤ v′ ≤ v + v″), 0 otherwise;
///   Δn₂ = −θ₂/π when |v − v′| ≤ v″, else 0;
///   cos θ₁ = (v′² − v² − v″²)/(2vv″), cos θ₂ = (v² + v′² − v″²)/(2vv′).
inline std::pair<double, double> analytic_2d(const SystemParams& params) {
  params.validate();
  if (params.dimension != 2) throw ConfigurationError("analytic_2d needs a two-mode system");
  const double g1 = params.couplings[0], g2 = params.couplings[1];
  if (!(g1 > g2 && g2 > 0.0)) throw ConfigurationError("analytic_2d assumes g1 > g2 > 0");
  const auto b = BlochParams::from(params);
  const double v = b.intra, v1 = b.inter[0], v2 = b.inter[1];
  const double scale = v + v1 + v2;
  if (!(scale > 0.0)) throw ConfigurationError("all hoppings vanish");
  if (std::abs(v1 - (v + v2)) <= 1e-9 * scale || std::abs(v1 - (v - v2)) <= 1e-9 * scale)
    throw CriticalPointError("parameters lie on a branch boundary of the 2D displacement");
  auto clamp_acos = [](double x) { return std::acos(std::clamp(x, -1.0, 1.0)); };
  double dn1 = 0.0, dn2 = 0.0;
  if (v1 > v + v2) {
    dn1 = -1.0;
  } else if (v1 >= std::abs(v - v2)) {
    dn1 = -1.0 + clamp_acos((v1 * v1 - v * v - v2 * v2) / (2.0 * v * v2)) / std::numbers::pi;
  }
  if (v2 >= std::abs(v - v1)) dn2 = -clamp_acos((v * v + v1 * v1 - v2 * v2) / (2.0 * v * v1)) / std::numbers::pi;
  return {dn1, dn2};
}

/// Closed-form 1D displacement: 0 when Ω/2 > g√N, −1 when Ω/2 < g√N.
inline double threshold_displacement(double intra, double inter) {
  if (intra == inter) throw CriticalPointError("v = v′ is the transition point");
  return intra > inter ? 0.0 : -1.0;
}

/// Plot abscissa: Ω/2g for one mode, v/(v + Σ v_α) for two.
inline double lattice_abscissa(const SystemParams& params) {
  if (params.dimension == 1) return params.drive / (2.0 * params.couplings[0]);
  const auto b = BlochParams::from(params);
  double s = b.intra;
  for (double x : b.inter) s += x;
  return s > 0.0 ? b.intra / s : 0.0;
}

}  // namespace qwalk
