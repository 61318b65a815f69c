#pragma once

// Parameter sweeps over the walk: JSON configuration, named presets, a
// parallel cell runner with ordered output, and CSV serialization.

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "qwalk/analytic.hpp"
#include "qwalk/errors.hpp"
#include "qwalk/integrator.hpp"
#include "qwalk/jump_mc.hpp"
#include "qwalk/model.hpp"

namespace qwalk {

inline constexpr const char* kVersion = "1.0.0";

enum class Control { omega, gamma, detuning, dephase };
enum class Oracle { deterministic, monte_carlo, analytic, classical };

inline std::string to_string(Control c) {
  switch (c) {
    case Control::omega: return "omega";
    case Control::gamma: return "gamma";
    case Control::detuning: return "detuning";
    case Control::dephase: return "dephase";
  }
  return "?";
}

inline std::string to_string(Oracle o) {
  switch (o) {
    case Oracle::deterministic: return "deterministic";
    case Oracle::monte_carlo: return "monte_carlo";
    case Oracle::analytic: return "analytic";
    case Oracle::classical: return "classical";
  }
  return "?";
}

inline Control parse_control(const std::string& s) {
  if (s == "omega") return Control::omega;
  if (s == "gamma") return Control::gamma;
  if (s == "detuning") return Control::detuning;
  if (s == "dephase") return Control::dephase;
  throw ConfigurationError("unknown control '" + s + "' (omega, gamma, detuning, dephase)");
}

inline Oracle parse_oracle(const std::string& s) {
  if (s == "deterministic") return Oracle::deterministic;
  if (s == "monte_carlo") return Oracle::monte_carlo;
  if (s == "analytic") return Oracle::analytic;
  if (s == "classical") return Oracle::classical;
  throw ConfigurationError("unknown oracle '" + s + "' (deterministic, monte_carlo, analytic, classical)");
}

inline InitialKind parse_initial_kind(const std::string& s) {
  if (s == "fock") return InitialKind::fock;
  if (s == "coherent") return InitialKind::coherent;
  throw ConfigurationError("unknown initial state '" + s + "' (fock, coherent)");
}

/// Secondary axes scanned inside every control value. Empty lists keep the
/// base value.
struct SweepScan {
  std::vector<double> omega, gamma, detuning, dephase;
  std::vector<int> initial_photon;

  bool operator==(const SweepScan&) const = default;
};

struct SweepSpec {
  std::string name;
  SystemParams base;
  Control control = Control::omega;
  std::vector<double> control_values;
  SweepScan scan;
  std::vector<InitialKind> initial_states{InitialKind::fock};
  std::vector<Oracle> oracles{Oracle::deterministic};
  std::vector<int> truncation;     ///< per mode; empty selects the adaptive default
  bool extend_truncation = true;   ///< retry with a larger truncation when the leakage guard trips
  int max_truncation = 64;
  EvolutionConfig evolution;
  TrajectoryConfig trajectories;
  std::string output_path;

  bool operator==(const SweepSpec&) const = default;

  void validate() const {
    base.validate();
    evolution.validate();
    trajectories.validate();
    if (control_values.empty()) throw ConfigurationError("control_values must be non-empty");
    auto strictly_ordered = [](const auto& v) {
      bool up = true, down = true;
      for (std::size_t i = 1; i < v.size(); ++i) {
        up = up && v[i] > v[i - 1];
        down = down && v[i] < v[i - 1];
      }
      return up || down;
    };
    if (!strictly_ordered(control_values)) throw ConfigurationError("control_values must be strictly ordered");
    for (double x : control_values)
      if (!std::isfinite(x)) throw ConfigurationError("control_values must be finite");
    if (oracles.empty()) throw ConfigurationError("at least one oracle must be selected");
    if (std::set<Oracle>(oracles.begin(), oracles.end()).size() != oracles.size())
      throw ConfigurationError("oracles must not repeat");
    if (initial_states.empty()) throw ConfigurationError("initial_states must be non-empty");
    if (std::set<InitialKind>(initial_states.begin(), initial_states.end()).size() != initial_states.size())
      throw ConfigurationError("initial_states must not repeat");
    const std::vector<double>* same = nullptr;
    switch (control) {
      case Control::omega: same = &scan.omega; break;
      case Control::gamma: same = &scan.gamma; break;
      case Control::detuning: same = &scan.detuning; break;
      case Control::dephase: same = &scan.dephase; break;
    }
    if (!same->empty()) throw ConfigurationError("the control parameter cannot also be scanned");
    for (const auto* axis : {&scan.omega, &scan.gamma, &scan.detuning, &scan.dephase})
      if (!axis->empty() && !strictly_ordered(*axis)) throw ConfigurationError("scan axes must be strictly ordered");
    if (!scan.initial_photon.empty() && !strictly_ordered(scan.initial_photon))
      throw ConfigurationError("scan axes must be strictly ordered");
    for (Oracle o : oracles)
      if (o == Oracle::classical && base.dimension != 1)
        throw ConfigurationError("the classical oracle is one-dimensional only");
    if (!truncation.empty() && truncation.size() != 1 && static_cast<int>(truncation.size()) != base.dimension)
      throw ConfigurationError("truncation needs one entry or one per mode");
    for (int t : truncation)
      if (t < 2) throw ConfigurationError("truncations must be >= 2");
    if (max_truncation < 2) throw ConfigurationError("max_truncation must be >= 2");
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigurationError(where_ + " must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigurationError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void require(const char* key) const {
    if (!j_.contains(key)) throw ConfigurationError(where_ + " is missing required key '" + key + "'");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigurationError("unknown key '" + it.key() + "' in " + where_);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json to_json(const SystemParams& p) {
  return {{"dimension", p.dimension}, {"couplings", p.couplings}, {"drive", p.drive},
          {"detuning", p.detuning},   {"decay", p.decay},         {"dephase", p.dephase},
          {"initial_photon", p.initial_photon}};
}

inline SystemParams system_params_from_json(const nlohmann::json& j) {
  detail::StrictObject o(j, "base");
  SystemParams p;
  o.get("dimension", p.dimension);
  o.get("couplings", p.couplings);
  o.get("drive", p.drive);
  o.get("detuning", p.detuning);
  o.get("decay", p.decay);
  o.get("dephase", p.dephase);
  o.get("initial_photon", p.initial_photon);
  o.finish();
  return p;
}

inline nlohmann::json to_json(const EvolutionConfig& c) {
  return {{"initial_dt", c.initial_dt},         {"convergence_trace", c.convergence_trace},
          {"richardson_levels", c.richardson_levels}, {"richardson_tol", c.richardson_tol},
          {"leakage_tol", c.leakage_tol},       {"max_time", c.max_time},
          {"plateau_tol", c.plateau_tol},       {"force_density_path", c.force_density_path}};
}

inline EvolutionConfig evolution_from_json(const nlohmann::json& j) {
  detail::StrictObject o(j, "evolution");
  EvolutionConfig c;
  o.get("initial_dt", c.initial_dt);
  o.get("convergence_trace", c.convergence_trace);
  o.get("richardson_levels", c.richardson_levels);
  o.get("richardson_tol", c.richardson_tol);
  o.get("leakage_tol", c.leakage_tol);
  o.get("max_time", c.max_time);
  o.get("plateau_tol", c.plateau_tol);
  o.get("force_density_path", c.force_density_path);
  o.finish();
  return c;
}

inline nlohmann::json to_json(const TrajectoryConfig& t) {
  return {{"n_trajectories", t.n_trajectories}, {"rng_seed", t.rng_seed}, {"jump_dt", t.jump_dt}};
}

inline TrajectoryConfig trajectories_from_json(const nlohmann::json& j) {
  detail::StrictObject o(j, "trajectories");
  TrajectoryConfig t;
  o.get("n_trajectories", t.n_trajectories);
  o.get("rng_seed", t.rng_seed);
  o.get("jump_dt", t.jump_dt);
  o.finish();
  return t;
}

inline nlohmann::json to_json(const SweepSpec& s) {
  nlohmann::json scan = nlohmann::json::object();
  if (!s.scan.omega.empty()) scan["omega"] = s.scan.omega;
  if (!s.scan.gamma.empty()) scan["gamma"] = s.scan.gamma;
  if (!s.scan.detuning.empty()) scan["detuning"] = s.scan.detuning;
  if (!s.scan.dephase.empty()) scan["dephase"] = s.scan.dephase;
  if (!s.scan.initial_photon.empty()) scan["initial_photon"] = s.scan.initial_photon;
  std::vector<std::string> states, oracles;
  for (auto k : s.initial_states) states.push_back(to_string(k));
  for (auto o : s.oracles) oracles.push_back(to_string(o));
  return {{"name", s.name},
          {"base", to_json(s.base)},
          {"control", to_string(s.control)},
          {"control_values", s.control_values},
          {"scan", scan},
          {"initial_states", states},
          {"oracles", oracles},
          {"truncation", s.truncation},
          {"extend_truncation", s.extend_truncation},
          {"max_truncation", s.max_truncation},
          {"evolution", to_json(s.evolution)},
          {"trajectories", to_json(s.trajectories)},
          {"output_path", s.output_path}};
}

/// Parses and validates a sweep configuration. Every key is checked; unknown
/// keys are configuration errors.
inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
  detail::StrictObject o(j, "sweep");
  o.require("base");
  o.require("control");
  o.require("control_values");
  SweepSpec s;
  o.get("name", s.name);
  s.base = system_params_from_json(*o.find("base"));
  std::string control;
  o.get("control", control);
  s.control = parse_control(control);
  o.get("control_values", s.control_values);
  if (const auto* scan = o.find("scan")) {
    detail::StrictObject so(*scan, "scan");
    so.get("omega", s.scan.omega);
    so.get("gamma", s.scan.gamma);
    so.get("detuning", s.scan.detuning);
    so.get("dephase", s.scan.dephase);
    so.get("initial_photon", s.scan.initial_photon);
    so.finish();
  }
  std::vector<std::string> names;
  if (o.find("initial_states")) {
    o.get("initial_states", names);
    s.initial_states.clear();
    for (const auto& n : names) s.initial_states.push_back(parse_initial_kind(n));
  }
  if (o.find("oracles")) {
    names.clear();
    o.get("oracles", names);
    s.oracles.clear();
    for (const auto& n : names) s.oracles.push_back(parse_oracle(n));
  }
  o.get("truncation", s.truncation);
  o.get("extend_truncation", s.extend_truncation);
  o.get("max_truncation", s.max_truncation);
  if (const auto* e = o.find("evolution")) s.evolution = evolution_from_json(*e);
  if (const auto* t = o.find("trajectories")) s.trajectories = trajectories_from_json(*t);
  o.get("output_path", s.output_path);
  o.finish();
  s.validate();
  return s;
}

inline SweepSpec sweep_spec_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigurationError(std::string("invalid JSON: ") + e.what());
  }
  return sweep_spec_from_json(j);
}

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig2", "fig3", "fig4", "fig5", "fig7", "fig8", "fig9"};
  return names;
}

namespace detail {

// Drive values Ω = 2g·x for abscissae x = Ω/2g.
inline std::vector<double> drives_for(const std::vector<double>& x, double g) {
  std::vector<double> out;
  for (double v : x) out.push_back(2.0 * g * v);
  return out;
}

inline std::vector<double> arithmetic(double first, double step, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(first + step * i);
  return out;
}

inline SystemParams one_dimensional(int n, double gamma) {
  SystemParams p;
  p.dimension = 1;
  p.couplings = {1.0};
  p.decay = gamma;
  p.detuning = 1e-4;
  p.initial_photon = n;
  return p;
}

inline SystemParams two_dimensional(double gamma) {
  SystemParams p;
  p.dimension = 2;
  p.couplings = {2.0, 1.0};
  p.decay = gamma;
  p.detuning = 1e-4;
  p.initial_photon = 5;
  return p;
}

}  // namespace detail

/// Named parameter sweeps. Grids avoid the critical
/// points Ω/2 = g√N (1D) and the 2D branch boundaries.
inline SweepSpec preset(const std::string& name) {
  SweepSpec s;
  s.name = name;
  if (name == "fig2") {
    s.base = detail::one_dimensional(100, 4.0);
    s.control = Control::omega;
    s.control_values = detail::drives_for(detail::arithmetic(0.5, 1.0, 20), 1.0);
    s.initial_states = {InitialKind::fock, InitialKind::coherent};
    s.oracles = {Oracle::deterministic, Oracle::classical};
  } else if (name == "fig3") {
    s.base = detail::one_dimensional(5, 4.0);
    s.control = Control::omega;
    s.control_values = detail::drives_for(detail::arithmetic(0.2, 0.25, 28), 1.0);
    s.scan.initial_photon = {1, 2, 3, 5};
    s.oracles = {Oracle::deterministic, Oracle::analytic};
  } else if (name == "fig4") {
    s.base = detail::one_dimensional(5, 4.0);
    s.control = Control::gamma;
    s.control_values = {0.5, 1.0, 4.0, 20.0};
    s.scan.omega = detail::drives_for({0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4, 5, 6, 8, 10.5, 12, 14, 16, 20}, 1.0);
    s.scan.initial_photon = {5, 100};
  } else if (name == "fig5") {
    s.base = detail::one_dimensional(5, 4.0);
    s.control = Control::detuning;
    s.control_values = {1e-4, 1.0, 10.0};
    s.scan.gamma = {4.0, 20.0};
    s.scan.omega = detail::drives_for(detail::arithmetic(0.5, 0.5, 12), 1.0);
  } else if (name == "fig7") {
    s.base = detail::one_dimensional(5, 4.0);
    s.control = Control::dephase;
    s.control_values = {0.0, 1.0, 10.0, 100.0};
    s.scan.omega = detail::drives_for(detail::arithmetic(0.5, 0.5, 12), 1.0);
  } else if (name == "fig8") {
    s.base = detail::two_dimensional(25.0);
    s.control = Control::gamma;
    s.control_values = {5.0, 25.0, 100.0};
    s.scan.omega = {1, 2, 3, 4, 5.5, 7, 8.5, 10, 12, 15, 18, 24, 30, 40};
    s.oracles = {Oracle::deterministic, Oracle::analytic};
    s.truncation = {20, 20};
  } else if (name == "fig9") {
    s.base = detail::two_dimensional(25.0);
    s.control = Control::dephase;
    s.control_values = {0.0, 10.0, 100.0};
    s.scan.omega = {1, 3, 7, 10, 18, 30};
    s.oracles = {Oracle::deterministic, Oracle::analytic};
    s.truncation = {14, 14};
  } else {
    throw ConfigurationError("unknown preset '" + name + "'");
  }
  s.output_path = name + ".csv";
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Cells and rows

struct SweepCell {
  SystemParams params;
  double control = 0.0;
  Oracle oracle = Oracle::deterministic;
  std::optional<InitialKind> initial_state;  ///< unset for state-independent oracles
};

struct SweepRow {
  SweepCell cell;
  std::string status = "ok";
  std::string message;
  double x_axis = 0.0;
  double x_scaled = 0.0;
  std::vector<int> truncations;
  std::vector<double> mean_n, delta_n;
  double sum_p = std::numeric_limits<double>::quiet_NaN();
  double surviving_trace = std::numeric_limits<double>::quiet_NaN();
  double error_estimate = std::numeric_limits<double>::quiet_NaN();
  double bookkeeping_defect = std::numeric_limits<double>::quiet_NaN();
  bool plateau = false;
  double wall_time = 0.0;

  bool ok() const { return status == "ok"; }
};

struct SweepResult {
  std::vector<SweepRow> rows;

  bool all_ok() const {
    for (const auto& r : rows)
      if (!r.ok()) return false;
    return true;
  }
};

/// Expands a spec into cells: control value outermost, then the scan axes in
/// the order Ω, γ, Δε, d, N, then oracles; state-dependent oracles repeat for
/// each initial state.
inline std::vector<SweepCell> expand_cells(const SweepSpec& spec) {
  spec.validate();
  auto or_base = [](const std::vector<double>& v, double base) { return v.empty() ? std::vector<double>{base} : v; };
  const auto omegas = or_base(spec.scan.omega, spec.base.drive);
  const auto gammas = or_base(spec.scan.gamma, spec.base.decay);
  const auto detunings = or_base(spec.scan.detuning, spec.base.detuning);
  const auto dephases = or_base(spec.scan.dephase, spec.base.dephase);
  const auto photons =
      spec.scan.initial_photon.empty() ? std::vector<int>{spec.base.initial_photon} : spec.scan.initial_photon;

  std::vector<SweepCell> cells;
  for (double c : spec.control_values)
    for (double om : omegas)
      for (double ga : gammas)
        for (double de : detunings)
          for (double dp : dephases)
            for (int n : photons) {
              SystemParams p = spec.base;
              p.drive = om;
              p.decay = ga;
              p.detuning = de;
              p.dephase = dp;
              p.initial_photon = n;
              switch (spec.control) {
                case Control::omega: p.drive = c; break;
                case Control::gamma: p.decay = c; break;
                case Control::detuning: p.detuning = c; break;
                case Control::dephase: p.dephase = c; break;
              }
              for (Oracle o : spec.oracles) {
                if (o == Oracle::deterministic || o == Oracle::monte_carlo) {
                  for (InitialKind k : spec.initial_states) cells.push_back({p, c, o, k});
                } else {
                  cells.push_back({p, c, o, std::nullopt});
                }
              }
            }
  return cells;
}

namespace detail {

inline std::vector<int> initial_truncations(const SweepSpec& spec, const SystemParams& p) {
  if (spec.truncation.empty()) return std::vector<int>(p.dimension, default_truncation(p.initial_photon));
  if (spec.truncation.size() == 1) return std::vector<int>(p.dimension, spec.truncation[0]);
  return spec.truncation;
}

inline void fill_from_record(SweepRow& row, const DecayRecord& rec, int n) {
  row.sum_p = rec.total();
  row.surviving_trace = rec.surviving_trace;
  row.plateau = rec.plateau;
  row.truncations = rec.truncations;
  row.mean_n.clear();
  row.delta_n.clear();
  for (int a = 0; a < rec.modes(); ++a) {
    row.mean_n.push_back(average_photon(rec, a));
    row.delta_n.push_back(row.mean_n.back() - n);
  }
}

// Runs `body` with growing truncations while the leakage guard trips.
inline void with_truncation(const SweepSpec& spec, SweepRow& row, const std::function<void(const HilbertSpace&)>& body) {
  const SystemParams& p = row.cell.params;
  std::vector<int> t = initial_truncations(spec, p);
  for (;;) {
    row.truncations = t;
    try {
      body(build_hilbert_space(p, t));
      return;
    } catch (const TruncationError& e) {
      const int a = e.mode();
      if (!spec.extend_truncation || t[a] >= spec.max_truncation) throw;
      t[a] = std::min(spec.max_truncation, t[a] + std::max(4, t[a] / 4));
    }
  }
}

inline void run_cell(const SweepSpec& spec, SweepRow& row) {
  const SystemParams& p = row.cell.params;
  const int n = p.initial_photon;
  row.x_axis = lattice_abscissa(p);
  row.x_scaled = p.drive / (2.0 * p.couplings[0]) / std::sqrt(static_cast<double>(n));
  switch (row.cell.oracle) {
    case Oracle::deterministic:
      with_truncation(spec, row, [&](const HilbertSpace& space) {
        const auto rho0 = build_initial_state(*row.cell.initial_state, n, space);
        const auto r = richardson_run(p, rho0, spec.evolution);
        fill_from_record(row, r.finest, n);
        row.mean_n = r.values;
        row.delta_n.clear();
        for (double v : r.values) row.delta_n.push_back(v - n);
        row.error_estimate = r.error_estimate;
        row.bookkeeping_defect = r.max_bookkeeping_defect;
      });
      break;
    case Oracle::monte_carlo:
      with_truncation(spec, row, [&](const HilbertSpace& space) {
        const auto rho0 = build_initial_state(*row.cell.initial_state, n, space);
        const auto r = jump_monte_carlo(p, rho0, spec.trajectories, spec.evolution);
        row.truncations = space.truncations();
        row.sum_p = r.record.total();
        row.surviving_trace = r.record.surviving_trace;
        row.plateau = r.record.plateau;
        if (r.decayed == 0) throw ConvergenceError("no trajectory decayed");
        row.mean_n = r.mean_photon;
        row.delta_n.clear();
        for (double v : r.mean_photon) row.delta_n.push_back(v - n);
        row.error_estimate = 0.0;
        for (double e : r.mean_stderr) row.error_estimate = std::max(row.error_estimate, e);
      });
      break;
    case Oracle::analytic: {
      std::vector<double> dn;
      if (p.dimension == 2 && p.couplings[0] > p.couplings[1] && p.couplings[1] > 0.0) {
        const auto [a, b] = analytic_2d(p);
        dn = {a, b};
      } else {
        for (int a = 0; a < p.dimension; ++a) dn.push_back(winding_displacement(p, a, 1024));
      }
      row.delta_n = dn;
      for (double d : dn) row.mean_n.push_back(n + d);
      break;
    }
    case Oracle::classical: {
      const auto b = BlochParams::from(p);
      const double d = classical_displacement(b.intra, b.inter[0]);
      row.delta_n = {d};
      row.mean_n = {n + d};
      break;
    }
  }
}

inline std::string status_of(const std::exception& e) {
  if (dynamic_cast<const TruncationError*>(&e)) return "truncation_error";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence_error";
  if (dynamic_cast<const NumericalInstabilityError*>(&e)) return "numerical_instability";
  if (dynamic_cast<const CriticalPointError*>(&e)) return "critical_point";
  if (dynamic_cast<const JumpStepError*>(&e)) return "jump_step_error";
  if (dynamic_cast<const ConfigurationError*>(&e)) return "configuration_error";
  return "error";
}

}  // namespace detail

/// Evaluates one cell; errors are recorded in the row, never thrown.
inline SweepRow evaluate_cell(const SweepSpec& spec, const SweepCell& cell) {
  SweepRow row;
  row.cell = cell;
  const auto start = std::chrono::steady_clock::now();
  try {
    detail::run_cell(spec, row);
  } catch (const std::exception& e) {
    row.status = detail::status_of(e);
    row.message = e.what();
  }
  row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

struct SweepOptions {
  unsigned threads = 0;            ///< 0 selects the hardware concurrency
  bool record_wall_time = true;    ///< false writes 0 so output is byte-reproducible
};

/// Runs every cell, in parallel across cells. `on_row` is called from the
/// calling thread in cell order as rows become available.
inline SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& options = {},
                             const std::function<void(const SweepRow&)>& on_row = {}) {
  const auto cells = expand_cells(spec);
  const std::size_t n = cells.size();
  SweepResult result;
  result.rows.resize(n);
  std::vector<char> ready(n, 0);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};

  unsigned workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      SweepRow row = evaluate_cell(spec, cells[i]);
      if (!options.record_wall_time) row.wall_time = 0.0;
      {
        std::lock_guard<std::mutex> lock(mu);
        result.rows[i] = std::move(row);
        ready[i] = 1;
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::size_t i = 0; i < n; ++i) {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return ready[i] != 0; });
    lock.unlock();
    if (on_row) on_row(result.rows[i]);
  }
  for (auto& t : pool) t.join();
  return result;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_real(double x) {
  if (std::isnan(x)) return "";
  if (x == 0.0) x = 0.0;  // no negative zero
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "control",   "drive",           "decay",          "detuning",     "dephase",   "initial_photon",
      "initial_state", "oracle",      "status",         "x_axis",       "x_scaled",  "truncation",
      "mean_n_1",  "mean_n_2",        "delta_n_1",      "delta_n_2",    "sum_p",     "surviving_trace",
      "error_estimate", "bookkeeping_defect", "plateau", "wall_time_s", "message"};
  return cols;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline std::string csv_row(const SweepRow& r) {
  const auto& p = r.cell.params;
  auto at = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? format_real(v[i]) : std::string();
  };
  std::string trunc;
  for (std::size_t i = 0; i < r.truncations.size(); ++i) trunc += (i ? ";" : "") + std::to_string(r.truncations[i]);
  std::vector<std::string> f{format_real(r.cell.control),
                             format_real(p.drive),
                             format_real(p.decay),
                             format_real(p.detuning),
                             format_real(p.dephase),
                             std::to_string(p.initial_photon),
                             r.cell.initial_state ? to_string(*r.cell.initial_state) : std::string("none"),
                             to_string(r.cell.oracle),
                             r.status,
                             format_real(r.x_axis),
                             format_real(r.x_scaled),
                             trunc,
                             at(r.mean_n, 0),
                             at(r.mean_n, 1),
                             at(r.delta_n, 0),
                             at(r.delta_n, 1),
                             format_real(r.sum_p),
                             format_real(r.surviving_trace),
                             format_real(r.error_estimate),
                             format_real(r.bookkeeping_defect),
                             r.plateau ? "1" : "0",
                             format_real(r.wall_time),
                             csv_escape(r.message)};
  std::string line;
  for (std::size_t i = 0; i < f.size(); ++i) line += (i ? "," : "") + f[i];
  return line;
}

/// `#` metadata block followed by the column header.
inline void write_csv_header(std::ostream& out, const SweepSpec& spec, std::size_t rows) {
  std::string trunc = "adaptive";
  if (!spec.truncation.empty()) {
    trunc.clear();
    for (std::size_t i = 0; i < spec.truncation.size(); ++i)
      trunc += (i ? "," : "") + std::to_string(spec.truncation[i]);
  }
  out << "# qwalk sweep " << (spec.name.empty() ? "(unnamed)" : spec.name) << "\n";
  out << "# spec: " << to_json(spec).dump() << "\n";
  out << "# scheme_order: " << kSchemeOrder << "\n";
  out << "# truncation: " << trunc << (spec.extend_truncation ? " (extended on leakage)" : "") << "\n";
  out << "# versions: qwalk " << kVersion << "; eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
      << EIGEN_MINOR_VERSION << "; nlohmann_json " << NLOHMANN_JSON_VERSION_MAJOR << "."
      << NLOHMANN_JSON_VERSION_MINOR << "." << NLOHMANN_JSON_VERSION_PATCH << "\n";
  out << "# rows: " << rows << "\n";
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
}

}  // namespace qwalk
