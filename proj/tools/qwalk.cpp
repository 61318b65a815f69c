// Command-line front end: sweeps, named presets, single evolutions, jump
// Monte Carlo and the analytic oracles.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qwalk/analytic.hpp"
#include "qwalk/integrator.hpp"
#include "qwalk/jump_mc.hpp"
#include "qwalk/model.hpp"
#include "qwalk/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCellFailure = 1;
constexpr int kExitConfig = 2;

struct CommonFlags {
  std::string out;
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
  std::string truncation;
  bool strict_bitrepro = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--out", f.out, "CSV output path ('-' for stdout)");
  cmd->add_option("--threads", f.threads, "worker threads (default: all cores)");
  cmd->add_option("--seed", f.seed, "Monte Carlo seed");
  cmd->add_option("--truncation", f.truncation, "per-mode Fock truncation, e.g. 20 or 20,20");
  cmd->add_flag("--strict-bitrepro", f.strict_bitrepro, "write zero wall times so reruns are byte-identical");
}

std::vector<int> parse_truncation(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw qwalk::ConfigurationError("invalid --truncation '" + text + "'");
    }
  }
  if (out.empty()) throw qwalk::ConfigurationError("invalid --truncation '" + text + "'");
  return out;
}

qwalk::SweepSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qwalk::ConfigurationError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return qwalk::sweep_spec_from_string(buf.str());
}

void apply_common(qwalk::SweepSpec& spec, const CommonFlags& f) {
  if (f.seed) spec.trajectories.rng_seed = *f.seed;
  if (!f.truncation.empty()) spec.truncation = parse_truncation(f.truncation);
  if (!f.out.empty()) spec.output_path = f.out;
  spec.validate();
}

// Opens `path`, or stdout for "" and "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw qwalk::ConfigurationError("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

int run_spec(const qwalk::SweepSpec& spec, const CommonFlags& f) {
  const auto cells = qwalk::expand_cells(spec);
  Output out(spec.output_path);
  std::ostream& os = out.stream();
  qwalk::write_csv_header(os, spec, cells.size());
  std::size_t failed = 0;
  qwalk::SweepOptions opt;
  opt.threads = f.threads;
  opt.record_wall_time = !f.strict_bitrepro;
  qwalk::run_sweep(spec, opt, [&](const qwalk::SweepRow& row) {
    os << qwalk::csv_row(row) << "\n";
    os.flush();
    if (!row.ok()) {
      ++failed;
      std::cerr << "cell failed (" << row.status << "): " << row.message << "\n";
    }
  });
  std::cerr << cells.size() << " rows, " << failed << " failed\n";
  return failed ? kExitCellFailure : kExitOk;
}

void write_distribution(std::ostream& os, const qwalk::DecayRecord& rec, const std::vector<double>* stderrs) {
  const int modes = rec.modes();
  for (int a = 0; a < modes; ++a) os << "n_" << (a + 1) << ",";
  os << "probability" << (stderrs ? ",standard_error" : "") << "\n";
  std::vector<int> stride(modes, 1);
  for (int a = modes - 2; a >= 0; --a) stride[a] = stride[a + 1] * rec.truncations[a + 1];
  for (std::size_t p = 0; p < rec.joint.size(); ++p) {
    if (rec.joint[p] == 0.0) continue;
    for (int a = 0; a < modes; ++a)
      os << (static_cast<int>(p) / stride[a]) % rec.truncations[a] << ",";
    os << qwalk::format_real(rec.joint[p]);
    if (stderrs) os << "," << qwalk::format_real((*stderrs)[p]);
    os << "\n";
  }
}

std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + qwalk::format_real(v[i]);
  return s;
}

qwalk::DensityMatrix initial_for(const qwalk::SweepSpec& spec, qwalk::HilbertSpace& space) {
  const auto& p = spec.base;
  std::vector<int> t = spec.truncation.empty() ? std::vector<int>(p.dimension, qwalk::default_truncation(p.initial_photon))
                       : spec.truncation.size() == 1 ? std::vector<int>(p.dimension, spec.truncation[0])
                                                     : spec.truncation;
  space = qwalk::build_hilbert_space(p, t);
  return qwalk::build_initial_state(spec.initial_states.front(), p.initial_photon, space);
}

int run_evolve(const qwalk::SweepSpec& spec, bool single, const CommonFlags& f) {
  qwalk::HilbertSpace space({1});
  const auto rho0 = initial_for(spec, space);
  Output out(f.out);
  std::ostream& os = out.stream();
  os << "# qwalk evolve\n# base: " << qwalk::to_json(spec.base).dump() << "\n";
  os << "# initial_state: " << qwalk::to_string(spec.initial_states.front()) << "\n";
  if (single) {
    const auto rec = qwalk::run_to_decay(spec.base, rho0, spec.evolution);
    std::vector<double> means;
    for (int a = 0; a < rec.modes(); ++a) means.push_back(qwalk::average_photon(rec, a));
    os << "# step: " << qwalk::format_real(rec.step) << "\n# mean_n: " << join_reals(means)
       << "\n# surviving_trace: " << qwalk::format_real(rec.surviving_trace) << "\n# plateau: " << rec.plateau
       << "\n";
    write_distribution(os, rec, nullptr);
  } else {
    const auto r = qwalk::richardson_run(spec.base, rho0, spec.evolution);
    os << "# runs: " << r.runs << "\n# mean_n: " << join_reals(r.values)
       << "\n# error_estimate: " << qwalk::format_real(r.error_estimate)
       << "\n# surviving_trace: " << qwalk::format_real(r.finest.surviving_trace)
       << "\n# plateau: " << r.finest.plateau << "\n";
    write_distribution(os, r.finest, nullptr);
  }
  return kExitOk;
}

int run_mc(qwalk::SweepSpec spec, std::optional<int> trajectories, const CommonFlags& f) {
  if (trajectories) spec.trajectories.n_trajectories = *trajectories;
  spec.validate();
  qwalk::HilbertSpace space({1});
  const auto rho0 = initial_for(spec, space);
  const auto r = qwalk::jump_monte_carlo(spec.base, rho0, spec.trajectories, spec.evolution);
  Output out(f.out);
  std::ostream& os = out.stream();
  os << "# qwalk mc\n# base: " << qwalk::to_json(spec.base).dump()
     << "\n# trajectories: " << qwalk::to_json(spec.trajectories).dump() << "\n# decayed: " << r.decayed
     << "\n# mean_n: " << join_reals(r.mean_photon) << "\n# mean_n_stderr: " << join_reals(r.mean_stderr)
     << "\n# step: " << qwalk::format_real(r.step) << "\n";
  write_distribution(os, r.record, &r.standard_error);
  return kExitOk;
}

int run_analytic(const qwalk::SystemParams& p) {
  p.validate();
  const auto b = qwalk::BlochParams::from(p);
  std::cout << "x_axis," << qwalk::format_real(qwalk::lattice_abscissa(p)) << "\n";
  for (int a = 0; a < p.dimension; ++a)
    std::cout << "winding_delta_n_" << (a + 1) << "," << qwalk::format_real(qwalk::winding_displacement(p, a, 1024))
              << "\n";
  if (p.dimension == 1) {
    std::cout << "classical_delta_n_1," << qwalk::format_real(qwalk::classical_displacement(b.intra, b.inter[0]))
              << "\n";
  } else if (p.couplings[0] > p.couplings[1] && p.couplings[1] > 0.0) {
    const auto [d1, d2] = qwalk::analytic_2d(p);
    std::cout << "closed_form_delta_n_1," << qwalk::format_real(d1) << "\nclosed_form_delta_n_2,"
              << qwalk::format_real(d2) << "\n";
  }
  const auto pt = qwalk::pt_spectrum(p, 64);
  std::cout << "min_amplitude," << qwalk::format_real(pt.min_amplitude) << "\n"
            << "breaking_threshold," << qwalk::format_real(pt.breaking_threshold) << "\n"
            << "pt_unbroken," << (pt.all_unbroken ? 1 : 0) << "\n"
            << "drive_criterion_unbroken," << (pt.drive_criterion_unbroken ? 1 : 0) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dissipative qubit-resonator quantum walk"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* sweep = app.add_subcommand("sweep", "run a sweep configuration");
  std::string config;
  sweep->add_option("config", config, "sweep JSON")->required();
  add_common(sweep, flags);

  auto* preset = app.add_subcommand("preset", "emit or run a named preset");
  std::string preset_name;
  bool emit = false, run = false;
  preset->add_option("name", preset_name, "fig2 | fig3 | fig4 | fig5 | fig7 | fig8 | fig9")->required();
  auto* emit_flag = preset->add_flag("--emit-config", emit, "print the preset as JSON");
  preset->add_flag("--run", run, "run the preset")->excludes(emit_flag);
  add_common(preset, flags);

  auto* analytic = app.add_subcommand("analytic", "closed-form and contour oracles for one parameter point");
  qwalk::SystemParams ap;
  ap.couplings.clear();
  std::vector<double> couplings{1.0};
  analytic->add_option("--couplings", couplings, "g or g1,g2")->delimiter(',');
  analytic->add_option("--drive", ap.drive, "Ω")->required();
  analytic->add_option("--photons", ap.initial_photon, "N")->required();
  analytic->add_option("--gamma", ap.decay, "γ");
  analytic->add_option("--detuning", ap.detuning, "Δε");

  auto* evolve = app.add_subcommand("evolve", "deterministic evolution of the base parameters");
  bool single = false;
  evolve->add_option("config", config, "sweep JSON (base, evolution, truncation, initial state)")->required();
  evolve->add_flag("--single", single, "one run at initial_dt, no extrapolation");
  add_common(evolve, flags);

  auto* mc = app.add_subcommand("mc", "jump Monte Carlo of the base parameters");
  std::optional<int> trajectories;
  mc->add_option("config", config, "sweep JSON")->required();
  mc->add_option("--trajectories", trajectories, "number of trajectories");
  add_common(mc, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sweep) {
      auto spec = load_spec(config);
      apply_common(spec, flags);
      return run_spec(spec, flags);
    }
    if (*preset) {
      auto spec = qwalk::preset(preset_name);
      apply_common(spec, flags);
      if (run) return run_spec(spec, flags);
      std::cout << qwalk::to_json(spec).dump(2) << "\n";
      return kExitOk;
    }
    if (*analytic) {
      ap.couplings = couplings;
      ap.dimension = static_cast<int>(couplings.size());
      return run_analytic(ap);
    }
    if (*evolve) {
      auto spec = load_spec(config);
      apply_common(spec, flags);
      return run_evolve(spec, single, flags);
    }
    if (*mc) {
      auto spec = load_spec(config);
      apply_common(spec, flags);
      return run_mc(spec, trajectories, flags);
    }
  } catch (const qwalk::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCellFailure;
  }
  return kExitOk;
}
