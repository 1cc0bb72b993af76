#include "marcus/run.hpp"

#include "marcus/config.hpp"
#include "marcus/fpe.hpp"
#include "marcus/sde.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#ifndef MARCUS_VERSION
#define MARCUS_VERSION "0.0.0"
#endif

namespace marcus::run {
namespace {

namespace fs = std::filesystem;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

// Files written by a task; an entry stays "partial" until its stream closes
// cleanly.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  template <class Writer>
  void write(const std::string& name, Writer&& writer) {
    entries_.push_back({name, false});
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + (dir_ / name).string());
    writer(out);
    out.close();
    if (!out) throw std::runtime_error("write failed for " + (dir_ / name).string());
    entries_.back().complete = true;
  }

  void list(std::ostream& os) const {
    for (const auto& e : entries_) os << e.name << " = " << (e.complete ? "complete" : "partial") << '\n';
  }

 private:
  struct Entry {
    std::string name;
    bool complete;
  };
  fs::path dir_;
  std::vector<Entry> entries_;
};

struct Outcome {
  int code = kOk;
  std::string error;
  std::vector<std::string> notes;  // key = value lines for the manifest
};

void write_moments(std::ostream& os, const sde::PathEnsemble& ens) {
  os << "n_paths = " << ens.n_paths << '\n';
  os << "diverged = " << ens.diverged << '\n';
  os << "absorbed = " << ens.absorbed << '\n';
  os << "T = " << fmt(ens.T) << '\n';
  os << "dt = " << fmt(ens.dt) << '\n';
  os << "epsilon = " << fmt(ens.epsilon) << '\n';
  os << "seed = " << ens.seed << '\n';
  if (ens.terminal.empty()) return;
  const auto d = ens.terminal.front().size();
  const double n = static_cast<double>(ens.terminal.size());
  for (Eigen::Index k = 0; k < d; ++k) {
    double mean = 0.0;
    for (const Vec& x : ens.terminal) mean += x[k];
    mean /= n;
    double var = 0.0;
    for (const Vec& x : ens.terminal) var += (x[k] - mean) * (x[k] - mean);
    var /= std::max(1.0, n - 1.0);
    os << "mean_x" << k + 1 << " = " << fmt(mean) << '\n';
    os << "stderr_x" << k + 1 << " = " << fmt(std::sqrt(var / n)) << '\n';
    os << "variance_x" << k + 1 << " = " << fmt(var) << '\n';
  }
}

void flow_check(const config::RunConfig& c, Artifacts& files, Outcome& outcome) {
  const auto& noise = c.model.noise;
  const int d = c.model.d();
  const int n = c.model.n();
  const auto& fc = c.flow_check;
  const auto& closed = noise.closed_form();
  double max_residual = 0.0;
  double sum_residual = 0.0;
  double max_closed = 0.0;
  double max_jac = 0.0;
  files.write("flow_check.csv", [&](std::ostream& os) {
    os << "sample";
    for (int k = 0; k < d; ++k) os << ",u" << k + 1;
    for (int k = 0; k < n; ++k) os << ",v" << k + 1;
    os << ",residual,jac_det";
    if (closed) os << ",closed_form_error,jac_det_error";
    os << '\n';
    for (int s = 0; s < fc.samples; ++s) {
      Rng rng = sde::path_rng(c.seed, static_cast<std::uint64_t>(s));
      std::uniform_real_distribution<double> uu(-fc.u_range, fc.u_range);
      std::uniform_real_distribution<double> uv(-fc.v_range, fc.v_range);
      Vec u(d);
      Vec v(n);
      for (int k = 0; k < d; ++k) u[k] = uu(rng);
      for (int k = 0; k < n; ++k) v[k] = uv(rng);
      const Vec x = flow::marcus_forward(u, v, noise, fc.steps);
      const flow::FlowResult back = flow::marcus_inverse(x, v, noise, fc.steps);
      const double residual = (back.point - u).norm();
      max_residual = std::max(max_residual, residual);
      sum_residual += residual;
      os << s;
      for (int k = 0; k < d; ++k) os << ',' << fmt(u[k]);
      for (int k = 0; k < n; ++k) os << ',' << fmt(v[k]);
      os << ',' << fmt(residual) << ',' << fmt(back.jac_det);
      if (closed) {
        const flow::FlowResult cf = closed->inverse(x, v);
        const double err = (cf.point - back.point).norm();
        const double jerr = std::abs(cf.jac_det - back.jac_det);
        max_closed = std::max(max_closed, err);
        max_jac = std::max(max_jac, jerr);
        os << ',' << fmt(err) << ',' << fmt(jerr);
      }
      os << '\n';
    }
  });
  const bool pass = max_residual <= 1e-8;
  files.write("flow_check.txt", [&](std::ostream& os) {
    os << "samples = " << fc.samples << '\n';
    os << "steps = " << fc.steps << '\n';
    os << "max_residual = " << fmt(max_residual) << '\n';
    os << "mean_residual = " << fmt(sum_residual / fc.samples) << '\n';
    if (closed) {
      os << "max_closed_form_error = " << fmt(max_closed) << '\n';
      os << "max_jac_det_error = " << fmt(max_jac) << '\n';
    }
    os << "tolerance = 1e-08\n";
    os << "pass = " << (pass ? "true" : "false") << '\n';
  });
  outcome.notes.push_back("max_residual = " + fmt(max_residual));
  if (!pass) {
    outcome.code = kNumericFailure;
    outcome.error = "inverse residual " + fmt(max_residual) + " exceeds 1e-08";
  }
}

sde::PathEnsemble simulate(const config::RunConfig& c, Artifacts& files, Outcome& outcome) {
  const sde::PathEnsemble ens =
      sde::simulate_ensemble(c.model, c.T, c.dt, c.simulation(), *c.n_paths, c.seed, c.threads);
  files.write("ensemble.csv", [&](std::ostream& os) { sde::write_ensemble_csv(os, ens); });
  files.write("moments.txt", [&](std::ostream& os) { write_moments(os, ens); });
  outcome.notes.push_back("diverged_paths = " + std::to_string(ens.diverged));
  return ens;
}

fpe::SolveResult solve(const config::RunConfig& c, std::vector<double> times, Artifacts& files,
                       Outcome& outcome) {
  fpe::SolveOptions options = c.solve();
  options.output_times = std::move(times);
  const fpe::DensityField p0 = fpe::initial_density(c.model.initial, *c.grid);
  const fpe::SolveResult r = fpe::solve(c.model, p0, c.T, options);
  for (std::size_t k = 0; k < r.outputs.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "density_%03zu.csv", k);
    files.write(name, [&](std::ostream& os) { fpe::write_density_csv(os, r.outputs[k]); });
  }
  files.write("solve.txt", [&](std::ostream& os) {
    os << "dt = " << fmt(r.dt) << '\n';
    os << "steps = " << r.steps << '\n';
    os << "initial_mass = " << fmt(r.initial_mass) << '\n';
    os << "min_before_clip = " << fmt(r.min_before_clip) << '\n';
    os << "max_value = " << fmt(r.max_value) << '\n';
    os << "renormalized = " << (r.renormalized ? "true" : "false") << '\n';
    for (const auto& e : r.events) os << "event = " << e << '\n';
    for (std::size_t k = 0; k < r.outputs.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "density_%03zu.csv", k);
      fpe::write_density_metadata(os, r.outputs[k], name);
    }
  });
  for (const auto& e : r.events) outcome.notes.push_back("event = " + e);
  return r;
}

void compare(const config::RunConfig& c, Artifacts& files, Outcome& outcome) {
  const sde::PathEnsemble ens = simulate(c, files, outcome);
  std::vector<double> times = c.output_times;
  if (times.empty() || std::abs(times.back() - c.T) > 1e-12) times.push_back(c.T);
  const fpe::SolveResult r = solve(c, times, files, outcome);
  const fpe::DensityField& p = r.outputs.back();
  const sde::EmpiricalDensity hist = sde::empirical_density(ens, *c.grid);
  files.write("histogram.csv", [&](std::ostream& os) { fpe::write_density_csv(os, hist.field); });
  const double l1 = fpe::l1_distance(p, hist.field);
  const double linf = fpe::linf_distance(p, hist.field);
  files.write("report.txt", [&](std::ostream& os) {
    os << "T = " << fmt(c.T) << '\n';
    os << "l1_distance = " << fmt(l1) << '\n';
    os << "linf_distance = " << fmt(linf) << '\n';
    os << "fpe_mass = " << fmt(fpe::total_mass(p)) << '\n';
    os << "histogram_coverage = " << fmt(hist.coverage) << '\n';
    os << "low_coverage = " << (hist.low_coverage ? "true" : "false") << '\n';
    os << "n_paths = " << ens.n_paths << '\n';
    os << "diverged = " << ens.diverged << '\n';
    os << "absorbed = " << ens.absorbed << '\n';
  });
  outcome.notes.push_back("l1_distance = " + fmt(l1));
  outcome.notes.push_back("linf_distance = " + fmt(linf));
}

void write_manifest(const fs::path& dir, std::string_view task, const std::string& echo,
                    std::optional<std::uint64_t> seed, double seconds, const Outcome& outcome,
                    const Artifacts& files) {
  std::ofstream os(dir / "manifest.txt", std::ios::binary);
  os << "tool = marcusfpe\n";
  os << "version = " << MARCUS_VERSION << '\n';
  os << "compiler = " << __VERSION__ << '\n';
  os << "eigen = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
  os << "task = " << task << '\n';
  os << "status = " << (outcome.code == kOk ? "ok" : "failed") << '\n';
  os << "exit_code = " << outcome.code << '\n';
  if (seed) os << "seed = " << *seed << '\n';
  os << "wall_time_s = " << fmt(seconds) << '\n';
  if (!outcome.error.empty()) os << "error = " << outcome.error << '\n';
  for (const auto& line : outcome.notes) os << line << '\n';
  os << "[artifacts]\n";
  files.list(os);
  os << "[config]\n" << echo << '\n';
}

}  // namespace

int run_task(std::string_view task, const std::string& config_text, const fs::path& output,
             std::optional<std::uint64_t> seed_override) {
  const auto start = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(output, ec);
  if (ec) {
    std::cerr << "marcusfpe: cannot create " << output << ": " << ec.message() << '\n';
    return kNumericFailure;
  }
  Artifacts files(output);
  Outcome outcome;
  std::string echo = config_text;
  std::optional<std::uint64_t> seed;
  try {
    if (!config::is_task(task)) throw ValidationError("unknown task \"" + std::string(task) + "\"");
    config::RunConfig c = config::parse_config(config_text);
    echo = c.echo;
    if (!c.task.empty() && c.task != task)
      throw ValidationError("task: config names \"" + c.task + "\" but \"" + std::string(task) +
                            "\" was requested");
    if (seed_override) c.seed = *seed_override;
    seed = c.seed;
    config::require_for_task(c, task);

    if (task == "flow-check") {
      flow_check(c, files, outcome);
    } else if (task == "simulate") {
      simulate(c, files, outcome);
    } else if (task == "solve") {
      solve(c, c.output_times, files, outcome);
    } else {
      compare(c, files, outcome);
    }
  } catch (const ValidationError& e) {
    outcome.code = kConfigError;
    outcome.error = e.what();
  } catch (const std::exception& e) {
    outcome.code = kNumericFailure;
    outcome.error = e.what();
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(output, task, echo, seed, seconds, outcome, files);
  if (!outcome.error.empty()) std::cerr << "marcusfpe: " << outcome.error << '\n';
  return outcome.code;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Fokker-Planck solver and Monte Carlo checks for Marcus SDEs with Levy noise",
               "marcusfpe"};
  std::string task;
  std::string config_path;
  std::string output = "./out";
  std::optional<std::uint64_t> seed;
  app.add_option("task", task, "flow-check | simulate | solve | compare")
      ->required()
      ->check(CLI::IsMember({"flow-check", "simulate", "solve", "compare"}));
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--output", output, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "override the config seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  std::ifstream in(config_path, std::ios::binary);
  std::string text;
  if (in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  if (!in) {
    Outcome outcome{kConfigError, "config: cannot read " + config_path, {}};
    std::error_code ec;
    fs::create_directories(output, ec);
    Artifacts none(output);
    write_manifest(output, task, "", seed, 0.0, outcome, none);
    std::cerr << "marcusfpe: " << outcome.error << '\n';
    return kConfigError;
  }
  return run_task(task, text, output, seed);
}

}  // namespace marcus::run
