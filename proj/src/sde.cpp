#include "marcus/sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

namespace marcus::sde {
namespace {

[[noreturn]] void blew_up(double t) {
  std::ostringstream os;
  os << "path diverged at t=" << t;
  throw DivergenceError(os.str(), t);
}

}  // namespace

bool Domain::contains(const Vec& x) const {
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

std::optional<Vec> simulate_path(const ModelSpec& model, double T, double dt, const SimulationOptions& options,
                  Rng& rng) {
  if (!(T > 0.0) || !(dt > 0.0)) throw ValidationError("simulate_path: T and dt must be > 0");
  if (!(options.epsilon > 0.0 && options.epsilon <= 1.0))
    throw ValidationError("simulate_path: epsilon must lie in (0, 1]");
  const levy::LevyTriplet driver = options.small_jump_gaussian
                                       ? levy::with_small_jump_diffusion(model.driver, options.epsilon)
                                       : model.driver;
  const levy::SamplingOptions sampling{options.epsilon, options.outer_cutoff, false};
  const Vec b = levy::sampling_drift(driver, options.epsilon);
  const bool gaussian = driver.has_gaussian_part();
  const bool has_b = !b.isZero(0.0);

  Vec x = sample_initial(model.initial, rng);
  const Domain* box = options.absorb ? &*options.absorb : nullptr;
  if (box != nullptr && box->lower.size() != x.size())
    throw ValidationError("simulate_path: absorbing box dimension must equal d");
  bool alive = box == nullptr || box->contains(x);
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  const double h = T / static_cast<double>(steps);

  auto advance = [&](double sub, double t_end) {
    if (sub <= 0.0) return;
    const Mat sigma = model.noise.sigma(x);
    Vec a = model.drift(x);
    if (has_b) a += sigma * b;
    if (gaussian) a += stratonovich_correction(model.noise, driver.a(), x);
    Vec next = x + a * sub;
    if (gaussian) next += sigma * levy::sample_gaussian(driver, sub, rng);
    x = next;
    if (!x.allFinite()) blew_up(t_end);
    if (box != nullptr && !box->contains(x)) alive = false;
  };

  for (std::size_t k = 0; k < steps && alive; ++k) {
    const double t0 = h * static_cast<double>(k);
    double done = 0.0;
    for (const auto& jump : levy::sample_jumps(driver, h, sampling, rng)) {
      advance(jump.offset - done, t0 + jump.offset);
      try {
        x = flow::jump_forward(x, jump.size, model.noise, options.flow_steps, options.jump_map);
      } catch (const DivergenceError&) {
        blew_up(t0 + jump.offset);
      }
      if (!x.allFinite()) blew_up(t0 + jump.offset);
      done = jump.offset;
      if (box != nullptr && !box->contains(x)) {
        alive = false;
        break;
      }
    }
    if (!alive) break;
    advance(h - done, t0 + h);
  }
  if (!alive) return std::nullopt;
  return x;
}

Rng path_rng(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
  return Rng(seq);
}

PathEnsemble simulate_ensemble(const ModelSpec& model, double T, double dt,
                               const SimulationOptions& options, std::size_t n_paths,
                               std::uint64_t seed, unsigned threads) {
  if (n_paths == 0) throw ValidationError("simulate_ensemble: n_paths must be > 0");
  model.validate();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_paths));

  // 0 diverged, 1 absorbed, 2 finished
  std::vector<std::optional<Vec>> results(n_paths);
  std::vector<char> status(n_paths, 0);
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned id) {
    try {
      for (std::size_t i = id; i < n_paths; i += threads) {
        Rng rng = path_rng(seed, i);
        try {
          results[i] = simulate_path(model, T, dt, options, rng);
          status[i] = results[i] ? 2 : 1;
        } catch (const DivergenceError&) {
          status[i] = 0;
        }
      }
    } catch (...) {
      errors[id] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned id = 0; id < threads; ++id) pool.emplace_back(work, id);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  PathEnsemble ens;
  ens.T = T;
  ens.dt = dt;
  ens.epsilon = options.epsilon;
  ens.n_paths = n_paths;
  ens.seed = seed;
  ens.terminal.reserve(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (status[i] == 2) {
      ens.terminal.push_back(*results[i]);
      ens.path_index.push_back(i);
    } else if (status[i] == 1) {
      ++ens.absorbed;
    } else {
      ++ens.diverged;
    }
  }
  if (static_cast<double>(ens.diverged) > 1e-3 * static_cast<double>(n_paths)) {
    std::ostringstream os;
    os << ens.diverged << " of " << n_paths << " paths diverged (limit 0.1%)";
    throw EnsembleDivergenceError(os.str(), ens.diverged);
  }
  return ens;
}

EmpiricalDensity empirical_density(const PathEnsemble& ensemble, const fpe::Grid& grid) {
  EmpiricalDensity out;
  out.field = fpe::DensityField{grid, std::vector<double>(grid.size(), 0.0), ensemble.T};
  std::size_t inside = 0;
  for (const Vec& x : ensemble.terminal) {
    if (x.size() != grid.dim()) throw ValidationError("empirical_density: dimension mismatch");
    const std::int64_t cell = grid.locate(x);
    if (cell < 0) continue;
    out.field.values[static_cast<std::size_t>(cell)] += 1.0;
    ++inside;
  }
  const double norm = 1.0 / (static_cast<double>(ensemble.n_paths) * grid.cell_volume());
  for (double& v : out.field.values) v *= norm;
  out.coverage = static_cast<double>(inside) / static_cast<double>(ensemble.n_paths);
  out.low_coverage = out.coverage < 0.99;
  return out;
}

void write_ensemble_csv(std::ostream& out, const PathEnsemble& ensemble) {
  const int d = ensemble.terminal.empty() ? 0 : static_cast<int>(ensemble.terminal.front().size());
  out << "path_index";
  for (int k = 0; k < d; ++k) out << ",x" << k + 1;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ensemble.terminal.size(); ++i) {
    out << ensemble.path_index[i];
    for (int k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", ensemble.terminal[i][k]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace marcus::sde
