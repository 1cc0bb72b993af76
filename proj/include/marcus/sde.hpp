#pragma once

// Jump-adapted Euler simulation of Marcus SDEs on the Ito form
//   dX = [f + sigma b~ + 1/2 sum sigma_ml A_lj d_m sigma_ij] dt + sigma tau dB
//        + sum over jumps (H(X-, y) - X-),
// where b~ is the drift paired with uncompensated sampled jumps.

#include "marcus/fpe.hpp"
#include "marcus/levy.hpp"
#include "marcus/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace marcus::sde {

// Axis-aligned box; paths that leave it are absorbed (killed), matching the
// zero far field of the density solver on the same box.
struct Domain {
  Vec lower;
  Vec upper;
  bool contains(const Vec& x) const;
};

struct SimulationOptions {
  double epsilon = 1e-2;
  double outer_cutoff = 100.0;
  bool small_jump_gaussian = false;
  int flow_steps = flow::kSimulationSteps;
  flow::JumpMapPolicy jump_map = flow::JumpMapPolicy::ClosedFormIfAvailable;
  std::optional<Domain> absorb;  // checked after every jump and Euler substep
};

struct PathEnsemble {
  std::vector<Vec> terminal;  // ordered by path index; diverged and absorbed paths omitted
  std::vector<std::size_t> path_index;
  double T = 0.0;
  double dt = 0.0;
  double epsilon = 0.0;
  std::size_t n_paths = 0;
  std::size_t diverged = 0;
  std::size_t absorbed = 0;
  std::uint64_t seed = 0;
};

// Terminal state, or nullopt when the path was absorbed. Throws
// DivergenceError carrying the time of blow-up.
std::optional<Vec> simulate_path(const ModelSpec& model, double T, double dt, const SimulationOptions& options,
                  Rng& rng);

// Per-path stream seeded from (seed, path index).
Rng path_rng(std::uint64_t seed, std::uint64_t path);

class EnsembleDivergenceError : public std::runtime_error {
 public:
  EnsembleDivergenceError(const std::string& what, std::size_t diverged)
      : std::runtime_error(what), diverged_(diverged) {}
  std::size_t diverged() const { return diverged_; }

 private:
  std::size_t diverged_;
};

// Fails when more than 0.1% of paths diverge. `threads` = 0 uses the
// hardware concurrency; the result does not depend on it.
PathEnsemble simulate_ensemble(const ModelSpec& model, double T, double dt,
                               const SimulationOptions& options, std::size_t n_paths,
                               std::uint64_t seed, unsigned threads = 0);

struct EmpiricalDensity {
  fpe::DensityField field;
  double coverage = 0.0;  // fraction of n_paths landing inside the grid
  bool low_coverage = false;
};

// Bin counts / (n_paths * cell volume).
EmpiricalDensity empirical_density(const PathEnsemble& ensemble, const fpe::Grid& grid);

// Header `path_index,x1,...,xd`, one row per path.
void write_ensemble_csv(std::ostream& out, const PathEnsemble& ensemble);

}  // namespace marcus::sde
