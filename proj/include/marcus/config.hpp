#pragma once

// Run configuration for the marcusfpe tool, read from a JSON document.

#include "marcus/fpe.hpp"
#include "marcus/model.hpp"
#include "marcus/sde.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace marcus::config {

inline constexpr std::string_view kTasks[] = {"flow-check", "simulate", "solve", "compare"};

bool is_task(std::string_view task);

struct FlowCheckOptions {
  int samples = 100;
  double u_range = 3.0;  // u uniform in [-u_range, u_range]^d
  double v_range = 2.0;
  int steps = flow::kVerificationSteps;
};

struct RunConfig {
  std::string task;  // empty when the document leaves it to the command line
  ModelSpec model;
  bool has_initial = false;
  double T = 1.0;
  double dt = 0.0;      // path simulation step
  double fpe_dt = 0.0;  // 0 picks the stability bound
  double epsilon = 1e-2;
  double outer_cutoff = 100.0;
  int steps = flow::kSimulationSteps;
  bool small_jump_gaussian = false;
  flow::JumpMapPolicy jump_map = flow::JumpMapPolicy::ClosedFormIfAvailable;
  fpe::JumpGather gather = fpe::JumpGather::CellAverage;
  bool absorb_outside_grid = false;  // kill paths that leave the grid box
  int nodes_per_decade = 32;
  int rho_nodes = 32;
  std::optional<std::size_t> n_paths;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::optional<fpe::Grid> grid;
  std::vector<double> output_times;
  bool renormalize = true;
  FlowCheckOptions flow_check;
  std::string echo;  // the parsed document, re-serialised

  sde::SimulationOptions simulation() const;
  fpe::SolveOptions solve() const;
};

// Throws ValidationError; messages start with the offending key path, and
// syntax errors carry line and column.
RunConfig parse_config(std::string_view text);

// Checks parameters required by `task` (e.g. "n_paths required for compare").
void require_for_task(const RunConfig& config, std::string_view task);

}  // namespace marcus::config
