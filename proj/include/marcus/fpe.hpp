#pragma once

// Fokker-Planck operator for Marcus SDEs driven by Levy noise, on uniform 1D
// and 2D grids:
//
//   dp/dt = -sum_i d_i[(f_i + sum_j sigma_ij b_j
//                       + 1/2 sum_{m,j,l} d_m sigma_ij sigma_ml A_lj) p]
//           + 1/2 sum_{i,m} d_i d_m [(sigma A sigma^T)_im p]
//           + int [p(H~(x, y)) |dH~/dx| - p(x)
//                  + sum_{i,j} y_j 1{|y|<1} d_i(sigma_ij p)] nu(dy)
//
// Density is zero outside the grid.

#include "marcus/flow.hpp"
#include "marcus/levy.hpp"
#include "marcus/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace marcus::fpe {

struct Axis {
  double lower = 0.0;
  double upper = 1.0;
  int cells = 8;

  double width() const { return (upper - lower) / cells; }
  double center(int i) const { return lower + (i + 0.5) * width(); }
};

// Cell-centred grid; flat index is row-major with the first axis outermost.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<Axis> axes);

  int dim() const { return static_cast<int>(axes_.size()); }
  const Axis& axis(int k) const { return axes_[static_cast<std::size_t>(k)]; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t size() const;
  double cell_volume() const;
  Vec center(std::size_t flat) const;
  // Cell containing x, or -1 when x lies outside.
  std::int64_t locate(const Vec& x) const;

 private:
  std::vector<Axis> axes_;
};

struct DensityField {
  Grid grid;
  std::vector<double> values;  // probability per unit volume at cell centres
  double time = 0.0;
};

double total_mass(const DensityField& field);

// Initial density sampled at cell centres (normal initial states only).
DensityField initial_density(const InitialState& init, const Grid& grid);

Vec effective_drift(const ModelSpec& model, const Vec& x);
// D(x) = 1/2 sigma(x) A sigma(x)^T
Mat diffusion_matrix(const ModelSpec& model, const Vec& x);

// How p(H~(x, y)) |dH~/dx| is formed. Interpolate samples the multilinear
// interpolant at H~ of each cell centre. CellAverage (1D only; 2D always
// interpolates) integrates piecewise-constant p over the image of each cell:
// first order, but conservative and non-negative under strong contraction.
enum class JumpGather { Interpolate, CellAverage };

struct QuadratureOptions {
  double epsilon = 1e-2;
  double outer_cutoff = 100.0;
  int nodes_per_decade = 32;
  int rho_nodes = 32;  // Gauss-Legendre nodes for continuous jump-size laws
  bool small_jump_gaussian = false;
  int flow_steps = flow::kSimulationSteps;
  flow::JumpMapPolicy jump_map = flow::JumpMapPolicy::ClosedFormIfAvailable;
  JumpGather gather = JumpGather::CellAverage;
  std::size_t cache_cap_bytes = std::size_t{1} << 30;
};

struct JumpNode {
  Vec y;
  double weight = 0.0;
  std::size_t component = 0;
};

// Nodes discretising nu, with H~(x, y) and |dH~/dx| cached for every
// (cell, node) pair and folded into a per-cell interpolation stencil.
struct JumpQuadrature {
  Grid grid;
  std::vector<JumpNode> nodes;
  std::vector<double> points;   // [(node * cells + cell) * d + k]
  std::vector<double> jac_det;  // [node * cells + cell]
  Vec compensator;              // sum_k w_k y_k 1{|y_k| < 1}
  double total_weight = 0.0;

  struct Entry {
    std::uint32_t index;
    double coeff;
  };
  std::vector<std::size_t> row_start;  // per cell, into entries
  std::vector<Entry> entries;
};

class CacheLimitError : public std::runtime_error {
 public:
  CacheLimitError(const std::string& what, std::size_t estimate)
      : std::runtime_error(what), estimate_(estimate) {}
  std::size_t estimate() const { return estimate_; }

 private:
  std::size_t estimate_;
};

std::vector<JumpNode> jump_nodes(const levy::LevyTriplet& triplet, const QuadratureOptions& options);

JumpQuadrature build_jump_quadrature(const ModelSpec& model, const Grid& grid,
                                     const QuadratureOptions& options);

// Multilinear interpolation of cell-centre values; zero outside the grid.
double interpolate(const DensityField& field, const Vec& x);

class FokkerPlanckOperator {
 public:
  // `model` is taken as is; widen its driver with
  // levy::with_small_jump_diffusion beforehand when sub-eps jumps should
  // enter as diffusion (solve() does this from its options).
  FokkerPlanckOperator(const ModelSpec& model, JumpQuadrature quadrature);

  const Grid& grid() const { return quad_.grid; }
  const JumpQuadrature& quadrature() const { return quad_; }

  // The three parts of the right-hand side, each accumulated into `out`.
  void add_drift_term(std::span<const double> p, std::span<double> out) const;
  void add_diffusion_term(std::span<const double> p, std::span<double> out) const;
  void add_jump_term(std::span<const double> p, std::span<double> out) const;

  void apply(std::span<const double> p, std::span<double> out) const;

  // 0.4 * min(dx^2 / (2 max|D|), dx / max|drift|, 1 / nu_total)
  double stable_dt() const;

 private:
  int d_ = 1;
  JumpQuadrature quad_;
  std::vector<double> drift_;         // [cell * d + i]
  std::vector<double> diffusion_;     // [cell * d * d + i * d + m]
  std::vector<double> compensator_;   // [cell * d + i], sigma(x) * compensator
};

std::vector<double> apply_rhs(const FokkerPlanckOperator& op, const DensityField& field);

// One explicit midpoint (RK2) step.
DensityField step(const FokkerPlanckOperator& op, const DensityField& field, double dt);

class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveOptions {
  QuadratureOptions quadrature;
  double dt = 0.0;  // 0 picks the stability bound
  std::vector<double> output_times;  // absolute; empty means {t0 + T}
  bool renormalize = true;
};

struct SolveResult {
  std::vector<DensityField> outputs;  // one per output time
  double dt = 0.0;
  std::size_t steps = 0;
  double initial_mass = 0.0;
  double min_before_clip = 0.0;  // most negative value seen at an output
  double max_value = 0.0;
  bool renormalized = false;
  std::vector<std::string> events;
};

SolveResult solve(const ModelSpec& model, const DensityField& p0, double T,
                  const SolveOptions& options);
SolveResult solve(const FokkerPlanckOperator& op, const DensityField& p0, double T,
                  const SolveOptions& options);

// Header `x1[,x2],p`, row-major over the grid.
void write_density_csv(std::ostream& out, const DensityField& field);
// Grid bounds, time, and mass as a `[section]` block of key = value lines.
void write_density_metadata(std::ostream& out, const DensityField& field,
                            std::string_view section = "density");

double l1_distance(const DensityField& a, const DensityField& b);
double linf_distance(const DensityField& a, const DensityField& b);

}  // namespace marcus::fpe
