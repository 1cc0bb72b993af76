#include "marcus/fpe.hpp"

#include "marcus/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace marcus::fpe {
namespace {

// Visits the (flat index, weight) pairs of the multilinear stencil at x;
// neighbours outside the grid are dropped (zero far field).
template <class Visit>
void for_each_stencil(const Grid& grid, const Vec& x, Visit&& visit) {
  int lo[2] = {0, 0};
  double t[2] = {0.0, 0.0};
  for (int k = 0; k < grid.dim(); ++k) {
    const Axis& ax = grid.axis(k);
    const double s = (x[k] - ax.lower) / ax.width() - 0.5;
    if (!(s > -1.0 && s < ax.cells)) return;
    const double f = std::floor(s);
    lo[k] = static_cast<int>(f);
    t[k] = s - f;
  }
  const int corners = 1 << grid.dim();
  const int n1 = grid.dim() == 2 ? grid.axis(1).cells : 1;
  for (int corner = 0; corner < corners; ++corner) {
    double w = 1.0;
    std::int64_t flat = 0;
    bool inside = true;
    for (int k = 0; k < grid.dim(); ++k) {
      const int bit = (corner >> k) & 1;
      const int i = lo[k] + bit;
      if (i < 0 || i >= grid.axis(k).cells) {
        inside = false;
        break;
      }
      w *= bit ? t[k] : 1.0 - t[k];
      flat += k == 0 ? static_cast<std::int64_t>(i) * n1 : i;
    }
    if (inside && w != 0.0) visit(static_cast<std::size_t>(flat), w);
  }
}

// Neighbour indexing on the flat row-major layout.
struct Layout {
  int dim;
  int cells[2];
  std::size_t stride[2];

  explicit Layout(const Grid& g) : dim(g.dim()) {
    cells[0] = g.axis(0).cells;
    cells[1] = dim == 2 ? g.axis(1).cells : 1;
    stride[0] = static_cast<std::size_t>(cells[1]);
    stride[1] = 1;
  }
  int coord(std::size_t c, int k) const {
    return k == 0 ? static_cast<int>(c / stride[0]) : static_cast<int>(c % stride[0]);
  }
};

// Value of a[c + off0 * e0 + off1 * e1], zero outside the grid.
inline double at(std::span<const double> a, const Layout& L, std::size_t c, int i0, int i1, int off0,
                 int off1) {
  const int j0 = i0 + off0;
  const int j1 = i1 + off1;
  if (j0 < 0 || j0 >= L.cells[0] || j1 < 0 || j1 >= L.cells[1]) return 0.0;
  return a[c + static_cast<std::ptrdiff_t>(off0) * static_cast<std::ptrdiff_t>(L.stride[0]) + off1];
}

void push_node(std::vector<JumpNode>& nodes, int n, std::size_t coordinate, std::size_t component,
               double y, double weight) {
  if (y == 0.0 || !(weight > 0.0)) return;
  JumpNode node{Vec::Zero(n), weight, component};
  node.y[static_cast<Eigen::Index>(coordinate)] = y;
  nodes.push_back(std::move(node));
}

// Gauss-Legendre over [a, b] split at -1 and 1 so the compensator cutoff
// falls on piece boundaries.
std::vector<quadrature::Node> split_rule(int count, double a, double b) {
  std::vector<double> cuts{a};
  for (double c : {-1.0, 1.0})
    if (c > a && c < b) cuts.push_back(c);
  cuts.push_back(b);
  std::vector<quadrature::Node> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const auto piece = quadrature::gauss_legendre(count, cuts[i], cuts[i + 1]);
    out.insert(out.end(), piece.begin(), piece.end());
  }
  return out;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

// Cell-average gather in 1D: row c holds (1/h) int_{H~(cell c)} p dy for the
// piecewise-constant p, which equals the cell average of p(H~(x)) |dH~/dx|.
// Every source cell's mass lands somewhere (or leaves the grid), and a point
// fixed by H~ that sits on a cell edge is never crossed.
void build_rows_1d(const ModelSpec& model, const QuadratureOptions& options, JumpQuadrature& q) {
  const Axis& ax = q.grid.axis(0);
  const auto cells = static_cast<std::size_t>(ax.cells);
  const double h = ax.width();
  std::vector<double> edges(q.nodes.size() * (cells + 1));
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    for (std::size_t e = 0; e <= cells; ++e) {
      Vec x(1);
      x[0] = ax.lower + static_cast<double>(e) * h;
      edges[k * (cells + 1) + e] =
          flow::jump_inverse(x, q.nodes[k].y, model.noise, options.flow_steps, options.jump_map).point[0];
    }
  }
  std::vector<double> row(cells);
  q.row_start.reserve(cells + 1);
  q.row_start.push_back(0);
  for (std::size_t c = 0; c < cells; ++c) {
    std::fill(row.begin(), row.end(), 0.0);
    std::size_t first = cells;
    std::size_t last = 0;
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      // image in cell units, cell j spanning [j, j + 1)
      const double a = (edges[k * (cells + 1) + c] - ax.lower) / h;
      const double b = (edges[k * (cells + 1) + c + 1] - ax.lower) / h;
      const double lo = std::max(std::min(a, b), 0.0);
      const double hi = std::min(std::max(a, b), static_cast<double>(cells));
      if (!(hi > lo)) continue;
      const auto j0 = static_cast<std::size_t>(std::floor(lo));
      const auto j1 = std::min(static_cast<std::size_t>(std::ceil(hi)), cells) - 1;
      for (std::size_t j = j0; j <= j1; ++j) {
        const double w = std::min(hi, static_cast<double>(j + 1)) - std::max(lo, static_cast<double>(j));
        if (!(w > 0.0)) continue;
        row[j] += q.nodes[k].weight * w;
        first = std::min(first, j);
        last = std::max(last, j);
      }
    }
    for (std::size_t j = first; j <= last && first < cells; ++j)
      if (row[j] != 0.0) q.entries.push_back({static_cast<std::uint32_t>(j), row[j]});
    q.row_start.push_back(q.entries.size());
  }
}

}  // namespace

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.empty() || axes_.size() > 2) throw ValidationError("grid: dimension must be 1 or 2");
  for (const auto& ax : axes_) {
    if (!(ax.lower < ax.upper) || !std::isfinite(ax.lower) || !std::isfinite(ax.upper))
      throw ValidationError("grid: bounds must be finite with lower < upper");
    if (ax.cells < 8) throw ValidationError("grid: at least 8 cells per axis");
  }
}

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (const auto& ax : axes_) n *= static_cast<std::size_t>(ax.cells);
  return n;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (const auto& ax : axes_) v *= ax.width();
  return v;
}

Vec Grid::center(std::size_t flat) const {
  const Layout L(*this);
  Vec x(dim());
  for (int k = 0; k < dim(); ++k) x[k] = axes_[static_cast<std::size_t>(k)].center(L.coord(flat, k));
  return x;
}

std::int64_t Grid::locate(const Vec& x) const {
  std::int64_t flat = 0;
  for (int k = 0; k < dim(); ++k) {
    const Axis& ax = axes_[static_cast<std::size_t>(k)];
    const double s = (x[k] - ax.lower) / ax.width();
    if (!(s >= 0.0 && s < ax.cells)) return -1;
    const auto i = std::min(static_cast<std::int64_t>(s), static_cast<std::int64_t>(ax.cells - 1));
    flat = k == 0 ? i : flat * ax.cells + i;
  }
  return flat;
}

double total_mass(const DensityField& field) {
  double sum = 0.0;
  for (double v : field.values) sum += v;
  return sum * field.grid.cell_volume();
}

DensityField initial_density(const InitialState& init, const Grid& grid) {
  const auto* g = std::get_if<NormalInitial>(&init);
  if (g == nullptr) throw ValidationError("initial: a density needs a normal initial state");
  if (g->mean.size() != grid.dim()) throw ValidationError("initial: dimension does not match grid");
  DensityField field{grid, std::vector<double>(grid.size()), 0.0};
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const Vec x = grid.center(c);
    double p = 1.0;
    for (int k = 0; k < grid.dim(); ++k)
      p *= quadrature::normal_pdf((x[k] - g->mean[k]) / g->sd[k]) / g->sd[k];
    field.values[c] = p;
  }
  return field;
}

Vec effective_drift(const ModelSpec& model, const Vec& x) {
  const Mat sigma = model.noise.sigma(x);
  Vec a = model.drift(x) + sigma * model.driver.b();
  if (model.driver.has_gaussian_part())
    a += stratonovich_correction(model.noise, model.driver.a(), x);
  return a;
}

Mat diffusion_matrix(const ModelSpec& model, const Vec& x) {
  const Mat sigma = model.noise.sigma(x);
  return 0.5 * sigma * model.driver.a() * sigma.transpose();
}

std::vector<JumpNode> jump_nodes(const levy::LevyTriplet& triplet, const QuadratureOptions& options) {
  std::vector<JumpNode> nodes;
  const int n = triplet.n();
  for (std::size_t ci = 0; ci < triplet.components().size(); ++ci) {
    const auto& comp = triplet.components()[ci];
    if (const auto* st = std::get_if<levy::AlphaStable>(&comp.law)) {
      const double eps = options.epsilon;
      const double outer = options.outer_cutoff;
      if (!(eps > 0.0 && eps < 1.0 && outer > 1.0 && std::isfinite(outer)))
        throw ValidationError("quadrature: stable components need 0 < epsilon < 1 < R");
      if (options.nodes_per_decade < 1) throw ValidationError("quadrature: nodes_per_decade >= 1");
      const double alpha = st->alpha;
      auto add_band = [&](double a, double b) {
        const int cells = std::max(1, static_cast<int>(std::ceil(options.nodes_per_decade *
                                                                  std::log10(b / a) - 1e-9)));
        const double ratio = std::pow(b / a, 1.0 / cells);
        double left = a;
        for (int k = 0; k < cells; ++k) {
          const double right = k + 1 == cells ? b : left * ratio;
          const double mass = (std::pow(left, -alpha) - std::pow(right, -alpha)) / alpha;
          const double first = std::abs(alpha - 1.0) < 1e-12
                                   ? std::log(right / left)
                                   : (std::pow(right, 1.0 - alpha) - std::pow(left, 1.0 - alpha)) /
                                         (1.0 - alpha);
          const double y = first / mass;  // nu-weighted centroid of the cell
          push_node(nodes, n, comp.coordinate, ci, y, mass);
          push_node(nodes, n, comp.coordinate, ci, -y, mass);
          left = right;
        }
      };
      add_band(eps, 1.0);
      add_band(1.0, outer);
      continue;
    }
    const auto& cp = std::get<levy::CompoundPoisson>(comp.law);
    if (options.rho_nodes < 1) throw ValidationError("quadrature: rho_nodes >= 1");
    if (const auto* table = std::get_if<levy::DiscreteJumps>(&cp.sizes)) {
      for (std::size_t i = 0; i < table->values.size(); ++i)
        push_node(nodes, n, comp.coordinate, ci, table->values[i], cp.rate * table->probs[i]);
    } else {
      double a = 0.0;
      double b = 0.0;
      if (const auto* g = std::get_if<levy::NormalJumps>(&cp.sizes)) {
        a = g->mean - 8.0 * g->sd;
        b = g->mean + 8.0 * g->sd;
      } else {
        const auto& u = std::get<levy::UniformJumps>(cp.sizes);
        a = u.lower;
        b = u.upper;
      }
      for (const auto& q : split_rule(options.rho_nodes, a, b))
        push_node(nodes, n, comp.coordinate, ci, q.x, cp.rate * q.w * levy::density(cp.sizes, q.x));
    }
  }
  return nodes;
}

JumpQuadrature build_jump_quadrature(const ModelSpec& model, const Grid& grid,
                                     const QuadratureOptions& options) {
  if (grid.dim() != model.d()) throw ValidationError("quadrature: grid dimension must equal d");
  JumpQuadrature q;
  q.grid = grid;
  q.nodes = jump_nodes(model.driver, options);
  const int d = model.d();
  const std::size_t cells = grid.size();
  const std::size_t pairs = cells * q.nodes.size();
  const std::size_t corners = std::size_t{1} << d;
  const std::size_t estimate =
      pairs * (static_cast<std::size_t>(d + 1) * sizeof(double) + corners * sizeof(JumpQuadrature::Entry));
  if (estimate > options.cache_cap_bytes) {
    std::ostringstream os;
    os << "jump quadrature cache needs about " << estimate << " bytes, cap is "
       << options.cache_cap_bytes;
    throw CacheLimitError(os.str(), estimate);
  }

  q.compensator = Vec::Zero(model.n());
  for (const auto& node : q.nodes) {
    q.total_weight += node.weight;
    if (node.y.norm() < 1.0) q.compensator += node.weight * node.y;
  }

  q.points.resize(pairs * static_cast<std::size_t>(d));
  q.jac_det.resize(pairs);
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    for (std::size_t c = 0; c < cells; ++c) {
      const flow::FlowResult r = flow::jump_inverse(grid.center(c), q.nodes[k].y, model.noise,
                                                    options.flow_steps, options.jump_map);
      const std::size_t pair = k * cells + c;
      for (int i = 0; i < d; ++i) q.points[pair * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] = r.point[i];
      q.jac_det[pair] = r.jac_det;
    }
  }
  if (d == 1 && options.gather == JumpGather::CellAverage) {
    build_rows_1d(model, options, q);
    return q;
  }

  std::vector<std::map<std::uint32_t, double>> rows(cells);
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    for (std::size_t c = 0; c < cells; ++c) {
      const std::size_t pair = k * cells + c;
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = q.points[pair * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)];
      const double scale = q.nodes[k].weight * q.jac_det[pair];
      for_each_stencil(grid, x, [&](std::size_t idx, double w) {
        rows[c][static_cast<std::uint32_t>(idx)] += scale * w;
      });
    }
  }
  q.row_start.reserve(cells + 1);
  q.row_start.push_back(0);
  for (const auto& row : rows) {
    for (const auto& [idx, coeff] : row) q.entries.push_back({idx, coeff});
    q.row_start.push_back(q.entries.size());
  }
  return q;
}

double interpolate(const DensityField& field, const Vec& x) {
  double acc = 0.0;
  for_each_stencil(field.grid, x, [&](std::size_t idx, double w) { acc += w * field.values[idx]; });
  return acc;
}

FokkerPlanckOperator::FokkerPlanckOperator(const ModelSpec& model, JumpQuadrature quadrature)
    : d_(model.d()), quad_(std::move(quadrature)) {
  if (quad_.grid.dim() != d_) throw ValidationError("operator: grid dimension must equal d");
  const ModelSpec& effective = model;
  const std::size_t cells = quad_.grid.size();
  const auto du = static_cast<std::size_t>(d_);
  drift_.resize(cells * du);
  diffusion_.resize(cells * du * du);
  compensator_.resize(cells * du);
  for (std::size_t c = 0; c < cells; ++c) {
    const Vec x = quad_.grid.center(c);
    const Vec a = effective_drift(effective, x);
    const Mat D = diffusion_matrix(effective, x);
    const Vec comp = effective.noise.sigma(x) * quad_.compensator;
    for (std::size_t i = 0; i < du; ++i) {
      drift_[c * du + i] = a[static_cast<Eigen::Index>(i)];
      compensator_[c * du + i] = comp[static_cast<Eigen::Index>(i)];
      for (std::size_t m = 0; m < du; ++m)
        diffusion_[(c * du + i) * du + m] = D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
    }
  }
}

void FokkerPlanckOperator::add_drift_term(std::span<const double> p, std::span<double> out) const {
  const Layout L(quad_.grid);
  const auto du = static_cast<std::size_t>(d_);
  std::vector<double> flux(p.size());
  for (int i = 0; i < d_; ++i) {
    const double inv = 1.0 / (2.0 * quad_.grid.axis(i).width());
    for (std::size_t c = 0; c < p.size(); ++c) flux[c] = drift_[c * du + static_cast<std::size_t>(i)] * p[c];
    for (std::size_t c = 0; c < p.size(); ++c) {
      const int i0 = L.coord(c, 0);
      const int i1 = d_ == 2 ? L.coord(c, 1) : 0;
      const int o0 = i == 0 ? 1 : 0;
      const int o1 = i == 1 ? 1 : 0;
      out[c] -= (at(flux, L, c, i0, i1, o0, o1) - at(flux, L, c, i0, i1, -o0, -o1)) * inv;
    }
  }
}

void FokkerPlanckOperator::add_diffusion_term(std::span<const double> p, std::span<double> out) const {
  const Layout L(quad_.grid);
  const auto du = static_cast<std::size_t>(d_);
  std::vector<double> g(p.size());
  for (int i = 0; i < d_; ++i) {
    for (int m = i; m < d_; ++m) {
      const auto entry = static_cast<std::size_t>(i) * du + static_cast<std::size_t>(m);
      bool any = false;
      for (std::size_t c = 0; c < p.size(); ++c) {
        g[c] = diffusion_[c * du * du + entry] * p[c];
        any = any || g[c] != 0.0;
      }
      if (!any) continue;
      const double hi = quad_.grid.axis(i).width();
      const double hm = quad_.grid.axis(m).width();
      for (std::size_t c = 0; c < p.size(); ++c) {
        const int i0 = L.coord(c, 0);
        const int i1 = d_ == 2 ? L.coord(c, 1) : 0;
        if (i == m) {
          const int o0 = i == 0 ? 1 : 0;
          const int o1 = i == 1 ? 1 : 0;
          out[c] += (at(g, L, c, i0, i1, o0, o1) - 2.0 * g[c] + at(g, L, c, i0, i1, -o0, -o1)) / (hi * hi);
        } else {
          // d1 d2 and d2 d1 of the symmetric entry
          const double cross = at(g, L, c, i0, i1, 1, 1) - at(g, L, c, i0, i1, 1, -1) -
                               at(g, L, c, i0, i1, -1, 1) + at(g, L, c, i0, i1, -1, -1);
          out[c] += 2.0 * cross / (4.0 * hi * hm);
        }
      }
    }
  }
}

void FokkerPlanckOperator::add_jump_term(std::span<const double> p, std::span<double> out) const {
  if (quad_.nodes.empty()) return;
  const Layout L(quad_.grid);
  const auto du = static_cast<std::size_t>(d_);
  for (std::size_t c = 0; c < p.size(); ++c) {
    double gather = 0.0;
    for (std::size_t e = quad_.row_start[c]; e < quad_.row_start[c + 1]; ++e)
      gather += quad_.entries[e].coeff * p[quad_.entries[e].index];
    out[c] += gather - quad_.total_weight * p[c];
  }
  if (quad_.compensator.isZero(0.0)) return;
  std::vector<double> flux(p.size());
  for (int i = 0; i < d_; ++i) {
    const double inv = 1.0 / (2.0 * quad_.grid.axis(i).width());
    for (std::size_t c = 0; c < p.size(); ++c)
      flux[c] = compensator_[c * du + static_cast<std::size_t>(i)] * p[c];
    for (std::size_t c = 0; c < p.size(); ++c) {
      const int i0 = L.coord(c, 0);
      const int i1 = d_ == 2 ? L.coord(c, 1) : 0;
      const int o0 = i == 0 ? 1 : 0;
      const int o1 = i == 1 ? 1 : 0;
      out[c] += (at(flux, L, c, i0, i1, o0, o1) - at(flux, L, c, i0, i1, -o0, -o1)) * inv;
    }
  }
}

void FokkerPlanckOperator::apply(std::span<const double> p, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  add_drift_term(p, out);
  add_diffusion_term(p, out);
  add_jump_term(p, out);
}

double FokkerPlanckOperator::stable_dt() const {
  const auto du = static_cast<std::size_t>(d_);
  double diff_rate = 0.0;
  double adv_rate = 0.0;
  for (std::size_t c = 0; c < quad_.grid.size(); ++c) {
    double diff = 0.0;
    double adv = 0.0;
    for (std::size_t i = 0; i < du; ++i) {
      const double hi = quad_.grid.axis(static_cast<int>(i)).width();
      adv += std::abs(drift_[c * du + i] - compensator_[c * du + i]) / hi;
      for (std::size_t m = 0; m < du; ++m) {
        const double hm = quad_.grid.axis(static_cast<int>(m)).width();
        diff += 2.0 * std::abs(diffusion_[(c * du + i) * du + m]) / (hi * hm);
      }
    }
    diff_rate = std::max(diff_rate, diff);
    adv_rate = std::max(adv_rate, adv);
  }
  const double jump_rate = quad_.total_weight;
  const double worst = std::max({diff_rate, adv_rate, jump_rate});
  if (worst <= 0.0) return std::numeric_limits<double>::infinity();
  return 0.4 / worst;
}

std::vector<double> apply_rhs(const FokkerPlanckOperator& op, const DensityField& field) {
  if (field.values.size() != op.grid().size()) throw ValidationError("apply_rhs: grid mismatch");
  std::vector<double> out(field.values.size());
  op.apply(field.values, out);
  return out;
}

DensityField step(const FokkerPlanckOperator& op, const DensityField& field, double dt) {
  const std::size_t n = field.values.size();
  std::vector<double> k(n);
  op.apply(field.values, k);
  std::vector<double> half(n);
  for (std::size_t c = 0; c < n; ++c) half[c] = field.values[c] + 0.5 * dt * k[c];
  op.apply(half, k);
  DensityField next{field.grid, std::vector<double>(n), field.time + dt};
  for (std::size_t c = 0; c < n; ++c) next.values[c] = field.values[c] + dt * k[c];
  return next;
}

SolveResult solve(const ModelSpec& model, const DensityField& p0, double T, const SolveOptions& options) {
  ModelSpec effective = model;
  if (options.quadrature.small_jump_gaussian)
    effective.driver = levy::with_small_jump_diffusion(model.driver, options.quadrature.epsilon);
  FokkerPlanckOperator op(effective, build_jump_quadrature(effective, p0.grid, options.quadrature));
  return solve(op, p0, T, options);
}

SolveResult solve(const FokkerPlanckOperator& op, const DensityField& p0, double T,
                  const SolveOptions& options) {
  if (!(T >= 0.0)) throw ValidationError("solve: T must be >= 0");
  if (p0.values.size() != op.grid().size()) throw ValidationError("solve: grid mismatch");
  const double bound = op.stable_dt();
  double dt = bound;
  if (options.dt > 0.0) {
    if (options.dt > bound * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "solve: dt " << options.dt << " exceeds the stability bound " << bound;
      throw ValidationError(os.str());
    }
    dt = options.dt;
  }
  std::vector<double> times = options.output_times;
  if (times.empty()) times.push_back(p0.time + T);
  std::sort(times.begin(), times.end());
  for (double t : times)
    if (t < p0.time - 1e-15 || t > p0.time + T + 1e-12)
      throw ValidationError("solve: output times must lie in [t0, t0 + T]");

  SolveResult result;
  result.dt = dt;
  result.initial_mass = total_mass(p0);
  result.min_before_clip = 0.0;
  DensityField field = p0;
  for (double target : times) {
    const double span = target - field.time;
    if (span > 0.0) {
      const auto count = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
      const double h = span / static_cast<double>(count);
      for (std::size_t s = 0; s < count; ++s) {
        double before = 0.0;
        for (double v : field.values) before = std::max(before, std::abs(v));
        DensityField next = step(op, field, h);
        double after = 0.0;
        bool finite = true;
        for (double v : next.values) {
          after = std::max(after, std::abs(v));
          finite = finite && std::isfinite(v);
        }
        if (!finite || (before > 0.0 && after > 10.0 * before)) {
          std::ostringstream os;
          os << "solve: instability at t=" << next.time << " (max|p| " << before << " -> " << after
             << ", dt=" << h << ")";
          throw InstabilityError(os.str());
        }
        field = std::move(next);
        ++result.steps;
      }
      field.time = target;
    }
    DensityField out = field;
    double lo = 0.0;
    double hi = 0.0;
    for (double& v : out.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      v = std::max(v, 0.0);
    }
    result.min_before_clip = std::min(result.min_before_clip, lo);
    result.max_value = std::max(result.max_value, hi);
    const double mass = total_mass(out);
    if (std::abs(mass - result.initial_mass) > 1e-3) {
      std::ostringstream os;
      os << "t=" << target << ": mass " << mass << " drifted from " << result.initial_mass;
      if (options.renormalize && mass > 0.0) {
        for (double& v : out.values) v *= result.initial_mass / mass;
        result.renormalized = true;
        os << ", renormalized";
      }
      result.events.push_back(os.str());
    }
    result.outputs.push_back(std::move(out));
  }
  return result;
}

void write_density_csv(std::ostream& out, const DensityField& field) {
  const Grid& g = field.grid;
  out << (g.dim() == 1 ? "x1,p\n" : "x1,x2,p\n");
  for (std::size_t c = 0; c < g.size(); ++c) {
    const Vec x = g.center(c);
    for (int k = 0; k < g.dim(); ++k) out << format_double(x[k]) << ',';
    out << format_double(field.values[c]) << '\n';
  }
}

void write_density_metadata(std::ostream& out, const DensityField& field, std::string_view section) {
  out << '[' << section << "]\n";
  out << "dimension = " << field.grid.dim() << '\n';
  for (int k = 0; k < field.grid.dim(); ++k) {
    const Axis& ax = field.grid.axis(k);
    out << "axis" << k + 1 << " = " << format_double(ax.lower) << ' ' << format_double(ax.upper) << ' '
        << ax.cells << '\n';
  }
  out << "time = " << format_double(field.time) << '\n';
  out << "mass = " << format_double(total_mass(field)) << '\n';
}

namespace {
void require_same_grid(const DensityField& a, const DensityField& b) {
  if (a.values.size() != b.values.size() || a.grid.dim() != b.grid.dim())
    throw ValidationError("distance: fields live on different grids");
  for (int k = 0; k < a.grid.dim(); ++k) {
    const Axis& x = a.grid.axis(k);
    const Axis& y = b.grid.axis(k);
    if (x.cells != y.cells || x.lower != y.lower || x.upper != y.upper)
      throw ValidationError("distance: fields live on different grids");
  }
}
}  // namespace

double l1_distance(const DensityField& a, const DensityField& b) {
  require_same_grid(a, b);
  double sum = 0.0;
  for (std::size_t c = 0; c < a.values.size(); ++c) sum += std::abs(a.values[c] - b.values[c]);
  return sum * a.grid.cell_volume();
}

double linf_distance(const DensityField& a, const DensityField& b) {
  require_same_grid(a, b);
  double m = 0.0;
  for (std::size_t c = 0; c < a.values.size(); ++c) m = std::max(m, std::abs(a.values[c] - b.values[c]));
  return m;
}

}  // namespace marcus::fpe
