#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "marcus/examples.hpp"
#include "marcus/fpe.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace marcus;
using namespace marcus::fpe;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

double gauss(double x, double m, double s) {
  return std::exp(-0.5 * (x - m) * (x - m) / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi));
}

Vec zero_drift(const Vec& x) { return Vec::Zero(x.size()); }

ModelSpec example1_model(levy::ScalarTriplet scalar, std::function<Vec(const Vec&)> drift = zero_drift) {
  return ModelSpec{"example1", std::move(drift), examples::example_noise("example1"),
                   levy::product_triplet({std::move(scalar)}), NormalInitial{vec({1.0}), vec({0.5})}};
}

// dX = -X dt + dB
ModelSpec ou_model() {
  return ModelSpec{"ou", [](const Vec& x) -> Vec { return -x; },
                   flow::NoiseCoefficient(1, 1, [](const Vec&) { return Mat::Constant(1, 1, 1.0); }),
                   levy::product_triplet({{0.0, 1.0, {}}}), NormalInitial{vec({0.0}), vec({1.0})}};
}

DensityField sampled(const Grid& grid, const std::function<double(const Vec&)>& p) {
  DensityField f{grid, std::vector<double>(grid.size()), 0.0};
  for (std::size_t c = 0; c < grid.size(); ++c) f.values[c] = p(grid.center(c));
  return f;
}

FokkerPlanckOperator make_op(const ModelSpec& m, const Grid& g, QuadratureOptions q = {}) {
  return FokkerPlanckOperator(m, build_jump_quadrature(m, g, q));
}

double max_abs(const std::vector<double>& v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS_WITH_AS(Grid({Axis{0.0, 1.0, 7}}), doctest::Contains("8 cells"), ValidationError);
  CHECK_THROWS_AS(Grid({Axis{1.0, 1.0, 16}}), ValidationError);
  CHECK_THROWS_AS(Grid({Axis{0.0, 1.0, 8}, Axis{0.0, 1.0, 8}, Axis{0.0, 1.0, 8}}), ValidationError);
  const Grid g({Axis{-1.0, 1.0, 8}, Axis{0.0, 4.0, 16}});
  CHECK(g.size() == 128);
  CHECK(g.cell_volume() == doctest::Approx(0.25 * 0.25));
  CHECK(g.locate(vec({-0.99, 3.99})) == 15);
  CHECK(g.locate(vec({1.01, 0.0})) == -1);
  CHECK(g.center(17) == vec({-0.625, 0.375}));
}

TEST_CASE("total mass") {
  const Grid g({Axis{0.0, 2.0, 8}});
  CHECK(total_mass(DensityField{g, std::vector<double>(8, 1.0), 0.0}) == doctest::Approx(2.0));
  const Grid g2({Axis{0.0, 1.0, 8}, Axis{0.0, 3.0, 8}});
  CHECK(total_mass(DensityField{g2, std::vector<double>(64, 0.5), 0.0}) == doctest::Approx(1.5));
  const DensityField p0 = initial_density(NormalInitial{vec({0.0}), vec({1.0})}, Grid({Axis{-8.0, 8.0, 400}}));
  CHECK(total_mass(p0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("effective drift and diffusion") {
  const auto noise2 = examples::example_noise("example2");
  ModelSpec m2{"example2", examples::example_default_drift("example2"), noise2,
               levy::product_triplet({{0.0, 1.0, {}}, {0.0, 0.0, {}}}),
               NormalInitial{vec({0.0, 0.0}), vec({1.0, 1.0})}};
  const Vec x = vec({0.7, -1.3});
  CHECK((effective_drift(m2, x) - vec({-1.3, -0.7})).norm() <= 1e-15);
  const Mat D = diffusion_matrix(m2, x);
  CHECK(D(0, 0) == 0.0);
  CHECK(D(0, 1) == 0.0);
  CHECK(D(1, 0) == 0.0);
  CHECK(D(1, 1) == doctest::Approx(0.5));

  const auto m1 = example1_model({0.3, 0.0, {}}, [](const Vec& y) -> Vec { return -y; });
  CHECK(effective_drift(m1, vec({2.0}))[0] == doctest::Approx(-2.0 + 0.3 * 2.0));
  // sigma = x with A = 1 adds the Stratonovich term x/2
  const auto mb = example1_model({0.0, 1.0, {}});
  CHECK(effective_drift(mb, vec({2.0}))[0] == doctest::Approx(1.0));
}

TEST_CASE("stable quadrature weights") {
  for (double alpha : {0.5, 1.0, 1.5, 1.9}) {
    const auto t = levy::product_triplet({{0.0, 0.0, {levy::AlphaStable{alpha}}}});
    QuadratureOptions q;
    q.epsilon = 0.05;
    q.outer_cutoff = 50.0;
    const auto nodes = jump_nodes(t, q);
    double sum = 0.0;
    for (const auto& n : nodes) {
      sum += n.weight;
      CHECK(std::abs(n.y[0]) >= 0.05);
      CHECK(std::abs(n.y[0]) <= 50.0);
    }
    CHECK(sum == doctest::Approx(2.0 * (std::pow(0.05, -alpha) - std::pow(50.0, -alpha)) / alpha).epsilon(1e-6));
  }
}

TEST_CASE("compound Poisson nodes") {
  levy::CompoundPoisson dirac{2.5, levy::DiscreteJumps{{0.7}, {1.0}}};
  const auto t = levy::product_triplet({{0.0, 0.0, {}}, {0.0, 0.0, {dirac}}});
  const auto nodes = jump_nodes(t, {});
  REQUIRE(nodes.size() == 1);
  CHECK(nodes[0].y == vec({0.0, 0.7}));
  CHECK(nodes[0].weight == 2.5);

  levy::CompoundPoisson normal{1.0, levy::NormalJumps{0.0, 0.3}};
  QuadratureOptions q;
  const auto both = levy::product_triplet({{0.0, 0.0, {dirac, normal, levy::AlphaStable{1.2}}}});
  const std::size_t stable_only = jump_nodes(levy::product_triplet({{0.0, 0.0, {levy::AlphaStable{1.2}}}}), q).size();
  const std::size_t normal_only = jump_nodes(levy::product_triplet({{0.0, 0.0, {normal}}}), q).size();
  CHECK(jump_nodes(both, q).size() == 1 + stable_only + normal_only);
  double w = 0.0;
  for (const auto& n : jump_nodes(levy::product_triplet({{0.0, 0.0, {normal}}}), q)) w += n.weight;
  CHECK(w == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("jump term against the exact shifted density") {
  // sigma = x, jumps of size c at rate lam: lam [p(x e^-c) e^-c - p(x)].
  const double c = 1.5;
  const double lam = 2.0;
  const auto m = example1_model({0.0, 0.0, {levy::CompoundPoisson{lam, levy::DiscreteJumps{{c}, {1.0}}}}});
  auto p = [](double x) { return gauss(x, 1.0, 0.5); };
  auto error = [&](int cells, JumpGather gather) {
    const Grid g({Axis{-4.0, 4.0, cells}});
    QuadratureOptions q;
    q.gather = gather;
    const auto op = make_op(m, g, q);
    const auto field = sampled(g, [&](const Vec& x) { return p(x[0]); });
    std::vector<double> out(g.size(), 0.0);
    op.add_jump_term(field.values, out);
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double x = g.center(k)[0];
      worst = std::max(worst, std::abs(out[k] - lam * (p(x * std::exp(-c)) * std::exp(-c) - p(x))));
    }
    return worst;
  };
  const double i1 = error(200, JumpGather::Interpolate);
  const double i2 = error(400, JumpGather::Interpolate);
  CHECK(i1 <= 1e-3);
  CHECK(i1 / i2 >= 3.5);
  const double c1 = error(200, JumpGather::CellAverage);
  const double c2 = error(400, JumpGather::CellAverage);
  CHECK(c2 <= 0.05);
  CHECK(c1 / c2 >= 1.6);  // first order
}

TEST_CASE("rhs is linear and vanishes on zero") {
  const auto m = example1_model({0.2, 0.5, {levy::AlphaStable{1.5}}}, [](const Vec& y) -> Vec { return -y; });
  const Grid g({Axis{-4.0, 4.0, 128}});
  QuadratureOptions q;
  q.epsilon = 0.1;
  q.outer_cutoff = 10.0;
  const auto op = make_op(m, g, q);
  const auto zero = DensityField{g, std::vector<double>(g.size(), 0.0), 0.0};
  CHECK(max_abs(apply_rhs(op, zero)) == 0.0);
  const auto p = sampled(g, [](const Vec& x) { return gauss(x[0], 0.5, 0.4); });
  const auto r = sampled(g, [](const Vec& x) { return gauss(x[0], -1.0, 0.7); });
  DensityField mix{g, std::vector<double>(g.size()), 0.0};
  for (std::size_t k = 0; k < g.size(); ++k) mix.values[k] = 2.0 * p.values[k] - 0.5 * r.values[k];
  const auto lp = apply_rhs(op, p);
  const auto lr = apply_rhs(op, r);
  const auto lm = apply_rhs(op, mix);
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) worst = std::max(worst, std::abs(lm[k] - 2.0 * lp[k] + 0.5 * lr[k]));
  CHECK(worst <= 1e-10 * max_abs(lm));
}

TEST_CASE("drift, diffusion and interior jumps conserve mass") {
  const auto m = example1_model({0.1, 0.8, {levy::CompoundPoisson{1.0, levy::NormalJumps{0.0, 0.3}}}},
                                [](const Vec& y) -> Vec { return y - y.array().cube().matrix(); });
  const Grid g({Axis{-6.0, 6.0, 240}});
  const auto op = make_op(m, g);
  const auto p = sampled(g, [](const Vec& x) { return gauss(x[0], 0.5, 0.4); });
  auto summed = [&](auto term) {
    std::vector<double> out(g.size(), 0.0);
    term(p.values, out);
    double s = 0.0;
    for (double v : out) s += v;
    return s * g.cell_volume();
  };
  CHECK(std::abs(summed([&](auto a, auto b) { op.add_drift_term(a, b); })) <= 1e-12);
  CHECK(std::abs(summed([&](auto a, auto b) { op.add_diffusion_term(a, b); })) <= 1e-12);
  CHECK(std::abs(summed([&](auto a, auto b) { op.add_jump_term(a, b); })) <= 1e-10);
}

TEST_CASE("Gaussian reduction matches the hand-written stencil") {
  const auto m = ou_model();
  const Grid g({Axis{-5.0, 5.0, 100}});
  const auto op = make_op(m, g);
  CHECK(op.quadrature().nodes.empty());
  const auto p = sampled(g, [](const Vec& x) { return gauss(x[0], 0.3, 0.8); });
  const double h = g.axis(0).width();
  std::vector<double> drift(g.size(), 0.0);
  std::vector<double> diff(g.size(), 0.0);
  std::vector<double> jump(g.size(), 0.0);
  op.add_drift_term(p.values, drift);
  op.add_diffusion_term(p.values, diff);
  op.add_jump_term(p.values, jump);
  auto at = [&](int k) { return k < 0 || k >= 100 ? 0.0 : p.values[static_cast<std::size_t>(k)]; };
  auto xc = [&](int k) { return -5.0 + (k + 0.5) * h; };
  for (int k = 0; k < 100; ++k) {
    const double dr = -((-xc(k + 1)) * at(k + 1) - (-xc(k - 1)) * at(k - 1)) / (2.0 * h);
    const double df = 0.5 * (at(k + 1) - 2.0 * at(k) + at(k - 1)) / (h * h);
    CHECK(std::abs(drift[static_cast<std::size_t>(k)] - dr) <= 1e-12);
    CHECK(std::abs(diff[static_cast<std::size_t>(k)] - df) <= 1e-12);
    CHECK(jump[static_cast<std::size_t>(k)] == 0.0);
  }
}

TEST_CASE("OU stationary residual is second order") {
  const auto m = ou_model();
  auto residual = [&](int cells) {
    const Grid g({Axis{-6.0, 6.0, cells}});
    const auto op = make_op(m, g);
    return max_abs(apply_rhs(op, sampled(g, [](const Vec& x) { return gauss(x[0], 0.0, std::sqrt(0.5)); })));
  };
  const double r1 = residual(120);
  const double r2 = residual(240);
  CHECK(r1 / r2 >= 3.5);
  CHECK(r1 / r2 <= 4.5);
}

TEST_CASE("solve with T = 0 returns the initial density") {
  const auto m = ou_model();
  const Grid g({Axis{-6.0, 6.0, 64}});
  const auto p0 = initial_density(m.initial, g);
  const auto r = solve(m, p0, 0.0, {});
  REQUIRE(r.outputs.size() == 1);
  CHECK(r.outputs[0].values == p0.values);
  CHECK(r.steps == 0);

  // a field that starts late ends at t0 + T
  auto late = p0;
  late.time = 0.3;
  const auto rl = solve(m, late, 0.2, {});
  CHECK(rl.outputs[0].time == doctest::Approx(0.5));
  CHECK(rl.steps > 0);
}

TEST_CASE("pure translation converges at second order") {
  const ModelSpec m{"shift", [](const Vec& x) -> Vec { return Vec::Ones(x.size()); },
                    flow::NoiseCoefficient(1, 1, [](const Vec&) { return Mat::Zero(1, 1); }),
                    levy::product_triplet({{0.0, 0.0, {}}}), NormalInitial{vec({-1.0}), vec({0.5})}};
  auto error = [&](int cells) {
    const Grid g({Axis{-5.0, 5.0, cells}});
    const auto r = solve(m, initial_density(m.initial, g), 1.0, {});
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
      worst = std::max(worst, std::abs(r.outputs[0].values[k] - gauss(g.center(k)[0], 0.0, 0.5)));
    return worst;
  };
  const double e1 = error(200);
  const double e2 = error(400);
  CHECK(e1 / e2 >= 3.5);
}

TEST_CASE("solver guards") {
  const auto m = ou_model();
  const Grid g({Axis{-6.0, 6.0, 64}});
  const auto p0 = initial_density(m.initial, g);
  const auto op = make_op(m, g);
  SolveOptions too_big;
  too_big.dt = 2.0 * op.stable_dt();
  CHECK_THROWS_WITH_AS(solve(op, p0, 1.0, too_big), doctest::Contains("stability bound"), ValidationError);

  QuadratureOptions tiny;
  tiny.cache_cap_bytes = 16;
  const auto mj = example1_model({0.0, 0.0, {levy::AlphaStable{1.5}}});
  CHECK_THROWS_AS(build_jump_quadrature(mj, g, tiny), CacheLimitError);

  // A jump of -5 under sigma = x contracts by e^5 toward 0: the point gather
  // reads p(0) e^5 at the central cell and the density spikes in one step.
  const auto spike = example1_model({0.0, 0.0, {levy::CompoundPoisson{1.0, levy::DiscreteJumps{{-5.0}, {1.0}}}}});
  const Grid odd({Axis{-4.0, 4.0, 161}});
  SolveOptions interp;
  interp.quadrature.gather = JumpGather::Interpolate;
  const auto narrow = initial_density(NormalInitial{vec({0.0}), vec({0.3})}, odd);
  CHECK_THROWS_AS(solve(spike, narrow, 1.0, interp), InstabilityError);
}

TEST_CASE("density csv") {
  const Grid g({Axis{0.0, 1.0, 8}, Axis{0.0, 2.0, 8}});
  const DensityField f{g, std::vector<double>(64, 0.5), 0.0};
  std::ostringstream out;
  write_density_csv(out, f);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "x1,x2,p");
  std::getline(in, line);
  CHECK(line == "0.0625,0.125,0.5");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 64);
  std::ostringstream meta;
  write_density_metadata(meta, f, "density_000.csv");
  CHECK(meta.str().rfind("[density_000.csv]\n", 0) == 0);
  const DensityField other{Grid({Axis{0.0, 1.0, 8}}), std::vector<double>(8, 0.0), 0.0};
  CHECK_THROWS_AS(l1_distance(f, other), ValidationError);
}
