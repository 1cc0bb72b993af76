#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "marcus/examples.hpp"
#include "marcus/flow.hpp"

#include <cmath>
#include <random>

using namespace marcus;
using namespace marcus::flow;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

NoiseCoefficient scalar_linear() {
  return NoiseCoefficient(1, 1, [](const Vec& x) {
    Mat s(1, 1);
    s << x[0];
    return s;
  });
}

// Random (u, v) in [-3, 3]^d x [-2, 2]^n.
std::pair<Vec, Vec> draw(int d, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uu(-3.0, 3.0);
  std::uniform_real_distribution<double> uv(-2.0, 2.0);
  Vec u(d);
  Vec v(n);
  for (int k = 0; k < d; ++k) u[k] = uu(rng);
  for (int k = 0; k < n; ++k) v[k] = uv(rng);
  return {u, v};
}

}  // namespace

TEST_CASE("zero jump leaves the state alone") {
  for (const auto& id : examples::example_ids()) {
    const auto noise = examples::example_noise(id);
    const Vec u = Vec::Constant(noise.d(), 0.7);
    const Vec v = Vec::Zero(noise.n());
    CHECK(marcus_forward(u, v, noise) == u);
    const FlowResult r = marcus_inverse(u, v, noise);
    CHECK(r.point == u);
    CHECK(r.jac_det == 1.0);
    CHECK(check_inverse(u, v, noise) == 0.0);
  }
}

TEST_CASE("linear scalar flow doubles with v = ln 2") {
  const auto noise = scalar_linear();
  CHECK(marcus_forward(vec({1.0}), vec({std::log(2.0)}), noise, 200)[0] ==
        doctest::Approx(2.0).epsilon(1e-12));
  const FlowResult r = marcus_inverse(vec({2.0}), vec({std::log(2.0)}), noise, 200);
  CHECK(r.point[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.jac_det == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cross-coupled linear flow from (1, 0) along (1, 1)") {
  // Phi1' = Phi2, Phi2' = Phi1: (cosh r, sinh r) at r = 1.
  const auto noise = examples::example_noise("example3");
  const Vec x = marcus_forward(vec({1.0, 0.0}), vec({1.0, 1.0}), noise, 200);
  CHECK(x[0] == doctest::Approx(std::cosh(1.0)).epsilon(1e-10));
  CHECK(x[1] == doctest::Approx(std::sinh(1.0)).epsilon(1e-10));
  const FlowResult back = marcus_inverse(vec({1.0, 0.0}), vec({1.0, 1.0}), noise, 200);
  CHECK(back.point[0] == doctest::Approx(1.5431).epsilon(1e-4));
  CHECK(back.point[1] == doctest::Approx(-1.1752).epsilon(1e-4));
}

TEST_CASE("inverse property on the example models") {
  std::mt19937_64 rng(11);
  for (const auto& id : examples::example_ids()) {
    const auto noise = examples::example_noise(id);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto [u, v] = draw(noise.d(), noise.n(), rng);
      worst = std::max(worst, check_inverse(u, v, noise, kVerificationSteps));
    }
    INFO(id);
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("constant sigma inverts to machine precision") {
  Mat s(2, 3);
  s << 1.0, -0.5, 2.0, 0.3, 0.0, -1.2;
  const NoiseCoefficient noise(2, 3, [s](const Vec&) { return s; });
  const Vec u = vec({0.4, -2.0});
  const Vec v = vec({1.5, -0.7, 0.25});
  CHECK(check_inverse(u, v, noise, 7) <= 1e-14);
  CHECK(marcus_inverse(u, v, noise, 7).jac_det == 1.0);
}

TEST_CASE("semigroup: two half flows equal one full flow") {
  std::mt19937_64 rng(12);
  for (const auto& id : examples::example_ids()) {
    const auto noise = examples::example_noise(id);
    for (int i = 0; i < 20; ++i) {
      const auto [u, v] = draw(noise.d(), noise.n(), rng);
      const Vec half = marcus_forward(marcus_forward(u, v / 2.0, noise, 200), v / 2.0, noise, 200);
      const Vec full = marcus_forward(u, v, noise, 200);
      CHECK((half - full).norm() <= 1e-10 * (1.0 + full.norm()));
    }
  }
}

TEST_CASE("Liouville determinant matches finite differences") {
  std::mt19937_64 rng(13);
  for (const auto& id : examples::example_ids()) {
    const auto noise = examples::example_noise(id);
    const int d = noise.d();
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const auto [u, v] = draw(d, noise.n(), rng);
      const FlowResult r = marcus_inverse(u, v, noise, kVerificationSteps);
      Mat jac(d, d);
      const double h = 1e-5 * (1.0 + u.norm());
      for (int m = 0; m < d; ++m) {
        Vec up = u;
        Vec um = u;
        up[m] += h;
        um[m] -= h;
        jac.col(m) = (marcus_inverse(up, v, noise, kVerificationSteps).point -
                      marcus_inverse(um, v, noise, kVerificationSteps).point) /
                     (2.0 * h);
      }
      worst = std::max(worst, std::abs(r.jac_det - jac.determinant()) / std::abs(r.jac_det));
    }
    INFO(id);
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("fourth-order convergence of the forward map") {
  const auto noise = examples::example_noise("example3");
  const auto& closed = *noise.closed_form();
  const Vec u = vec({0.8, -1.1});
  const Vec v = vec({1.7, 1.3});
  const Vec exact = closed.forward(u, v);
  const double e1 = (marcus_forward(u, v, noise, 8) - exact).norm();
  const double e2 = (marcus_forward(u, v, noise, 16) - exact).norm();
  const double e3 = (marcus_forward(u, v, noise, 32) - exact).norm();
  CHECK(std::log2(e1 / e2) >= 3.7);
  CHECK(std::log2(e2 / e3) >= 3.7);
}

TEST_CASE("finite-difference gradient fallback") {
  const auto analytic = examples::example_noise("example3");
  const NoiseCoefficient fd(2, 2, [&](const Vec& x) { return analytic.sigma(x); });
  CHECK_FALSE(fd.has_analytic_gradient());
  const Vec x = vec({0.3, -1.7});
  const SigmaGradient ga = analytic.gradient(x);
  const SigmaGradient gf = fd.gradient(x);
  for (int m = 0; m < 2; ++m) CHECK((ga[static_cast<std::size_t>(m)] - gf[static_cast<std::size_t>(m)]).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("blow-up raises a divergence error with the step") {
  const NoiseCoefficient quadratic(1, 1, [](const Vec& x) {
    Mat s(1, 1);
    s << x[0] * x[0];
    return s;
  });
  // Phi' = 50 Phi^2 from 1 blows up at r = 0.02.
  try {
    marcus_forward(vec({1.0}), vec({50.0}), quadratic, 50);
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(e.where() >= 0.0);
    CHECK(e.where() < 50.0);
  }
  CHECK_THROWS_AS(marcus_forward(vec({1.0}), vec({1.0}), quadratic, 0), ValidationError);
}

TEST_CASE("jump map policy") {
  const auto noise = examples::example_noise("example1");
  const Vec u = vec({1.3});
  const Vec v = vec({2.5});
  const Vec closed = jump_forward(u, v, noise, 50, JumpMapPolicy::ClosedFormIfAvailable);
  const Vec numeric = jump_forward(u, v, noise, 200, JumpMapPolicy::Numeric);
  CHECK(closed[0] == doctest::Approx(1.3 * std::exp(2.5)).epsilon(1e-15));
  CHECK(std::abs(numeric[0] - closed[0]) <= 1e-8);
  const FlowResult ri = jump_inverse(u, v, noise, 200, JumpMapPolicy::Numeric);
  CHECK(ri.jac_det == doctest::Approx(std::exp(-2.5)).epsilon(1e-10));
}
