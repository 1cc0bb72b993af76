#include "marcus/flow.hpp"

#include <cmath>
#include <sstream>

namespace marcus::flow {
namespace {

[[noreturn]] void diverged(int step) {
  std::ostringstream os;
  os << "flow diverged at RK4 step " << step;
  throw DivergenceError(os.str(), step);
}

// sum_i sum_j d sigma_ij / d x_i * v_j
double divergence(const NoiseCoefficient& noise, const Vec& x, const Vec& v) {
  const SigmaGradient g = noise.gradient(x);
  double div = 0.0;
  for (int i = 0; i < noise.d(); ++i) div += g[static_cast<std::size_t>(i)].row(i).dot(v);
  return div;
}

void check_args(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps) {
  if (steps < 1) throw ValidationError("flow: steps must be >= 1");
  if (u.size() != noise.d() || v.size() != noise.n())
    throw ValidationError("flow: u or v has the wrong dimension");
}

}  // namespace

NoiseCoefficient::NoiseCoefficient(int d, int n, SigmaFn sigma, GradientFn gradient,
                                   std::optional<ClosedFormMaps> closed_form)
    : d_(d), n_(n), sigma_(std::move(sigma)), gradient_(std::move(gradient)),
      closed_form_(std::move(closed_form)) {
  if (d < 1 || d > kMaxDim || n < 1 || n > kMaxDim)
    throw ValidationError("noise: dimensions must lie in [1, 4]");
  if (!sigma_) throw ValidationError("noise: sigma evaluator is required");
}

Mat NoiseCoefficient::sigma(const Vec& x) const { return sigma_(x); }

SigmaGradient NoiseCoefficient::gradient(const Vec& x) const {
  if (gradient_) return gradient_(x);
  SigmaGradient g;
  const double h = 1e-6 * (1.0 + x.norm());
  Vec xp = x;
  Vec xm = x;
  for (int m = 0; m < d_; ++m) {
    xp[m] = x[m] + h;
    xm[m] = x[m] - h;
    g[static_cast<std::size_t>(m)] = (sigma_(xp) - sigma_(xm)) / (2.0 * h);
    xp[m] = x[m];
    xm[m] = x[m];
  }
  return g;
}

Vec marcus_forward(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps) {
  check_args(u, v, noise, steps);
  if (v.isZero(0.0)) return u;
  const double h = 1.0 / steps;
  auto field = [&](const Vec& x) -> Vec { return noise.sigma(x) * v; };
  Vec x = u;
  for (int s = 0; s < steps; ++s) {
    const Vec k1 = field(x);
    const Vec k2 = field(x + 0.5 * h * k1);
    const Vec k3 = field(x + 0.5 * h * k2);
    const Vec k4 = field(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) diverged(s + 1);
  }
  return x;
}

FlowResult marcus_inverse(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps) {
  check_args(u, v, noise, steps);
  if (v.isZero(0.0)) return {u, 1.0, 0};
  const double h = 1.0 / steps;
  // d Psi / dr = -sigma(Psi) v,  d log J / dr = -div(sigma v)(Psi)
  auto field = [&](const Vec& x) -> Vec { return -(noise.sigma(x) * v); };
  auto rate = [&](const Vec& x) { return -divergence(noise, x, v); };
  Vec x = u;
  double log_det = 0.0;
  for (int s = 0; s < steps; ++s) {
    const Vec k1 = field(x);
    const Vec s2 = x + 0.5 * h * k1;
    const Vec k2 = field(s2);
    const Vec s3 = x + 0.5 * h * k2;
    const Vec k3 = field(s3);
    const Vec s4 = x + h * k3;
    const Vec k4 = field(s4);
    log_det += (h / 6.0) * (rate(x) + 2.0 * rate(s2) + 2.0 * rate(s3) + rate(s4));
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite() || !std::isfinite(log_det)) diverged(s + 1);
  }
  return {x, std::exp(log_det), steps};
}

double check_inverse(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps) {
  const Vec there = marcus_forward(u, v, noise, steps);
  return (marcus_inverse(there, v, noise, steps).point - u).norm();
}

Vec jump_forward(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps,
                 JumpMapPolicy policy) {
  if (policy == JumpMapPolicy::ClosedFormIfAvailable && noise.closed_form())
    return noise.closed_form()->forward(u, v);
  return marcus_forward(u, v, noise, steps);
}

FlowResult jump_inverse(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps,
                        JumpMapPolicy policy) {
  if (policy == JumpMapPolicy::ClosedFormIfAvailable && noise.closed_form())
    return noise.closed_form()->inverse(u, v);
  return marcus_inverse(u, v, noise, steps);
}

}  // namespace marcus::flow
