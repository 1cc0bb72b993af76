#include "marcus/levy.hpp"

#include "marcus/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace marcus::levy {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Integral of y^k rho(dy) over the open interval (lo, hi), continuous laws.
double interval_moment(const NormalJumps& rho, int k, double lo, double hi) {
  using quadrature::normal_cdf;
  using quadrature::normal_pdf;
  const double a = (lo - rho.mean) / rho.sd;
  const double b = (hi - rho.mean) / rho.sd;
  const double m0 = normal_cdf(b) - normal_cdf(a);
  // Standard-normal partial moments of z and z^2; the a*pdf(a) products
  // vanish at infinite bounds.
  const double pa = std::isfinite(a) ? normal_pdf(a) : 0.0;
  const double pb = std::isfinite(b) ? normal_pdf(b) : 0.0;
  const double z1 = pa - pb;
  const double z2 = m0 + (std::isfinite(a) ? a * pa : 0.0) - (std::isfinite(b) ? b * pb : 0.0);
  const double mu = rho.mean;
  const double s = rho.sd;
  switch (k) {
    case 0: return m0;
    case 1: return mu * m0 + s * z1;
    default: return mu * mu * m0 + 2.0 * mu * s * z1 + s * s * z2;
  }
}

double interval_moment(const UniformJumps& rho, int k, double lo, double hi) {
  const double a = std::max(lo, rho.lower);
  const double b = std::min(hi, rho.upper);
  if (b <= a) return 0.0;
  const double scale = 1.0 / (rho.upper - rho.lower);
  return scale * (std::pow(b, k + 1) - std::pow(a, k + 1)) / (k + 1);
}

// Integral of y^k rho(dy) over {y : keep(|y|)}, where the kept region is a
// union of |y| bands given as [inner, outer).
double band_moment(const JumpDistribution& rho, int k, double inner, double outer) {
  return std::visit(
      overloaded{
          [&](const DiscreteJumps& t) {
            double acc = 0.0;
            for (std::size_t i = 0; i < t.values.size(); ++i) {
              const double ay = std::abs(t.values[i]);
              if (ay >= inner && ay < outer) acc += t.probs[i] * std::pow(t.values[i], k);
            }
            return acc;
          },
          [&](const auto& c) {
            return interval_moment(c, k, -outer, -inner) + interval_moment(c, k, inner, outer);
          }},
      rho);
}

void validate_distribution(const JumpDistribution& rho) {
  std::visit(overloaded{
                 [](const DiscreteJumps& t) {
                   if (t.values.empty() || t.values.size() != t.probs.size())
                     throw ValidationError("rho: discrete table needs matching values/probs");
                   double total = 0.0;
                   for (std::size_t i = 0; i < t.probs.size(); ++i) {
                     if (!(t.probs[i] >= 0.0) || !std::isfinite(t.values[i]))
                       throw ValidationError("rho: probabilities must be >= 0 and values finite");
                     total += t.probs[i];
                   }
                   if (std::abs(total - 1.0) > 1e-12)
                     throw ValidationError("rho: probabilities must sum to 1");
                 },
                 [](const NormalJumps& g) {
                   if (!(g.sd > 0.0) || !std::isfinite(g.mean))
                     throw ValidationError("rho: normal needs finite mean and sd > 0");
                 },
                 [](const UniformJumps& u) {
                   if (!(u.lower < u.upper) || !std::isfinite(u.lower) || !std::isfinite(u.upper))
                     throw ValidationError("rho: uniform needs finite lower < upper");
                 }},
             rho);
}

}  // namespace

double sample(const JumpDistribution& rho, Rng& rng) {
  return std::visit(overloaded{
                        [&](const DiscreteJumps& t) {
                          std::discrete_distribution<std::size_t> pick(t.probs.begin(),
                                                                       t.probs.end());
                          return t.values[pick(rng)];
                        },
                        [&](const NormalJumps& g) {
                          std::normal_distribution<double> dist(g.mean, g.sd);
                          return dist(rng);
                        },
                        [&](const UniformJumps& u) {
                          std::uniform_real_distribution<double> dist(u.lower, u.upper);
                          return dist(rng);
                        }},
                    rho);
}

double density(const JumpDistribution& rho, double y) {
  return std::visit(
      overloaded{[](const DiscreteJumps&) -> double {
                   throw ValidationError("rho: a discrete table has no density");
                 },
                 [&](const NormalJumps& g) {
                   return quadrature::normal_pdf((y - g.mean) / g.sd) / g.sd;
                 },
                 [&](const UniformJumps& u) {
                   return (y >= u.lower && y <= u.upper) ? 1.0 / (u.upper - u.lower) : 0.0;
                 }},
      rho);
}

bool is_stable(const JumpLaw& law) { return std::holds_alternative<AlphaStable>(law); }

void validate(const JumpLaw& law) {
  std::visit(overloaded{[](const CompoundPoisson& cp) {
                          if (!(cp.rate > 0.0) || !std::isfinite(cp.rate))
                            throw ValidationError("lambda must be > 0");
                          validate_distribution(cp.sizes);
                        },
                        [](const AlphaStable& s) {
                          if (!(s.alpha > 0.0 && s.alpha < 2.0))
                            throw ValidationError("alpha must lie in (0, 2)");
                        }},
             law);
}

LevyTriplet::LevyTriplet(Vec b, Mat a, std::vector<JumpComponent> components)
    : b_(std::move(b)), a_(std::move(a)), components_(std::move(components)) {
  if (a_.rows() != a_.cols() || a_.rows() != b_.size())
    throw ValidationError("triplet: A must be n x n with n = size of b");
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (a_ + a_.transpose()));
  const Vec root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  tau_ = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  validate();
}

LevyTriplet::LevyTriplet(Vec b, Mat a, Mat tau, std::vector<JumpComponent> components)
    : b_(std::move(b)), a_(std::move(a)), tau_(std::move(tau)), components_(std::move(components)) {
  validate();
}

void LevyTriplet::validate() const {
  const auto n = b_.size();
  if (n < 1 || n > kMaxDim) throw ValidationError("triplet: driver dimension must be in [1, 4]");
  if (a_.rows() != n || a_.cols() != n || tau_.rows() != n || tau_.cols() != n)
    throw ValidationError("triplet: A and tau must be n x n");
  if (!b_.allFinite() || !a_.allFinite() || !tau_.allFinite())
    throw ValidationError("triplet: non-finite entries");
  const double scale = std::max(1.0, a_.cwiseAbs().maxCoeff());
  if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValidationError("triplet: A must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(a_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12)
    throw ValidationError("triplet: A must be positive semidefinite");
  if ((tau_ * tau_.transpose() - a_).cwiseAbs().maxCoeff() > 1e-10)
    throw ValidationError("triplet: tau * tau^T must equal A");
  std::vector<int> stable_count(static_cast<std::size_t>(n), 0);
  for (const auto& c : components_) {
    if (c.coordinate >= static_cast<std::size_t>(n))
      throw ValidationError("triplet: jump component coordinate out of range");
    levy::validate(c.law);
    if (is_stable(c.law) && ++stable_count[c.coordinate] > 1)
      throw ValidationError("triplet: at most one stable component per coordinate");
  }
}

LevyTriplet product_triplet(const std::vector<ScalarTriplet>& scalars) {
  if (scalars.empty()) throw ValidationError("product_triplet: need at least one scalar driver");
  if (scalars.size() > static_cast<std::size_t>(kMaxDim))
    throw ValidationError("product_triplet: at most 4 scalar drivers");
  const auto n = static_cast<int>(scalars.size());
  Vec b(n);
  Mat a = Mat::Zero(n, n);
  Mat tau = Mat::Zero(n, n);
  std::vector<JumpComponent> components;
  for (int i = 0; i < n; ++i) {
    const auto& s = scalars[static_cast<std::size_t>(i)];
    auto fail = [i](const std::string& why) {
      std::ostringstream os;
      os << "scalar driver [" << i << "]: " << why;
      throw ValidationError(os.str());
    };
    if (!std::isfinite(s.b)) fail("b must be finite");
    if (!(s.a >= 0.0) || !std::isfinite(s.a)) fail("a must be finite and >= 0");
    int stable = 0;
    for (const auto& law : s.jumps) {
      try {
        validate(law);
      } catch (const ValidationError& e) {
        fail(e.what());
      }
      if (is_stable(law) && ++stable > 1) fail("at most one stable component");
      components.push_back({law, static_cast<std::size_t>(i)});
    }
    b[i] = s.b;
    a(i, i) = s.a;
    tau(i, i) = std::sqrt(s.a);
  }
  return LevyTriplet(b, a, tau, std::move(components));
}

SmallJumpMoments small_jump_moments(const JumpLaw& law, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw ValidationError("small_jump_moments: epsilon must lie in (0, 1]");
  return std::visit(
      overloaded{[&](const AlphaStable& s) {
                   return SmallJumpMoments{0.0, 2.0 * std::pow(epsilon, 2.0 - s.alpha) / (2.0 - s.alpha)};
                 },
                 [&](const CompoundPoisson& cp) {
                   return SmallJumpMoments{cp.rate * band_moment(cp.sizes, 1, epsilon, 1.0),
                                           cp.rate * band_moment(cp.sizes, 2, 0.0, epsilon)};
                 }},
      law);
}

double sampled_compensator(const JumpLaw& law, [[maybe_unused]] double epsilon) {
  // Stable components are symmetric, so the [eps, 1) band carries no mean.
  return std::visit(overloaded{[&](const AlphaStable&) { return 0.0; },
                               [&](const CompoundPoisson& cp) {
                                 return cp.rate * band_moment(cp.sizes, 1, 0.0, 1.0);
                               }},
                    law);
}

double stable_tail_mass(double alpha, double epsilon, double outer) {
  const double far = std::isfinite(outer) ? std::pow(outer, -alpha) : 0.0;
  return 2.0 * (std::pow(epsilon, -alpha) - far) / alpha;
}

LevyTriplet with_small_jump_diffusion(const LevyTriplet& triplet, double epsilon) {
  Mat a = triplet.a();
  for (const auto& c : triplet.components()) {
    if (!is_stable(c.law)) continue;
    const auto j = static_cast<Eigen::Index>(c.coordinate);
    a(j, j) += small_jump_moments(c.law, epsilon).variance;
  }
  return LevyTriplet(triplet.b(), a, triplet.components());
}

Vec sampling_drift(const LevyTriplet& triplet, double epsilon) {
  Vec drift = triplet.b();
  for (const auto& c : triplet.components())
    drift[static_cast<Eigen::Index>(c.coordinate)] -= sampled_compensator(c.law, epsilon);
  return drift;
}

std::vector<TimedJump> sample_jumps(const LevyTriplet& triplet, double dt,
                                    const SamplingOptions& options, Rng& rng) {
  if (!(dt > 0.0)) throw ValidationError("sample_jumps: dt must be > 0");
  std::vector<TimedJump> jumps;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = triplet.n();
  for (const auto& c : triplet.components()) {
    double mean_count = 0.0;
    const AlphaStable* stable = std::get_if<AlphaStable>(&c.law);
    if (stable != nullptr) {
      if (!(options.epsilon > 0.0 && options.epsilon <= 1.0))
        throw ValidationError("sample_jumps: epsilon must lie in (0, 1]");
      mean_count = stable_tail_mass(stable->alpha, options.epsilon, options.outer_cutoff) * dt;
    } else {
      mean_count = std::get<CompoundPoisson>(c.law).rate * dt;
    }
    std::poisson_distribution<long> count(mean_count);
    const long k = mean_count > 0.0 ? count(rng) : 0;
    for (long i = 0; i < k; ++i) {
      TimedJump jump{dt * unit(rng), Vec::Zero(n)};
      double y = 0.0;
      if (stable != nullptr) {
        const double a = stable->alpha;
        const double inner = std::pow(options.epsilon, -a);
        const double outer = std::isfinite(options.outer_cutoff) ? std::pow(options.outer_cutoff, -a) : 0.0;
        const double mag = std::pow(inner - unit(rng) * (inner - outer), -1.0 / a);
        y = unit(rng) < 0.5 ? -mag : mag;
      } else {
        y = sample(std::get<CompoundPoisson>(c.law).sizes, rng);
      }
      jump.size[static_cast<Eigen::Index>(c.coordinate)] = y;
      jumps.push_back(std::move(jump));
    }
  }
  std::stable_sort(jumps.begin(), jumps.end(),
                   [](const TimedJump& l, const TimedJump& r) { return l.offset < r.offset; });
  return jumps;
}

Vec sample_gaussian(const LevyTriplet& triplet, double dt, Rng& rng) {
  const int n = triplet.n();
  if (!triplet.has_gaussian_part()) return Vec::Zero(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec xi(n);
  for (int i = 0; i < n; ++i) xi[i] = normal(rng);
  return triplet.tau() * xi * std::sqrt(dt);
}

Increment sample_increment(const LevyTriplet& triplet, double dt, const SamplingOptions& options,
                           Rng& rng) {
  const LevyTriplet effective =
      options.small_jump_gaussian ? with_small_jump_diffusion(triplet, options.epsilon) : triplet;
  Increment inc;
  inc.jumps = sample_jumps(effective, dt, options, rng);
  inc.continuous = sampling_drift(effective, options.epsilon) * dt + sample_gaussian(effective, dt, rng);
  return inc;
}

}  // namespace marcus::levy
