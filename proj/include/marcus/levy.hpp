#pragma once

// Lévy generating triplets (b, A, ν) with ν restricted to sums of scalar
// compound Poisson and symmetric alpha-stable measures embedded on single
// driver coordinates, plus increment sampling.

#include "marcus/types.hpp"

#include <cstddef>
#include <limits>
#include <variant>
#include <vector>

namespace marcus::levy {

struct DiscreteJumps {
  std::vector<double> values;
  std::vector<double> probs;
};

struct NormalJumps {
  double mean = 0.0;
  double sd = 1.0;
};

struct UniformJumps {
  double lower = 0.0;
  double upper = 1.0;
};

using JumpDistribution = std::variant<DiscreteJumps, NormalJumps, UniformJumps>;

double sample(const JumpDistribution& rho, Rng& rng);

// Probability density of a continuous law; discrete tables have none and throw.
double density(const JumpDistribution& rho, double y);

struct CompoundPoisson {
  double rate = 1.0;
  JumpDistribution sizes;
};

// nu(dy) = dy / |y|^(1+alpha), 0 < alpha < 2.
struct AlphaStable {
  double alpha = 1.5;
};

using JumpLaw = std::variant<CompoundPoisson, AlphaStable>;

struct JumpComponent {
  JumpLaw law;
  std::size_t coordinate = 0;  // zero-based driver coordinate
};

bool is_stable(const JumpLaw& law);

// Throws ValidationError describing the first violated bound.
void validate(const JumpLaw& law);

class LevyTriplet {
 public:
  LevyTriplet() = default;

  // tau is taken as the symmetric square root of A.
  LevyTriplet(Vec b, Mat a, std::vector<JumpComponent> components);
  LevyTriplet(Vec b, Mat a, Mat tau, std::vector<JumpComponent> components);

  int n() const { return static_cast<int>(b_.size()); }
  const Vec& b() const { return b_; }
  const Mat& a() const { return a_; }
  const Mat& tau() const { return tau_; }
  const std::vector<JumpComponent>& components() const { return components_; }

  bool has_gaussian_part() const { return !a_.isZero(0.0); }

 private:
  void validate() const;

  Vec b_;
  Mat a_;
  Mat tau_;
  std::vector<JumpComponent> components_;
};

struct ScalarTriplet {
  double b = 0.0;
  double a = 0.0;
  std::vector<JumpLaw> jumps;
};

// Triplet of (L_1, ..., L_n) for independent scalar drivers: b stacked,
// A diagonal, nu the sum of the scalar measures each tagged with its
// coordinate (Dirac mass at zero on every other coordinate).
LevyTriplet product_triplet(const std::vector<ScalarTriplet>& scalars);

struct SmallJumpMoments {
  double mean_shift = 0.0;  // integral of y nu(dy) over eps <= |y| < 1
  double variance = 0.0;    // integral of y^2 nu(dy) over |y| < eps
};

SmallJumpMoments small_jump_moments(const JumpLaw& law, double epsilon);

// Integral of y nu(dy) over |y| < 1 restricted to what the sampler draws:
// every compound Poisson jump, stable jumps with eps <= |y| < 1.
double sampled_compensator(const JumpLaw& law, double epsilon);

// nu-mass of eps <= |y| <= outer for a stable law.
double stable_tail_mass(double alpha, double epsilon, double outer);

struct SamplingOptions {
  double epsilon = 1e-2;
  double outer_cutoff = std::numeric_limits<double>::infinity();
  // Replace sub-eps stable jumps by a Gaussian of matching variance.
  bool small_jump_gaussian = false;
};

// Triplet whose A absorbs the sub-eps stable variance on each coordinate.
LevyTriplet with_small_jump_diffusion(const LevyTriplet& triplet, double epsilon);

// Drift the sampler uses with uncompensated jumps: b minus the sampled
// compensator of every component.
Vec sampling_drift(const LevyTriplet& triplet, double epsilon);

struct TimedJump {
  double offset = 0.0;
  Vec size;
};

struct Increment {
  Vec continuous;
  std::vector<TimedJump> jumps;  // ordered by offset, offsets in [0, dt)
};

// Finite-activity jumps over [0, dt), sorted by offset.
std::vector<TimedJump> sample_jumps(const LevyTriplet& triplet, double dt,
                                    const SamplingOptions& options, Rng& rng);

// tau * sqrt(dt) * xi with xi standard normal.
Vec sample_gaussian(const LevyTriplet& triplet, double dt, Rng& rng);

Increment sample_increment(const LevyTriplet& triplet, double dt,
                           const SamplingOptions& options, Rng& rng);

}  // namespace marcus::levy
