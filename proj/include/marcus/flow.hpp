#pragma once

// Marcus jump maps: H(u, v) is the time-1 flow of Phi' = sigma(Phi) v from u,
// and its inverse H~(u, v) the time-1 flow of Psi' = -sigma(Psi) v.

#include "marcus/types.hpp"

#include <array>
#include <functional>
#include <optional>

namespace marcus::flow {

// Entry m holds d sigma / d x_m (a d x n matrix).
using SigmaGradient = std::array<Mat, kMaxDim>;

struct FlowResult {
  Vec point;
  double jac_det = 1.0;  // |d H~ / d x|, only meaningful for the inverse map
  int steps_used = 0;
};

// Exact jump maps a model may register in place of numeric integration.
struct ClosedFormMaps {
  std::function<Vec(const Vec& u, const Vec& v)> forward;
  std::function<FlowResult(const Vec& u, const Vec& v)> inverse;
};

class NoiseCoefficient {
 public:
  using SigmaFn = std::function<Mat(const Vec&)>;
  using GradientFn = std::function<SigmaGradient(const Vec&)>;

  NoiseCoefficient() = default;
  // Without `gradient`, derivatives fall back to central differences with
  // step 1e-6 * (1 + |x|).
  NoiseCoefficient(int d, int n, SigmaFn sigma, GradientFn gradient = {},
                   std::optional<ClosedFormMaps> closed_form = std::nullopt);

  int d() const { return d_; }
  int n() const { return n_; }

  Mat sigma(const Vec& x) const;
  SigmaGradient gradient(const Vec& x) const;
  bool has_analytic_gradient() const { return static_cast<bool>(gradient_); }

  const std::optional<ClosedFormMaps>& closed_form() const { return closed_form_; }

 private:
  int d_ = 0;
  int n_ = 0;
  SigmaFn sigma_;
  GradientFn gradient_;
  std::optional<ClosedFormMaps> closed_form_;
};

inline constexpr int kSimulationSteps = 50;
inline constexpr int kVerificationSteps = 200;

// Classical RK4 with `steps` uniform steps on [0, 1]. Throws DivergenceError
// carrying the step index on a non-finite state.
Vec marcus_forward(const Vec& u, const Vec& v, const NoiseCoefficient& noise,
                   int steps = kSimulationSteps);

// Inverse map with the Jacobian determinant from the Liouville formula,
//   det = exp(-int_0^1 sum_i d/dx_i [sum_j sigma_ij(Psi(r)) v_j] dr),
// whose log is advanced as an extra RK4 component on the same stages.
FlowResult marcus_inverse(const Vec& u, const Vec& v, const NoiseCoefficient& noise,
                          int steps = kSimulationSteps);

// |H~(H(u, v), v) - u|
double check_inverse(const Vec& u, const Vec& v, const NoiseCoefficient& noise,
                     int steps = kVerificationSteps);

enum class JumpMapPolicy { ClosedFormIfAvailable, Numeric };

Vec jump_forward(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps,
                 JumpMapPolicy policy);
FlowResult jump_inverse(const Vec& u, const Vec& v, const NoiseCoefficient& noise, int steps,
                        JumpMapPolicy policy);

}  // namespace marcus::flow
