#pragma once

// Closed-form Marcus maps for three reference models:
//   example1: d = n = 1, sigma(x) = x
//   example2: d = n = 2, sigma(x) = [[0, 0], [1, x2]]  (oscillator, L = (B, C))
//   example3: d = n = 2, sigma(x) = [[x2, 0], [0, x1]]

#include "marcus/flow.hpp"
#include "marcus/types.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace marcus::examples {

struct MapValue {
  double point;
  double jac_det;
};

// (u e^{-v}, e^{-v})
MapValue example1_htilde(double u, double v);

// (1 - e^x) / x, with K(0) = -1 and a Taylor branch for |x| < 1e-5.
double K(double x);

// H~((u1, u2), (v1, v2)) = (u1, v1 K(-v2) + e^{-v2} u2), det e^{-v2}.
flow::FlowResult example2_htilde(const Vec& u, const Vec& v);
// Jumps carried by the second (compound Poisson) coordinate only.
flow::FlowResult example2_htilde(const Vec& u, double v2);

double cosbar(double x);
double sinbar(double x);
// cosbar(s)^2 - s sinbar(s)^2, identically 1.
double example3_det(double s);

flow::FlowResult example3_htilde(const Vec& u, const Vec& v);

struct ClosedFormMap {
  std::string id;
  int d;
  int n;
  std::function<flow::FlowResult(const Vec&, const Vec&)> htilde;
};

bool is_example_id(std::string_view id);
const std::vector<std::string>& example_ids();

// Throws ValidationError("unknown model ...") for other ids.
const ClosedFormMap& closed_form_map(std::string_view id);

// sigma with analytic derivatives and the closed-form maps registered.
flow::NoiseCoefficient example_noise(std::string_view id);

// f(x) = 0 for example1 and example3, the undamped oscillator (x2, -x1) for example2.
std::function<Vec(const Vec&)> example_default_drift(std::string_view id);

}  // namespace marcus::examples
