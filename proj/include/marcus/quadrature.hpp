#pragma once

#include <vector>

namespace marcus::quadrature {

struct Node {
  double x;
  double w;
};

// Gauss-Legendre rule with `count` nodes mapped to [lower, upper].
std::vector<Node> gauss_legendre(int count, double lower, double upper);

// Standard normal cdf and pdf.
double normal_cdf(double z);
double normal_pdf(double z);

}  // namespace marcus::quadrature
