#include "marcus/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace marcus::quadrature {

std::vector<Node> gauss_legendre(int count, double lower, double upper) {
  if (count < 1) throw std::invalid_argument("gauss_legendre: count must be >= 1");
  std::vector<Node> nodes(static_cast<std::size_t>(count));
  const double half = 0.5 * (upper - lower);
  const double mid = 0.5 * (upper + lower);
  const int m = (count + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Newton on P_n starting from the Chebyshev-like guess.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int k = 1; k <= count; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = count * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    nodes[static_cast<std::size_t>(i)] = {mid - half * z, half * w};
    nodes[static_cast<std::size_t>(count - 1 - i)] = {mid + half * z, half * w};
  }
  return nodes;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace marcus::quadrature
