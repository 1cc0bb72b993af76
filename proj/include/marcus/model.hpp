#pragma once

// dX = f(X) dt + sigma(X) <> dL(t), the Marcus SDE shared by the path
// simulator and the Fokker-Planck solver.

#include "marcus/flow.hpp"
#include "marcus/levy.hpp"
#include "marcus/types.hpp"

#include <functional>
#include <string>
#include <variant>

namespace marcus {

struct PointInitial {
  Vec x;
};

// Independent normal coordinates.
struct NormalInitial {
  Vec mean;
  Vec sd;
};

using InitialState = std::variant<PointInitial, NormalInitial>;

Vec sample_initial(const InitialState& init, Rng& rng);
int initial_dimension(const InitialState& init);

struct ModelSpec {
  std::string id;
  std::function<Vec(const Vec&)> drift;
  flow::NoiseCoefficient noise;
  levy::LevyTriplet driver;
  InitialState initial;

  int d() const { return noise.d(); }
  int n() const { return noise.n(); }

  // driver.n == noise.n, drift output length == d, initial state length == d.
  void validate() const;
};

// Stratonovich correction 1/2 sum_{m,j,l} d sigma_ij / d x_m sigma_ml A_lj.
Vec stratonovich_correction(const flow::NoiseCoefficient& noise, const Mat& a, const Vec& x);

}  // namespace marcus
