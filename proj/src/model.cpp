#include "marcus/model.hpp"

namespace marcus {

Vec sample_initial(const InitialState& init, Rng& rng) {
  if (const auto* p = std::get_if<PointInitial>(&init)) return p->x;
  const auto& g = std::get<NormalInitial>(init);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec x(g.mean.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = g.mean[i] + g.sd[i] * normal(rng);
  return x;
}

int initial_dimension(const InitialState& init) {
  if (const auto* p = std::get_if<PointInitial>(&init)) return static_cast<int>(p->x.size());
  return static_cast<int>(std::get<NormalInitial>(init).mean.size());
}

void ModelSpec::validate() const {
  if (!drift) throw ValidationError("model: drift is required");
  if (driver.n() != noise.n())
    throw ValidationError("model: driver dimension must match sigma's column count");
  if (initial_dimension(initial) != d())
    throw ValidationError("model: initial state dimension must equal d");
  if (const auto* g = std::get_if<NormalInitial>(&initial)) {
    if (g->sd.size() != g->mean.size() || (g->sd.array() <= 0.0).any())
      throw ValidationError("model: initial sd must be positive with one entry per coordinate");
  }
  const Vec probe = drift(Vec::Zero(d()));
  if (probe.size() != d()) throw ValidationError("model: drift must return a vector of length d");
}

Vec stratonovich_correction(const flow::NoiseCoefficient& noise, const Mat& a, const Vec& x) {
  const Mat sigma = noise.sigma(x);
  const flow::SigmaGradient grad = noise.gradient(x);
  Vec corr = Vec::Zero(noise.d());
  for (int m = 0; m < noise.d(); ++m)
    corr += grad[static_cast<std::size_t>(m)] * (a * sigma.row(m).transpose());
  return 0.5 * corr;
}

}  // namespace marcus
