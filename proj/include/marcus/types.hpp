#pragma once

#include <Eigen/Dense>

#include <random>
#include <stdexcept>
#include <string>

namespace marcus {

// State and driver dimensions are capped so vectors live on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

using Rng = std::mt19937_64;

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite state while integrating a flow or a path.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double where)
      : std::runtime_error(what), where_(where) {}
  // Flow step index or simulation time at which the state blew up.
  double where() const { return where_; }

 private:
  double where_;
};

}  // namespace marcus
