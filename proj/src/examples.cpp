#include "marcus/examples.hpp"

#include <cmath>

namespace marcus::examples {
namespace {

constexpr double kSeriesCut = 1e-5;

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double example1_forward(double u, double v) { return u * std::exp(v); }

Vec example2_forward(const Vec& u, const Vec& v) {
  // Phi2' = v1 + v2 Phi2
  return vec2(u[0], u[1] * std::exp(v[1]) - v[0] * K(v[1]));
}

Vec example3_forward(const Vec& u, const Vec& v) {
  const double s = v[0] * v[1];
  const double c = cosbar(s);
  const double sn = sinbar(s);
  return vec2(u[0] * c + v[0] * u[1] * sn, v[1] * u[0] * sn + u[1] * c);
}

}  // namespace

MapValue example1_htilde(double u, double v) {
  const double e = std::exp(-v);
  return {u * e, e};
}

double K(double x) {
  if (std::abs(x) < kSeriesCut) return -1.0 - x / 2.0 - x * x / 6.0;
  return -std::expm1(x) / x;
}

flow::FlowResult example2_htilde(const Vec& u, const Vec& v) {
  const double e = std::exp(-v[1]);
  return {vec2(u[0], v[0] * K(-v[1]) + e * u[1]), e, 0};
}

flow::FlowResult example2_htilde(const Vec& u, double v2) { return example2_htilde(u, vec2(0.0, v2)); }

double cosbar(double x) {
  return x >= 0.0 ? std::cosh(std::sqrt(x)) : std::cos(std::sqrt(-x));
}

double sinbar(double x) {
  if (std::abs(x) < kSeriesCut) return 1.0 + x / 6.0 + x * x / 120.0;
  if (x > 0.0) {
    const double r = std::sqrt(x);
    return std::sinh(r) / r;
  }
  const double r = std::sqrt(-x);
  return std::sin(r) / r;
}

double example3_det(double s) {
  if (std::abs(s) < kSeriesCut) return 1.0;  // 1 + O(s^3)
  const double c = cosbar(s);
  const double sn = sinbar(s);
  return c * c - s * sn * sn;
}

flow::FlowResult example3_htilde(const Vec& u, const Vec& v) {
  const double s = v[0] * v[1];
  const double c = cosbar(s);
  const double sn = sinbar(s);
  return {vec2(u[0] * c - v[0] * u[1] * sn, -v[1] * u[0] * sn + u[1] * c), example3_det(s), 0};
}

const std::vector<std::string>& example_ids() {
  static const std::vector<std::string> ids{"example1", "example2", "example3"};
  return ids;
}

bool is_example_id(std::string_view id) {
  for (const auto& known : example_ids())
    if (known == id) return true;
  return false;
}

const ClosedFormMap& closed_form_map(std::string_view id) {
  static const std::vector<ClosedFormMap> maps{
      {"example1", 1, 1,
       [](const Vec& u, const Vec& v) {
         const MapValue r = example1_htilde(u[0], v[0]);
         Vec p(1);
         p << r.point;
         return flow::FlowResult{p, r.jac_det, 0};
       }},
      {"example2", 2, 2, [](const Vec& u, const Vec& v) { return example2_htilde(u, v); }},
      {"example3", 2, 2, [](const Vec& u, const Vec& v) { return example3_htilde(u, v); }},
  };
  for (const auto& m : maps)
    if (m.id == id) return m;
  throw ValidationError("unknown model \"" + std::string(id) + "\"");
}

flow::NoiseCoefficient example_noise(std::string_view id) {
  const ClosedFormMap& map = closed_form_map(id);
  if (id == "example1") {
    auto sigma = [](const Vec& x) {
      Mat s(1, 1);
      s << x[0];
      return s;
    };
    auto grad = [](const Vec&) {
      flow::SigmaGradient g;
      g[0] = Mat::Ones(1, 1);
      return g;
    };
    flow::ClosedFormMaps maps{[](const Vec& u, const Vec& v) {
                                Vec p(1);
                                p << example1_forward(u[0], v[0]);
                                return p;
                              },
                              map.htilde};
    return flow::NoiseCoefficient(1, 1, sigma, grad, maps);
  }
  if (id == "example2") {
    auto sigma = [](const Vec& x) {
      Mat s(2, 2);
      s << 0.0, 0.0, 1.0, x[1];
      return s;
    };
    auto grad = [](const Vec&) {
      flow::SigmaGradient g;
      g[0] = Mat::Zero(2, 2);
      g[1] = Mat::Zero(2, 2);
      g[1](1, 1) = 1.0;
      return g;
    };
    return flow::NoiseCoefficient(2, 2, sigma, grad, flow::ClosedFormMaps{example2_forward, map.htilde});
  }
  auto sigma = [](const Vec& x) {
    Mat s(2, 2);
    s << x[1], 0.0, 0.0, x[0];
    return s;
  };
  auto grad = [](const Vec&) {
    flow::SigmaGradient g;
    g[0] = Mat::Zero(2, 2);
    g[1] = Mat::Zero(2, 2);
    g[0](1, 1) = 1.0;  // d sigma_22 / d x1
    g[1](0, 0) = 1.0;  // d sigma_11 / d x2
    return g;
  };
  return flow::NoiseCoefficient(2, 2, sigma, grad, flow::ClosedFormMaps{example3_forward, map.htilde});
}

std::function<Vec(const Vec&)> example_default_drift(std::string_view id) {
  const int d = closed_form_map(id).d;
  if (id == "example2") return [](const Vec& x) { return vec2(x[1], -x[0]); };
  return [d](const Vec&) { return Vec(Vec::Zero(d)); };
}

}  // namespace marcus::examples
