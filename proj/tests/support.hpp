// Shared helpers for the test suites: finite differences and random draws.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mmdyn/autodiff.hpp"
#include "mmdyn/random.hpp"

namespace mmdyn::testing {

// Norm-wise relative error between two gradients.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    scale += a[i] * a[i] + b[i] * b[i];
  }
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / std::sqrt(scale);
}

// Central differences of `loss` with respect to the values of `leaf`.
inline std::vector<double> numeric_grad(ad::Var leaf, const std::function<double()>& loss, double h = 1e-5) {
  std::vector<double> g(leaf.size());
  auto v = leaf.mutable_value();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double up = loss();
    v[i] = orig - h;
    const double down = loss();
    v[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

inline std::vector<double> grad_of(const ad::Var& v) { return {v.grad().begin(), v.grad().end()}; }

}  // namespace mmdyn::testing
