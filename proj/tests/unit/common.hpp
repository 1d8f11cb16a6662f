#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "nls2/grid.hpp"
#include "nls2/ground_state.hpp"

namespace testing_support {

using nls2::cplx;
using nls2::Field;
using nls2::SpectralGrid;

inline constexpr double pi = std::numbers::pi;

// Certified ground state shared by a test binary. n = 1024 brings the
// Pohozhaev residuals to 1e-13, so identities can be checked below 1e-9.
inline const nls2::GroundState& ground() {
  static const nls2::GroundState gs = nls2::compute_ground_state(SpectralGrid(1024, 48.0), {1e-12, 1000, {}});
  return gs;
}

// Composite Simpson rule on [a, b] with m (even) panels.
template <typename F>
double simpson(F&& f, double a, double b, int m = 20000) {
  const double h = (b - a) / m;
  double acc = f(a) + f(b);
  for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

inline Field gaussian(const SpectralGrid& g, double amplitude, double width = 1.0, double cx = 0.0, double cy = 0.0) {
  return Field::sample(g, [&](double x, double y) {
    const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    return amplitude * std::exp(-r2 / (2.0 * width * width));
  });
}

// Sum of a few complex Gaussian bumps; smooth and well inside the box.
inline Field random_bumps(const SpectralGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> c(-3.0, 3.0), w(1.0, 1.8), a(-1.0, 1.0);
  struct Bump {
    double x, y, w;
    cplx a;
  };
  std::vector<Bump> bumps;
  for (int i = 0; i < 3; ++i) bumps.push_back({c(rng), c(rng), w(rng), cplx(a(rng), a(rng))});
  return Field::sample(g, [&](double x, double y) {
    cplx acc = 0.0;
    for (const auto& b : bumps) acc += b.a * std::exp(-((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (2.0 * b.w * b.w));
    return acc;
  });
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

inline double l2_distance(const Field& a, const Field& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) acc += std::norm(a.values()[i] - b.values()[i]);
  return std::sqrt(acc * a.grid().cell_area());
}

}  // namespace testing_support
