#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "common.hpp"
#include "nls2/grid.hpp"

using namespace nls2;
using namespace testing_support;

TEST(Grid, RejectsBadShapes) {
  EXPECT_THROW(SpectralGrid(8, 10.0), Error);
  EXPECT_THROW(SpectralGrid(100, 10.0), Error);
  EXPECT_THROW(SpectralGrid(64, 0.0), Error);
  EXPECT_THROW(SpectralGrid(64, -1.0), Error);
}

TEST(Grid, SpacingAndWavenumbers) {
  const SpectralGrid g(64, 20.0);
  EXPECT_DOUBLE_EQ(g.dx() * g.n(), g.length());
  EXPECT_DOUBLE_EQ(g.x(32), 0.0);
  for (int j = 1; j < g.n(); ++j) {
    if (j == g.n() / 2) continue;
    EXPECT_DOUBLE_EQ(g.k(j), -g.k(g.n() - j));
  }
  EXPECT_LT(g.k(32), 0.0);  // Nyquist sits on the negative side
  EXPECT_EQ(g.kd(32), 0.0);
  EXPECT_EQ(g.kd(5), g.k(5));
}

TEST(Dft, ConstantFieldHasOnlyDc) {
  const SpectralGrid g(32, 10.0);
  const cplx c(1.5, -0.5);
  const Spectrum s = dft_forward(Field::sample(g, [&](double, double) { return c; }));
  EXPECT_NEAR(std::abs(s.coeffs[0] - c * double(g.size())), 0.0, 1e-10);
  for (std::size_t i = 1; i < s.coeffs.size(); ++i) EXPECT_LT(std::abs(s.coeffs[i]), 1e-10);
}

TEST(Dft, SingleModeLandsOnIndexOneZero) {
  const SpectralGrid g(32, 10.0);
  const double k1 = g.k(1);
  const Spectrum s = dft_forward(Field::sample(g, [&](double x, double) { return std::polar(1.0, k1 * x); }));
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix) {
      const double mag = std::abs(s.coeffs[g.index(ix, iy)]);
      if (ix == 1 && iy == 0)
        EXPECT_NEAR(mag, double(g.size()), 1e-9);
      else
        EXPECT_LT(mag, 1e-9);
    }
}

TEST(Dft, RoundTrip) {
  const SpectralGrid g(128, 24.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Field f = random_bumps(g, seed);
    const Field back = dft_inverse(dft_forward(f));
    EXPECT_LE(l2_distance(f, back) / std::sqrt(l2_norm_sq(f)), 1e-13);
  }
}

TEST(Dft, ShapeMismatch) {
  const SpectralGrid g(32, 10.0);
  Spectrum s{g, cvec(10)};
  EXPECT_THROW(dft_inverse(s), Error);
  EXPECT_THROW(Field(g, cvec(10)), Error);
}

TEST(Norms, ZeroField) {
  const Field z(SpectralGrid(32, 10.0));
  EXPECT_EQ(l2_norm_sq(z), 0.0);
  EXPECT_EQ(gradient_norm_sq(z), 0.0);
  EXPECT_EQ(hhalf_norm_sq(z), 0.0);
  EXPECT_EQ(lp_norm_p(z, 6), 0.0);
}

TEST(Norms, GaussianClosedForms) {
  const SpectralGrid g(256, 24.0);
  const Field u = gaussian(g, 1.0);
  // radial quadrature oracles of the closed forms
  const double mass = simpson([](double r) { return 2 * pi * r * std::exp(-r * r); }, 0.0, 12.0);
  const double grad = simpson([](double r) { return 2 * pi * r * r * r * std::exp(-r * r); }, 0.0, 12.0);
  const double l6 = simpson([](double r) { return 2 * pi * r * std::exp(-3 * r * r); }, 0.0, 12.0);
  EXPECT_NEAR(mass, pi, 1e-12);
  EXPECT_LE(rel(l2_norm_sq(u), mass), 1e-10);
  EXPECT_LE(rel(l2_norm_sq(gaussian(g, 2.0)), 4 * mass), 1e-10);
  EXPECT_LE(rel(gradient_norm_sq(u), grad), 1e-10);
  EXPECT_LE(rel(lp_norm_p(u, 6), l6), 1e-10);
  EXPECT_LE(rel(lp_norm_p(u, 6), pi / 3), 1e-10);
  EXPECT_DOUBLE_EQ(lp_norm_p(u, 2), l2_norm_sq(u));
}

TEST(Norms, HhalfAgainstHankelOracle) {
  // u-hat(k) = 2 pi exp(-k^2/2); (2 pi)^-2 int |k| |u-hat|^2 dk as a radial integral
  const double oracle = simpson([](double k) { return 2 * pi * k * k * std::exp(-k * k); }, 0.0, 12.0);
  EXPECT_NEAR(oracle, std::pow(pi, 1.5) / 2, 1e-12);
  double previous = 0.0;
  for (const double L : {24.0, 48.0}) {
    const SpectralGrid g(static_cast<int>(L / 24.0 * 256), L);
    const Field u = gaussian(g, 1.0);
    // the same weight summed on the torus lattice with the analytic transform
    double lattice = 0.0;
    const double dk = 2 * pi / L;
    for (int j = -400; j <= 400; ++j)
      for (int l = -400; l <= 400; ++l) {
        const double k2 = dk * dk * (j * j + l * l);
        lattice += std::sqrt(k2) * std::exp(-k2);
      }
    lattice *= dk * dk;
    EXPECT_LE(rel(hhalf_norm_sq(u), lattice), 1e-10);
    const double h = hhalf_norm_sq(u);
    EXPECT_LE(h * h, l2_norm_sq(u) * gradient_norm_sq(u));
    // the |k| cone at the origin makes the torus value approach the line value as L^-3
    const double err = std::abs(h - oracle) / oracle;
    if (previous > 0.0) {
      EXPECT_NEAR(previous / err, 8.0, 0.5);
    }
    previous = err;
  }
  EXPECT_LE(previous, 2e-4);
}

TEST(Norms, PlaneModulatedGradient) {
  const SpectralGrid g(256, 24.0);
  const double xi = g.k(4);
  const Field base = gaussian(g, 1.3, 1.2);
  const Field mod = Field::sample(g, [&](double x, double y) {
    return std::polar(1.3 * std::exp(-(x * x + y * y) / (2 * 1.44)), xi * x);
  });
  const double expected = xi * xi * l2_norm_sq(base) + gradient_norm_sq(base);
  EXPECT_LE(rel(gradient_norm_sq(mod), expected), 1e-10);
}

TEST(Norms, UnsupportedExponent) {
  const Field u = gaussian(SpectralGrid(32, 10.0), 1.0);
  EXPECT_THROW(lp_norm_p(u, 3), Error);
}

TEST(Norms, NonFiniteSamplesRejected) {
  Field u = gaussian(SpectralGrid(32, 10.0), 1.0);
  u.values()[7] = cplx(std::nan(""), 0.0);
  EXPECT_THROW(l2_norm_sq(u), Error);
  EXPECT_THROW(gradient_norm_sq(u), Error);
  EXPECT_THROW(lp_norm_p(u, 6), Error);
}

TEST(Properties, ParsevalAndInterpolation) {
  const SpectralGrid g(128, 24.0);
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Field f = random_bumps(g, seed);
    const Spectrum s = dft_forward(f);
    double acc = 0.0;
    for (const auto& c : s.coeffs) acc += std::norm(c);
    const double parseval = acc * g.cell_area() / double(g.size());
    EXPECT_LE(rel(l2_norm_sq(f), parseval), 1e-12);
    const double h = hhalf_norm_sq(f);
    EXPECT_LE(h * h, l2_norm_sq(f) * gradient_norm_sq(f) * (1 + 1e-12));
  }
}

TEST(Properties, RefinementIsSpectrallyAccurate) {
  const Field a = random_bumps(SpectralGrid(128, 24.0), 5);
  const Field b = random_bumps(SpectralGrid(256, 24.0), 5);
  EXPECT_LE(rel(l2_norm_sq(a), l2_norm_sq(b)), 1e-10);
  EXPECT_LE(rel(gradient_norm_sq(a), gradient_norm_sq(b)), 1e-10);
  EXPECT_LE(rel(hhalf_norm_sq(a), hhalf_norm_sq(b)), 1e-10);
  EXPECT_LE(rel(lp_norm_p(a, 6), lp_norm_p(b, 6)), 1e-10);
}

TEST(Grid, ZeroPaddingKeepsNorms) {
  const Field f = random_bumps(SpectralGrid(64, 24.0), 9);
  const Field p = zero_padded(f, 2);
  EXPECT_EQ(p.grid().n(), 128);
  EXPECT_LE(rel(l2_norm_sq(p), l2_norm_sq(f)), 1e-10);
  EXPECT_LE(rel(gradient_norm_sq(p), gradient_norm_sq(f)), 1e-8);
}

TEST(Grid, GradientMatchesDerivative) {
  const SpectralGrid g(128, 24.0);
  const Field u = gaussian(g, 1.0);
  const auto d = gradient(u);
  double err = 0.0;
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix) {
      const double x = g.x(ix), y = g.x(iy);
      err = std::max(err, std::abs(d[0](ix, iy) - cplx(-x * std::exp(-(x * x + y * y) / 2))));
    }
  EXPECT_LT(err, 1e-12);
}

TEST(Checkpoint, RoundTripAndBadMagic) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "nls2_grid_ckpt.bin").string();
  const Field f = random_bumps(SpectralGrid(32, 12.0), 4).with_time(0.75);
  write_checkpoint(path, f);
  const Field back = read_checkpoint(path);
  EXPECT_EQ(back.grid(), f.grid());
  EXPECT_EQ(back.t(), 0.75);
  for (std::size_t i = 0; i < f.values().size(); ++i) EXPECT_EQ(back.values()[i], f.values()[i]);
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "XXXXjunk";
  }
  EXPECT_THROW(read_checkpoint(path), Error);
  std::filesystem::remove(path);
}
