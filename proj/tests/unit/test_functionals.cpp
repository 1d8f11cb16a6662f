#include <gtest/gtest.h>

#include "common.hpp"
#include "nls2/functionals.hpp"
#include "nls2/ground_state.hpp"

using namespace nls2;
using namespace testing_support;

namespace {

const SpectralGrid& box() {
  static const SpectralGrid g(256, 32.0);
  return g;
}

}  // namespace

TEST(Conserved, ZeroField) {
  const ConservedSet c = conserved(Field(box()));
  EXPECT_EQ(c.mass, 0.0);
  EXPECT_EQ(c.energy, 0.0);
  EXPECT_EQ(c.momentum[0], 0.0);
  EXPECT_EQ(c.momentum[1], 0.0);
}

TEST(Conserved, GaussianClosedForms) {
  for (const double A : {0.5, 1.0, 2.0}) {
    const ConservedSet c = conserved(gaussian(box(), A));
    // radial oracles for the mass and energy integrals
    const double m = simpson([&](double r) { return 2 * pi * r * A * A * std::exp(-r * r); }, 0.0, 14.0);
    const double g = simpson([&](double r) { return 2 * pi * r * A * A * r * r * std::exp(-r * r); }, 0.0, 14.0);
    const double l6 = simpson([&](double r) { return 2 * pi * r * std::pow(A, 6) * std::exp(-3 * r * r); }, 0.0, 14.0);
    EXPECT_LE(rel(c.mass, m), 1e-10);
    EXPECT_LE(rel(c.energy, 0.5 * g - l6 / 6), 1e-10);
    EXPECT_LE(rel(c.energy, 0.5 * A * A * pi - std::pow(A, 6) * pi / 18), 1e-10);
    EXPECT_LT(std::abs(c.momentum[0]) + std::abs(c.momentum[1]), 1e-14);
  }
  EXPECT_LE(rel(conserved(gaussian(box(), 2.0)).energy, -14.0 * pi / 9.0), 1e-10);
}

TEST(Renormalized, GroundStateIsPointD) {
  const auto& gs = ground();
  const RenormalizedSet r = renormalized(gs.field, gs.norms);
  EXPECT_NEAR(r.G, 1.0, 1e-6);
  EXPECT_NEAR(r.ME, 1.0, 1e-6);
  const WindowReport w = window_check(r);
  EXPECT_NEAR(w.lower_margin, 0.0, 1e-6);
  EXPECT_NEAR(w.upper_margin, 1.0, 1e-6);  // 2G^2 - ME = 1 at D
}

TEST(Renormalized, MassEnergyLine) {
  const auto& gs = ground();
  const SpectralGrid g(1024, 64.0);
  for (const double lambda : {0.8, 0.9, 1.1, 1.2}) {
    const Field f = make_initial_data(ScaledQ{lambda}, g, gs, 1e-8);
    const RenormalizedSet r = renormalized(f, gs.norms);
    EXPECT_NEAR(r.G, lambda, 1e-6);
    EXPECT_NEAR(r.ME, 2 * lambda * lambda - std::pow(lambda, 4), 1e-6);
    EXPECT_NEAR(window_margins(r).lower_margin, 0.0, 1e-6);
  }
}

TEST(Renormalized, ZeroFieldAndCertification) {
  const auto& gs = ground();
  const RenormalizedSet r = renormalized(Field(box()), gs.norms);
  EXPECT_EQ(r.G, 0.0);
  EXPECT_EQ(r.ME, 0.0);
  const WindowReport w = window_check(r);
  EXPECT_EQ(w.status, WindowStatus::inside);
  EXPECT_EQ(w.lower_margin, 0.0);
  EXPECT_EQ(w.upper_margin, 0.0);
  GroundStateNorms uncertified = gs.norms;
  uncertified.certified = false;
  EXPECT_THROW(renormalized(gaussian(box(), 1.0), uncertified), Error);
}

TEST(Boost, IdentityAndModulusInvariants) {
  const Field u = gaussian(box(), 1.2);
  const Field same = galilean_boost(u, {0.0, 0.0});
  EXPECT_EQ(l2_distance(u, same), 0.0);
  const Field b = galilean_boost(u, {0.7, -0.3});
  EXPECT_LE(rel(l2_norm_sq(b), l2_norm_sq(u)), 1e-14);
  EXPECT_LE(rel(lp_norm_p(b, 6), lp_norm_p(u, 6)), 1e-14);
}

TEST(Boost, MomentumOfBoostedGaussian) {
  const double A = 1.5;
  const ConservedSet c = conserved(galilean_boost(gaussian(box(), A), {1.0, 0.0}));
  EXPECT_LE(rel(c.momentum[0], pi * A * A), 1e-10);
  EXPECT_LT(std::abs(c.momentum[1]), 1e-12);
}

TEST(Boost, RejectsUnresolvedBoost) {
  const Field u = gaussian(box(), 1.0);
  EXPECT_THROW(galilean_boost(u, {0.6 * box().nyquist(), 0.0}), Error);
}

TEST(Reduce, ZeroMomentumIsIdentity) {
  const Field u = gaussian(box(), 1.0);
  const GalileanReduction red = galilean_reduce(u);
  EXPECT_LT(std::hypot(red.xi0[0], red.xi0[1]), 1e-15);
  EXPECT_LE(l2_distance(red.field, u), 1e-14);
  EXPECT_THROW(galilean_reduce(Field(box())), Error);
}

TEST(Reduce, InvertsBoost) {
  const Field u = gaussian(box(), 1.0);
  const GalileanReduction red = galilean_reduce(galilean_boost(u, {1.0, 0.0}));
  EXPECT_NEAR(red.xi0[0], -1.0, 1e-12);
  EXPECT_NEAR(red.xi0[1], 0.0, 1e-12);
  EXPECT_LE(l2_distance(red.field, u) / std::sqrt(l2_norm_sq(u)), 1e-12);
}

TEST(Reduce, EnergyDropsByMomentumSquaredOverTwiceMass) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Field f = galilean_boost(random_bumps(box(), seed), {0.4, -0.25});
    const ConservedSet cf = conserved(f);
    const ConservedSet cw = conserved(galilean_reduce(f).field);
    const double p2 = cf.momentum[0] * cf.momentum[0] + cf.momentum[1] * cf.momentum[1];
    EXPECT_NEAR(cw.energy, cf.energy - p2 / (2 * cf.mass), 1e-10 * std::max(1.0, std::abs(cf.energy)));
    EXPECT_LT(std::hypot(cw.momentum[0], cw.momentum[1]), 1e-10);
  }
}

TEST(Reduce, MassEnergyOfReductionMatchesInvariant) {
  const auto& gs = ground();
  const SpectralGrid g(1024, 64.0);
  const Field u = make_initial_data(ScaledQ{0.9}, g, gs, 1e-8);
  for (const Vec2 xi : {Vec2{0.5, 0.0}, Vec2{0.0, 1.0}}) {
    const Field b = galilean_boost(u, xi);
    const RenormalizedSet rb = renormalized(b, gs.norms);
    const RenormalizedSet rw = renormalized(galilean_reduce(b).field, gs.norms);
    EXPECT_LT(rw.Pn, 1e-10);
    EXPECT_NEAR(rw.ME, rb.ME - 2 * rb.Pn * rb.Pn, 1e-9);
    EXPECT_NEAR(rw.G * rw.G, rb.G * rb.G - rb.Pn * rb.Pn, 1e-9);
  }
}

TEST(Reduce, BoostReduceRoundTrip) {
  const Field f = random_bumps(box(), 11);
  const Field back = galilean_boost(galilean_boost(f, {0.3, 0.8}), {-0.3, -0.8});
  EXPECT_LE(l2_distance(f, back) / std::sqrt(l2_norm_sq(f)), 1e-12);
}

TEST(Window, RequiresZeroMomentum) {
  const auto& gs = ground();
  const Field b = galilean_boost(gaussian(box(), 1.0), {1.0, 0.0});
  EXPECT_THROW(window_check(renormalized(b, gs.norms)), Error);
}

TEST(Window, HoldsForRandomFields) {
  const auto& gs = ground();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Field w = galilean_reduce(random_bumps(box(), seed)).field;
    EXPECT_EQ(window_check(renormalized(w, gs.norms)).status, WindowStatus::inside) << "seed " << seed;
  }
}

TEST(Scaling, HhalfIsScaleInvariant) {
  // u_l(x) = l^(1/2) u(l x) on boxes rescaled by 1/l so the sampled values coincide
  const Field u = gaussian(SpectralGrid(256, 32.0), 1.0);
  for (const double l : {0.5, 2.0}) {
    const SpectralGrid g(256, 32.0 / l);
    const Field ul = Field::sample(g, [&](double x, double y) { return std::sqrt(l) * std::exp(-l * l * (x * x + y * y) / 2); });
    EXPECT_LE(rel(hhalf_norm_sq(ul), hhalf_norm_sq(u)), 1e-8);
  }
}
