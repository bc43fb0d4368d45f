#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "psm/microstructure.hpp"

using namespace psm;

namespace {

DistributionSpec<2> circles(double radius, double vf, std::uint64_t seed = 7) {
  DistributionSpec<2> spec;
  spec.shape = ParticleShape::Sphere;
  spec.semi_axes[0] = {radius, radius};
  spec.volume_fraction = vf;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST(GenerateRve, EmptySpecGivesNoParticles) {
  DistributionSpec<2> spec = circles(0.05, 0.0);
  const auto rve = generate_rve(spec, 0);
  EXPECT_TRUE(rve.particles.empty());
  EXPECT_EQ(rve.volume_fraction(), 0.0);
}

TEST(GenerateRve, SingleCircleArea) {
  DistributionSpec<2> spec;
  spec.semi_axes[0] = {0.0522, 0.0522};
  spec.count = 1;
  const auto rve = generate_rve(spec, 0);
  ASSERT_EQ(rve.particles.size(), 1u);
  EXPECT_NEAR(rve.volume_fraction(), 0.008560, 1e-6);
}

TEST(GenerateRve, CountFromVolumeFraction) {
  const auto spec = circles(0.0522, 0.14);
  EXPECT_EQ(spec.target_count(), 16u);
  const auto rve = generate_rve(spec, 3);
  EXPECT_EQ(rve.particles.size(), 16u);
  EXPECT_NEAR(rve.volume_fraction(), 16 * std::numbers::pi * 0.0522 * 0.0522, 1e-12);
  EXPECT_NEAR(rve.volume_fraction(), 0.137, 5e-4);
  EXPECT_LE(std::abs(rve.volume_fraction() - 0.14), std::numbers::pi * 0.0522 * 0.0522);
}

TEST(GenerateRve, Deterministic) {
  const auto spec = circles(0.04, 0.2, 11);
  const auto a = generate_rve(spec, 5);
  const auto b = generate_rve(spec, 5);
  ASSERT_EQ(a.particles.size(), b.particles.size());
  for (std::size_t k = 0; k < a.particles.size(); ++k) {
    EXPECT_EQ(a.particles[k].center, b.particles[k].center);
    EXPECT_EQ(a.particles[k].semi_axes, b.particles[k].semi_axes);
  }
  const auto c = generate_rve(spec, 6);
  EXPECT_NE(a.particles[0].center, c.particles[0].center);
}

TEST(GenerateRve, NonOverlapAndContainment) {
  DistributionSpec<2> spec;
  spec.shape = ParticleShape::Ellipsoid;
  spec.semi_axes = {UniformRange{0.05, 0.08}, UniformRange{0.02, 0.04}};
  spec.angles = {UniformRange{0.0, std::numbers::pi}};
  spec.volume_fraction = 0.12;
  spec.seed = 42;
  for (std::size_t m = 0; m < 5; ++m) {
    const auto rve = generate_rve(spec, m);
    const auto& ps = rve.particles;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const double r = ps[i].bounding_radius();
      for (int k = 0; k < 2; ++k) {
        EXPECT_GT(ps[i].center[k] - r, 0.0);
        EXPECT_LT(ps[i].center[k] + r, 1.0);
      }
      for (std::size_t j = i + 1; j < ps.size(); ++j) {
        EXPECT_GT((ps[i].center - ps[j].center).norm(), r + ps[j].bounding_radius());
      }
    }
    // dense sampling: no point inside two particles
    const int n = 300;
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const Vec<2> p((a + 0.5) / n, (b + 0.5) / n);
        int inside = 0;
        for (const auto& q : ps) inside += q.contains(p);
        ASSERT_LE(inside, 1);
      }
    }
  }
}

TEST(GenerateRve, PlacementFailureReportsAchievedFraction) {
  auto spec = circles(0.2, 0.45);
  spec.max_attempts = 50;
  try {
    generate_rve(spec, 0);
    FAIL() << "expected PlacementFailure";
  } catch (const PlacementFailure& e) {
    EXPECT_GT(e.achieved_volume_fraction, 0.0);
    EXPECT_LT(e.achieved_volume_fraction, 0.45);
  }
}

TEST(GenerateRve, RejectsJammingFraction) {
  EXPECT_THROW(generate_rve(circles(0.01, 0.5), 0), ConfigError);
  auto bad = circles(0.01, 0.1);
  bad.semi_axes[0] = {0.02, 0.01};
  EXPECT_THROW(generate_rve(bad, 0), ConfigError);
}

TEST(PhaseAt, CenterAndCorner) {
  const auto rve = generate_rve(circles(0.05, 0.1), 0);
  for (const auto& p : rve.particles) EXPECT_EQ(rve.phase_at(p.center), Phase::Particle);
  EXPECT_EQ(rve.phase_at(Vec<2>(0.0, 0.0)), Phase::Matrix);
  EXPECT_EQ(rve.phase_at(Vec<2>(1.0, 1.0)), Phase::Matrix);
}

TEST(PhaseAt, RotatedEllipse) {
  ParticleGeometry<2> e;
  e.semi_axes = Vec<2>(0.2, 0.1);
  e.center = Vec<2>(0.5, 0.5);
  e.angles = {std::numbers::pi / 4};
  // the offset (0.1, 0.1) lies on the major axis at distance 0.1*sqrt(2)
  EXPECT_NEAR(e.quadratic_form(Vec<2>(0.6, 0.6)), 0.5, 1e-12);
  RveSample<2> rve;
  rve.particles = {e};
  EXPECT_EQ(rve.phase_at(Vec<2>(0.6, 0.6)), Phase::Particle);
  EXPECT_EQ(rve.phase_at(Vec<2>(0.6, 0.4)), Phase::Matrix);
}

TEST(PhaseAt, MonteCarloAreaAgreesWithAnalyticFraction) {
  const auto rve = generate_rve(circles(0.06, 0.2, 5), 1);
  std::mt19937_64 rng(123);
  const int n = 1000000;
  int hits = 0;
  for (int k = 0; k < n; ++k) {
    const Vec<2> p(detail::unit_uniform(rng), detail::unit_uniform(rng));
    hits += rve.phase_at(p) == Phase::Particle;
  }
  const double vf = rve.volume_fraction();
  const double est = static_cast<double>(hits) / n;
  const double se = std::sqrt(vf * (1.0 - vf) / n);
  EXPECT_LT(std::abs(est - vf), 3.0 * se);
}

TEST(GenerateRve, SpheresIn3D) {
  DistributionSpec<3> spec;
  spec.semi_axes[0] = {0.08, 0.1};
  spec.volume_fraction = 0.075;
  spec.seed = 9;
  const auto rve = generate_rve(spec, 0);
  EXPECT_EQ(rve.particles.size(), spec.target_count());
  EXPECT_NEAR(rve.volume_fraction(), 0.075, spec.mean_particle_measure());
  for (const auto& p : rve.particles) EXPECT_EQ(rve.phase_at(p.center), Phase::Particle);
}

TEST(ParticleGeometry, EulerRotationIsOrthonormal) {
  ParticleGeometry<3> p;
  p.angles = {0.3, 1.1, 2.0};
  const Mat<3> r = p.rotation();
  EXPECT_NEAR((r.transpose() * r - Mat<3>::Identity()).norm(), 0.0, 1e-14);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
}

TEST(RveSample, PeriodicPhaseTilesTheCell) {
  RveSample<2> rve;
  rve.side_length = 2.0;
  ParticleGeometry<2> c;
  c.semi_axes = Vec<2>(0.1, 0.1);
  c.center = Vec<2>(0.5, 0.5);
  rve.particles = {c};
  EXPECT_EQ(rve.periodic_phase_at(Vec<2>(1.0, 1.0)), Phase::Particle);
  EXPECT_EQ(rve.periodic_phase_at(Vec<2>(5.0, 3.0)), Phase::Particle);
  EXPECT_EQ(rve.periodic_phase_at(Vec<2>(0.1, 0.1)), Phase::Matrix);
}
