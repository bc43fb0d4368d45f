#pragma once

// Random particle-reinforced RVE geometry: ellipses (2D) and ellipsoids (3D)
// placed by random sequential addition inside a normalized unit cell.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "psm/errors.hpp"
#include "psm/linalg.hpp"

namespace psm {

enum class Phase : std::uint8_t { Matrix = 0, Particle = 1 };

/// Number of orientation angles: psi (2D) or Euler angles psi1..psi3 (3D, z-x-z).
constexpr int angle_count(int dim) { return dim == 2 ? 1 : 3; }

template <int Dim>
struct ParticleGeometry {
  Vec<Dim> semi_axes = Vec<Dim>::Ones();
  Vec<Dim> center = Vec<Dim>::Zero();
  std::array<double, angle_count(Dim)> angles{};

  /// Columns are the particle's principal axes in cell coordinates.
  Mat<Dim> rotation() const {
    if constexpr (Dim == 2) {
      const double c = std::cos(angles[0]);
      const double s = std::sin(angles[0]);
      Mat<2> r;
      r << c, -s, s, c;
      return r;
    } else {
      using Eigen::AngleAxisd;
      return (AngleAxisd(angles[0], Vec<3>::UnitZ()) * AngleAxisd(angles[1], Vec<3>::UnitX()) *
              AngleAxisd(angles[2], Vec<3>::UnitZ()))
          .toRotationMatrix();
    }
  }

  /// sum_k (x'_k / a_k)^2 in the particle frame; <= 1 means inside.
  double quadratic_form(const Vec<Dim>& point) const {
    const Vec<Dim> local = rotation().transpose() * (point - center);
    return local.cwiseQuotient(semi_axes).squaredNorm();
  }

  bool contains(const Vec<Dim>& point) const { return quadratic_form(point) <= 1.0; }

  double measure() const {
    if constexpr (Dim == 2) {
      return std::numbers::pi * semi_axes[0] * semi_axes[1];
    } else {
      return 4.0 / 3.0 * std::numbers::pi * semi_axes.prod();
    }
  }

  double bounding_radius() const { return semi_axes.maxCoeff(); }
};

struct UniformRange {
  double lo = 0.0;
  double hi = 0.0;
  double mean() const { return 0.5 * (lo + hi); }
};

enum class ParticleShape { Ellipsoid, Sphere };

/// Probability laws of the particle parameters. Lengths are in units of the
/// RVE side (normalized cell), angles in radians.
template <int Dim>
struct DistributionSpec {
  ParticleShape shape = ParticleShape::Sphere;
  /// Sphere: only semi_axes[0] (radius) is used.
  std::array<UniformRange, Dim> semi_axes{};
  std::array<UniformRange, angle_count(Dim)> angles{};
  std::optional<std::size_t> count;
  std::optional<double> volume_fraction;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 100000;

  double mean_particle_measure() const {
    if (shape == ParticleShape::Sphere) {
      const double lo = semi_axes[0].lo;
      const double hi = semi_axes[0].hi;
      if constexpr (Dim == 2) {
        return std::numbers::pi * (lo * lo + lo * hi + hi * hi) / 3.0;
      } else {
        return std::numbers::pi * (lo + hi) * (lo * lo + hi * hi) / 3.0;
      }
    }
    double prod = 1.0;
    for (const auto& r : semi_axes) prod *= r.mean();
    return (Dim == 2 ? std::numbers::pi : 4.0 / 3.0 * std::numbers::pi) * prod;
  }

  /// Particle count: explicit, or round(vf / mean particle measure) on the unit cell.
  std::size_t target_count() const {
    if (count) return *count;
    if (volume_fraction) return static_cast<std::size_t>(std::llround(*volume_fraction / mean_particle_measure()));
    return 0;
  }

  void validate() const {
    if (count && volume_fraction) throw ConfigError("distribution", "give either count or volume_fraction, not both");
    if (volume_fraction) {
      if (*volume_fraction < 0.0 || *volume_fraction >= 1.0) {
        throw ConfigError("distribution.volume_fraction", "must lie in [0, 1)");
      }
      if (shape == ParticleShape::Sphere && *volume_fraction >= 0.5) {
        throw ConfigError("distribution.volume_fraction", "random sequential addition jams beyond vf 0.5");
      }
    }
    const int n_axes = shape == ParticleShape::Sphere ? 1 : Dim;
    for (int k = 0; k < n_axes; ++k) {
      const auto& r = semi_axes[k];
      if (!(r.lo > 0.0) || r.hi < r.lo) {
        throw ConfigError("distribution.semi_axes[" + std::to_string(k) + "]", "need 0 < lo <= hi");
      }
    }
    for (std::size_t k = 0; k < angles.size(); ++k) {
      if (angles[k].hi < angles[k].lo) {
        throw ConfigError("distribution.angles[" + std::to_string(k) + "]", "need lo <= hi");
      }
    }
    if (max_attempts == 0) throw ConfigError("distribution.max_attempts", "must be positive");
  }
};

template <int Dim>
struct RveSample {
  std::size_t index = 0;
  double side_length = 1.0;
  std::uint64_t seed = 0;
  std::vector<ParticleGeometry<Dim>> particles;

  /// Analytic particle measure per unit cell measure.
  double volume_fraction() const {
    double sum = 0.0;
    for (const auto& p : particles) sum += p.measure();
    return sum;
  }

  /// Point in normalized cell coordinates.
  Phase phase_at(const Vec<Dim>& point) const {
    for (const auto& p : particles) {
      if (p.contains(point)) return Phase::Particle;
    }
    return Phase::Matrix;
  }

  /// Phase of a point in a structure tiled periodically by this cell (physical coordinates).
  Phase periodic_phase_at(const Vec<Dim>& x) const {
    Vec<Dim> y;
    for (int k = 0; k < Dim; ++k) {
      const double t = x[k] / side_length;
      y[k] = t - std::floor(t);
    }
    return phase_at(y);
  }
};

namespace detail {

/// Uniform double in [0,1) from the top 53 bits; fixed across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double draw(std::mt19937_64& rng, const UniformRange& r) { return r.lo + (r.hi - r.lo) * unit_uniform(rng); }

inline std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t m) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(static_cast<std::uint64_t>(m) >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Random sequential addition. Particles are rejected when their bounding
/// circle/sphere protrudes from the cell or touches an already placed one.
template <int Dim>
RveSample<Dim> generate_rve(const DistributionSpec<Dim>& spec, std::size_t m, double side_length = 1.0) {
  spec.validate();
  RveSample<Dim> rve;
  rve.index = m;
  rve.side_length = side_length;
  rve.seed = spec.seed;

  const std::size_t n = spec.target_count();
  auto rng = detail::sample_rng(spec.seed, m);
  rve.particles.reserve(n);

  for (std::size_t placed = 0; placed < n; ++placed) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt < spec.max_attempts && !ok; ++attempt) {
      ParticleGeometry<Dim> p;
      if (spec.shape == ParticleShape::Sphere) {
        p.semi_axes.setConstant(detail::draw(rng, spec.semi_axes[0]));
      } else {
        for (int k = 0; k < Dim; ++k) p.semi_axes[k] = detail::draw(rng, spec.semi_axes[k]);
        for (std::size_t k = 0; k < p.angles.size(); ++k) p.angles[k] = detail::draw(rng, spec.angles[k]);
      }
      const double r = p.bounding_radius();
      if (2.0 * r >= 1.0) break;
      for (int k = 0; k < Dim; ++k) p.center[k] = r + (1.0 - 2.0 * r) * detail::unit_uniform(rng);

      ok = true;
      for (int k = 0; k < Dim && ok; ++k) {
        ok = p.center[k] - r > 0.0 && p.center[k] + r < 1.0;
      }
      for (const auto& q : rve.particles) {
        if (!ok) break;
        const double gap = r + q.bounding_radius();
        ok = (p.center - q.center).squaredNorm() > gap * gap;
      }
      if (ok) rve.particles.push_back(p);
    }
    if (!ok) throw PlacementFailure(rve.particles.size(), n, rve.volume_fraction());
  }
  return rve;
}

}  // namespace psm
