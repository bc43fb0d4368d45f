#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "psm/correction.hpp"

using namespace psm;

namespace {

struct Body {
  NodeSet<2> nodes;
  VoxelMesh<2> mesh;
  MaterialField<2> materials;
  std::vector<Phase> phases;
  BondSet<2> bonds;
};

Body make_body(int n, const RveSample<2>& rve) {
  const double dx = 1.0 / n;
  const Box<2> box{Vec<2>(0, 0), Vec<2>(1, 1)};
  Body b{build_grid<2>(box, dx), VoxelMesh<2>::for_box(box, dx), {}, {}, {}};
  const PhaseMaterials mats{{427.0, 1.0 / 3.0}, {71.7, 1.0 / 3.0}};
  b.materials = rve_materials<2>(b.mesh, rve, mats);
  for (const auto& p : b.nodes.positions) b.phases.push_back(rve.phase_at(p));
  b.bonds = build_bonds<2>(b.nodes, {3 * dx}, b.phases);
  const auto km = calibrate_micromodulus_coeffs<2>(71.7, 1.0 / 3.0, dx / 3, 3 * dx, dx);
  const auto kp = calibrate_micromodulus_coeffs<2>(427.0, 1.0 / 3.0, dx / 3, 3 * dx, dx);
  assign_micromodulus<2>(b.bonds, b.phases, km, kp);
  return b;
}

bool interior(const NodeSet<2>& nodes, int id, int layers) {
  for (int k = 0; k < 2; ++k) {
    const int c = nodes.lattice[static_cast<std::size_t>(id)][k];
    if (c < layers || c >= nodes.cells[k] - layers) return false;
  }
  return true;
}

RveSample<2> one_particle() {
  RveSample<2> rve;
  ParticleGeometry<2> p;
  p.semi_axes = Vec<2>(0.22, 0.14);
  p.center = Vec<2>(0.5, 0.5);
  p.angles = {0.4};
  rve.particles = {p};
  return rve;
}

}  // namespace

TEST(PdEnergy, ZeroAndRigidMotion) {
  auto body = make_body(10, RveSample<2>{});
  std::vector<Vec<2>> u(body.nodes.size(), Vec<2>::Zero());
  for (double w : pd_energy_density<2>(body.bonds, u, body.nodes.size(), body.nodes.volume())) EXPECT_EQ(w, 0.0);
  std::fill(u.begin(), u.end(), Vec<2>(0.3, -0.2));
  for (double w : pd_energy_density<2>(body.bonds, u, body.nodes.size(), body.nodes.volume())) EXPECT_NEAR(w, 0.0, 1e-30);
}

TEST(PdEnergy, UniformStrainInteriorMatchesCcm) {
  auto body = make_body(30, RveSample<2>{});
  const double e = 1e-3;
  std::vector<Vec<2>> u;
  for (const auto& p : body.nodes.positions) u.emplace_back(e * p[0], -e / 3.0 * p[1]);
  const auto w = pd_energy_density<2>(body.bonds, u, body.nodes.size(), body.nodes.volume());
  const double w_ccm = 0.5 * 71.7 * e * e;
  for (std::size_t n = 0; n < w.size(); ++n) {
    if (interior(body.nodes, static_cast<int>(n), 3)) EXPECT_NEAR(w[n] / w_ccm, 1.0, 0.02);
  }
}

TEST(CorrectionFactors, Ratios) {
  const std::vector<double> ccm{1.0, 2.0, 3.0};
  EXPECT_EQ(correction_factors(ccm, ccm), (std::vector<double>{1.0, 1.0, 1.0}));
  const std::vector<double> pd{2.0, 4.0, 6.0};
  EXPECT_EQ(correction_factors(ccm, pd), (std::vector<double>{0.5, 0.5, 0.5}));
  const std::vector<double> degenerate{1.0, 1e-14, 1.0};
  EXPECT_THROW(correction_factors(ccm, degenerate), DegenerateEnergy);
  const std::vector<double> zero{0.0, 0.0, 0.0};
  EXPECT_THROW(correction_factors(ccm, zero), DegenerateEnergy);
}

TEST(CorrectedModulus, ScalarRules) {
  EXPECT_DOUBLE_EQ(harmonic_mean(2.0, 6.0), 3.0);
  const std::array<double, 3> same{4.0, 4.0, 4.0};
  EXPECT_DOUBLE_EQ(directional_modulus<3>(Vec<3>(0.48, 0.6, 0.64), same), 4.0);
  const std::array<double, 3> k{2.0, 5.0, 9.0};
  EXPECT_DOUBLE_EQ(directional_modulus<3>(Vec<3>(1, 0, 0), k), 2.0);
  EXPECT_DOUBLE_EQ(directional_modulus<3>(Vec<3>(0, 0, 1), k), 9.0);
  for (double t = 0.0; t < 3.2; t += 0.1) {
    const double c = directional_modulus<2>(Vec<2>(std::cos(t), std::sin(t)), {2.0, 5.0});
    EXPECT_GE(c, 2.0 - 1e-12);
    EXPECT_LE(c, 5.0 + 1e-12);
  }
}

TEST(CorrectedModulus, AxisBondsRecoverDirectionalValue) {
  auto body = make_body(10, RveSample<2>{});
  CorrectionFactors<2> f;
  f.alpha[0].assign(body.nodes.size(), 1.5);
  f.alpha[1].assign(body.nodes.size(), 0.5);
  auto bonds = body.bonds;
  corrected_micromodulus<2>(bonds, f);
  for (std::size_t k = 0; k < bonds.size(); ++k) {
    const auto& b = bonds[k];
    const double base = body.bonds[k].c;
    if (b.xi[1] == 0.0) EXPECT_NEAR(b.c, 1.5 * base, 1e-12 * base);
    if (b.xi[0] == 0.0) EXPECT_NEAR(b.c, 0.5 * base, 1e-12 * base);
    EXPECT_GE(b.c, 0.5 * base * (1 - 1e-12));
    EXPECT_LE(b.c, 1.5 * base * (1 + 1e-12));
  }
}

TEST(Correction, HomogeneousBodySurfaceBand) {
  auto body = make_body(30, RveSample<2>{});
  const auto base = body.bonds;
  const auto r = correct_voxel_body<2>(body.bonds, body.nodes, body.mesh, body.materials);
  for (int axis = 0; axis < 2; ++axis) {
    const auto& alpha = r.factors.alpha[static_cast<std::size_t>(axis)];
    for (std::size_t n = 0; n < alpha.size(); ++n) {
      if (interior(body.nodes, static_cast<int>(n), 3)) {
        EXPECT_GE(alpha[n], 0.95);
        EXPECT_LE(alpha[n], 1.05);
      }
      if (!interior(body.nodes, static_cast<int>(n), 1)) EXPECT_GT(alpha[n], 1.0);
    }
  }
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (interior(body.nodes, base[k].i, 3) && interior(body.nodes, base[k].j, 3)) {
      EXPECT_GE(body.bonds[k].c / base[k].c, 0.9);
      EXPECT_LE(body.bonds[k].c / base[k].c, 1.1);
    }
  }
}

TEST(Correction, TwoPhasePostCorrectionConsistency) {
  auto body = make_body(80, one_particle());
  const auto r = correct_voxel_body<2>(body.bonds, body.nodes, body.mesh, body.materials);
  for (int axis = 0; axis < 2; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    const auto w = pd_energy_density<2>(body.bonds, r.displacement[a], body.nodes.size(), body.nodes.volume());
    std::size_t good = 0;
    std::size_t total = 0;
    for (std::size_t n = 0; n < w.size(); ++n) {
      if (!interior(body.nodes, static_cast<int>(n), 3)) continue;
      ++total;
      good += std::abs(w[n] / r.w_ccm[a][n] - 1.0) <= 0.10;
    }
    EXPECT_GE(static_cast<double>(good), 0.95 * static_cast<double>(total)) << "axis " << axis;
  }
  for (const auto& alpha : r.factors.alpha) {
    for (double x : alpha) {
      EXPECT_TRUE(std::isfinite(x));
      EXPECT_GT(x, 0.0);
    }
  }
}
