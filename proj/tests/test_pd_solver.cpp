#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "psm/pd_solver.hpp"

using namespace psm;

namespace {

struct Plate {
  NodeSet<2> nodes;
  BondSet<2> bonds;
};

Plate calibrated_plate(int n, double side, double young, double s0, std::span<const Box<2>> notches = {}) {
  const double dx = side / n;
  Plate p{build_grid<2>(Box<2>{Vec<2>(0, 0), Vec<2>(side, side)}, dx, notches), {}};
  p.bonds = build_bonds<2>(p.nodes, {3 * dx});
  assign_micromodulus<2>(p.bonds, calibrate_micromodulus_coeffs<2>(young, 1.0 / 3.0, dx / 3, 3 * dx, dx));
  assign_critical_stretch<2>(p.bonds, ClassCriticalStretch{s0, s0, s0});
  return p;
}

bool rises_peaks_drops(const std::vector<StepRecord>& h, double fraction = 0.05) {
  double peak = 0.0;
  std::size_t at = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (h[k].stress > peak) {
      peak = h[k].stress;
      at = k;
    }
  }
  if (peak <= 0.0 || at == 0) return false;
  for (std::size_t k = at; k < h.size(); ++k) {
    if (h[k].stress < fraction * peak) return true;
  }
  return false;
}

int break_step_of(const std::vector<StepRecord>& h, double fraction = 0.05) {
  double peak = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    peak = std::max(peak, std::abs(h[k].stress));
    if (peak > 0.0 && std::abs(h[k].stress) < fraction * peak) return static_cast<int>(k);
  }
  return -1;
}

void expect_monotone_history(const SimState<2>& s) {
  for (std::size_t k = 1; k < s.history.size(); ++k) {
    EXPECT_GE(s.history[k].broken_bonds, s.history[k - 1].broken_bonds);
    EXPECT_GE(s.history[k].dissipated_energy, s.history[k - 1].dissipated_energy);
  }
  for (const auto& r : s.history) EXPECT_LE(r.dissipated_energy, r.external_work * (1 + 1e-9));
}

}  // namespace

TEST(BondStretch, Kinematics) {
  Bond<2> b;
  b.i = 0;
  b.j = 1;
  b.xi = Vec<2>(0.3, 0.4);
  b.length = 0.5;
  std::vector<Vec<2>> u{Vec<2>::Zero(), Vec<2>::Zero()};
  EXPECT_EQ(bond_stretch<2>(b, u), 0.0);
  u = {Vec<2>(1.0, -2.0), Vec<2>(1.0, -2.0)};
  EXPECT_NEAR(bond_stretch<2>(b, u), 0.0, 1e-15);
  const double lambda = 0.013;
  u = {Vec<2>(0.1, 0.2) * lambda, Vec<2>(0.4, 0.6) * lambda};
  EXPECT_NEAR(bond_stretch<2>(b, u), lambda, 1e-14);
}

TEST(FailureSweep, BreaksAtThresholdAndRemembers) {
  Bond<2> b;
  b.i = 0;
  b.j = 1;
  b.xi = Vec<2>(1.0, 0.0);
  b.length = 1.0;
  b.c = 2.0;
  b.s0 = 0.01;
  BondSet<2> bonds{b};
  std::vector<Vec<2>> u{Vec<2>::Zero(), Vec<2>(0.005, 0.0)};
  EXPECT_EQ(failure_sweep<2>(bonds, u, 1.0).newly_broken, 0u);
  u[1][0] = 0.01;
  const auto r = failure_sweep<2>(bonds, u, 0.5);
  EXPECT_EQ(r.newly_broken, 1u);
  EXPECT_FALSE(bonds[0].intact);
  // 1/2 k (s0 |zeta|)^2 with k = c V^2
  EXPECT_NEAR(r.released_energy, 0.5 * 2.0 * 0.25 * 0.01 * 0.01, 1e-18);
  u[1][0] = 0.0;
  EXPECT_EQ(failure_sweep<2>(bonds, u, 1.0).newly_broken, 0u);
  EXPECT_FALSE(bonds[0].intact);
}

TEST(Equilibrium, SingleBond) {
  const auto nodes = build_grid<2>(Box<2>{Vec<2>(0, 0), Vec<2>(2, 1)}, 1.0);
  auto bonds = build_bonds<2>(nodes, {1.0});
  ASSERT_EQ(bonds.size(), 1u);
  bonds[0].c = 3.0;
  LoadProgram<2> p;
  p.steps = 1;
  p.dirichlet = {{"fixed", {0}, 0, 0.0, 1.0}, {"fy", {0, 1}, 1, 0.0, 1.0}};
  p.force_increment = {Vec<2>::Zero(), Vec<2>(1.0, 0.0)};
  const auto s = quasi_static_run<2>(bonds, nodes.size(), nodes.volume(), p);
  EXPECT_NEAR(s.u[1][0], 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(s.history[0].reactions[0], -1.0, 1e-9);
  EXPECT_LT(s.history[0].residual, 1e-8);
}

TEST(Equilibrium, AffineCollarPatchTest) {
  // affine field prescribed on a collar of width delta around the plate
  auto plate = calibrated_plate(30, 1.0, 71.7, std::numeric_limits<double>::infinity());
  const auto& nodes = plate.nodes;
  const double e = 1e-3;
  LoadProgram<2> prog;
  prog.steps = 1;
  DirichletSet ux{"ux", {}, 0, 0.0, 1.0, {}};
  DirichletSet uy{"uy", {}, 1, 0.0, 1.0, {}};
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const auto [i, j] = std::pair(nodes.lattice[n][0], nodes.lattice[n][1]);
    if (i >= 3 && i < 27 && j >= 3 && j < 27) continue;
    const Vec<2>& x = nodes.positions[n];
    ux.nodes.push_back(static_cast<int>(n));
    ux.node_increments.push_back(e * (x[0] - 0.5));
    uy.nodes.push_back(static_cast<int>(n));
    uy.node_increments.push_back(-e / 3.0 * (x[1] - 0.5));
  }
  prog.dirichlet = {ux, uy};
  const auto s = quasi_static_run<2>(plate.bonds, nodes.size(), nodes.volume(), prog);
  EXPECT_LT(s.history[0].residual, 1e-8);
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const auto [i, j] = std::pair(nodes.lattice[n][0], nodes.lattice[n][1]);
    if (i < 4 || i > 25) continue;
    const int l = nodes.node_at({i - 1, j});
    const int r = nodes.node_at({i + 1, j});
    EXPECT_NEAR((s.u[r][0] - s.u[l][0]) / (2 * nodes.spacing) / e, 1.0, 0.02);
  }
}

TEST(Equilibrium, StretchedPlateReactionStress) {
  auto plate = calibrated_plate(30, 1.0, 71.7, std::numeric_limits<double>::infinity());
  const auto& nodes = plate.nodes;
  auto prog = symmetric_stretch_program<2>(nodes, 0, 1e-3, 3, 1);
  const auto s = quasi_static_run<2>(plate.bonds, nodes.size(), nodes.volume(), prog);
  EXPECT_LT(s.history[0].residual, 1e-8);
  // strain measured across the centre of the plate
  const int l = nodes.node_at({10, 15});
  const int r = nodes.node_at({19, 15});
  const double strain = (s.u[r][0] - s.u[l][0]) / (9 * nodes.spacing);
  EXPECT_NEAR(s.history[0].stress / (71.7 * strain), 1.0, 0.05);
}

TEST(QuasiStatic, ElasticRunIsLinear) {
  auto plate = calibrated_plate(16, 1.0, 10.0, std::numeric_limits<double>::infinity());
  auto prog = symmetric_stretch_program<2>(plate.nodes, 1, 1e-4, 3, 10);
  const auto s = quasi_static_run<2>(plate.bonds, plate.nodes.size(), plate.nodes.volume(), prog);
  ASSERT_EQ(s.history.size(), 10u);
  const double slope = s.history[0].stress;
  EXPECT_GT(slope, 0.0);
  for (const auto& r : s.history) {
    EXPECT_NEAR(r.stress, slope * r.step, 1e-8 * slope * r.step);
    EXPECT_EQ(r.broken_bonds, 0u);
  }
  EXPECT_EQ(s.dissipated_energy, 0.0);
}

TEST(QuasiStatic, ZeroLoadInvariance) {
  auto plate = calibrated_plate(12, 1.0, 10.0, 1e-3);
  auto prog = symmetric_stretch_program<2>(plate.nodes, 0, 0.0, 3, 5);
  const auto s = quasi_static_run<2>(plate.bonds, plate.nodes.size(), plate.nodes.volume(), prog);
  for (const auto& u : s.u) EXPECT_EQ(u.norm(), 0.0);
  EXPECT_EQ(s.history.back().broken_bonds, 0u);
  EXPECT_EQ(s.history.back().stress, 0.0);
}

TEST(QuasiStatic, NotchedPlateRisesPeaksAndDrops) {
  const std::array<Box<2>, 1> notch{Box<2>{Vec<2>(0.0, 0.49), Vec<2>(0.3, 0.51)}};
  auto plate = calibrated_plate(40, 1.0, 10.0, 0.01, notch);
  auto prog = symmetric_stretch_program<2>(plate.nodes, 1, 2e-4, 3, 100);
  const BondSet<2> before = plate.bonds;
  std::vector<bool> was_intact(plate.bonds.size(), true);
  const auto s = quasi_static_run<2>(plate.bonds, plate.nodes.size(), plate.nodes.volume(), prog,
                                     [&](const SimState<2>&, const BondSet<2>& bonds) {
                                       for (std::size_t k = 0; k < bonds.size(); ++k) {
                                         EXPECT_FALSE(bonds[k].intact && !was_intact[k]);
                                         was_intact[k] = bonds[k].intact;
                                       }
                                     });
  EXPECT_TRUE(rises_peaks_drops(s.history));
  expect_monotone_history(s);
  for (const auto& r : s.history) EXPECT_LT(r.residual, 1e-8);
  for (std::size_t n = 0; n < s.damage.size(); ++n) {
    EXPECT_GE(s.damage[n], 0.0);
    EXPECT_LE(s.damage[n], 1.0);
  }
}

TEST(QuasiStatic, StopAfterCompleteBreakIsAPrefix) {
  const std::array<Box<2>, 1> notch{Box<2>{Vec<2>(0.0, 0.475), Vec<2>(0.3, 0.525)}};
  auto full_plate = calibrated_plate(20, 1.0, 10.0, 0.01, notch);
  auto cut_plate = full_plate;
  auto prog = symmetric_stretch_program<2>(full_plate.nodes, 1, 4e-4, 3, 60);
  const auto full = quasi_static_run<2>(full_plate.bonds, full_plate.nodes.size(), full_plate.nodes.volume(), prog);
  prog.stop_fraction = 0.05;
  const auto cut = quasi_static_run<2>(cut_plate.bonds, cut_plate.nodes.size(), cut_plate.nodes.volume(), prog);
  const int k = break_step_of(full.history);
  ASSERT_GE(k, 0);
  ASSERT_EQ(cut.history.size(), static_cast<std::size_t>(k + 1));
  for (std::size_t t = 0; t < cut.history.size(); ++t) {
    EXPECT_EQ(cut.history[t].stress, full.history[t].stress);
    EXPECT_EQ(cut.history[t].broken_bonds, full.history[t].broken_bonds);
  }
}

TEST(QuasiStatic, DoubleNotchMirrorSymmetry) {
  const std::array<Box<2>, 2> notches{Box<2>{Vec<2>(0.0, 0.49), Vec<2>(0.2, 0.51)},
                                      Box<2>{Vec<2>(0.8, 0.49), Vec<2>(1.0, 0.51)}};
  auto plate = calibrated_plate(40, 1.0, 10.0, 0.008, notches);
  auto prog = symmetric_stretch_program<2>(plate.nodes, 1, 2e-4, 3, 60);
  const auto s = quasi_static_run<2>(plate.bonds, plate.nodes.size(), plate.nodes.volume(), prog);
  ASSERT_GT(s.history.back().broken_bonds, 0u);

  const auto& nodes = plate.nodes;
  auto mirror = [&](int n) {
    auto idx = nodes.lattice[static_cast<std::size_t>(n)];
    idx[0] = nodes.cells[0] - 1 - idx[0];
    return nodes.node_at(idx);
  };
  std::set<std::pair<int, int>> broken;
  for (const auto& b : plate.bonds) {
    if (!b.intact) broken.emplace(b.i, b.j);
  }
  for (const auto& [i, j] : broken) {
    const int mi = mirror(i);
    const int mj = mirror(j);
    EXPECT_TRUE(broken.count({std::min(mi, mj), std::max(mi, mj)})) << i << "-" << j;
  }
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    EXPECT_NEAR(s.damage[n], s.damage[static_cast<std::size_t>(mirror(static_cast<int>(n)))], 1e-6);
  }
}

TEST(QuasiStatic, IsolatedNodesAreReported) {
  auto plate = calibrated_plate(10, 1.0, 10.0, std::numeric_limits<double>::infinity());
  const int victim = plate.nodes.node_at({5, 5});
  for (auto& b : plate.bonds) {
    if (b.i == victim || b.j == victim) b.intact = false;
  }
  auto prog = symmetric_stretch_program<2>(plate.nodes, 0, 1e-4, 3, 2);
  const auto s = quasi_static_run<2>(plate.bonds, plate.nodes.size(), plate.nodes.volume(), prog);
  EXPECT_EQ(s.history.back().isolated_nodes, 1u);
  EXPECT_EQ(s.u[static_cast<std::size_t>(victim)].norm(), 0.0);
  EXPECT_LT(s.history.back().residual, 1e-8);
}

TEST(QuasiStatic, ConjugateGradientMatchesDirect) {
  auto a = calibrated_plate(16, 1.0, 10.0, std::numeric_limits<double>::infinity());
  auto b = a;
  auto pa = symmetric_stretch_program<2>(a.nodes, 0, 1e-3, 3, 1);
  auto pb = pa;
  pb.method = SpdSolver::Method::ConjugateGradient;
  const auto sa = quasi_static_run<2>(a.bonds, a.nodes.size(), a.nodes.volume(), pa);
  const auto sb = quasi_static_run<2>(b.bonds, b.nodes.size(), b.nodes.volume(), pb);
  EXPECT_NEAR(sa.history[0].stress, sb.history[0].stress, 1e-6 * std::abs(sa.history[0].stress));
}

TEST(LoadProgram, Validation) {
  auto plate = calibrated_plate(8, 1.0, 1.0, 1.0);
  LoadProgram<2> p;
  p.steps = 0;
  EXPECT_THROW(quasi_static_run<2>(plate.bonds, plate.nodes.size(), 1.0, p), ConfigError);
  p.steps = 1;
  p.dirichlet = {{"bad", {9999}, 0, 0.0, 1.0}};
  EXPECT_THROW(quasi_static_run<2>(plate.bonds, plate.nodes.size(), 1.0, p), ConfigError);
}

TEST(ReactionStress, ZeroProgram) {
  StepRecord r;
  EXPECT_EQ(reaction_stress(r, 0, 1.0), 0.0);
  r.reactions = {3.0};
  EXPECT_EQ(reaction_stress(r, 0, 1.5), 2.0);
}
