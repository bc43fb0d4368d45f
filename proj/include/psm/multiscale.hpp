#pragma once

// Statistical upscaling: effective critical stretch from RVE fracture runs,
// sample averages, direction interpolation and the equivalent micromodulus.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "psm/errors.hpp"
#include "psm/linalg.hpp"
#include "psm/micromodulus.hpp"
#include "psm/pd_solver.hpp"

namespace psm {

/// First step at which |stress| falls below `drop_fraction` of its running
/// peak, after the peak has been reached. Returns -1 if it never happens.
inline int break_step(std::span<const StepRecord> history, double drop_fraction = 0.05) {
  double peak = 0.0;
  for (std::size_t k = 0; k < history.size(); ++k) {
    const double s = std::abs(history[k].stress);
    peak = std::max(peak, s);
    if (peak > 0.0 && s < drop_fraction * peak) return static_cast<int>(k);
  }
  return -1;
}

/// s = opening / side at the step where the RVE breaks completely.
/// `opening_per_step` is the relative displacement of the loaded faces.
inline double rve_critical_stretch(std::span<const StepRecord> history, double opening_per_step, double side_length,
                                   double drop_fraction = 0.05) {
  const int k = break_step(history, drop_fraction);
  if (k < 0) {
    throw NoFailure("stress stayed above " + std::to_string(drop_fraction) + " of its peak for all " +
                    std::to_string(history.size()) + " steps");
  }
  return opening_per_step * history[static_cast<std::size_t>(k)].step / side_length;
}

struct ScalarSummary {
  double mean = 0.0;
  double stddev = std::numeric_limits<double>::quiet_NaN();  ///< sample standard deviation (NaN for M = 1)
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;

  bool has_spread() const { return count > 1; }
};

inline ScalarSummary aggregate_scalar(std::span<const double> samples) {
  ScalarSummary s;
  s.count = samples.size();
  if (samples.empty()) throw ConfigError("samples", "need at least one sample");
  double sum = 0.0;
  for (double x : samples) sum += x;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double sq = 0.0;
    for (double x : samples) sq += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(s.count - 1));
    s.std_error = s.stddev / std::sqrt(static_cast<double>(s.count));
  }
  return s;
}

/// 1 / sqrt(sum_i (v_i / s_i)^2) for the unit bond direction v.
template <int Dim>
double directional_critical_stretch(const std::array<double, Dim>& s, const Vec<Dim>& xi) {
  const Vec<Dim> v = xi.normalized();
  double sum = 0.0;
  for (int i = 0; i < Dim; ++i) {
    const double si = s[static_cast<std::size_t>(i)];
    if (std::isinf(si)) continue;
    const double t = v[i] / si;
    sum += t * t;
  }
  return sum > 0.0 ? 1.0 / std::sqrt(sum) : std::numeric_limits<double>::infinity();
}

template <int Dim>
ElasticTensor<Dim> aggregate_tensor(std::span<const ElasticTensor<Dim>> samples) {
  if (samples.empty()) throw ConfigError("samples", "need at least one tensor");
  ElasticTensor<Dim> mean;
  for (const auto& t : samples) mean.voigt += t.voigt;
  mean.voigt /= static_cast<double>(samples.size());
  return mean.symmetrized();
}

struct EquivalentMicromodulus {
  MicromodulusCoeffs coeffs;
  double relative_residual = 0.0;
  bool representable = true;  ///< false when the residual exceeds the tolerance
};

/// Least-squares (a0, a1, a2) reproducing `target` through the horizon
/// stiffness integral over a continuum ball by default.
template <int Dim>
EquivalentMicromodulus fit_equivalent_micromodulus(const ElasticTensor<Dim>& target, double delta, double length,
                                                   HorizonQuadrature quad = HorizonQuadrature::Continuum,
                                                   double spacing = 0.0, double residual_tolerance = 0.05) {
  if (!(delta > 0.0) || !(length > 0.0)) throw ConfigError("fit", "delta and length must be positive");
  if (quad == HorizonQuadrature::Lattice && !(spacing > 0.0)) throw ConfigError("fit.spacing", "lattice fit needs dx");
  const auto basis = stiffness_basis<Dim>(delta, length, quad, spacing);
  const auto fit = fit_coefficients<Dim>(target.voigt, basis, length);
  return {fit.coeffs, fit.relative_residual, fit.relative_residual <= residual_tolerance};
}

}  // namespace psm
