#pragma once

// Exponential micromodulus with angular terms,
//   c(zeta) = (a0 + a1 cos 2theta + a2 cos 4theta) exp(-|zeta| / l),
// and the linear map from (a0, a1, a2) to the PD stiffness tensor
//   C_ijkl = 1/2 int_H c(xi) xi_i xi_j xi_k xi_l / |xi|^2 dV
// evaluated either over a continuum horizon ball or over a lattice horizon.

#include <boost/math/quadrature/gauss.hpp>

#include <array>
#include <cmath>
#include <numbers>

#include "psm/linalg.hpp"

namespace psm {

struct MicromodulusCoeffs {
  double a0 = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double length = 1.0;  ///< characteristic decay length l

  MicromodulusCoeffs scaled(double f) const { return {a0 * f, a1 * f, a2 * f, length}; }
  bool operator==(const MicromodulusCoeffs&) const = default;
};

/// Angular basis (1, cos 2theta, cos 4theta), theta measured from the 1-axis.
template <int Dim>
std::array<double, 3> angular_basis(const Vec<Dim>& unit) {
  const double c2 = 2.0 * unit[0] * unit[0] - 1.0;
  return {1.0, c2, 2.0 * c2 * c2 - 1.0};
}

template <int Dim>
double base_micromodulus(const Vec<Dim>& zeta, const MicromodulusCoeffs& k) {
  const double r = zeta.norm();
  const auto g = angular_basis<Dim>(Vec<Dim>(zeta / r));
  return (k.a0 * g[0] + k.a1 * g[1] + k.a2 * g[2]) * std::exp(-r / k.length);
}

enum class HorizonQuadrature { Continuum, Lattice };

template <int Dim>
using StiffnessBasis = std::array<VoigtMatrix<Dim>, 3>;

namespace detail {

template <int Dim>
void accumulate_bond(StiffnessBasis<Dim>& basis, const Vec<Dim>& unit, double radial_weight) {
  constexpr auto pairs = voigt_pairs<Dim>();
  const auto g = angular_basis<Dim>(unit);
  for (int a = 0; a < voigt_size(Dim); ++a) {
    const double na = unit[pairs[a].first] * unit[pairs[a].second];
    for (int b = 0; b < voigt_size(Dim); ++b) {
      const double nb = unit[pairs[b].first] * unit[pairs[b].second];
      for (int k = 0; k < 3; ++k) basis[k](a, b) += 0.5 * radial_weight * g[k] * na * nb;
    }
  }
}

/// int_0^delta r^p exp(-r/l) dr by panelled 20-point Gauss-Legendre.
inline double radial_moment(int p, double delta, double l) {
  const int panels = std::max(4, static_cast<int>(std::ceil(2.0 * delta / l)));
  const double h = delta / panels;
  double sum = 0.0;
  for (int k = 0; k < panels; ++k) {
    sum += boost::math::quadrature::gauss<double, 20>::integrate(
        [&](double r) { return std::pow(r, p) * std::exp(-r / l); }, k * h, (k + 1) * h);
  }
  return sum;
}

}  // namespace detail

/// Stiffness basis B_k with C(a) = sum_k a_k B_k. `spacing` is the lattice
/// spacing (only used for HorizonQuadrature::Lattice).
template <int Dim>
StiffnessBasis<Dim> stiffness_basis(double delta, double length, HorizonQuadrature quad, double spacing = 0.0) {
  StiffnessBasis<Dim> basis;
  for (auto& b : basis) b.setZero();

  if (quad == HorizonQuadrature::Lattice) {
    const int reach = static_cast<int>(std::floor(delta / spacing + 1e-9));
    const double volume = std::pow(spacing, Dim);
    std::array<int, Dim> o;
    auto visit = [&](auto&& self, int axis) -> void {
      if (axis == Dim) {
        Vec<Dim> xi;
        for (int k = 0; k < Dim; ++k) xi[k] = o[k] * spacing;
        const double r = xi.norm();
        if (r == 0.0 || r > delta * (1.0 + 1e-12)) return;
        detail::accumulate_bond<Dim>(basis, Vec<Dim>(xi / r), volume * r * r * std::exp(-r / length));
        return;
      }
      for (o[axis] = -reach; o[axis] <= reach; ++o[axis]) self(self, axis + 1);
    };
    visit(visit, 0);
    return basis;
  }

  // Continuum ball: radial moment times an angular rule that is exact for the
  // trigonometric/polynomial degree of n^4 * cos(4 theta).
  const double radial = detail::radial_moment(Dim + 1, delta, length);
  constexpr int n_phi = 64;
  if constexpr (Dim == 2) {
    for (int q = 0; q < n_phi; ++q) {
      const double phi = 2.0 * std::numbers::pi * q / n_phi;
      const Vec<2> unit(std::cos(phi), std::sin(phi));
      detail::accumulate_bond<2>(basis, unit, radial * 2.0 * std::numbers::pi / n_phi);
    }
  } else {
    // polar axis along x1 so that theta is the angle to the 1-axis
    using Rule = boost::math::quadrature::gauss<double, 20>;
    const auto& x = Rule::abscissa();
    const auto& w = Rule::weights();
    for (std::size_t k = 0; k < x.size(); ++k) {
      for (int sign : {-1, 1}) {
        if (k == 0 && sign < 0 && x[0] == 0.0) continue;
        const double mu = sign * x[k];
        const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
        for (int q = 0; q < n_phi; ++q) {
          const double phi = 2.0 * std::numbers::pi * q / n_phi;
          const Vec<3> unit(mu, s * std::cos(phi), s * std::sin(phi));
          detail::accumulate_bond<3>(basis, unit, radial * w[k] * 2.0 * std::numbers::pi / n_phi);
        }
      }
    }
  }
  return basis;
}

template <int Dim>
VoigtMatrix<Dim> evaluate_basis(const StiffnessBasis<Dim>& basis, const MicromodulusCoeffs& k) {
  return k.a0 * basis[0] + k.a1 * basis[1] + k.a2 * basis[2];
}

struct CoefficientFit {
  MicromodulusCoeffs coeffs;
  double relative_residual = 0.0;  ///< ||C(a) - target||_F / ||target||_F
};

/// Least-squares (a0,a1,a2) matching the independent Voigt entries of `target`.
template <int Dim>
CoefficientFit fit_coefficients(const VoigtMatrix<Dim>& target, const StiffnessBasis<Dim>& basis, double length) {
  constexpr int V = voigt_size(Dim);
  constexpr int rows = V * (V + 1) / 2;
  Eigen::Matrix<double, rows, 3> a;
  Eigen::Matrix<double, rows, 1> b;
  int row = 0;
  for (int i = 0; i < V; ++i) {
    for (int j = i; j < V; ++j, ++row) {
      for (int k = 0; k < 3; ++k) a(row, k) = basis[k](i, j);
      b[row] = 0.5 * (target(i, j) + target(j, i));
    }
  }
  // column equilibration keeps the tiny basis magnitudes well conditioned
  Eigen::Vector3d scale;
  for (int k = 0; k < 3; ++k) {
    scale[k] = a.col(k).norm();
    if (scale[k] > 0.0) a.col(k) /= scale[k];
  }
  Eigen::Vector3d x = a.colPivHouseholderQr().solve(b);
  for (int k = 0; k < 3; ++k) x[k] = scale[k] > 0.0 ? x[k] / scale[k] : 0.0;

  CoefficientFit fit;
  fit.coeffs = {x[0], x[1], x[2], length};
  const double tn = target.norm();
  fit.relative_residual = tn > 0.0 ? (evaluate_basis<Dim>(basis, fit.coeffs) - target).norm() / tn : 0.0;
  return fit;
}

}  // namespace psm
