#pragma once

// Small-strain linear elasticity on voxel meshes (bilinear quads / trilinear
// hexes, full Gauss quadrature): stretch solutions used by the micromodulus
// correction, Dirichlet cell problems and the homogenized tensor.
//
// Element e of a voxel mesh coincides with the PD cell of node e in a NodeSet
// built on the same box and spacing (both in lattice order, axis 0 fastest).

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "psm/discretization.hpp"
#include "psm/linalg.hpp"
#include "psm/microstructure.hpp"

namespace psm {

template <int Dim>
struct VoxelMesh {
  static constexpr int corners = 1 << Dim;

  std::array<int, Dim> cells{};
  double h = 1.0;
  Vec<Dim> origin = Vec<Dim>::Zero();

  static VoxelMesh for_box(const Box<Dim>& box, double spacing) {
    VoxelMesh m;
    m.h = spacing;
    m.origin = box.lo;
    for (int k = 0; k < Dim; ++k) {
      const double ratio = (box.hi[k] - box.lo[k]) / spacing;
      m.cells[k] = static_cast<int>(std::lround(ratio));
      if (m.cells[k] < 1 || std::abs(ratio - m.cells[k]) > 1e-9 * std::max(1.0, ratio)) {
        throw ConfigError("mesh.dx", "spacing must divide the RVE side");
      }
    }
    return m;
  }

  std::size_t num_elements() const {
    std::size_t n = 1;
    for (int c : cells) n *= static_cast<std::size_t>(c);
    return n;
  }
  std::size_t num_nodes() const {
    std::size_t n = 1;
    for (int c : cells) n *= static_cast<std::size_t>(c + 1);
    return n;
  }
  std::size_t num_dofs() const { return num_nodes() * Dim; }
  double measure() const { return static_cast<double>(num_elements()) * std::pow(h, Dim); }

  int node_id(const std::array<int, Dim>& idx) const {
    int id = 0;
    int stride = 1;
    for (int k = 0; k < Dim; ++k) {
      id += idx[k] * stride;
      stride *= cells[k] + 1;
    }
    return id;
  }

  std::array<int, Dim> node_index(int id) const {
    std::array<int, Dim> idx;
    for (int k = 0; k < Dim; ++k) {
      idx[k] = id % (cells[k] + 1);
      id /= cells[k] + 1;
    }
    return idx;
  }

  std::array<int, Dim> element_index(std::size_t e) const {
    std::array<int, Dim> idx;
    for (int k = 0; k < Dim; ++k) {
      idx[k] = static_cast<int>(e % static_cast<std::size_t>(cells[k]));
      e /= static_cast<std::size_t>(cells[k]);
    }
    return idx;
  }

  /// Corner a has offset bit k along axis k.
  std::array<int, corners> element_nodes(std::size_t e) const {
    const auto base = element_index(e);
    std::array<int, corners> out;
    for (int a = 0; a < corners; ++a) {
      auto idx = base;
      for (int k = 0; k < Dim; ++k) idx[k] += (a >> k) & 1;
      out[a] = node_id(idx);
    }
    return out;
  }

  Vec<Dim> node_position(int id) const {
    const auto idx = node_index(id);
    Vec<Dim> p;
    for (int k = 0; k < Dim; ++k) p[k] = origin[k] + idx[k] * h;
    return p;
  }

  Vec<Dim> element_center(std::size_t e) const {
    const auto idx = element_index(e);
    Vec<Dim> p;
    for (int k = 0; k < Dim; ++k) p[k] = origin[k] + (idx[k] + 0.5) * h;
    return p;
  }

  bool on_boundary(int id) const {
    const auto idx = node_index(id);
    for (int k = 0; k < Dim; ++k) {
      if (idx[k] == 0 || idx[k] == cells[k]) return true;
    }
    return false;
  }
};

/// Distinct tensors plus a per-element index into them.
template <int Dim>
struct MaterialField {
  std::vector<ElasticTensor<Dim>> tensors;
  std::vector<int> element_material;

  const ElasticTensor<Dim>& at(std::size_t e) const { return tensors[static_cast<std::size_t>(element_material[e])]; }
};

struct IsotropicMaterial {
  double young = 1.0;
  double poisson = 0.25;
};

struct PhaseMaterials {
  IsotropicMaterial particle;
  IsotropicMaterial matrix;
};

/// Voxel phases by element centroid: material 0 = matrix, 1 = particle.
template <int Dim>
MaterialField<Dim> voxel_materials(const VoxelMesh<Dim>& mesh, const PhaseMaterials& phases,
                                   const std::function<Phase(const Vec<Dim>&)>& phase_at) {
  MaterialField<Dim> f;
  f.tensors = {ElasticTensor<Dim>::isotropic(phases.matrix.young, phases.matrix.poisson),
               ElasticTensor<Dim>::isotropic(phases.particle.young, phases.particle.poisson)};
  f.element_material.resize(mesh.num_elements());
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    f.element_material[e] = phase_at(mesh.element_center(e)) == Phase::Particle ? 1 : 0;
  }
  return f;
}

template <int Dim>
MaterialField<Dim> rve_materials(const VoxelMesh<Dim>& mesh, const RveSample<Dim>& rve, const PhaseMaterials& phases) {
  return voxel_materials<Dim>(mesh, phases, [&](const Vec<Dim>& x) { return rve.phase_at(x / rve.side_length); });
}

template <int Dim>
MaterialField<Dim> homogeneous_material(const VoxelMesh<Dim>& mesh, const ElasticTensor<Dim>& c) {
  MaterialField<Dim> f;
  f.tensors = {c};
  f.element_material.assign(mesh.num_elements(), 0);
  return f;
}

namespace detail {

template <int Dim>
using StrainMatrix = Eigen::Matrix<double, voigt_size(Dim), Dim * VoxelMesh<Dim>::corners>;

/// Strain-displacement matrices at the 2^Dim Gauss points of a cube of side h.
template <int Dim>
std::array<StrainMatrix<Dim>, VoxelMesh<Dim>::corners> gauss_b_matrices(double h) {
  constexpr int corners = VoxelMesh<Dim>::corners;
  constexpr auto pairs = voigt_pairs<Dim>();
  const double g = 1.0 / std::sqrt(3.0);
  std::array<StrainMatrix<Dim>, corners> out;
  for (int q = 0; q < corners; ++q) {
    std::array<double, Dim> xi;
    for (int k = 0; k < Dim; ++k) xi[k] = ((q >> k) & 1) ? g : -g;
    Eigen::Matrix<double, Dim, corners> grad;
    for (int a = 0; a < corners; ++a) {
      for (int k = 0; k < Dim; ++k) {
        double d = 1.0;
        for (int m = 0; m < Dim; ++m) {
          const double s = ((a >> m) & 1) ? 1.0 : -1.0;
          d *= (m == k) ? 0.5 * s : 0.5 * (1.0 + s * xi[m]);
        }
        grad(k, a) = d * 2.0 / h;
      }
    }
    StrainMatrix<Dim> b = StrainMatrix<Dim>::Zero();
    for (int a = 0; a < corners; ++a) {
      for (int v = 0; v < voigt_size(Dim); ++v) {
        const auto [i, j] = pairs[v];
        if (i == j) {
          b(v, a * Dim + i) = grad(i, a);
        } else {
          b(v, a * Dim + i) = grad(j, a);
          b(v, a * Dim + j) = grad(i, a);
        }
      }
    }
    out[q] = b;
  }
  return out;
}

template <int Dim>
double gauss_weight(double h) {
  return std::pow(h / 2.0, Dim);  // unit reference weights times det J
}

}  // namespace detail

template <int Dim>
SparseMatrix assemble_stiffness(const VoxelMesh<Dim>& mesh, const MaterialField<Dim>& mat) {
  constexpr int corners = VoxelMesh<Dim>::corners;
  constexpr int ne = Dim * corners;
  const auto bq = detail::gauss_b_matrices<Dim>(mesh.h);
  const double w = detail::gauss_weight<Dim>(mesh.h);

  std::vector<Eigen::Matrix<double, ne, ne>> ke(mat.tensors.size());
  for (std::size_t t = 0; t < mat.tensors.size(); ++t) {
    ke[t].setZero();
    for (const auto& b : bq) ke[t] += w * b.transpose() * mat.tensors[t].voigt * b;
  }

  std::vector<Triplet> trip;
  trip.reserve(mesh.num_elements() * ne * ne);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto nodes = mesh.element_nodes(e);
    const auto& k = ke[static_cast<std::size_t>(mat.element_material[e])];
    for (int a = 0; a < corners; ++a) {
      for (int i = 0; i < Dim; ++i) {
        for (int b = 0; b < corners; ++b) {
          for (int j = 0; j < Dim; ++j) {
            trip.emplace_back(nodes[a] * Dim + i, nodes[b] * Dim + j, k(a * Dim + i, b * Dim + j));
          }
        }
      }
    }
  }
  const int n = static_cast<int>(mesh.num_dofs());
  SparseMatrix k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

template <int Dim>
struct DisplacementField {
  VoxelMesh<Dim> mesh;
  Eigen::VectorXd u;  ///< nodal, dof = node * Dim + component

  Vec<Dim> at_node(int id) const { return u.template segment<Dim>(static_cast<Eigen::Index>(id) * Dim); }

  /// Bilinear/trilinear interpolant at the element center (mean of corners).
  Vec<Dim> at_element_center(std::size_t e) const {
    Vec<Dim> sum = Vec<Dim>::Zero();
    for (int id : mesh.element_nodes(e)) sum += at_node(id);
    return sum / VoxelMesh<Dim>::corners;
  }

  /// Displacements at PD nodes of a NodeSet sharing this voxel grid.
  std::vector<Vec<Dim>> at_element_centers() const {
    std::vector<Vec<Dim>> out(mesh.num_elements());
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = at_element_center(e);
    return out;
  }

  /// Voigt strain averaged over the element's Gauss points.
  VoigtVector<Dim> element_strain(std::size_t e) const {
    const auto ue = element_dofs(e);
    VoigtVector<Dim> eps = VoigtVector<Dim>::Zero();
    for (const auto& b : detail::gauss_b_matrices<Dim>(mesh.h)) eps += b * ue;
    return eps / VoxelMesh<Dim>::corners;
  }

  Eigen::Matrix<double, Dim * VoxelMesh<Dim>::corners, 1> element_dofs(std::size_t e) const {
    Eigen::Matrix<double, Dim * VoxelMesh<Dim>::corners, 1> ue;
    const auto nodes = mesh.element_nodes(e);
    for (int a = 0; a < VoxelMesh<Dim>::corners; ++a) ue.template segment<Dim>(a * Dim) = at_node(nodes[a]);
    return ue;
  }
};

/// Stretch load case along `axis`: +axis face displaced by `magnitude`,
/// -axis face fixed normal to it, lateral faces traction free, and the
/// middle node of the -axis face fully fixed. In 3D one edge node of that face
/// is also held in the remaining transverse direction to remove the rotation
/// about `axis`.
template <int Dim>
DisplacementField<Dim> solve_stretch_displacement(const VoxelMesh<Dim>& mesh, const MaterialField<Dim>& mat, int axis,
                                                  double magnitude,
                                                  SpdSolver::Method method = SpdSolver::Method::Direct) {
  if (axis < 0 || axis >= Dim) throw ConfigError("axis", "stretch axis out of range");
  const SparseMatrix k = assemble_stiffness<Dim>(mesh, mat);
  std::vector<int> fixed;
  Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_dofs()));
  for (std::size_t id = 0; id < mesh.num_nodes(); ++id) {
    const auto idx = mesh.node_index(static_cast<int>(id));
    const int dof = static_cast<int>(id) * Dim + axis;
    if (idx[axis] == 0) {
      fixed.push_back(dof);
    } else if (idx[axis] == mesh.cells[axis]) {
      fixed.push_back(dof);
      values[dof] = magnitude;
    }
  }
  std::array<int, Dim> mid;
  for (int k2 = 0; k2 < Dim; ++k2) mid[k2] = mesh.cells[k2] / 2;
  mid[axis] = 0;
  for (int k2 = 0; k2 < Dim; ++k2) {
    if (k2 != axis) fixed.push_back(mesh.node_id(mid) * Dim + k2);
  }
  if constexpr (Dim == 3) {
    auto edge = mid;
    edge[(axis + 1) % 3] = 0;
    fixed.push_back(mesh.node_id(edge) * Dim + (axis + 2) % 3);
  }
  ReducedSystem sys(k, fixed, method);
  DisplacementField<Dim> field{mesh, sys.solve(Eigen::VectorXd::Zero(values.size()), values)};
  return field;
}

/// Element-averaged W = 1/2 eps : A : eps.
template <int Dim>
std::vector<double> ccm_energy_density(const DisplacementField<Dim>& field, const MaterialField<Dim>& mat) {
  const auto bq = detail::gauss_b_matrices<Dim>(field.mesh.h);
  std::vector<double> w(field.mesh.num_elements());
  for (std::size_t e = 0; e < w.size(); ++e) {
    const auto ue = field.element_dofs(e);
    double sum = 0.0;
    for (const auto& b : bq) sum += mat.at(e).energy(b * ue);
    w[e] = sum / VoxelMesh<Dim>::corners;
  }
  return w;
}

/// Cell functions: one nodal vector field per unit Voigt strain, vanishing on
/// the cell boundary.
template <int Dim>
struct CellFunctions {
  VoxelMesh<Dim> mesh;
  std::array<Eigen::VectorXd, voigt_size(Dim)> fields;
};

template <int Dim>
CellFunctions<Dim> solve_cell_problems(const VoxelMesh<Dim>& mesh, const MaterialField<Dim>& mat,
                                       SpdSolver::Method method = SpdSolver::Method::Direct) {
  constexpr int V = voigt_size(Dim);
  const SparseMatrix k = assemble_stiffness<Dim>(mesh, mat);
  std::vector<int> fixed;
  for (std::size_t id = 0; id < mesh.num_nodes(); ++id) {
    if (mesh.on_boundary(static_cast<int>(id))) {
      for (int c = 0; c < Dim; ++c) fixed.push_back(static_cast<int>(id) * Dim + c);
    }
  }
  ReducedSystem sys(k, fixed, method);

  const auto bq = detail::gauss_b_matrices<Dim>(mesh.h);
  const double w = detail::gauss_weight<Dim>(mesh.h);
  // element load per material and unit strain: -sum_q B^T C E w
  std::vector<Eigen::Matrix<double, Dim * VoxelMesh<Dim>::corners, V>> fe(mat.tensors.size());
  for (std::size_t t = 0; t < mat.tensors.size(); ++t) {
    fe[t].setZero();
    for (const auto& b : bq) fe[t] -= w * b.transpose() * mat.tensors[t].voigt;
  }

  CellFunctions<Dim> out{mesh, {}};
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_dofs()));
  for (int v = 0; v < V; ++v) {
    Eigen::VectorXd f = zeros;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      const auto nodes = mesh.element_nodes(e);
      const auto& col = fe[static_cast<std::size_t>(mat.element_material[e])];
      for (int a = 0; a < VoxelMesh<Dim>::corners; ++a) {
        f.template segment<Dim>(static_cast<Eigen::Index>(nodes[a]) * Dim) += col.col(v).template segment<Dim>(a * Dim);
      }
    }
    out.fields[static_cast<std::size_t>(v)] = sys.solve(f, zeros);
  }
  return out;
}

/// Volume average of A (E_v + eps(N_v)) over the cell, symmetrized unless
/// `symmetrize` is false.
template <int Dim>
ElasticTensor<Dim> homogenized_tensor(const MaterialField<Dim>& mat, const CellFunctions<Dim>& cells,
                                      bool symmetrize = true) {
  constexpr int V = voigt_size(Dim);
  const auto& mesh = cells.mesh;
  const auto bq = detail::gauss_b_matrices<Dim>(mesh.h);
  const double w = detail::gauss_weight<Dim>(mesh.h);
  ElasticTensor<Dim> out;
  for (int v = 0; v < V; ++v) {
    DisplacementField<Dim> chi{mesh, cells.fields[static_cast<std::size_t>(v)]};
    VoigtVector<Dim> col = VoigtVector<Dim>::Zero();
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      const auto ue = chi.element_dofs(e);
      const auto& c = mat.at(e).voigt;
      for (const auto& b : bq) {
        VoigtVector<Dim> eps = b * ue;
        eps[v] += 1.0;
        col += w * c * eps;
      }
    }
    out.voigt.col(v) = col / mesh.measure();
  }
  return symmetrize ? out.symmetrized() : out;
}

/// Volume fraction of material index `which` over the voxel mesh.
template <int Dim>
double material_fraction(const MaterialField<Dim>& mat, int which) {
  std::size_t n = 0;
  for (int m : mat.element_material) n += (m == which);
  return static_cast<double>(n) / static_cast<double>(mat.element_material.size());
}

/// Arithmetic (Voigt) and harmonic (Reuss) mixture bounds over the voxel phases.
template <int Dim>
std::pair<ElasticTensor<Dim>, ElasticTensor<Dim>> mixture_bounds(const MaterialField<Dim>& mat) {
  VoigtMatrix<Dim> voigt = VoigtMatrix<Dim>::Zero();
  VoigtMatrix<Dim> compliance = VoigtMatrix<Dim>::Zero();
  for (std::size_t t = 0; t < mat.tensors.size(); ++t) {
    const double f = material_fraction<Dim>(mat, static_cast<int>(t));
    voigt += f * mat.tensors[t].voigt;
    compliance += f * mat.tensors[t].voigt.inverse();
  }
  ElasticTensor<Dim> upper, lower;
  upper.voigt = voigt;
  lower.voigt = compliance.inverse();
  return {lower.symmetrized(), upper.symmetrized()};
}

/// Loewner order check lower <= t <= upper with a relative tolerance.
template <int Dim>
bool within_bounds(const ElasticTensor<Dim>& t, const ElasticTensor<Dim>& lower, const ElasticTensor<Dim>& upper,
                   double rel_tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<VoigtMatrix<Dim>> above(t.voigt - lower.voigt);
  Eigen::SelfAdjointEigenSolver<VoigtMatrix<Dim>> below(upper.voigt - t.voigt);
  const double scale = upper.voigt.norm();
  return above.eigenvalues().minCoeff() >= -rel_tol * scale && below.eigenvalues().minCoeff() >= -rel_tol * scale;
}

}  // namespace psm
