#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "psm/errors.hpp"

namespace psm {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Number of independent strain components (Voigt size).
constexpr int voigt_size(int dim) { return dim * (dim + 1) / 2; }

/// Tensor index pairs in Voigt order: 2D (11,22,12); 3D (11,22,33,23,13,12).
template <int Dim>
constexpr std::array<std::pair<int, int>, voigt_size(Dim)> voigt_pairs() {
  if constexpr (Dim == 2) {
    return {{{0, 0}, {1, 1}, {0, 1}}};
  } else {
    return {{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};
  }
}

template <int Dim>
using VoigtVector = Eigen::Matrix<double, voigt_size(Dim), 1>;

template <int Dim>
using VoigtMatrix = Eigen::Matrix<double, voigt_size(Dim), voigt_size(Dim)>;

/// Strain tensor -> Voigt vector with engineering shear (gamma = 2 eps_ij).
template <int Dim>
VoigtVector<Dim> to_voigt_strain(const Mat<Dim>& eps) {
  VoigtVector<Dim> v;
  constexpr auto pairs = voigt_pairs<Dim>();
  for (int a = 0; a < voigt_size(Dim); ++a) {
    const auto [i, j] = pairs[a];
    v[a] = (i == j) ? eps(i, j) : eps(i, j) + eps(j, i);
  }
  return v;
}

/// Fourth-order stiffness in Voigt form, sigma = C * strain (engineering shear).
/// 2D tensors are plane stress.
template <int Dim>
struct ElasticTensor {
  VoigtMatrix<Dim> voigt = VoigtMatrix<Dim>::Zero();

  static ElasticTensor isotropic(double young, double poisson) {
    ElasticTensor t;
    if constexpr (Dim == 2) {
      const double f = young / (1.0 - poisson * poisson);
      t.voigt << f, f * poisson, 0.0,  //
          f * poisson, f, 0.0,         //
          0.0, 0.0, f * (1.0 - poisson) / 2.0;
    } else {
      const double lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
      const double mu = young / (2.0 * (1.0 + poisson));
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) t.voigt(i, j) = lambda;
        t.voigt(i, i) += 2.0 * mu;
        t.voigt(3 + i, 3 + i) = mu;
      }
    }
    return t;
  }

  /// Component a_ijkl of the full fourth-order tensor.
  double component(int i, int j, int k, int l) const { return voigt(voigt_index(i, j), voigt_index(k, l)); }

  static int voigt_index(int i, int j) {
    constexpr auto pairs = voigt_pairs<Dim>();
    for (int a = 0; a < voigt_size(Dim); ++a) {
      const auto [p, q] = pairs[a];
      if ((p == i && q == j) || (p == j && q == i)) return a;
    }
    return -1;
  }

  ElasticTensor symmetrized() const {
    ElasticTensor t;
    t.voigt = 0.5 * (voigt + voigt.transpose());
    return t;
  }

  double norm() const { return voigt.norm(); }

  /// Energy density 1/2 eps : C : eps for a Voigt strain.
  double energy(const VoigtVector<Dim>& strain) const { return 0.5 * strain.dot(voigt * strain); }

  bool operator==(const ElasticTensor&) const = default;
};

/// Symmetric positive (semi)definite sparse solve; direct LDL^T by default.
class SpdSolver {
 public:
  enum class Method { Direct, ConjugateGradient };

  explicit SpdSolver(Method method = Method::Direct, double tolerance = 1e-10)
      : method_(method), tolerance_(tolerance) {}

  /// Pivots below ratio * max pivot are reported as singular (direct method only; 0 disables).
  void set_min_pivot_ratio(double ratio) { min_pivot_ratio_ = ratio; }

  Method method() const { return method_; }

  /// Symbolic analysis; the pattern must stay fixed across factorize() calls.
  void analyze(const SparseMatrix& k) {
    if (method_ == Method::Direct) ldlt_.analyzePattern(k);
    analyzed_ = true;
  }

  void factorize(const SparseMatrix& k) {
    if (!analyzed_) analyze(k);
    if (method_ == Method::Direct) {
      ldlt_.factorize(k);
      if (ldlt_.info() != Eigen::Success) throw SingularSystem("LDL^T factorization failed");
      if (min_pivot_ratio_ > 0.0 && k.rows() > 0) {
        const auto d = ldlt_.vectorD();
        if (d.minCoeff() <= min_pivot_ratio_ * d.cwiseAbs().maxCoeff()) {
          throw SingularSystem("near-zero pivot; constraints leave a rigid-body mode");
        }
      }
    } else {
      cg_.setTolerance(tolerance_);
      cg_.setMaxIterations(std::max<Eigen::Index>(1000, 10 * k.rows()));
      cg_.compute(k);
      if (cg_.info() != Eigen::Success) throw SingularSystem("preconditioner setup failed");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) {
    if (method_ == Method::Direct) {
      Eigen::VectorXd x = ldlt_.solve(rhs);
      if (ldlt_.info() != Eigen::Success || !x.allFinite()) throw SingularSystem("LDL^T solve failed");
      return x;
    }
    Eigen::VectorXd x;
    if (warm_.size() == rhs.size()) {
      x = cg_.solveWithGuess(rhs, warm_);
    } else {
      x = cg_.solve(rhs);
    }
    if (cg_.info() != Eigen::Success) throw SingularSystem("conjugate gradient did not reach tolerance");
    warm_ = x;
    return x;
  }

 private:
  Method method_;
  double tolerance_;
  double min_pivot_ratio_ = 1e-13;
  bool analyzed_ = false;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg_;
  Eigen::VectorXd warm_;
};

/// K restricted to free dofs, factorized once; solves for any load vector and
/// prescribed values on the same constrained dof set.
class ReducedSystem {
 public:
  ReducedSystem(const SparseMatrix& k, std::span<const int> prescribed_dofs,
                SpdSolver::Method method = SpdSolver::Method::Direct)
      : k_(k), free_index_(static_cast<std::size_t>(k.rows()), 0), solver_(method) {
    for (int dof : prescribed_dofs) free_index_[static_cast<std::size_t>(dof)] = -1;
    for (int& idx : free_index_) {
      if (idx == 0) idx = n_free_++;
    }
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(k.nonZeros()));
    for (int col = 0; col < k.outerSize(); ++col) {
      if (free_index_[col] < 0) continue;
      for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
        const int r = free_index_[static_cast<std::size_t>(it.row())];
        if (r >= 0) trip.emplace_back(r, free_index_[col], it.value());
      }
    }
    SparseMatrix kff(n_free_, n_free_);
    kff.setFromTriplets(trip.begin(), trip.end());
    if (n_free_ > 0) solver_.factorize(kff);
  }

  /// `values` holds the prescribed entries (other entries are ignored).
  Eigen::VectorXd solve(const Eigen::VectorXd& f, const Eigen::VectorXd& values) {
    const Eigen::Index n = k_.rows();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (free_index_[static_cast<std::size_t>(i)] < 0) u[i] = values[i];
    }
    if (n_free_ == 0) return u;
    // f_f - K_fc u_c
    const Eigen::VectorXd ku = k_ * u;
    Eigen::VectorXd rhs(n_free_);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int r = free_index_[static_cast<std::size_t>(i)];
      if (r >= 0) rhs[r] = f[i] - ku[i];
    }
    const Eigen::VectorXd uf = solver_.solve(rhs);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int r = free_index_[static_cast<std::size_t>(i)];
      if (r >= 0) u[i] = uf[r];
    }
    return u;
  }

 private:
  const SparseMatrix& k_;
  std::vector<int> free_index_;
  int n_free_ = 0;
  SpdSolver solver_;
};

}  // namespace psm
