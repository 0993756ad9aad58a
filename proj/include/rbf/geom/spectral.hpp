#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "rbf/geom/laplacian.hpp"

namespace rbf::geom {

// Laplace-Beltrami eigenpairs of K phi = lambda M phi, ascending, with
// M-orthonormal eigenfunctions stored column-wise (|V| x E).
struct SpectralBasis {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenfunctions;
  Eigen::VectorXd mass;

  int count() const { return static_cast<int>(eigenvalues.size()); }
};

struct EigenSolveOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-10;  // residual, relative to max(1, |lambda|)
};

// Shift-invert subspace iteration with Rayleigh-Ritz projection. The block
// carries guard vectors beyond E to speed up convergence of the last pairs.
inline SpectralBasis computeBasis(const SparseMatrix& stiffness, const Eigen::VectorXd& mass, int count,
                                  const EigenSolveOptions& options = {}) {
  const Eigen::Index n = stiffness.rows();
  if (count < 1 || count > n) {
    throw DataError("eigenfunction count " + std::to_string(count) + " must lie in [1, " + std::to_string(n) +
                    "]");
  }
  if ((mass.array() <= 0.0).any()) throw DataError("mass matrix has non-positive entries");

  const Eigen::Index block = std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * count, count + 8));
  const int maxIterations =
      static_cast<int>(std::ceil(10.0 * count * std::log(static_cast<double>(std::max<Eigen::Index>(n, 2)))));

  const double diagScale = stiffness.diagonal().sum() / mass.sum();
  const double shift = -1e-6 * diagScale;
  SparseMatrix shifted = stiffness;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) -= shift * mass[i];
  Eigen::SimplicialLDLT<SparseMatrix> solver(shifted);
  if (solver.info() != Eigen::Success) throw NumericError("shift-invert factorization failed");

  // Deterministic start: all-ones, then seeded vectors; M-orthonormalized by
  // the first Rayleigh-Ritz step.
  Eigen::MatrixXd x(n, block);
  x.col(0).setOnes();
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (Eigen::Index c = 1; c < block; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) x(r, c) = uni(rng);
  }

  const auto massTimes = [&](const Eigen::MatrixXd& m) { return (mass.asDiagonal() * m).eval(); };

  Eigen::VectorXd values;
  for (int it = 1; it <= maxIterations; ++it) {
    const Eigen::MatrixXd y = solver.solve(massTimes(x));
    const Eigen::MatrixXd a = y.transpose() * (stiffness * y);
    const Eigen::MatrixXd b = y.transpose() * massTimes(y);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ritz(0.5 * (a + a.transpose()),
                                                                  0.5 * (b + b.transpose()));
    if (ritz.info() != Eigen::Success) throw NumericError("Rayleigh-Ritz step failed at iteration " + std::to_string(it));
    x = y * ritz.eigenvectors();
    values = ritz.eigenvalues();

    double worst = 0.0;
    for (int e = 0; e < count; ++e) {
      const Eigen::VectorXd r = stiffness * x.col(e) - values[e] * massTimes(x.col(e));
      worst = std::max(worst, r.norm() / std::max(1.0, std::abs(values[e])));
    }
    if (worst <= options.tolerance) {
      SpectralBasis basis;
      basis.eigenvalues = values.head(count);
      basis.eigenfunctions = x.leftCols(count);
      basis.mass = mass;
      const double maxAbs = basis.eigenfunctions.cwiseAbs().maxCoeff();
      for (int e = 0; e < count; ++e) {
        for (Eigen::Index r = 0; r < n; ++r) {
          const double v = basis.eigenfunctions(r, e);
          if (std::abs(v) > 1e-9 * maxAbs) {
            if (v < 0.0) basis.eigenfunctions.col(e) *= -1.0;
            break;
          }
        }
      }
      return basis;
    }
  }
  throw NumericError("eigensolver did not converge after " + std::to_string(maxIterations) + " iterations");
}

inline SpectralBasis computeBasis(const TriMesh& mesh, int count, const EigenSolveOptions& options = {}) {
  const Laplacian lap = buildLaplacian(mesh);
  return computeBasis(lap.stiffness, lap.mass, count, options);
}

inline Eigen::VectorXd evalBasisAt(const SpectralBasis& basis, const TriMesh& mesh, const SurfacePointRef& point) {
  validateRef(mesh, point);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.count());
  for (int k = 0; k < 3; ++k) {
    out += point.barycentric[k] * basis.eigenfunctions.row(mesh.faces(point.face, k)).transpose();
  }
  return out;
}

}  // namespace rbf::geom
