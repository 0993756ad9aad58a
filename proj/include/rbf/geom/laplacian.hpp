#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rbf/geom/mesh.hpp"

namespace rbf::geom {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Symmetric cotangent edge weights w_ij = (cot a + cot b) / 2, stored once per
// undirected edge. Negative totals (obtuse configurations) are clamped to 0.
struct EdgeWeights {
  struct Edge {
    int i;
    int j;
    double w;
  };
  std::vector<Edge> edges;
  // For every vertex, indices into `edges`.
  std::vector<std::vector<int>> incident;
};

inline EdgeWeights cotangentWeights(const TriMesh& mesh) {
  const int nv = mesh.numVertices();
  std::vector<Eigen::Triplet<double>> half;
  half.reserve(static_cast<size_t>(mesh.numFaces()) * 3);
  for (int f = 0; f < mesh.numFaces(); ++f) {
    const double area = mesh.faceArea(f);
    if (!(area >= kMinFaceArea)) {
      throw DataError("face " + std::to_string(f) + " is degenerate (area " + std::to_string(area) +
                      ")");
    }
    for (int k = 0; k < 3; ++k) {
      // Angle at corner k faces the edge (k+1, k+2).
      const int a = mesh.faces(f, k);
      const int b = mesh.faces(f, (k + 1) % 3);
      const int c = mesh.faces(f, (k + 2) % 3);
      const Vec3 u = mesh.vertex(b) - mesh.vertex(a);
      const Vec3 v = mesh.vertex(c) - mesh.vertex(a);
      const double cot = u.dot(v) / (2.0 * area);
      const int lo = std::min(b, c);
      const int hi = std::max(b, c);
      half.emplace_back(lo, hi, 0.5 * cot);
    }
  }
  SparseMatrix upper(nv, nv);
  upper.setFromTriplets(half.begin(), half.end());

  EdgeWeights out;
  out.incident.resize(static_cast<size_t>(nv));
  for (int col = 0; col < upper.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(upper, col); it; ++it) {
      const int idx = static_cast<int>(out.edges.size());
      out.edges.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), std::max(0.0, it.value())});
      out.incident[static_cast<size_t>(it.row())].push_back(idx);
      out.incident[static_cast<size_t>(it.col())].push_back(idx);
    }
  }
  return out;
}

struct Laplacian {
  SparseMatrix stiffness;     // positive semi-definite, zero row sums
  Eigen::VectorXd mass;       // lumped (one third of incident face areas)
};

inline SparseMatrix stiffnessFromWeights(int numVertices, const EdgeWeights& weights) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(weights.edges.size() * 4);
  for (const auto& e : weights.edges) {
    trip.emplace_back(e.i, e.j, -e.w);
    trip.emplace_back(e.j, e.i, -e.w);
    trip.emplace_back(e.i, e.i, e.w);
    trip.emplace_back(e.j, e.j, e.w);
  }
  SparseMatrix k(numVertices, numVertices);
  k.setFromTriplets(trip.begin(), trip.end());
  k.makeCompressed();
  return k;
}

inline Eigen::VectorXd lumpedMass(const TriMesh& mesh) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(mesh.numVertices());
  for (int f = 0; f < mesh.numFaces(); ++f) {
    const double third = mesh.faceArea(f) / 3.0;
    for (int k = 0; k < 3; ++k) mass[mesh.faces(f, k)] += third;
  }
  return mass;
}

inline Laplacian buildLaplacian(const TriMesh& mesh) {
  const EdgeWeights weights = cotangentWeights(mesh);
  return {stiffnessFromWeights(mesh.numVertices(), weights), lumpedMass(mesh)};
}

}  // namespace rbf::geom
