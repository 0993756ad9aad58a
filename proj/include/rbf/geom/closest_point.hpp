#pragma once

#include <limits>
#include <span>

#include "rbf/geom/mesh.hpp"

namespace rbf::geom {

struct ClosestPoint {
  SurfacePointRef ref;
  Vec3 point;
  double distance = 0.0;
};

// Closest point on triangle (a, b, c) to p, returned as barycentric weights.
// Region classification follows Ericson, Real-Time Collision Detection 5.1.5.
inline Vec3 closestBarycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {1.0, 0.0, 0.0};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {0.0, 1.0, 0.0};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {1.0 - v, v, 0.0};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {0.0, 0.0, 1.0};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {1.0 - w, 0.0, w};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - w, w};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return {1.0 - v - w, v, w};
}

// Exhaustive closest point over all faces of a mesh whose positions may be
// overridden (deformed copy sharing connectivity). Ties keep the lowest face.
inline ClosestPoint closestPoint(const Faces& faces, const Points& positions, const Vec3& query) {
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Vec3 a = positions.row(faces(f, 0)).transpose();
    const Vec3 b = positions.row(faces(f, 1)).transpose();
    const Vec3 c = positions.row(faces(f, 2)).transpose();
    Vec3 bary = closestBarycentric(query, a, b, c);
    bary = bary.cwiseMax(0.0);
    bary /= bary.sum();
    const Vec3 p = bary[0] * a + bary[1] * b + bary[2] * c;
    const double d = (p - query).norm();
    if (d < best.distance) {
      best.distance = d;
      best.point = p;
      best.ref.face = static_cast<int>(f);
      best.ref.barycentric = bary;
    }
  }
  return best;
}

inline ClosestPoint closestPoint(const TriMesh& mesh, const Vec3& query) {
  return closestPoint(mesh.faces, mesh.vertices, query);
}

// Closest point in an unstructured point cloud; ties keep the lowest index.
inline std::pair<int, double> closestInCloud(const Points& cloud, const Vec3& query) {
  int best = -1;
  double bestD = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    const double d = (cloud.row(i).transpose() - query).norm();
    if (d < bestD) {
      bestD = d;
      best = static_cast<int>(i);
    }
  }
  return {best, bestD};
}

}  // namespace rbf::geom
