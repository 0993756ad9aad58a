#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "rbf/multiview/camera.hpp"

namespace rbf::mv {

struct Triangulation {
  Vec3 point;
  double reprojectionError = 0.0;  // RMS over views, px
};

// Linear (DLT) triangulation. Each view contributes two rows of A X = 0; the
// point is the right singular vector of the smallest singular value. Rows start
// at unit norm and are then reweighted by the inverse depth of the current
// estimate, which turns the algebraic residual into a pixel residual.
inline Triangulation triangulate(std::span<const Camera> cameras, std::span<const Vec2> pixels) {
  if (cameras.size() != pixels.size()) throw DataError("triangulate: camera and pixel counts differ");
  if (cameras.size() < 2) throw DegeneracyError("triangulate needs at least two views");

  const auto n = static_cast<Eigen::Index>(cameras.size());
  Eigen::MatrixXd base(2 * n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = cameras[static_cast<size_t>(i)].projectionMatrix();
    const Vec2& px = pixels[static_cast<size_t>(i)];
    base.row(2 * i) = px[0] * p.row(2) - p.row(0);
    base.row(2 * i + 1) = px[1] * p.row(2) - p.row(1);
  }
  Eigen::VectorXd rowScale(2 * n);
  for (Eigen::Index r = 0; r < 2 * n; ++r) rowScale[r] = 1.0 / base.row(r).norm();

  Eigen::Vector4d x;
  for (int pass = 0; pass < 3; ++pass) {
    const Eigen::MatrixXd a = rowScale.asDiagonal() * base;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::Vector4d s = svd.singularValues().head<4>();
    if (s[2] <= 1e-10 * s[0]) throw DegeneracyError("triangulate: rays are parallel or cameras coincide");
    x = svd.matrixV().col(3);
    if (std::abs(x[3]) < 1e-300) throw DegeneracyError("triangulate: point at infinity");
    const Vec3 point = x.head<3>() / x[3];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double depth = std::abs(cameras[static_cast<size_t>(i)].depth(point));
      if (!(depth > 1e-9)) break;
      const auto p = cameras[static_cast<size_t>(i)].projectionMatrix();
      // Algebraic residual = depth * pixel residual.
      const double w = 1.0 / depth;
      rowScale[2 * i] = w;
      rowScale[2 * i + 1] = w;
    }
  }

  Triangulation out;
  out.point = x.head<3>() / x[3];
  double sq = 0.0;
  for (size_t i = 0; i < cameras.size(); ++i) {
    const double depth = cameras[i].depth(out.point);
    if (!(depth > 0.0)) {
      sq += 1e12;
      continue;
    }
    sq += (project(cameras[i], out.point) - pixels[i]).squaredNorm();
  }
  out.reprojectionError = std::sqrt(sq / static_cast<double>(cameras.size()));
  return out;
}

inline Triangulation triangulate(const std::vector<Camera>& cameras, const std::vector<Vec2>& pixels) {
  return triangulate(std::span<const Camera>(cameras), std::span<const Vec2>(pixels));
}

}  // namespace rbf::mv
