#pragma once

#include <Eigen/Dense>

#include "rbf/geom/mesh.hpp"

namespace rbf::geom {

// y ~= scale * rotation * x + translation
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Vec3 applyInverse(const Vec3& y) const { return rotation.transpose() * (y - translation) / scale; }

  Points apply(const Points& xs) const {
    Points out(xs.rows(), 3);
    for (Eigen::Index i = 0; i < xs.rows(); ++i) out.row(i) = apply(Vec3(xs.row(i).transpose())).transpose();
    return out;
  }
  Points applyInverse(const Points& ys) const {
    Points out(ys.rows(), 3);
    for (Eigen::Index i = 0; i < ys.rows(); ++i) out.row(i) = applyInverse(Vec3(ys.row(i).transpose())).transpose();
    return out;
  }
};

// Least-squares similarity (Umeyama) mapping source onto target. The rotation
// is always proper; a reflection relation yields the best proper fit.
inline Similarity similarityAlign(const Points& source, const Points& target) {
  if (source.rows() != target.rows()) throw DataError("similarityAlign: point counts differ");
  const Eigen::Index k = source.rows();
  if (k < 3) throw DegeneracyError("similarityAlign needs at least 3 point pairs");

  const Vec3 muS = source.colwise().mean().transpose();
  const Vec3 muT = target.colwise().mean().transpose();
  const Eigen::MatrixXd xs = source.rowwise() - muS.transpose();
  const Eigen::MatrixXd ys = target.rowwise() - muT.transpose();
  const double varS = xs.squaredNorm() / static_cast<double>(k);

  // Collinearity: second singular value of the centered source vanishes.
  Eigen::JacobiSVD<Eigen::MatrixXd> shape(xs);
  const Eigen::Vector3d sv = shape.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-9 * sv[0]) {
    throw DegeneracyError("similarityAlign: source points are coincident or collinear");
  }

  const Mat3 cov = ys.transpose() * xs / static_cast<double>(k);
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  Similarity out;
  out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  out.scale = (svd.singularValues().asDiagonal() * d).trace() / varS;
  if (!(out.scale > 1e-12)) throw DegeneracyError("similarityAlign: target points are coincident");
  out.translation = muT - out.scale * out.rotation * muS;
  return out;
}

}  // namespace rbf::geom
