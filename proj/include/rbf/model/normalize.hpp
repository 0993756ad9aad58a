#pragma once

#include <cmath>

#include "rbf/canonical/build.hpp"
#include "rbf/model/config.hpp"

namespace rbf::model {

using geom::Mat3;
using geom::Points;
using geom::Vec3;

// normalized = scale * Rz(-yaw) * (world - centre)
struct PoseRecord {
  double yaw = 0.0;
  Vec3 centre = Vec3::Zero();
  double scale = 1.0;

  Mat3 forwardRotation() const { return canonical::yawRotation(-yaw); }

  Vec3 apply(const Vec3& p) const { return scale * (forwardRotation() * (p - centre)); }
  Vec3 invert(const Vec3& q) const { return canonical::yawRotation(yaw) * q / scale + centre; }

  Points apply(const Points& p) const {
    Points out = p.rowwise() - centre.transpose();
    return (scale * out * forwardRotation().transpose()).eval();
  }
  Points invert(const Points& q) const {
    Points out = (q * canonical::yawRotation(yaw).transpose() / scale).eval();
    out.rowwise() += centre.transpose();
    return out;
  }
  // Row-vector form: world_row = normalized_row * M + centre^T.
  Mat3 inverseRowMatrix() const { return canonical::yawRotation(yaw).transpose() / scale; }
};

// `fixedScale` is used by the FixedScale and Disabled modes.
inline PoseRecord normalizePose(const Points& keypoints, NormalizationMode mode, double fixedScale) {
  if (keypoints.rows() != kKeypointCount) throw DataError("normalizePose expects " + std::to_string(kKeypointCount) + " keypoints");
  if (!keypoints.allFinite()) throw DataError("normalizePose: keypoints are not finite");
  PoseRecord r;
  if (mode == NormalizationMode::Disabled) {
    r.scale = fixedScale;
    return r;
  }
  r.yaw = canonical::headingAngle(keypoints.row(kNose).transpose(), keypoints.row(kTailBase).transpose());
  r.centre = keypoints.colwise().mean().transpose();
  if (mode == NormalizationMode::FixedScale) {
    r.scale = fixedScale;
    return r;
  }
  r.scale = 1.0;
  const double extent = r.apply(keypoints).cwiseAbs().maxCoeff();
  if (!(extent > 1e-12)) throw DegeneracyError("normalizePose: keypoints have zero extent");
  r.scale = 1.0 / extent;
  return r;
}

}  // namespace rbf::model
