#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rbf/arap/arap.hpp"
#include "rbf/canonical/types.hpp"
#include "rbf/geom/closest_point.hpp"
#include "rbf/geom/similarity.hpp"

namespace rbf::canonical {

using geom::Mat3;

// Angle of the horizontal nose - tail-base direction, measured from +X.
inline double headingAngle(const Vec3& nose, const Vec3& tailBase) {
  const Eigen::Vector2d h = (nose - tailBase).head<2>();
  if (h.norm() < 1e-9) throw DegeneracyError("nose and tail base coincide horizontally; heading undefined");
  return std::atan2(h.y(), h.x());
}

inline Mat3 yawRotation(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }

// Centres the vertex centroid at the origin and scales the largest absolute
// coordinate to 1. Surface references are topological and carry over as is.
inline NormalizationRecord normalizationFor(const TriMesh& mesh) {
  if (mesh.numVertices() == 0) throw DegeneracyError("cannot normalize an empty mesh");
  const Vec3 centroid = mesh.vertices.colwise().mean().transpose();
  Points centred = mesh.vertices;
  centred.rowwise() -= centroid.transpose();
  const double extent = centred.cwiseAbs().maxCoeff();
  if (!(extent > 1e-12)) throw DegeneracyError("cannot normalize a zero-extent mesh");
  NormalizationRecord r;
  r.scale = 1.0 / extent;
  r.translation = -r.scale * centroid;
  return r;
}

inline CanonicalSurface normalizeCanonical(const CanonicalSurface& raw) {
  CanonicalSurface out = raw;
  out.normalization = normalizationFor(raw.mesh);
  out.mesh.vertices = out.normalization.apply(raw.mesh.vertices);
  return out;
}

struct BuildOptions {
  int eigenCount = 16;
  int outerIterations = 5;
  double outlierFraction = 0.1;  // of body length
  arap::ArapConfig arap;
  geom::EigenSolveOptions eigen;
};

struct BuildResult {
  CanonicalSurface surface;
  MarkerRegistry registry;
  std::map<std::string, double> alpha;  // similarity scale per individual
  std::map<std::string, double> maxMarkerDistance;
};

// Builds the canonical surface from reference captures. `baseMesh` is the base
// individual's surface expressed in its capture frame.
inline BuildResult buildCanonical(const std::vector<ReferenceCapture>& captures, const TriMesh& baseMesh,
                                  const std::string& baseIndividual, const BuildOptions& options = {}) {
  baseMesh.validate();
  if (captures.empty()) throw DataError("buildCanonical: no reference captures");
  std::map<std::string, const ReferenceCapture*> byId;
  std::map<std::string, int> counts;
  for (const auto& c : captures) {
    if (c.keypoints.rows() != kKeypointCount) {
      throw DataError("reference capture of " + c.individual + " needs " + std::to_string(kKeypointCount) + " keypoints");
    }
    if (!c.keypoints.allFinite() || !c.markers.allFinite()) throw DataError("reference capture of " + c.individual + " is not finite");
    if (byId.count(c.individual)) throw DataError("duplicate reference capture for " + c.individual);
    byId[c.individual] = &c;
    counts[c.individual] = static_cast<int>(c.markers.rows());
  }
  if (!byId.count(baseIndividual)) throw DataError("base individual " + baseIndividual + " has no reference capture");
  const ReferenceCapture& base = *byId.at(baseIndividual);

  CanonicalSurface raw;
  raw.mesh = baseMesh;
  for (int k = 0; k < kKeypointCount; ++k) {
    // Keypoint anchors sit on mesh vertices so the ARAP hard constraints pin
    // exactly the anchored points.
    const auto hit = geom::closestPoint(baseMesh, base.keypoints.row(k).transpose()).ref;
    raw.keypointAnchors[static_cast<size_t>(k)] = geom::refAtVertex(baseMesh, geom::dominantVertex(baseMesh, hit));
  }
  const Points meshKeypoints = raw.keypointPositions();
  const double bodyLength = (meshKeypoints.row(kNose) - meshKeypoints.row(kTailBase)).norm();
  if (!(bodyLength > 0.0)) throw DegeneracyError("base nose and tail base coincide");

  std::map<int, Vec3> hardRest;
  std::map<int, int> hardVertexOfKeypoint;
  for (int k = 0; k < kKeypointCount; ++k) {
    const int v = geom::dominantVertex(baseMesh, raw.keypointAnchors[static_cast<size_t>(k)]);
    if (hardRest.count(v)) throw DegeneracyError("two keypoints share base vertex " + std::to_string(v));
    hardRest[v] = baseMesh.vertex(v);
    hardVertexOfKeypoint[k] = v;
  }

  BuildResult result;
  const auto offsets = anchorOffsets(counts);
  int total = 0;
  for (const auto& [_, n] : counts) total += n;
  raw.surfaceAnchors.assign(static_cast<size_t>(total), {});

  for (const auto& [id, capPtr] : byId) {
    const ReferenceCapture& cap = *capPtr;
    TriMesh aligned = baseMesh;
    Points markers;
    if (id == baseIndividual) {
      result.alpha[id] = 1.0;
      markers = cap.markers;
    } else {
      const geom::Similarity sim = geom::similarityAlign(meshKeypoints, cap.keypoints);
      result.alpha[id] = sim.scale;
      markers = sim.applyInverse(cap.markers);
      const Points kp = sim.applyInverse(cap.keypoints);
      std::map<int, Vec3> hard;
      for (int k = 0; k < kKeypointCount; ++k) hard[hardVertexOfKeypoint.at(k)] = kp.row(k).transpose();
      arap::AlignTarget target = markers;
      if (cap.surface) {
        TriMesh surf = *cap.surface;
        surf.vertices = sim.applyInverse(cap.surface->vertices);
        target = surf;
      }
      aligned.vertices = arap::arapAlignToTarget(baseMesh, hard, target, options.outerIterations, options.arap);
    }
    std::vector<int> mapping;
    double worst = 0.0;
    for (Eigen::Index m = 0; m < markers.rows(); ++m) {
      const auto cp = geom::closestPoint(aligned, markers.row(m).transpose());
      if (cp.distance > options.outlierFraction * bodyLength) {
        throw DataError("marker " + std::to_string(m) + " of " + id + " lies " + std::to_string(cp.distance) +
                        " mm from the aligned surface (outlier)");
      }
      worst = std::max(worst, cp.distance);
      const int c = offsets.at(id) + static_cast<int>(m);
      raw.surfaceAnchors[static_cast<size_t>(c)] = cp.ref;
      mapping.push_back(c);
    }
    result.maxMarkerDistance[id] = worst;
    result.registry.add(id, std::move(mapping));
  }

  // Heading-align the base surface so the canonical frame matches the frame
  // normalization (nose along +X).
  const double yaw = headingAngle(meshKeypoints.row(kNose).transpose(), meshKeypoints.row(kTailBase).transpose());
  raw.mesh.vertices = (baseMesh.vertices * yawRotation(-yaw).transpose()).eval();

  result.surface = normalizeCanonical(raw);
  result.surface.basis = geom::computeBasis(result.surface.mesh, options.eigenCount, options.eigen);
  return result;
}

}  // namespace rbf::canonical
