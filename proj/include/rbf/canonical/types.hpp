#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbf/geom/mesh.hpp"
#include "rbf/geom/spectral.hpp"
#include "rbf/model/sample.hpp"

namespace rbf::canonical {

using geom::Points;
using geom::SurfacePointRef;
using geom::TriMesh;
using geom::Vec3;

// Keypoints and markers of one individual in its reference pose.
struct ReferenceCapture {
  std::string individual;
  Points keypoints;  // kKeypointCount × 3
  Points markers;    // local marker id × 3
  // Optional dense target (scan or hull) in the capture frame; without it the
  // marker cloud drives the surface alignment.
  std::optional<TriMesh> surface;
};

// Canonical anchor indices are assigned per individual in ascending id order,
// each individual owning a contiguous block of its marker count.
inline std::map<std::string, int> anchorOffsets(const std::map<std::string, int>& markerCounts) {
  std::map<std::string, int> out;
  int next = 0;
  for (const auto& [id, count] : markerCounts) {
    out[id] = next;
    next += count;
  }
  return out;
}

class MarkerRegistry {
 public:
  MarkerRegistry() = default;

  // localToCanonical must be injective and disjoint across individuals.
  void add(const std::string& individual, std::vector<int> localToCanonical) {
    if (map_.count(individual)) throw DataError("individual " + individual + " registered twice");
    for (int c : localToCanonical) {
      if (c < 0) throw DataError("negative canonical index for " + individual);
      if (owner_.count(c)) throw DataError("canonical index " + std::to_string(c) + " claimed twice");
      owner_[c] = individual;
    }
    map_[individual] = std::move(localToCanonical);
  }

  int anchorCount() const { return static_cast<int>(owner_.size()); }
  bool contains(const std::string& individual) const { return map_.count(individual) > 0; }

  const std::vector<int>& mapping(const std::string& individual) const {
    const auto it = map_.find(individual);
    if (it == map_.end()) throw DataError("individual " + individual + " is not in the marker registry");
    return it->second;
  }

  // Canonical indices owned by one individual, ascending.
  std::vector<int> anchorsOf(const std::string& individual) const {
    std::vector<int> out = mapping(individual);
    std::sort(out.begin(), out.end());
    return out;
  }

  const std::string& owner(int canonicalIndex) const { return owner_.at(canonicalIndex); }
  const std::map<std::string, std::vector<int>>& all() const { return map_; }

  std::vector<std::string> individuals() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : map_) out.push_back(id);
    return out;
  }

 private:
  std::map<std::string, std::vector<int>> map_;
  std::map<int, std::string> owner_;
};

// normalized = scale * world + translation
struct NormalizationRecord {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * p + translation; }
  Vec3 invert(const Vec3& p) const { return (p - translation) / scale; }
  Points apply(const Points& p) const {
    Points out = scale * p;
    out.rowwise() += translation.transpose();
    return out;
  }
  Points invert(const Points& p) const {
    Points out = p;
    out.rowwise() -= translation.transpose();
    return out / scale;
  }
};

struct CanonicalSurface {
  TriMesh mesh;  // normalized to [-1, 1]
  std::array<SurfacePointRef, kKeypointCount> keypointAnchors;
  std::vector<SurfacePointRef> surfaceAnchors;
  geom::SpectralBasis basis;
  NormalizationRecord normalization;

  int anchorCount() const { return static_cast<int>(surfaceAnchors.size()); }

  Points keypointPositions() const {
    Points out(kKeypointCount, 3);
    for (int k = 0; k < kKeypointCount; ++k) out.row(k) = geom::evalPoint(mesh, keypointAnchors[static_cast<size_t>(k)]).transpose();
    return out;
  }
  Points anchorPositions() const { return geom::evalPoints(mesh.faces, mesh.vertices, surfaceAnchors); }
};

}  // namespace rbf::canonical
