#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "rbf/geom/mesh.hpp"
#include "rbf/multiview/silhouette.hpp"

namespace rbf {

inline constexpr int kKeypointCount = 10;

enum Keypoint : int {
  kNose = 0,
  kRightEye,
  kLeftEye,
  kRightEar,
  kLeftEar,
  kRightFrontPaw,
  kLeftFrontPaw,
  kRightBackPaw,
  kLeftBackPaw,
  kTailBase,
};

inline const std::array<const char*, kKeypointCount>& keypointNames() {
  static const std::array<const char*, kKeypointCount> names{
      "nose", "right_eye", "left_eye", "right_ear", "left_ear",
      "right_front_paw", "left_front_paw", "right_back_paw", "left_back_paw", "tail_base"};
  return names;
}

enum class AnnotationSource { Manual, SemiAutomatic };

inline std::string sourceName(AnnotationSource s) { return s == AnnotationSource::Manual ? "manual" : "semi_automatic"; }

inline AnnotationSource sourceFromName(const std::string& s) {
  if (s == "manual") return AnnotationSource::Manual;
  if (s == "semi_automatic") return AnnotationSource::SemiAutomatic;
  throw DataError("unknown annotation source '" + s + "'");
}

using MaskPtr = std::shared_ptr<const mv::SilhouetteMask>;

// One time instant of one individual. Surface points use canonical anchor
// indexing; rows without ground truth carry visible = 0.
struct FrameSample {
  std::string individual;
  int frame = 0;
  geom::Points keypoints;
  geom::Points surface;
  std::vector<char> visible;
  std::vector<MaskPtr> masks;  // indexed by view; null where absent
  AnnotationSource source = AnnotationSource::Manual;

  int visibleCount() const {
    int n = 0;
    for (char v : visible) n += v ? 1 : 0;
    return n;
  }
  bool hasMasks() const {
    for (const auto& m : masks) {
      if (m) return true;
    }
    return false;
  }

  void validate(int anchorCount) const {
    if (keypoints.rows() != kKeypointCount) throw DataError("frame has " + std::to_string(keypoints.rows()) + " keypoints");
    if (!keypoints.allFinite()) throw DataError("frame keypoints are not finite");
    if (surface.rows() != anchorCount || static_cast<int>(visible.size()) != anchorCount) {
      throw DataError("frame surface has " + std::to_string(surface.rows()) + " rows, expected " +
                      std::to_string(anchorCount));
    }
    for (int j = 0; j < anchorCount; ++j) {
      if (visible[static_cast<size_t>(j)] && !surface.row(j).allFinite()) {
        throw DataError("visible surface point " + std::to_string(j) + " is not finite");
      }
    }
  }
};

}  // namespace rbf
