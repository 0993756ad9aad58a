#pragma once

#include <map>
#include <string>
#include <vector>

#include "rbf/annotate/markers.hpp"
#include "rbf/canonical/types.hpp"
#include "rbf/model/model.hpp"

namespace rbf::annotate {

// An unlabeled frame: keypoints (and optional masks) plus the 2D marker
// detections of that time instant.
struct UnlabeledFrame {
  FrameSample sample;
  std::vector<Detection2D> detections;
};

struct SemiReport {
  int framesIn = 0;
  int framesEmitted = 0;
  int framesSkipped = 0;  // zero accepted assignments
  int markersTriangulated = 0;
  int markersAssigned = 0;
  std::vector<double> distances;  // mm, accepted assignments in emission order
};

struct SemiResult {
  std::vector<FrameSample> samples;
  SemiReport report;
};

// Labels unlabeled frames with canonical marker IDs transferred from the
// model's predictions. Each emitted sample is visible exactly at the assigned
// IDs and carries the triangulated positions there.
inline SemiResult buildSemiAutomaticDataset(const std::vector<UnlabeledFrame>& frames, const std::vector<mv::Camera>& cameras,
                                            const model::RbfModel& net, const model::CanonicalContext& ctx,
                                            const std::map<std::string, model::IndividualParams>& params,
                                            const canonical::MarkerRegistry& registry, const MarkerConfig& config = {}) {
  SemiResult out;
  out.report.framesIn = static_cast<int>(frames.size());
  const int n = ctx.anchorCount();

  // Batch predictions per individual to amortize the forward pass.
  std::map<std::string, std::vector<size_t>> byInd;
  for (size_t i = 0; i < frames.size(); ++i) byInd[frames[i].sample.individual].push_back(i);
  std::vector<Points> predicted(frames.size());
  for (const auto& [id, idx] : byInd) {
    const auto it = params.find(id);
    if (it == params.end()) throw DataError("semi-automatic annotation: no parameters for individual " + id);
    std::vector<Points> kps;
    for (size_t i : idx) kps.push_back(frames[i].sample.keypoints);
    auto preds = model::predictSurfaces(net, it->second, ctx, kps);
    for (size_t k = 0; k < idx.size(); ++k) predicted[idx[k]] = std::move(preds[k]);
  }

  for (size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    const auto markers = triangulateMarkers(f.detections, cameras, config);
    out.report.markersTriangulated += static_cast<int>(markers.size());
    const IdAssignment a = assignIDs(markers, predicted[i], registry.anchorsOf(f.sample.individual), config.rejectionRadius);
    if (a.markerToCanonical.empty()) {
      ++out.report.framesSkipped;
      continue;
    }
    FrameSample s = f.sample;
    s.surface = Points::Zero(n, 3);
    s.visible.assign(static_cast<size_t>(n), 0);
    s.source = AnnotationSource::SemiAutomatic;
    for (const auto& [m, c] : a.markerToCanonical) {
      s.surface.row(c) = markers[static_cast<size_t>(m)].position.transpose();
      s.visible[static_cast<size_t>(c)] = 1;
      out.report.distances.push_back(a.distances.at(m));
    }
    out.report.markersAssigned += static_cast<int>(a.markerToCanonical.size());
    ++out.report.framesEmitted;
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace rbf::annotate
