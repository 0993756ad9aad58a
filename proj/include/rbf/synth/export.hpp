#pragma once

#include "rbf/data/dataset.hpp"
#include "rbf/synth/dataset.hpp"

namespace rbf::synth {

// Detection frame keys are the global frame positions, so frameIndex is the
// identity.
inline data::Dataset toDataset(const SynthDataset& s) {
  data::Dataset d;
  d.cameras = s.cameras;
  d.anchorCount = s.anchorCount;
  d.frameInterval = s.frameInterval;
  for (const auto& ind : s.individuals) d.individuals.push_back({ind.rest.spec.id, ind.anchorOffset, ind.rest.spec.markerCount});
  d.references = s.references();
  d.frames = s.frames;
  d.frameIndex.resize(s.frames.size());
  for (size_t i = 0; i < s.frames.size(); ++i) d.frameIndex[i] = static_cast<int>(i);
  d.detections = s.detections;
  return d;
}

}  // namespace rbf::synth
