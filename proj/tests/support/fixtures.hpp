#pragma once

#include "rbf/canonical/build.hpp"
#include "rbf/model/config.hpp"
#include "rbf/model/train.hpp"
#include "rbf/synth/dataset.hpp"

namespace rbf::testing {

struct RatFixture {
  std::vector<mv::Camera> rig;
  synth::SynthDataset data;
  canonical::BuildResult canonical;
};

// One 12-marker synthetic rat, 40 frames, silhouettes every 4th frame.
inline const RatFixture& smallRat() {
  static const RatFixture f = [] {
    RatFixture r;
    r.rig = mv::buildDomeRig(180.0).cameras;
    synth::SynthSpec spec;
    spec.id = "rat0";
    spec.markerCount = 12;
    synth::GenerateConfig gc;
    gc.frameCount = 40;
    gc.maskEvery = 4;
    gc.frameInterval = 0.2;
    gc.seed = 3;
    r.data = synth::generateDataset({spec}, r.rig, gc);
    r.canonical = canonical::buildCanonical(r.data.references(), *r.data.individual("rat0").reference.surface, "rat0");
    return r;
  }();
  return f;
}

inline model::RbfConfig tinyConfig() {
  model::RbfConfig c;
  c.embedDim = 8;
  c.encoderLayers = 1;
  c.decoderLayers = 1;
  c.heads = 2;
  c.ffnMultiplier = 2;
  c.eigenCount = 4;
  c.frequencies = {1.0, 2.0};
  c.seed = 5;
  return c;
}

struct TrainedTiny {
  model::TrainResult result;
  std::vector<FrameSample> train, val;
};

// tinyConfig widened to 16 and trained on the first 30 frames of smallRat.
inline const TrainedTiny& trainedTiny() {
  static const TrainedTiny t = [] {
    const auto& f = smallRat();
    std::vector<FrameSample> tr(f.data.frames.begin(), f.data.frames.begin() + 30);
    std::vector<FrameSample> va(f.data.frames.begin() + 30, f.data.frames.end());
    model::RbfConfig cfg = tinyConfig();
    cfg.embedDim = 16;
    cfg.epochs = 30;
    cfg.batchSize = 8;
    cfg.lrModel = 1e-3;
    cfg.lrParams = 1e-3;
    cfg.refinePeriod = 10;
    cfg.refineSteps = 3;
    cfg.refineFrames = 2;
    cfg.headInitScale = 0.1;
    auto r = model::train(tr, va, f.canonical.surface, f.canonical.registry, f.canonical.alpha, f.rig, cfg);
    return TrainedTiny{std::move(r), tr, va};
  }();
  return t;
}

}  // namespace rbf::testing
