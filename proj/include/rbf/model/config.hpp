#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rbf/core/json_util.hpp"

namespace rbf::model {

// World -> normalized frame mapping used for model inputs.
//  PerFrame:   keypoint centroid, heading to +X, per-frame max-abs scale.
//  FixedScale: keypoint centroid, heading to +X, the canonical mesh scale.
//  Disabled:   world axes and origin, the canonical mesh scale (ablation).
enum class NormalizationMode { PerFrame, FixedScale, Disabled };

enum class EncodingKind { Spectral, Euclidean };

inline std::string modeName(NormalizationMode m) {
  switch (m) {
    case NormalizationMode::PerFrame: return "per_frame";
    case NormalizationMode::FixedScale: return "fixed_scale";
    case NormalizationMode::Disabled: return "disabled";
  }
  return "?";
}

inline NormalizationMode modeFromName(const std::string& s) {
  if (s == "per_frame") return NormalizationMode::PerFrame;
  if (s == "fixed_scale") return NormalizationMode::FixedScale;
  if (s == "disabled") return NormalizationMode::Disabled;
  throw ConfigError("unknown normalization mode '" + s + "'");
}

inline std::string encodingName(EncodingKind k) { return k == EncodingKind::Spectral ? "spectral" : "euclidean"; }

inline EncodingKind encodingFromName(const std::string& s) {
  if (s == "spectral") return EncodingKind::Spectral;
  if (s == "euclidean") return EncodingKind::Euclidean;
  throw ConfigError("unknown encoding '" + s + "'");
}

struct RbfConfig {
  // Architecture.
  int embedDim = 128;
  int encoderLayers = 2;
  int decoderLayers = 2;
  int heads = 4;
  int ffnMultiplier = 4;
  int eigenCount = 16;
  std::vector<double> frequencies{1.0, 2.0, 4.0, 8.0};
  EncodingKind encoding = EncodingKind::Spectral;
  NormalizationMode normalization = NormalizationMode::FixedScale;
  double headInitScale = 1.0;  // multiplies the Xavier init of the output head

  // Training.
  int epochs = 300;
  int batchSize = 16;
  double lrModel = 1e-4;
  double lrParams = 1e-2;
  double lrFinalFraction = 0.02;  // cosine decay of lrModel down to this fraction
  int refinePeriod = 50;
  int refineSteps = 10;
  int refineFrames = 8;              // mask frames per individual per refinement
  std::vector<int> silhouetteViews;  // empty = all views
  int arapIterations = 10;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model." + m); };
    if (embedDim < 1) fail("embedDim must be positive");
    if (heads < 1 || embedDim % heads != 0) fail("embedDim must be divisible by heads");
    if (encoderLayers < 1 || decoderLayers < 1) fail("encoderLayers and decoderLayers must be >= 1");
    if (ffnMultiplier < 1) fail("ffnMultiplier must be >= 1");
    if (eigenCount < 1) fail("eigenCount must be >= 1");
    if (!(headInitScale >= 0.0)) fail("headInitScale must be >= 0");
    if (frequencies.empty()) fail("frequencies must be non-empty");
    if (epochs < 0) fail("epochs must be >= 0");
    if (batchSize < 1) fail("batchSize must be >= 1");
    if (!(lrModel >= 0.0) || !(lrParams >= 0.0)) fail("learning rates must be >= 0");
    if (!(lrFinalFraction >= 0.0 && lrFinalFraction <= 1.0)) fail("lrFinalFraction must lie in [0, 1]");
    if (refinePeriod < 1) fail("refinePeriod must be >= 1");
    if (refineSteps < 0 || refineFrames < 1) fail("refineSteps must be >= 0 and refineFrames >= 1");
    if (arapIterations < 1) fail("arapIterations must be >= 1");
    for (int v : silhouetteViews) {
      if (v < 0) fail("silhouetteViews entries must be >= 0");
    }
  }
};

inline json::json toJson(const RbfConfig& c) {
  return {{"embedDim", c.embedDim},
          {"encoderLayers", c.encoderLayers},
          {"decoderLayers", c.decoderLayers},
          {"heads", c.heads},
          {"ffnMultiplier", c.ffnMultiplier},
          {"eigenCount", c.eigenCount},
          {"frequencies", c.frequencies},
          {"encoding", encodingName(c.encoding)},
          {"normalization", modeName(c.normalization)},
          {"headInitScale", c.headInitScale},
          {"epochs", c.epochs},
          {"batchSize", c.batchSize},
          {"lrModel", c.lrModel},
          {"lrParams", c.lrParams},
          {"lrFinalFraction", c.lrFinalFraction},
          {"refinePeriod", c.refinePeriod},
          {"refineSteps", c.refineSteps},
          {"refineFrames", c.refineFrames},
          {"silhouetteViews", c.silhouetteViews},
          {"arapIterations", c.arapIterations},
          {"seed", c.seed}};
}

inline RbfConfig rbfConfigFromJson(const json::json& j, const std::string& path = "model") {
  json::requireKeys(j, {"embedDim", "encoderLayers", "decoderLayers", "heads", "ffnMultiplier", "eigenCount", "frequencies",
                        "encoding", "normalization", "headInitScale", "epochs", "batchSize", "lrModel", "lrParams", "lrFinalFraction", "refinePeriod",
                        "refineSteps", "refineFrames", "silhouetteViews", "arapIterations", "seed"},
                    path);
  RbfConfig c;
  json::read(j, "embedDim", c.embedDim, path);
  json::read(j, "encoderLayers", c.encoderLayers, path);
  json::read(j, "decoderLayers", c.decoderLayers, path);
  json::read(j, "heads", c.heads, path);
  json::read(j, "ffnMultiplier", c.ffnMultiplier, path);
  json::read(j, "eigenCount", c.eigenCount, path);
  json::read(j, "frequencies", c.frequencies, path);
  std::string enc = encodingName(c.encoding), norm = modeName(c.normalization);
  json::read(j, "encoding", enc, path);
  json::read(j, "normalization", norm, path);
  c.encoding = encodingFromName(enc);
  c.normalization = modeFromName(norm);
  json::read(j, "headInitScale", c.headInitScale, path);
  json::read(j, "epochs", c.epochs, path);
  json::read(j, "batchSize", c.batchSize, path);
  json::read(j, "lrModel", c.lrModel, path);
  json::read(j, "lrParams", c.lrParams, path);
  json::read(j, "lrFinalFraction", c.lrFinalFraction, path);
  json::read(j, "refinePeriod", c.refinePeriod, path);
  json::read(j, "refineSteps", c.refineSteps, path);
  json::read(j, "refineFrames", c.refineFrames, path);
  json::read(j, "silhouetteViews", c.silhouetteViews, path);
  json::read(j, "arapIterations", c.arapIterations, path);
  json::read(j, "seed", c.seed, path);
  c.validate();
  return c;
}

}  // namespace rbf::model
