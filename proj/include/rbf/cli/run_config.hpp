#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rbf/annotate/markers.hpp"
#include "rbf/canonical/build.hpp"
#include "rbf/core/json_util.hpp"
#include "rbf/forecast/forecast.hpp"
#include "rbf/model/config.hpp"
#include "rbf/model/train.hpp"
#include "rbf/synth/dataset.hpp"

namespace rbf::cli {

inline constexpr int kSchemaVersion = 1;

struct RigConfig {
  double focal = 180.0;
  int width = 256;
  int height = 256;
};

// Contiguous per-individual frame blocks, taken in this order.
struct SplitConfig {
  int manual = 100;
  int unlabeled = 300;
  int val = 50;
  int test = 50;
  int total() const { return manual + unlabeled + val + test; }
};

struct EvalConfig {
  int bins = 30;
};

// One document for every command. Sections may be omitted; present sections
// are checked key by key.
struct RunConfig {
  int schemaVersion = kSchemaVersion;
  RigConfig rig;
  std::vector<synth::SynthSpec> individuals{synth::SynthSpec{}};
  synth::GenerateConfig generate;
  std::string canonicalBase;  // empty: first individual by id
  canonical::BuildOptions canonical;
  model::RbfConfig model;
  model::InferConfig infer;
  annotate::MarkerConfig markers;
  SplitConfig split;
  forecast::ForecastConfig forecast;
  EvalConfig eval;

  // Every random stream is derived from the one master seed.
  void applySeed(std::uint64_t seed) {
    generate.seed = synth::deriveSeed(seed, 1, 0);
    for (size_t i = 0; i < individuals.size(); ++i) individuals[i].seed = synth::deriveSeed(seed, 2, i);
    model.seed = synth::deriveSeed(seed, 3, 0);
    forecast.seed = synth::deriveSeed(seed, 4, 0);
  }

  void validate() const {
    if (individuals.empty()) throw ConfigError("synth.individuals: at least one individual is required");
    for (const auto& s : individuals) s.validate();
    if (split.manual < 1 || split.unlabeled < 0 || split.val < 0 || split.test < 1) {
      throw ConfigError("split: manual and test must be >= 1, unlabeled and val >= 0");
    }
    if (eval.bins < 1) throw ConfigError("eval.bins must be >= 1");
    if (!(markers.reprojectionThreshold > 0.0) || !(markers.rejectionRadius > 0.0)) {
      throw ConfigError("annotate: thresholds must be positive");
    }
    if (infer.steps < 0 || infer.maxFrames < 1 || !(infer.lr >= 0.0)) throw ConfigError("infer: steps >= 0, maxFrames >= 1, lr >= 0");
    model.validate();
    forecast.validate();
  }
};

namespace detail {

using nlohmann::json;

inline std::string motionName(synth::MotionProfile m) { return m == synth::MotionProfile::Gait ? "gait" : "random_walk"; }

inline synth::MotionProfile motionFromName(const std::string& s, const std::string& path) {
  if (s == "gait") return synth::MotionProfile::Gait;
  if (s == "random_walk") return synth::MotionProfile::RandomWalk;
  throw ConfigError(path + ": unknown motion '" + s + "'");
}

inline json specToJson(const synth::SynthSpec& s) {
  return {{"id", s.id},         {"bodyLength", s.bodyLength}, {"girthScale", s.girthScale},
          {"markerCount", s.markerCount}, {"colorClassCount", s.colorClassCount}};
}

inline synth::SynthSpec specFromJson(const json& j, const std::string& path) {
  rbf::json::requireKeys(j, {"id", "bodyLength", "girthScale", "markerCount", "colorClassCount"}, path);
  synth::SynthSpec s;
  rbf::json::read(j, "id", s.id, path);
  rbf::json::read(j, "bodyLength", s.bodyLength, path);
  rbf::json::read(j, "girthScale", s.girthScale, path);
  rbf::json::read(j, "markerCount", s.markerCount, path);
  rbf::json::read(j, "colorClassCount", s.colorClassCount, path);
  return s;
}

}  // namespace detail

inline json::json toJson(const RunConfig& c) {
  json::json inds = json::json::array();
  for (const auto& s : c.individuals) inds.push_back(detail::specToJson(s));
  const auto& g = c.generate;
  return {{"schemaVersion", c.schemaVersion},
          {"rig", {{"focal", c.rig.focal}, {"width", c.rig.width}, {"height", c.rig.height}}},
          {"synth",
           {{"individuals", inds},
            {"frameCount", g.frameCount},
            {"motion", detail::motionName(g.motion)},
            {"maskEvery", g.maskEvery},
            {"frameInterval", g.frameInterval},
            {"translationRange", g.translationRange},
            {"noise", {{"pixelSigma", g.noise.pixelSigma}, {"dropout", g.noise.dropout}, {"occlusion", g.noise.occlusion}}}}},
          {"canonical",
           {{"base", c.canonicalBase},
            {"eigenCount", c.canonical.eigenCount},
            {"outerIterations", c.canonical.outerIterations},
            {"outlierFraction", c.canonical.outlierFraction}}},
          {"model", model::toJson(c.model)},
          {"infer", {{"steps", c.infer.steps}, {"lr", c.infer.lr}, {"maxFrames", c.infer.maxFrames}, {"views", c.infer.views}}},
          {"annotate", {{"reprojectionThreshold", c.markers.reprojectionThreshold}, {"rejectionRadius", c.markers.rejectionRadius}}},
          {"split", {{"manual", c.split.manual}, {"unlabeled", c.split.unlabeled}, {"val", c.split.val}, {"test", c.split.test}}},
          {"forecast", forecast::toJson(c.forecast)},
          {"eval", {{"bins", c.eval.bins}}}};
}

inline RunConfig runConfigFromJson(const json::json& j) {
  using json::read;
  using json::requireKeys;
  requireKeys(j, {"schemaVersion", "rig", "synth", "canonical", "model", "infer", "annotate", "split", "forecast", "eval"}, "config");
  if (!j.contains("schemaVersion")) throw ConfigError("config.schemaVersion: required");
  RunConfig c;
  read(j, "schemaVersion", c.schemaVersion, "config");
  if (c.schemaVersion != kSchemaVersion) {
    throw ConfigError("config.schemaVersion: expected " + std::to_string(kSchemaVersion) + ", got " + std::to_string(c.schemaVersion));
  }
  if (j.contains("rig")) {
    const auto& r = j.at("rig");
    requireKeys(r, {"focal", "width", "height"}, "rig");
    read(r, "focal", c.rig.focal, "rig");
    read(r, "width", c.rig.width, "rig");
    read(r, "height", c.rig.height, "rig");
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    requireKeys(s, {"individuals", "frameCount", "motion", "maskEvery", "frameInterval", "translationRange", "noise"}, "synth");
    if (s.contains("individuals")) {
      if (!s.at("individuals").is_array()) throw ConfigError("synth.individuals: expected an array");
      c.individuals.clear();
      for (size_t i = 0; i < s.at("individuals").size(); ++i) {
        c.individuals.push_back(detail::specFromJson(s.at("individuals")[i], "synth.individuals[" + std::to_string(i) + "]"));
      }
    }
    auto& g = c.generate;
    read(s, "frameCount", g.frameCount, "synth");
    std::string motion = detail::motionName(g.motion);
    read(s, "motion", motion, "synth");
    g.motion = detail::motionFromName(motion, "synth.motion");
    read(s, "maskEvery", g.maskEvery, "synth");
    read(s, "frameInterval", g.frameInterval, "synth");
    read(s, "translationRange", g.translationRange, "synth");
    if (s.contains("noise")) {
      const auto& n = s.at("noise");
      requireKeys(n, {"pixelSigma", "dropout", "occlusion"}, "synth.noise");
      read(n, "pixelSigma", g.noise.pixelSigma, "synth.noise");
      read(n, "dropout", g.noise.dropout, "synth.noise");
      read(n, "occlusion", g.noise.occlusion, "synth.noise");
    }
  }
  if (j.contains("canonical")) {
    const auto& s = j.at("canonical");
    requireKeys(s, {"base", "eigenCount", "outerIterations", "outlierFraction"}, "canonical");
    read(s, "base", c.canonicalBase, "canonical");
    read(s, "eigenCount", c.canonical.eigenCount, "canonical");
    read(s, "outerIterations", c.canonical.outerIterations, "canonical");
    read(s, "outlierFraction", c.canonical.outlierFraction, "canonical");
  }
  if (j.contains("model")) {
    c.model = model::rbfConfigFromJson(j.at("model"), "model");
  }
  if (j.contains("infer")) {
    const auto& s = j.at("infer");
    requireKeys(s, {"steps", "lr", "maxFrames", "views"}, "infer");
    read(s, "steps", c.infer.steps, "infer");
    read(s, "lr", c.infer.lr, "infer");
    read(s, "maxFrames", c.infer.maxFrames, "infer");
    read(s, "views", c.infer.views, "infer");
  }
  if (j.contains("annotate")) {
    const auto& s = j.at("annotate");
    requireKeys(s, {"reprojectionThreshold", "rejectionRadius"}, "annotate");
    read(s, "reprojectionThreshold", c.markers.reprojectionThreshold, "annotate");
    read(s, "rejectionRadius", c.markers.rejectionRadius, "annotate");
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    requireKeys(s, {"manual", "unlabeled", "val", "test"}, "split");
    read(s, "manual", c.split.manual, "split");
    read(s, "unlabeled", c.split.unlabeled, "split");
    read(s, "val", c.split.val, "split");
    read(s, "test", c.split.test, "split");
  }
  if (j.contains("forecast")) c.forecast = forecast::forecastConfigFromJson(j.at("forecast"), "forecast");
  if (j.contains("eval")) {
    const auto& s = j.at("eval");
    requireKeys(s, {"bins"}, "eval");
    read(s, "bins", c.eval.bins, "eval");
  }
  c.validate();
  return c;
}

inline RunConfig loadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json::json j;
  try {
    j = json::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return runConfigFromJson(j);
}

}  // namespace rbf::cli
