#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rbf/canonical/types.hpp"
#include "rbf/synth/body.hpp"

namespace rbf::synth {

// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seed of stream `stream`, item `index` under master seed `master`:
// splitmix64(splitmix64(master ^ stream) + index).
inline std::uint64_t deriveSeed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(master ^ (stream * 0xD1B54A32D192ED03ull)) + index);
}

enum class MotionProfile { RandomWalk, Gait };

struct NoiseConfig {
  double pixelSigma = 0.0;  // px
  double dropout = 0.0;     // per (marker, view) detection loss
  double occlusion = 0.0;   // per (marker, frame) ground-truth loss
};

struct GenerateConfig {
  int frameCount = 100;  // per individual
  MotionProfile motion = MotionProfile::RandomWalk;
  NoiseConfig noise;
  int maskEvery = 0;  // rasterize silhouettes every k-th frame; 0 = never
  std::uint64_t seed = 0;
  double frameInterval = 1.0 / 30.0;  // s
  bool keepMeshes = true;
  double translationRange = 20.0;  // mm, per horizontal axis
};

struct Individual {
  RestModel rest;
  int anchorOffset = 0;
  PoseParams referencePose;
  canonical::ReferenceCapture reference;
};

struct SynthDataset {
  std::vector<mv::Camera> cameras;
  std::vector<Individual> individuals;  // ascending id
  int anchorCount = 0;
  std::vector<FrameSample> frames;
  std::vector<PoseParams> poses;
  std::vector<Points> meshes;  // posed vertices, when kept
  std::vector<annotate::Detection2D> detections;
  double frameInterval = 1.0 / 30.0;

  const Individual& individual(const std::string& id) const {
    for (const auto& ind : individuals) {
      if (ind.rest.spec.id == id) return ind;
    }
    throw DataError("dataset has no individual " + id);
  }
  std::vector<canonical::ReferenceCapture> references() const {
    std::vector<canonical::ReferenceCapture> out;
    for (const auto& ind : individuals) out.push_back(ind.reference);
    return out;
  }
};

namespace detail {

enum Stream : std::uint64_t { kMotion = 1, kReference = 2, kFrameNoise = 3 };

// Ornstein-Uhlenbeck walk on the articulation, drifting heading, and a
// mean-reverting horizontal translation.
inline std::vector<PoseParams> randomWalk(int frames, double dt, double range, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const double theta = 1.5;
  auto ou = [&](double x, double lim) {
    const double sigma = 0.4 * lim * std::sqrt(2.0 * theta);
    const double next = x - theta * x * dt + sigma * std::sqrt(dt) * n01(rng);
    return std::clamp(next, -lim, lim);
  };
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PoseParams p;
  p.yaw = std::numbers::pi * u(rng);
  double omega = 0.0;
  Eigen::Vector2d xy(0.5 * range * u(rng), 0.5 * range * u(rng));
  std::vector<PoseParams> out;
  for (int f = 0; f < frames; ++f) {
    for (auto& s : p.spine) s = ou(s, PoseLimits::spine);
    p.headYaw = ou(p.headYaw, PoseLimits::headYaw);
    p.headPitch = ou(p.headPitch, PoseLimits::headPitch);
    for (auto& l : p.limbs) l = ou(l, PoseLimits::limb);
    omega += -theta * omega * dt + 1.0 * std::sqrt(2.0 * theta * dt) * n01(rng);
    p.yaw += omega * dt;
    for (int k = 0; k < 2; ++k) {
      xy[k] += -theta * xy[k] * dt + 0.4 * range * std::sqrt(2.0 * theta * dt) * n01(rng);
      xy[k] = std::clamp(xy[k], -range, range);
    }
    p.translation = Vec3(xy[0], xy[1], 0.0);
    p.time = f;
    out.push_back(p);
  }
  return out;
}

// Periodic gait: travelling spine wave, diagonal limb pairs in phase, slow
// head sweep and a circling trajectory.
inline std::vector<PoseParams> gait(int frames, double dt, double range, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double yaw0 = 2.0 * std::numbers::pi * u(rng);
  const double freq = 1.5 + 0.5 * u(rng);  // Hz
  const double w = 2.0 * std::numbers::pi * freq;
  std::vector<PoseParams> out;
  for (int f = 0; f < frames; ++f) {
    const double t = f * dt;
    PoseParams p;
    for (size_t k = 0; k < 3; ++k) p.spine[k] = 0.25 * std::sin(w * t + phase + 0.5 * std::numbers::pi * static_cast<double>(k));
    p.headYaw = 0.3 * std::sin(0.5 * w * t + phase);
    p.headPitch = 0.15 * std::sin(w * t + phase + 1.0);
    const double swing = 0.45 * std::sin(w * t + phase);
    p.limbs = {swing, -swing, -swing, swing};
    p.yaw = yaw0 + 0.6 * t;
    p.translation = Vec3(0.75 * range * std::cos(0.6 * t + phase), 0.75 * range * std::sin(0.6 * t + phase), 0.0);
    p.time = f;
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

inline SynthDataset generateDataset(std::vector<SynthSpec> specs, const std::vector<mv::Camera>& rig,
                                    const GenerateConfig& config) {
  if (specs.empty()) throw ConfigError("synth: no individuals");
  if (config.frameCount < 1) throw ConfigError("synth: frameCount must be at least 1");
  if (config.maskEvery < 0) throw ConfigError("synth: maskEvery must be non-negative");
  if (config.noise.pixelSigma < 0 || config.noise.dropout < 0 || config.noise.dropout > 1 || config.noise.occlusion < 0 ||
      config.noise.occlusion > 1) {
    throw ConfigError("synth: noise parameters out of range");
  }
  std::sort(specs.begin(), specs.end(), [](const SynthSpec& a, const SynthSpec& b) { return a.id < b.id; });
  std::map<std::string, int> counts;
  for (const auto& s : specs) {
    if (counts.count(s.id)) throw ConfigError("synth: duplicate individual id " + s.id);
    counts[s.id] = s.markerCount;
  }
  const auto offsets = canonical::anchorOffsets(counts);

  SynthDataset ds;
  ds.cameras = rig;
  ds.frameInterval = config.frameInterval;
  for (const auto& s : specs) ds.anchorCount += s.markerCount;

  for (size_t ii = 0; ii < specs.size(); ++ii) {
    Individual ind;
    ind.rest = makeRestMesh(specs[ii]);
    ind.anchorOffset = offsets.at(specs[ii].id);
    std::mt19937_64 refRng(deriveSeed(config.seed, detail::kReference, ii));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ind.referencePose.yaw = std::numbers::pi * u(refRng);
    ind.referencePose.translation = Vec3(0.5 * config.translationRange * u(refRng), 0.5 * config.translationRange * u(refRng), 0.0);
    const PosedBody ref = samplePose(ind.rest, ind.referencePose);
    ind.reference = {specs[ii].id, ref.keypoints, ref.markers, TriMesh{ref.vertices, ind.rest.mesh.faces}};
    ds.individuals.push_back(std::move(ind));
  }

  int globalFrame = 0;
  for (size_t ii = 0; ii < ds.individuals.size(); ++ii) {
    const Individual& ind = ds.individuals[ii];
    std::mt19937_64 motionRng(deriveSeed(config.seed, detail::kMotion, ii));
    const auto poses = config.motion == MotionProfile::Gait
                           ? detail::gait(config.frameCount, config.frameInterval, config.translationRange, motionRng)
                           : detail::randomWalk(config.frameCount, config.frameInterval, config.translationRange, motionRng);
    for (int f = 0; f < config.frameCount; ++f, ++globalFrame) {
      const PoseParams& pose = poses[static_cast<size_t>(f)];
      const PosedBody body = samplePose(ind.rest, pose);
      std::mt19937_64 noiseRng(deriveSeed(config.seed, detail::kFrameNoise + 16 * ii, static_cast<std::uint64_t>(f)));
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::normal_distribution<double> pix(0.0, 1.0);

      FrameSample s;
      s.individual = ind.rest.spec.id;
      s.frame = f;
      s.keypoints = body.keypoints;
      s.surface = Points::Zero(ds.anchorCount, 3);
      s.visible.assign(static_cast<size_t>(ds.anchorCount), 0);
      for (int m = 0; m < ind.rest.spec.markerCount; ++m) {
        const bool occluded = config.noise.occlusion > 0.0 && u01(noiseRng) < config.noise.occlusion;
        if (occluded) continue;
        const int c = ind.anchorOffset + m;
        s.surface.row(c) = body.markers.row(m);
        s.visible[static_cast<size_t>(c)] = 1;
        const Vec3 p = body.markers.row(m).transpose();
        for (int v = 0; v < static_cast<int>(rig.size()); ++v) {
          const auto& cam = rig[static_cast<size_t>(v)];
          const bool dropped = config.noise.dropout > 0.0 && u01(noiseRng) < config.noise.dropout;
          if (dropped || !(cam.depth(p) > 1e-6)) continue;
          Vec2 px = mv::project(cam, p);
          if (config.noise.pixelSigma > 0.0) px += config.noise.pixelSigma * Vec2(pix(noiseRng), pix(noiseRng));
          if (px.x() < 0 || px.y() < 0 || px.x() > cam.width - 1 || px.y() > cam.height - 1) continue;
          ds.detections.push_back({globalFrame, v, px, ind.rest.markerColors[static_cast<size_t>(m)]});
        }
      }
      if (config.maskEvery > 0 && f % config.maskEvery == 0) {
        TriMesh posed{body.vertices, ind.rest.mesh.faces};
        s.masks.resize(rig.size());
        for (size_t v = 0; v < rig.size(); ++v) {
          try {
            s.masks[v] = std::make_shared<const mv::SilhouetteMask>(mv::rasterizeSilhouette(rig[v], posed));
          } catch (const DataError&) {
            s.masks[v] = nullptr;
          }
        }
      }
      ds.frames.push_back(std::move(s));
      ds.poses.push_back(pose);
      if (config.keepMeshes) ds.meshes.push_back(body.vertices);
    }
  }
  return ds;
}

}  // namespace rbf::synth
