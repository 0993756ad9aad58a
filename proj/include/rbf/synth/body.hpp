#pragma once

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rbf/annotate/markers.hpp"
#include "rbf/geom/mesh.hpp"
#include "rbf/model/sample.hpp"

// Procedural rat-like body: an elliptic tube swept along +X (tail base at
// -L/2, nose at +L/2) with a neck pinch, a head bulge and four ventral paw
// stubs. Posing is a chain of smooth, blended rigid motions.
namespace rbf::synth {

using geom::Mat3;
using geom::Points;
using geom::SurfacePointRef;
using geom::TriMesh;
using geom::Vec3;
using mv::Vec2;

struct SynthSpec {
  std::string id = "rat0";
  double bodyLength = 180.0;  // mm
  double girthScale = 1.0;
  int markerCount = 20;
  int colorClassCount = 4;
  std::uint64_t seed = 1;
  int rings = 30;
  int segments = 20;

  void validate() const {
    if (!(bodyLength > 0.0)) throw ConfigError("synth: bodyLength must be positive");
    if (!(girthScale > 0.0)) throw ConfigError("synth: girthScale must be positive");
    if (markerCount < 4) throw ConfigError("synth: markerCount must be at least 4");
    if (colorClassCount < 1 || colorClassCount > annotate::kColorCount) {
      throw ConfigError("synth: colorClassCount must be in [1, " + std::to_string(annotate::kColorCount) + "]");
    }
    if (rings < 8 || segments < 8) throw ConfigError("synth: mesh resolution too low");
    if (id.empty()) throw ConfigError("synth: empty individual id");
  }
};

struct PoseParams {
  std::array<double, 3> spine{};  // lateral bend at three joints, rad
  double headYaw = 0.0;
  double headPitch = 0.0;
  std::array<double, 4> limbs{};  // fore/aft swing: RF, LF, RB, LB
  double yaw = 0.0;               // global, about +Z
  Vec3 translation = Vec3::Zero();
  int time = 0;
};

struct PoseLimits {
  static constexpr double spine = 0.45;
  static constexpr double headYaw = 0.6;
  static constexpr double headPitch = 0.4;
  static constexpr double limb = 0.6;
};

inline void validatePose(const PoseParams& p) {
  auto check = [](double v, double lim, const char* name) {
    if (!std::isfinite(v) || std::abs(v) > lim + 1e-12) {
      throw DataError(std::string("pose parameter ") + name + " = " + std::to_string(v) + " outside its limit");
    }
  };
  for (double s : p.spine) check(s, PoseLimits::spine, "spine");
  check(p.headYaw, PoseLimits::headYaw, "headYaw");
  check(p.headPitch, PoseLimits::headPitch, "headPitch");
  for (double l : p.limbs) check(l, PoseLimits::limb, "limb");
  if (!std::isfinite(p.yaw) || !p.translation.allFinite()) throw DataError("pose global transform is not finite");
}

struct RestModel {
  SynthSpec spec;
  TriMesh mesh;
  std::array<int, kKeypointCount> keypointVertices{};
  std::vector<SurfacePointRef> markers;
  std::vector<annotate::Color> markerColors;
  std::vector<double> axial;  // rest x of each vertex's cross-section
  double centerHeight = 0.0;  // z of the body axis
};

namespace detail {

inline constexpr double kNeck = 0.74;
inline constexpr std::array<double, 3> kSpineJoints{0.3, 0.5, 0.7};
// Paw stubs: (t, angle); angle measured from +Y towards +Z.
inline constexpr std::array<std::array<double, 2>, 4> kPaws{{{0.68, 234.0}, {0.68, 306.0}, {0.3, 234.0}, {0.3, 306.0}}};

inline double smoothstep(double u) {
  const double s = std::clamp(0.5 * (u + 1.0), 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

inline double angleDiff(double a, double b) {
  double d = std::fmod(a - b, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

inline double envelope(double t) {
  const double base = std::pow(std::sin(std::numbers::pi * t), 0.6);
  const double neck = 1.0 - 0.22 * std::exp(-std::pow((t - kNeck) / 0.045, 2));
  const double head = 1.0 + 0.12 * std::exp(-std::pow((t - 0.84) / 0.05, 2));
  return base * neck * head;
}

struct Grid {
  int rings;
  int segments;
  double ringT(int i) const { return static_cast<double>(i) / (rings + 1); }
  double segAngle(int k) const { return 2.0 * std::numbers::pi * k / segments; }
  int vertex(int ring, int seg) const { return 1 + (ring - 1) * segments + ((seg % segments) + segments) % segments; }
  int nearestRing(double t) const { return std::clamp(static_cast<int>(std::lround(t * (rings + 1))), 1, rings); }
  int nearestSeg(double deg) const { return static_cast<int>(std::lround(deg / 360.0 * segments)) % segments; }
};

inline double pawBump(const Grid& g, double t, double phi) {
  double b = 0.0;
  for (const auto& paw : kPaws) {
    const double tp = g.ringT(g.nearestRing(paw[0]));
    const double pp = g.segAngle(g.nearestSeg(paw[1]));
    b += 0.55 * std::exp(-std::pow((t - tp) / 0.035, 2) - std::pow(angleDiff(phi, pp) / 0.35, 2));
  }
  return b;
}

inline double limbWeight(const Grid& g, int limb, double t, double phi) {
  const auto& paw = kPaws[static_cast<size_t>(limb)];
  const double tp = g.ringT(g.nearestRing(paw[0]));
  const double pp = g.segAngle(g.nearestSeg(paw[1]));
  return std::exp(-std::pow((t - tp) / 0.06, 2) - std::pow(angleDiff(phi, pp) / 0.6, 2));
}

}  // namespace detail

// Deterministic for a fixed spec; markers are drawn with mt19937_64(spec.seed).
inline RestModel makeRestMesh(const SynthSpec& spec) {
  spec.validate();
  using namespace detail;
  const Grid g{spec.rings, spec.segments};
  const double L = spec.bodyLength;
  const double ry0 = 0.13 * L * spec.girthScale;
  const double rz0 = 0.11 * L * spec.girthScale;

  RestModel model;
  model.spec = spec;
  const int nv = 2 + spec.rings * spec.segments;
  Points v(nv, 3);
  model.axial.assign(static_cast<size_t>(nv), 0.0);
  std::vector<double> tOf(static_cast<size_t>(nv), 0.0), phiOf(static_cast<size_t>(nv), 0.0);
  double minZ = 0.0;
  v.row(0) << -0.5 * L, 0.0, 0.0;
  model.axial[0] = -0.5 * L;
  for (int i = 1; i <= spec.rings; ++i) {
    const double t = g.ringT(i);
    const double e = envelope(t);
    for (int k = 0; k < spec.segments; ++k) {
      const double phi = g.segAngle(k);
      const double r = 1.0 + pawBump(g, t, phi);
      const int idx = g.vertex(i, k);
      v.row(idx) << L * (t - 0.5), ry0 * e * r * std::cos(phi), rz0 * e * r * std::sin(phi);
      model.axial[static_cast<size_t>(idx)] = L * (t - 0.5);
      tOf[static_cast<size_t>(idx)] = t;
      phiOf[static_cast<size_t>(idx)] = phi;
      minZ = std::min(minZ, v(idx, 2));
    }
  }
  v.row(nv - 1) << 0.5 * L, 0.0, 0.0;
  model.axial[static_cast<size_t>(nv - 1)] = 0.5 * L;
  tOf[static_cast<size_t>(nv - 1)] = 1.0;
  // Stand on the floor (z = 0).
  model.centerHeight = -minZ;
  v.col(2).array() += model.centerHeight;

  std::vector<Eigen::Vector3i> faces;
  const int S = spec.segments;
  for (int k = 0; k < S; ++k) faces.emplace_back(0, g.vertex(1, k + 1), g.vertex(1, k));
  for (int i = 1; i < spec.rings; ++i) {
    for (int k = 0; k < S; ++k) {
      const int a = g.vertex(i, k), b = g.vertex(i, k + 1), c = g.vertex(i + 1, k), d = g.vertex(i + 1, k + 1);
      faces.emplace_back(a, b, d);
      faces.emplace_back(a, d, c);
    }
  }
  for (int k = 0; k < S; ++k) faces.emplace_back(nv - 1, g.vertex(spec.rings, k), g.vertex(spec.rings, k + 1));
  model.mesh.vertices = v;
  model.mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t f = 0; f < faces.size(); ++f) model.mesh.faces.row(static_cast<Eigen::Index>(f)) = faces[f].transpose();
  model.mesh.validate();

  auto kp = [&](double t, double deg) { return g.vertex(g.nearestRing(t), g.nearestSeg(deg)); };
  model.keypointVertices[kNose] = nv - 1;
  model.keypointVertices[kRightEye] = kp(0.9, 144.0);
  model.keypointVertices[kLeftEye] = kp(0.9, 36.0);
  model.keypointVertices[kRightEar] = kp(0.8, 108.0);
  model.keypointVertices[kLeftEar] = kp(0.8, 72.0);
  for (int p = 0; p < 4; ++p) {
    model.keypointVertices[static_cast<size_t>(kRightFrontPaw + p)] = kp(kPaws[static_cast<size_t>(p)][0], kPaws[static_cast<size_t>(p)][1]);
  }
  model.keypointVertices[kTailBase] = 0;

  // Markers: area-weighted over dorsal/lateral faces away from the poles,
  // rejection-sampled to keep a minimum spacing.
  std::vector<int> eligible;
  std::vector<double> weights;
  for (int f = 0; f < model.mesh.numFaces(); ++f) {
    Vec3 centre = Vec3::Zero();
    double t = 0.0;
    for (int k = 0; k < 3; ++k) {
      centre += model.mesh.vertex(model.mesh.faces(f, k));
      t += tOf[static_cast<size_t>(model.mesh.faces(f, k))];
    }
    centre /= 3.0;
    t /= 3.0;
    const Vec3 a = model.mesh.vertex(model.mesh.faces(f, 0));
    const Vec3 n = (model.mesh.vertex(model.mesh.faces(f, 1)) - a).cross(model.mesh.vertex(model.mesh.faces(f, 2)) - a).normalized();
    if (t < 0.08 || t > 0.92 || n.z() < -0.35) continue;
    eligible.push_back(f);
    weights.push_back(model.mesh.faceArea(f));
  }
  std::mt19937_64 rng(spec.seed);
  std::discrete_distribution<int> pickFace(weights.begin(), weights.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double minSpacing = 0.03 * L;
  std::vector<Vec3> placed;
  int attempts = 0;
  while (static_cast<int>(model.markers.size()) < spec.markerCount) {
    if (++attempts > 200000) throw ConfigError("synth: cannot place " + std::to_string(spec.markerCount) + " markers with the minimum spacing");
    const int f = eligible[static_cast<size_t>(pickFace(rng))];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    SurfacePointRef ref;
    ref.face = f;
    ref.barycentric = Vec3(1.0 - r1, r1 * (1.0 - r2), r1 * r2);
    ref.barycentric /= ref.barycentric.sum();
    const Vec3 p = geom::evalPoint(model.mesh, ref);
    bool ok = true;
    for (const auto& q : placed) ok = ok && (p - q).norm() >= minSpacing;
    if (!ok) continue;
    placed.push_back(p);
    model.markers.push_back(ref);
    model.markerColors.push_back(static_cast<annotate::Color>(static_cast<int>(model.markers.size() - 1) % spec.colorClassCount));
  }
  return model;
}

inline Mat3 rotZ(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }
inline Mat3 rotY(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }

struct PosedBody {
  Points vertices;
  Points keypoints;
  Points markers;
};

// Limb swings, head turn, spine bends, then the global yaw and translation.
// Each stage adds w·(R − I)(p − pivot), so zero parameters reproduce the rest
// mesh bit for bit.
inline PosedBody samplePose(const RestModel& model, const PoseParams& params) {
  validatePose(params);
  using namespace detail;
  const SynthSpec& spec = model.spec;
  const Grid g{spec.rings, spec.segments};
  const double L = spec.bodyLength;
  const double h = model.centerHeight;
  Points v = model.mesh.vertices;
  const int nv = static_cast<int>(v.rows());

  for (int limb = 0; limb < 4; ++limb) {
    const double a = params.limbs[static_cast<size_t>(limb)];
    if (a == 0.0) continue;
    const auto& paw = kPaws[static_cast<size_t>(limb)];
    const Vec3 root(L * (g.ringT(g.nearestRing(paw[0])) - 0.5), 0.0, h);
    const Mat3 d = rotY(a) - Mat3::Identity();
    for (int i = 1; i < nv - 1; ++i) {
      const int ring = (i - 1) / spec.segments + 1;
      const int seg = (i - 1) % spec.segments;
      const double w = limbWeight(g, limb, g.ringT(ring), g.segAngle(seg));
      if (w < 1e-12) continue;
      const Vec3 p = v.row(i).transpose();
      v.row(i) += (w * (d * (p - root))).transpose();
    }
  }

  if (params.headYaw != 0.0 || params.headPitch != 0.0) {
    const Vec3 neck(L * (kNeck - 0.5), 0.0, h);
    const Mat3 d = rotZ(params.headYaw) * rotY(-params.headPitch) - Mat3::Identity();
    for (int i = 0; i < nv; ++i) {
      const double w = smoothstep((model.axial[static_cast<size_t>(i)] - neck.x()) / (0.04 * L));
      if (w == 0.0) continue;
      const Vec3 p = v.row(i).transpose();
      v.row(i) += (w * (d * (p - neck))).transpose();
    }
  }

  if (params.spine[0] != 0.0 || params.spine[1] != 0.0 || params.spine[2] != 0.0) {
    const double width = 0.08 * L;
    auto heading = [&](double x) {
      double th = 0.0;
      for (size_t k = 0; k < 3; ++k) th += params.spine[k] * smoothstep((x - L * (kSpineJoints[k] - 0.5)) / width);
      return th;
    };
    // Centre-line displacement from x = 0, tabulated by the trapezoid rule.
    const int n = 2048;
    const double dx = L / n;
    std::vector<Eigen::Vector2d> table(static_cast<size_t>(n + 1), Eigen::Vector2d::Zero());
    const int mid = n / 2;
    auto integrand = [&](double x) {
      const double th = heading(x);
      return Eigen::Vector2d(std::cos(th) - 1.0, std::sin(th));
    };
    for (int s = mid + 1; s <= n; ++s) {
      const double x0 = -0.5 * L + (s - 1) * dx;
      table[static_cast<size_t>(s)] = table[static_cast<size_t>(s - 1)] + 0.5 * dx * (integrand(x0) + integrand(x0 + dx));
    }
    for (int s = mid - 1; s >= 0; --s) {
      const double x1 = -0.5 * L + (s + 1) * dx;
      table[static_cast<size_t>(s)] = table[static_cast<size_t>(s + 1)] - 0.5 * dx * (integrand(x1 - dx) + integrand(x1));
    }
    for (int i = 0; i < nv; ++i) {
      const double x = model.axial[static_cast<size_t>(i)];
      const double pos = std::clamp((x + 0.5 * L) / dx, 0.0, static_cast<double>(n));
      const int s0 = std::min(static_cast<int>(pos), n - 1);
      const double f = pos - s0;
      const Eigen::Vector2d dc = (1.0 - f) * table[static_cast<size_t>(s0)] + f * table[static_cast<size_t>(s0 + 1)];
      const double th = heading(x);
      const double ox = v(i, 0) - x;
      const double oy = v(i, 1);
      v(i, 0) += dc.x() + (std::cos(th) - 1.0) * ox - std::sin(th) * oy;
      v(i, 1) += dc.y() + std::sin(th) * ox + (std::cos(th) - 1.0) * oy;
    }
  }

  if (params.yaw != 0.0) {
    const Mat3 r = rotZ(params.yaw);
    v = (v * r.transpose()).eval();
  }
  if (!params.translation.isZero(0.0)) v.rowwise() += params.translation.transpose();

  PosedBody out;
  out.vertices = std::move(v);
  out.keypoints.resize(kKeypointCount, 3);
  for (int k = 0; k < kKeypointCount; ++k) out.keypoints.row(k) = out.vertices.row(model.keypointVertices[static_cast<size_t>(k)]);
  out.markers = geom::evalPoints(model.mesh.faces, out.vertices, model.markers);
  return out;
}

// Nose-to-tail-base distance at rest.
inline double restLength(const RestModel& m) {
  return (m.mesh.vertex(m.keypointVertices[kNose]) - m.mesh.vertex(m.keypointVertices[kTailBase])).norm();
}

// Largest cross-section perimeter at rest.
inline double restGirth(const RestModel& m) {
  double best = 0.0;
  const int S = m.spec.segments;
  for (int ring = 1; ring <= m.spec.rings; ++ring) {
    double per = 0.0;
    for (int k = 0; k < S; ++k) {
      const int a = 1 + (ring - 1) * S + k;
      const int b = 1 + (ring - 1) * S + (k + 1) % S;
      per += (m.mesh.vertex(a) - m.mesh.vertex(b)).norm();
    }
    best = std::max(best, per);
  }
  return best;
}

}  // namespace rbf::synth
