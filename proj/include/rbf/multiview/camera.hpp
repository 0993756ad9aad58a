#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbf/core/error.hpp"
#include "rbf/geom/mesh.hpp"

namespace rbf::mv {

using geom::Mat3;
using geom::Vec3;
using Vec2 = Eigen::Vector2d;

// Pinhole camera without distortion: x_cam = R X + t, u = fx x/z + cx.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();   // mm
  int width = 256;
  int height = 256;

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 opticalAxis() const { return rotation.row(2).transpose(); }
  double depth(const Vec3& p) const { return rotation.row(2).dot(p) + translation[2]; }

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw DataError("camera focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) throw DataError("principal point outside the image");
    if (!(rotation * rotation.transpose()).isIdentity(1e-9) || std::abs(rotation.determinant() - 1.0) > 1e-9) {
      throw DataError("camera rotation is not a proper orthonormal matrix");
    }
  }

  Eigen::Matrix<double, 3, 4> projectionMatrix() const {
    Mat3 k = Mat3::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    Eigen::Matrix<double, 3, 4> rt;
    rt.leftCols<3>() = rotation;
    rt.col(3) = translation;
    return k * rt;
  }
};

class BehindCameraError : public DegeneracyError {
 public:
  using DegeneracyError::DegeneracyError;
};

inline Vec2 project(const Camera& cam, const Vec3& point) {
  const Vec3 pc = cam.rotation * point + cam.translation;
  if (!(pc[2] > 0.0)) throw BehindCameraError("point has non-positive depth " + std::to_string(pc[2]));
  return {cam.fx * pc[0] / pc[2] + cam.cx, cam.fy * pc[1] / pc[2] + cam.cy};
}

// d(u, v) / d(point), valid for points in front of the camera.
inline Eigen::Matrix<double, 2, 3> projectJacobian(const Camera& cam, const Vec3& point) {
  const Vec3 pc = cam.rotation * point + cam.translation;
  const double iz = 1.0 / pc[2];
  Eigen::Matrix<double, 2, 3> dpc;
  dpc << cam.fx * iz, 0.0, -cam.fx * pc[0] * iz * iz, 0.0, cam.fy * iz, -cam.fy * pc[1] * iz * iz;
  return dpc * cam.rotation;
}

// Camera at `eye` whose optical axis passes through `target`; image y points
// away from world `up` as far as possible.
inline Camera lookAt(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

// ---------------------------------------------------------------------------
// Dome rig: one camera per face of a gyroelongated pentagonal pyramid
// (pentagonal antiprism capped by a pyramid; the bottom pentagon is the open
// floor). World origin is the floor centre, +Z is up.

struct DomeRig {
  std::vector<Camera> cameras;
  std::vector<Vec3> faceCentroids;
};

inline constexpr double kDomeEdge = 400.0;
inline constexpr int kDomeViews = 15;

struct DomeGeometry {
  std::array<Vec3, 5> bottom;
  std::array<Vec3, 5> top;
  Vec3 apex;
  std::vector<std::array<Vec3, 3>> faces;
};

inline DomeGeometry domeGeometry(double edge = kDomeEdge) {
  using std::numbers::pi;
  const double circum = edge / (2.0 * std::sin(pi / 5.0));
  const double chord = 2.0 * circum * std::sin(pi / 10.0);
  const double height = std::sqrt(edge * edge - chord * chord);
  const double apexHeight = std::sqrt(edge * edge - circum * circum);
  DomeGeometry g;
  for (int k = 0; k < 5; ++k) {
    const double a = 2.0 * pi * k / 5.0;
    const double b = a + pi / 5.0;
    g.bottom[static_cast<size_t>(k)] = {circum * std::cos(a), circum * std::sin(a), 0.0};
    g.top[static_cast<size_t>(k)] = {circum * std::cos(b), circum * std::sin(b), height};
  }
  g.apex = {0.0, 0.0, height + apexHeight};
  for (size_t k = 0; k < 5; ++k) {
    const size_t n = (k + 1) % 5;
    g.faces.push_back({g.bottom[k], g.bottom[n], g.top[k]});
    g.faces.push_back({g.top[k], g.bottom[n], g.top[n]});
  }
  for (size_t k = 0; k < 5; ++k) g.faces.push_back({g.top[k], g.top[(k + 1) % 5], g.apex});
  return g;
}

inline DomeRig buildDomeRig(double focal, int width = 256, int height = 256) {
  if (!(focal > 0.0)) throw ConfigError("dome focal length must be positive");
  const DomeGeometry g = domeGeometry();
  DomeRig rig;
  for (const auto& f : g.faces) {
    const Vec3 centroid = (f[0] + f[1] + f[2]) / 3.0;
    rig.faceCentroids.push_back(centroid);
    rig.cameras.push_back(lookAt(centroid, Vec3::Zero(), Vec3::UnitZ(), focal, width, height));
  }
  return rig;
}

// ---------------------------------------------------------------------------
// JSON: {"cameras": [{"fx","fy","cx","cy","width","height",
//                     "rotation": [9, row-major], "translation": [3]}]}

inline nlohmann::json cameraToJson(const Camera& c) {
  nlohmann::json j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  std::vector<double> r;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
  }
  j["rotation"] = r;
  j["translation"] = {c.translation[0], c.translation[1], c.translation[2]};
  return j;
}

inline Camera cameraFromJson(const nlohmann::json& j) {
  try {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    const auto r = j.at("rotation").get<std::vector<double>>();
    const auto t = j.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw DataError("camera rotation/translation have wrong sizes");
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[static_cast<size_t>(3 * i + k)];
      c.translation[i] = t[static_cast<size_t>(i)];
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed camera JSON: ") + e.what());
  }
}

inline nlohmann::json rigToJson(const std::vector<Camera>& cams) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (const auto& c : cams) j["cameras"].push_back(cameraToJson(c));
  return j;
}

inline std::vector<Camera> rigFromJson(const nlohmann::json& j) {
  if (!j.contains("cameras") || !j["cameras"].is_array()) throw DataError("rig JSON lacks a 'cameras' array");
  std::vector<Camera> out;
  for (const auto& c : j["cameras"]) out.push_back(cameraFromJson(c));
  return out;
}

}  // namespace rbf::mv
