#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "rbf/annotate/hungarian.hpp"
#include "rbf/multiview/triangulate.hpp"

namespace rbf::annotate {

using geom::Points;
using geom::Vec3;
using mv::Camera;
using mv::Vec2;

enum class Color { Red = 0, Black = 1, Orange = 2, Blue = 3 };
inline constexpr int kColorCount = 4;

inline std::string colorName(Color c) {
  static const std::array<const char*, kColorCount> names{"red", "black", "orange", "blue"};
  return names[static_cast<size_t>(c)];
}

inline Color colorFromName(const std::string& s) {
  for (int i = 0; i < kColorCount; ++i) {
    if (colorName(static_cast<Color>(i)) == s) return static_cast<Color>(i);
  }
  throw DataError("unknown marker color '" + s + "'");
}

struct Detection2D {
  int frame = 0;
  int view = 0;
  Vec2 pixel = Vec2::Zero();
  Color color = Color::Red;
};

struct TriangulatedMarker {
  Vec3 position = Vec3::Zero();
  Color color = Color::Red;
  std::vector<int> supportViews;  // ascending
  double reprojectionError = 0.0;
};

struct MarkerConfig {
  double reprojectionThreshold = 5.0;  // px
  double rejectionRadius = 15.0;       // mm
};

namespace detail {

inline std::optional<double> pixelError(const Camera& cam, const Vec3& p, const Vec2& px) {
  if (!(cam.depth(p) > 1e-6)) return std::nullopt;
  return (mv::project(cam, p) - px).norm();
}

// Fundamental matrix mapping pixels of camera a to epipolar lines in camera b.
inline Eigen::Matrix3d fundamental(const Camera& a, const Camera& b) {
  auto kInv = [](const Camera& c) {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = c.fx;
    k(1, 1) = c.fy;
    k(0, 2) = c.cx;
    k(1, 2) = c.cy;
    return Eigen::Matrix3d(k.inverse());
  };
  const Eigen::Matrix3d r = b.rotation * a.rotation.transpose();
  const Vec3 t = b.translation - r * a.translation;
  Eigen::Matrix3d tx;
  tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  return kInv(b).transpose() * tx * r * kInv(a);
}

inline double epipolarDistance(const Eigen::Matrix3d& f, const Vec2& pa, const Vec2& pb) {
  const Vec3 l = f * Vec3(pa.x(), pa.y(), 1.0);
  const double n = std::hypot(l.x(), l.y());
  if (n < 1e-300) return 0.0;
  return std::abs(Vec3(pb.x(), pb.y(), 1.0).dot(l)) / n;
}

inline std::optional<mv::Triangulation> tryTriangulate(const std::vector<Camera>& cams, const std::vector<Vec2>& px) {
  try {
    mv::Triangulation t = mv::triangulate(cams, px);
    for (const auto& c : cams) {
      if (!(c.depth(t.point) > 1e-6)) return std::nullopt;
    }
    return t;
  } catch (const DegeneracyError&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Greedy multiview association of same-color detections within one frame.
// Seeds are cross-view detection pairs; each seed absorbs the closest
// consistent detection from every other view and is re-triangulated. Seeds are
// accepted in ascending order of that final error, consuming detections.
inline std::vector<TriangulatedMarker> triangulateMarkers(const std::vector<Detection2D>& detections,
                                                          const std::vector<Camera>& cameras,
                                                          const MarkerConfig& config = {}) {
  const double thr = config.reprojectionThreshold;
  for (const auto& d : detections) {
    if (d.view < 0 || d.view >= static_cast<int>(cameras.size())) {
      throw DataError("detection references view " + std::to_string(d.view) + " outside the rig");
    }
  }
  // Canonical order makes the output independent of input order.
  std::vector<Detection2D> dets = detections;
  std::sort(dets.begin(), dets.end(), [](const Detection2D& a, const Detection2D& b) {
    return std::make_tuple(static_cast<int>(a.color), a.view, a.pixel[0], a.pixel[1]) <
           std::make_tuple(static_cast<int>(b.color), b.view, b.pixel[0], b.pixel[1]);
  });
  std::vector<TriangulatedMarker> out;

  for (int ci = 0; ci < kColorCount; ++ci) {
    const Color color = static_cast<Color>(ci);
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(dets.size()); ++i) {
      if (dets[static_cast<size_t>(i)].color == color) idx.push_back(i);
    }
    std::vector<char> used(dets.size(), 0);

    // Extends a support set greedily over views not yet in it.
    auto grow = [&](std::vector<int> support) -> std::optional<std::pair<mv::Triangulation, std::vector<int>>> {
      auto solve = [&](const std::vector<int>& s) {
        std::vector<Camera> cams;
        std::vector<Vec2> px;
        for (int i : s) {
          cams.push_back(cameras[static_cast<size_t>(dets[static_cast<size_t>(i)].view)]);
          px.push_back(dets[static_cast<size_t>(i)].pixel);
        }
        return detail::tryTriangulate(cams, px);
      };
      auto tri = solve(support);
      if (!tri || tri->reprojectionError > thr) return std::nullopt;
      std::vector<char> viewTaken(cameras.size(), 0);
      for (int i : support) viewTaken[static_cast<size_t>(dets[static_cast<size_t>(i)].view)] = 1;
      std::map<int, std::pair<double, int>> best;  // view -> (error, detection)
      for (int i : idx) {
        const auto& d = dets[static_cast<size_t>(i)];
        if (used[static_cast<size_t>(i)] || viewTaken[static_cast<size_t>(d.view)]) continue;
        const auto e = detail::pixelError(cameras[static_cast<size_t>(d.view)], tri->point, d.pixel);
        if (!e || *e > thr) continue;
        auto it = best.find(d.view);
        if (it == best.end() || *e < it->second.first) best[d.view] = {*e, i};
      }
      if (best.empty()) return std::make_pair(*tri, support);
      for (const auto& [_, ei] : best) support.push_back(ei.second);
      auto full = solve(support);
      if (!full || full->reprojectionError > thr) return std::make_pair(*tri, std::vector<int>(support.begin(), support.begin() + 2));
      return std::make_pair(*full, support);
    };

    struct Candidate {
      double error;
      int a, b;
    };
    std::vector<Candidate> candidates;
    std::map<std::pair<int, int>, Eigen::Matrix3d> fundamentals;
    for (size_t x = 0; x < idx.size(); ++x) {
      for (size_t y = x + 1; y < idx.size(); ++y) {
        const int a = idx[x];
        const int b = idx[y];
        const auto& da = dets[static_cast<size_t>(a)];
        const auto& db = dets[static_cast<size_t>(b)];
        if (da.view == db.view) continue;
        // Cheap rejection: a consistent pair lies near its epipolar line.
        auto fit = fundamentals.find({da.view, db.view});
        if (fit == fundamentals.end()) {
          fit = fundamentals.emplace(std::make_pair(da.view, db.view),
                                     detail::fundamental(cameras[static_cast<size_t>(da.view)], cameras[static_cast<size_t>(db.view)])).first;
        }
        if (detail::epipolarDistance(fit->second, da.pixel, db.pixel) > 4.0 * thr) continue;
        if (auto g = grow({a, b})) candidates.push_back({g->first.reprojectionError, a, b});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& l, const Candidate& r) {
      return std::tie(l.error, l.a, l.b) < std::tie(r.error, r.a, r.b);
    });
    for (const auto& c : candidates) {
      if (used[static_cast<size_t>(c.a)] || used[static_cast<size_t>(c.b)]) continue;
      auto g = grow({c.a, c.b});
      if (!g) continue;
      TriangulatedMarker m;
      m.position = g->first.point;
      m.color = color;
      m.reprojectionError = g->first.reprojectionError;
      for (int i : g->second) {
        used[static_cast<size_t>(i)] = 1;
        m.supportViews.push_back(dets[static_cast<size_t>(i)].view);
      }
      std::sort(m.supportViews.begin(), m.supportViews.end());
      out.push_back(std::move(m));
    }
  }
  return out;
}

struct IdAssignment {
  std::map<int, int> markerToCanonical;
  std::map<int, double> distances;  // by marker index, accepted pairs only
};

// Optimal marker -> anchor matching on Euclidean distance. `predicted` rows are
// indexed by canonical ID; only IDs in `anchorSet` are candidates.
inline IdAssignment assignIDs(const std::vector<TriangulatedMarker>& markers, const Points& predicted,
                              const std::vector<int>& anchorSet, double rejectionRadius = 15.0) {
  IdAssignment out;
  if (markers.empty() || anchorSet.empty()) return out;
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(markers.size()), static_cast<Eigen::Index>(anchorSet.size()));
  for (size_t i = 0; i < markers.size(); ++i) {
    for (size_t j = 0; j < anchorSet.size(); ++j) {
      const int id = anchorSet[j];
      if (id < 0 || id >= predicted.rows()) throw DataError("anchor id " + std::to_string(id) + " out of range");
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (markers[i].position - predicted.row(id).transpose()).norm();
    }
  }
  for (const auto& [i, j] : hungarian(cost).pairs) {
    const double d = cost(i, j);
    if (d > rejectionRadius) continue;
    out.markerToCanonical[i] = anchorSet[static_cast<size_t>(j)];
    out.distances[i] = d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON lines: {"frame": f, "view": v, "u": .., "v": .., "color": "red"}

inline nlohmann::json detectionToJson(const Detection2D& d) {
  return {{"frame", d.frame}, {"view", d.view}, {"u", d.pixel[0]}, {"v", d.pixel[1]}, {"color", colorName(d.color)}};
}

inline void writeDetections(const std::string& path, const std::vector<Detection2D>& dets) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write detections " + path);
  for (const auto& d : dets) out << detectionToJson(d).dump() << '\n';
}

inline std::vector<Detection2D> readDetections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open detections " + path);
  std::vector<Detection2D> out;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Detection2D d;
      d.frame = j.at("frame").get<int>();
      d.view = j.at("view").get<int>();
      d.pixel = {j.at("u").get<double>(), j.at("v").get<double>()};
      d.color = colorFromName(j.at("color").get<std::string>());
      out.push_back(d);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineNo) + ": " + e.what());
    }
  }
  return out;
}

inline std::map<int, std::vector<Detection2D>> groupByFrame(const std::vector<Detection2D>& dets) {
  std::map<int, std::vector<Detection2D>> out;
  for (const auto& d : dets) out[d.frame].push_back(d);
  return out;
}

}  // namespace rbf::annotate
