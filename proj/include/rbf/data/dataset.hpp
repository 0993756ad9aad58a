#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbf/annotate/markers.hpp"
#include "rbf/canonical/types.hpp"
#include "rbf/multiview/camera.hpp"
#include "rbf/multiview/silhouette.hpp"

// On-disk dataset layout (paths relative to the dataset directory):
//   manifest.json       format, version, anchorCount, frameInterval, rig,
//                       detections, individuals[], frames[]
//   rig.json            camera rig
//   detections.jsonl    2D marker detections keyed by frame index (optional)
//   frames/NNNNNN.json  one FrameSample; "index" keys the detections
//   masks/NNNNNN_vVV.pgm
//   reference/<id>.json reference-pose keypoints and markers, optional OBJ
namespace rbf::data {

namespace fs = std::filesystem;
using nlohmann::json;

struct IndividualEntry {
  std::string id;
  int anchorOffset = 0;
  int markerCount = 0;
};

struct Dataset {
  std::vector<mv::Camera> cameras;
  int anchorCount = 0;
  double frameInterval = 1.0 / 30.0;
  std::vector<IndividualEntry> individuals;
  std::vector<canonical::ReferenceCapture> references;
  std::vector<FrameSample> frames;
  std::vector<int> frameIndex;  // detection key of each frame
  std::vector<annotate::Detection2D> detections;

  std::vector<FrameSample> select(AnnotationSource source) const {
    std::vector<FrameSample> out;
    for (const auto& f : frames) {
      if (f.source == source) out.push_back(f);
    }
    return out;
  }
};

namespace detail {

inline json pointsToJson(const geom::Points& p) {
  json a = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) a.push_back({p(i, 0), p(i, 1), p(i, 2)});
  return a;
}

inline geom::Points pointsFromJson(const json& a, const std::string& what) {
  if (!a.is_array()) throw DataError(what + " must be an array of [x, y, z]");
  geom::Points p(static_cast<Eigen::Index>(a.size()), 3);
  for (size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_array() || a[i].size() != 3) throw DataError(what + "[" + std::to_string(i) + "] must be [x, y, z]");
    for (int c = 0; c < 3; ++c) p(static_cast<Eigen::Index>(i), c) = a[i][static_cast<size_t>(c)].get<double>();
  }
  return p;
}

inline json readJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void writeJson(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

inline std::string numbered(int i, int width = 6) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, i);
  return buf;
}

}  // namespace detail

inline json frameToJson(const FrameSample& s, int index, const std::vector<std::string>& maskPaths) {
  json surface = json::array();
  for (Eigen::Index j = 0; j < s.surface.rows(); ++j) {
    if (s.visible[static_cast<size_t>(j)]) {
      surface.push_back({s.surface(j, 0), s.surface(j, 1), s.surface(j, 2)});
    } else {
      surface.push_back(nullptr);
    }
  }
  json masks = json::array();
  for (const auto& m : maskPaths) masks.push_back(m.empty() ? json(nullptr) : json(m));
  return {{"index", index},
          {"individual", s.individual},
          {"frame", s.frame},
          {"annotationSource", sourceName(s.source)},
          {"keypoints", detail::pointsToJson(s.keypoints)},
          {"surface", surface},
          {"masks", masks}};
}

// Mask paths are resolved against `root`; loaded masks are shared by path.
inline FrameSample frameFromJson(const json& j, int anchorCount, const fs::path& root, int& index,
                                 std::map<std::string, MaskPtr>* cache = nullptr) {
  FrameSample s;
  try {
    index = j.at("index").get<int>();
    s.individual = j.at("individual").get<std::string>();
    s.frame = j.at("frame").get<int>();
    s.source = sourceFromName(j.at("annotationSource").get<std::string>());
    s.keypoints = detail::pointsFromJson(j.at("keypoints"), "keypoints");
    const auto& surface = j.at("surface");
    if (!surface.is_array() || static_cast<int>(surface.size()) != anchorCount) {
      throw DataError("surface must list " + std::to_string(anchorCount) + " entries");
    }
    s.surface = geom::Points::Zero(anchorCount, 3);
    s.visible.assign(static_cast<size_t>(anchorCount), 0);
    for (int c = 0; c < anchorCount; ++c) {
      const auto& e = surface[static_cast<size_t>(c)];
      if (e.is_null()) continue;
      if (!e.is_array() || e.size() != 3) throw DataError("surface[" + std::to_string(c) + "] must be null or [x, y, z]");
      s.surface.row(c) = Eigen::RowVector3d(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
      s.visible[static_cast<size_t>(c)] = 1;
    }
    if (j.contains("masks")) {
      for (const auto& m : j.at("masks")) {
        if (m.is_null()) {
          s.masks.push_back(nullptr);
          continue;
        }
        const std::string rel = m.get<std::string>();
        if (cache && cache->count(rel)) {
          s.masks.push_back(cache->at(rel));
          continue;
        }
        auto ptr = std::make_shared<const mv::SilhouetteMask>(mv::readPgm((root / rel).string()));
        if (cache) (*cache)[rel] = ptr;
        s.masks.push_back(std::move(ptr));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed frame record: ") + e.what());
  }
  s.validate(anchorCount);
  return s;
}

inline json referenceToJson(const canonical::ReferenceCapture& r, const std::string& objPath) {
  json j = {{"individual", r.individual}, {"keypoints", detail::pointsToJson(r.keypoints)}, {"markers", detail::pointsToJson(r.markers)}};
  if (!objPath.empty()) j["surface"] = objPath;
  return j;
}

inline canonical::ReferenceCapture referenceFromJson(const json& j, const fs::path& root) {
  canonical::ReferenceCapture r;
  try {
    r.individual = j.at("individual").get<std::string>();
    r.keypoints = detail::pointsFromJson(j.at("keypoints"), "reference keypoints");
    r.markers = detail::pointsFromJson(j.at("markers"), "reference markers");
    if (j.contains("surface")) r.surface = geom::loadMesh((root / j.at("surface").get<std::string>()).string());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed reference capture: ") + e.what());
  }
  return r;
}

// Writes the whole dataset; frame files are numbered by position.
inline void saveDataset(const fs::path& dir, const Dataset& d) {
  if (d.frameIndex.size() != d.frames.size()) throw DataError("saveDataset: frameIndex and frames differ in length");
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "reference");
  detail::writeJson(dir / "rig.json", mv::rigToJson(d.cameras));
  json manifest = {{"format", "rbf-dataset"},
                   {"version", 1},
                   {"anchorCount", d.anchorCount},
                   {"frameInterval", d.frameInterval},
                   {"rig", "rig.json"}};
  if (!d.detections.empty()) {
    annotate::writeDetections((dir / "detections.jsonl").string(), d.detections);
    manifest["detections"] = "detections.jsonl";
  }
  manifest["individuals"] = json::array();
  for (const auto& ind : d.individuals) {
    manifest["individuals"].push_back({{"id", ind.id}, {"anchorOffset", ind.anchorOffset}, {"markerCount", ind.markerCount}});
  }
  manifest["references"] = json::array();
  for (const auto& r : d.references) {
    std::string obj;
    if (r.surface) {
      obj = "reference/" + r.individual + ".obj";
      geom::saveMesh((dir / obj).string(), *r.surface);
    }
    const std::string rel = "reference/" + r.individual + ".json";
    detail::writeJson(dir / rel, referenceToJson(r, obj));
    manifest["references"].push_back(rel);
  }
  manifest["frames"] = json::array();
  for (size_t i = 0; i < d.frames.size(); ++i) {
    const auto& s = d.frames[i];
    const std::string num = detail::numbered(static_cast<int>(i));
    std::vector<std::string> maskPaths;
    for (size_t v = 0; v < s.masks.size(); ++v) {
      if (!s.masks[v]) {
        maskPaths.emplace_back();
        continue;
      }
      const std::string rel = "masks/" + num + "_v" + detail::numbered(static_cast<int>(v), 2) + ".pgm";
      mv::writePgm((dir / rel).string(), *s.masks[v]);
      maskPaths.push_back(rel);
    }
    const std::string rel = "frames/" + num + ".json";
    detail::writeJson(dir / rel, frameToJson(s, d.frameIndex[i], maskPaths));
    manifest["frames"].push_back(rel);
  }
  detail::writeJson(dir / "manifest.json", manifest);
}

inline Dataset loadDataset(const fs::path& dir) {
  const json m = detail::readJson(dir / "manifest.json");
  Dataset d;
  try {
    if (m.at("format").get<std::string>() != "rbf-dataset") throw DataError((dir / "manifest.json").string() + " is not a dataset manifest");
    if (m.at("version").get<int>() != 1) throw DataError("unsupported dataset version");
    d.anchorCount = m.at("anchorCount").get<int>();
    d.frameInterval = m.at("frameInterval").get<double>();
    d.cameras = mv::rigFromJson(detail::readJson(dir / m.at("rig").get<std::string>()));
    if (m.contains("detections")) d.detections = annotate::readDetections((dir / m.at("detections").get<std::string>()).string());
    for (const auto& ind : m.at("individuals")) {
      d.individuals.push_back({ind.at("id").get<std::string>(), ind.at("anchorOffset").get<int>(), ind.at("markerCount").get<int>()});
    }
    if (m.contains("references")) {
      for (const auto& r : m.at("references")) d.references.push_back(referenceFromJson(detail::readJson(dir / r.get<std::string>()), dir));
    }
    std::map<std::string, MaskPtr> cache;
    for (const auto& f : m.at("frames")) {
      const std::string rel = f.get<std::string>();
      int index = 0;
      try {
        d.frames.push_back(frameFromJson(detail::readJson(dir / rel), d.anchorCount, dir, index, &cache));
      } catch (const DataError& e) {
        throw DataError(rel + ": " + e.what());
      }
      d.frameIndex.push_back(index);
    }
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  return d;
}

}  // namespace rbf::data
