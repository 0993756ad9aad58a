#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "rbf/canonical/build.hpp"

namespace rbf::canonical {

namespace detail {

inline nlohmann::json refToJson(const SurfacePointRef& r) {
  return {r.face, r.barycentric[0], r.barycentric[1], r.barycentric[2]};
}

inline SurfacePointRef refFromJson(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("surface reference must be [face, b0, b1, b2]");
  SurfacePointRef r;
  r.face = j[0].get<int>();
  r.barycentric = {j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  return r;
}

}  // namespace detail

// Layout: <dir>/canonical.obj (normalized mesh) and <dir>/canonical.json
// (anchors, normalization, registry, alpha, spectral basis).
inline void saveCanonical(const std::filesystem::path& dir, const BuildResult& b) {
  std::filesystem::create_directories(dir);
  const CanonicalSurface& s = b.surface;
  geom::saveMesh((dir / "canonical.obj").string(), s.mesh);
  nlohmann::json j;
  j["format"] = "rbf-canonical";
  j["version"] = 1;
  j["normalization"] = {{"scale", s.normalization.scale},
                        {"translation", {s.normalization.translation.x(), s.normalization.translation.y(), s.normalization.translation.z()}}};
  for (const auto& r : s.keypointAnchors) j["keypointAnchors"].push_back(detail::refToJson(r));
  j["surfaceAnchors"] = nlohmann::json::array();
  for (const auto& r : s.surfaceAnchors) j["surfaceAnchors"].push_back(detail::refToJson(r));
  j["registry"] = nlohmann::json::object();
  for (const auto& [id, m] : b.registry.all()) j["registry"][id] = m;
  j["alpha"] = b.alpha;
  j["basis"]["eigenvalues"] = std::vector<double>(s.basis.eigenvalues.data(), s.basis.eigenvalues.data() + s.basis.eigenvalues.size());
  j["basis"]["mass"] = std::vector<double>(s.basis.mass.data(), s.basis.mass.data() + s.basis.mass.size());
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index c = 0; c < s.basis.eigenfunctions.cols(); ++c) {
    std::vector<double> col(static_cast<size_t>(s.basis.eigenfunctions.rows()));
    for (Eigen::Index r = 0; r < s.basis.eigenfunctions.rows(); ++r) col[static_cast<size_t>(r)] = s.basis.eigenfunctions(r, c);
    cols.push_back(col);
  }
  j["basis"]["eigenfunctions"] = cols;
  std::ofstream out(dir / "canonical.json");
  if (!out) throw DataError("cannot write " + (dir / "canonical.json").string());
  out << j.dump(1) << '\n';
}

inline BuildResult loadCanonical(const std::filesystem::path& dir) {
  BuildResult b;
  CanonicalSurface& s = b.surface;
  s.mesh = geom::loadMesh((dir / "canonical.obj").string());
  const auto path = dir / "canonical.json";
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "rbf-canonical" || j.at("version") != 1) throw DataError(path.string() + ": unsupported canonical format");
    s.normalization.scale = j.at("normalization").at("scale").get<double>();
    const auto t = j.at("normalization").at("translation").get<std::vector<double>>();
    if (t.size() != 3) throw DataError(path.string() + ": translation must have 3 entries");
    s.normalization.translation = {t[0], t[1], t[2]};
    const auto& kp = j.at("keypointAnchors");
    if (kp.size() != kKeypointCount) throw DataError(path.string() + ": expected " + std::to_string(kKeypointCount) + " keypoint anchors");
    for (size_t k = 0; k < kKeypointCount; ++k) s.keypointAnchors[k] = detail::refFromJson(kp[k]);
    for (const auto& r : j.at("surfaceAnchors")) s.surfaceAnchors.push_back(detail::refFromJson(r));
    for (const auto& r : s.keypointAnchors) geom::validateRef(s.mesh, r);
    for (const auto& r : s.surfaceAnchors) geom::validateRef(s.mesh, r);
    for (const auto& [id, m] : j.at("registry").items()) b.registry.add(id, m.get<std::vector<int>>());
    b.alpha = j.at("alpha").get<std::map<std::string, double>>();
    const auto ev = j.at("basis").at("eigenvalues").get<std::vector<double>>();
    const auto mass = j.at("basis").at("mass").get<std::vector<double>>();
    const auto& cols = j.at("basis").at("eigenfunctions");
    const auto n = static_cast<Eigen::Index>(s.mesh.numVertices());
    if (mass.size() != static_cast<size_t>(n) || cols.size() != ev.size()) throw DataError(path.string() + ": basis does not match mesh");
    s.basis.eigenvalues = Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
    s.basis.mass = Eigen::Map<const Eigen::VectorXd>(mass.data(), n);
    s.basis.eigenfunctions.resize(n, static_cast<Eigen::Index>(ev.size()));
    for (size_t c = 0; c < cols.size(); ++c) {
      const auto col = cols[c].get<std::vector<double>>();
      if (col.size() != static_cast<size_t>(n)) throw DataError(path.string() + ": eigenfunction length mismatch");
      s.basis.eigenfunctions.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return b;
}

}  // namespace rbf::canonical
