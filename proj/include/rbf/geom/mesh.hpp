#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rbf/core/error.hpp"

namespace rbf::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

inline constexpr double kMinFaceArea = 1e-12;

// Triangle surface. Vertex positions are in millimetres unless the mesh has
// been normalized.
struct TriMesh {
  Points vertices;
  Faces faces;

  int numVertices() const { return static_cast<int>(vertices.rows()); }
  int numFaces() const { return static_cast<int>(faces.rows()); }

  Vec3 vertex(int i) const { return vertices.row(i).transpose(); }

  double faceArea(int f) const {
    const Vec3 a = vertex(faces(f, 0));
    const Vec3 b = vertex(faces(f, 1));
    const Vec3 c = vertex(faces(f, 2));
    return 0.5 * (b - a).cross(c - a).norm();
  }

  double surfaceArea() const {
    double total = 0.0;
    for (int f = 0; f < numFaces(); ++f) total += faceArea(f);
    return total;
  }

  // Throws DataError on out-of-range or repeated indices, unreferenced
  // vertices, non-finite coordinates or zero-area faces.
  void validate() const {
    const int nv = numVertices();
    std::vector<char> used(static_cast<size_t>(nv), 0);
    for (int f = 0; f < numFaces(); ++f) {
      for (int k = 0; k < 3; ++k) {
        const int idx = faces(f, k);
        if (idx < 0 || idx >= nv) {
          throw DataError("face " + std::to_string(f) + " references vertex " +
                          std::to_string(idx) + " outside [0, " + std::to_string(nv) + ")");
        }
        used[static_cast<size_t>(idx)] = 1;
      }
      if (faces(f, 0) == faces(f, 1) || faces(f, 1) == faces(f, 2) || faces(f, 0) == faces(f, 2)) {
        throw DataError("face " + std::to_string(f) + " repeats a vertex index");
      }
      if (!(faceArea(f) >= kMinFaceArea)) {
        throw DataError("face " + std::to_string(f) + " is degenerate (area " +
                        std::to_string(faceArea(f)) + ")");
      }
    }
    for (int v = 0; v < nv; ++v) {
      if (!used[static_cast<size_t>(v)]) {
        throw DataError("vertex " + std::to_string(v) + " is not referenced by any face");
      }
      if (!vertices.row(v).allFinite()) {
        throw DataError("vertex " + std::to_string(v) + " has a non-finite coordinate");
      }
    }
  }
};

// A point on a mesh given by a face and barycentric weights.
struct SurfacePointRef {
  int face = 0;
  Vec3 barycentric{1.0, 0.0, 0.0};

  bool operator==(const SurfacePointRef&) const = default;

  // Index (0..2) of the dominant corner.
  int dominantCorner() const {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (barycentric[k] > barycentric[best]) best = k;
    }
    return best;
  }
};

inline void validateRef(const TriMesh& mesh, const SurfacePointRef& ref) {
  if (ref.face < 0 || ref.face >= mesh.numFaces()) {
    throw DataError("surface point references face " + std::to_string(ref.face) +
                    " outside the mesh");
  }
  if ((ref.barycentric.array() < 0.0).any() || std::abs(ref.barycentric.sum() - 1.0) >= 1e-9) {
    throw DataError("surface point on face " + std::to_string(ref.face) +
                    " has invalid barycentric weights");
  }
}

// Vertex index the reference sits closest to (largest weight).
inline int dominantVertex(const TriMesh& mesh, const SurfacePointRef& ref) {
  return mesh.faces(ref.face, ref.dominantCorner());
}

// Reference sitting exactly on vertex v (first incident face).
inline SurfacePointRef refAtVertex(const TriMesh& mesh, int v) {
  for (int f = 0; f < mesh.numFaces(); ++f) {
    for (int k = 0; k < 3; ++k) {
      if (mesh.faces(f, k) == v) {
        SurfacePointRef ref;
        ref.face = f;
        ref.barycentric.setZero();
        ref.barycentric[k] = 1.0;
        return ref;
      }
    }
  }
  throw DataError("vertex " + std::to_string(v) + " is not referenced by any face");
}

// Barycentric evaluation against an arbitrary position array that shares the
// mesh connectivity (e.g. a deformed copy).
inline Vec3 evalPoint(const Faces& faces, const Points& positions, const SurfacePointRef& ref) {
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < 3; ++k) {
    p += ref.barycentric[k] * positions.row(faces(ref.face, k)).transpose();
  }
  return p;
}

inline Vec3 evalPoint(const TriMesh& mesh, const SurfacePointRef& ref) {
  return evalPoint(mesh.faces, mesh.vertices, ref);
}

inline Points evalPoints(const Faces& faces, const Points& positions,
                         const std::vector<SurfacePointRef>& refs) {
  Points out(static_cast<Eigen::Index>(refs.size()), 3);
  for (size_t i = 0; i < refs.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = evalPoint(faces, positions, refs[i]).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// I/O. Triangles only; normals and texture coordinates are skipped on read.

inline TriMesh readOff(std::istream& in) {
  std::string header;
  in >> header;
  if (header != "OFF") throw DataError("OFF stream does not start with 'OFF'");
  long nv = 0, nf = 0, ne = 0;
  in >> nv >> nf >> ne;
  if (!in || nv < 0 || nf < 0) throw DataError("OFF header is malformed");
  TriMesh mesh;
  mesh.vertices.resize(nv, 3);
  mesh.faces.resize(nf, 3);
  for (long i = 0; i < nv; ++i) in >> mesh.vertices(i, 0) >> mesh.vertices(i, 1) >> mesh.vertices(i, 2);
  for (long f = 0; f < nf; ++f) {
    int n = 0;
    in >> n;
    if (n != 3) throw DataError("OFF face " + std::to_string(f) + " is not a triangle");
    in >> mesh.faces(f, 0) >> mesh.faces(f, 1) >> mesh.faces(f, 2);
  }
  if (!in) throw DataError("OFF stream truncated");
  return mesh;
}

inline void writeOff(std::ostream& out, const TriMesh& mesh) {
  out.precision(17);
  out << "OFF\n" << mesh.numVertices() << ' ' << mesh.numFaces() << " 0\n";
  for (int i = 0; i < mesh.numVertices(); ++i) {
    out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  }
  for (int f = 0; f < mesh.numFaces(); ++f) {
    out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
  }
}

inline TriMesh readObj(std::istream& in) {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 p;
      ls >> p[0] >> p[1] >> p[2];
      if (!ls) throw DataError("OBJ vertex line is malformed: " + line);
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // "v", "v/vt", "v//vn", "v/vt/vn": keep the position index only.
        const int v = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(v < 0 ? static_cast<int>(verts.size()) + v : v - 1);
      }
      if (idx.size() != 3) throw DataError("OBJ face is not a triangle: " + line);
      tris.push_back({idx[0], idx[1], idx[2]});
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  mesh.faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  for (size_t f = 0; f < tris.size(); ++f) {
    for (int k = 0; k < 3; ++k) mesh.faces(static_cast<Eigen::Index>(f), k) = tris[f][static_cast<size_t>(k)];
  }
  return mesh;
}

inline void writeObj(std::ostream& out, const TriMesh& mesh) {
  out.precision(17);
  for (int i = 0; i < mesh.numVertices(); ++i) {
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  }
  for (int f = 0; f < mesh.numFaces(); ++f) {
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' ' << mesh.faces(f, 2) + 1 << '\n';
  }
}

inline TriMesh loadMesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mesh file " + path);
  const bool off = path.size() >= 4 && path.substr(path.size() - 4) == ".off";
  return off ? readOff(in) : readObj(in);
}

inline void saveMesh(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write mesh file " + path);
  const bool off = path.size() >= 4 && path.substr(path.size() - 4) == ".off";
  if (off) {
    writeOff(out, mesh);
  } else {
    writeObj(out, mesh);
  }
}

// ---------------------------------------------------------------------------
// Reference shapes used by tests and the synthetic generator.

// Loop-style subdivided icosahedron projected to a sphere. Level 0 is the
// icosahedron (12 vertices); level 4 has 2562 vertices.
inline TriMesh icosphere(int level, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& p : v) p.normalize();
  for (int l = 0; l < level; ++l) {
    std::vector<std::array<int, 3>> next;
    std::vector<std::vector<std::pair<int, int>>> mid(v.size());
    auto midpoint = [&](int a, int b) {
      if (a > b) std::swap(a, b);
      for (const auto& [other, idx] : mid[static_cast<size_t>(a)]) {
        if (other == b) return idx;
      }
      v.push_back((v[static_cast<size_t>(a)] + v[static_cast<size_t>(b)]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      mid[static_cast<size_t>(a)].push_back({b, idx});
      mid.resize(v.size());
      return idx;
    };
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]);
      const int b = midpoint(tri[1], tri[2]);
      const int c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
  mesh.faces.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (size_t i = 0; i < v.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = radius * v[i].transpose();
  for (size_t i = 0; i < f.size(); ++i) {
    for (int k = 0; k < 3; ++k) mesh.faces(static_cast<Eigen::Index>(i), k) = f[i][static_cast<size_t>(k)];
  }
  return mesh;
}

}  // namespace rbf::geom
