#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "rbf/geom/mesh.hpp"
#include "rbf/multiview/camera.hpp"

namespace rbf::mv {

// Binary region raster plus signed Euclidean distance (px, negative inside).
// Pixel (x, y) has its centre at image coordinate (u, v) = (x, y).
struct SilhouetteMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> inside;
  std::vector<float> distance;

  bool at(int x, int y) const { return inside[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)] != 0; }
  double sdf(int x, int y) const { return distance[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)]; }
  size_t area() const { return static_cast<size_t>(std::count(inside.begin(), inside.end(), std::uint8_t{1})); }
};

namespace detail {

// Exact 1-D squared distance transform (Felzenszwalb & Huttenlocher).
inline void distanceTransform1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                                std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    if (f[static_cast<size_t>(q)] == inf) continue;
    if (f[static_cast<size_t>(v[static_cast<size_t>(k)])] == inf) {
      v[static_cast<size_t>(k)] = q;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int vk = v[static_cast<size_t>(k)];
      s = ((f[static_cast<size_t>(q)] + q * q) - (f[static_cast<size_t>(vk)] + vk * vk)) / (2.0 * q - 2.0 * vk);
      if (s <= z[static_cast<size_t>(k)] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<size_t>(k)] = q;
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(k) + 1] < q) ++k;
    const int vk = v[static_cast<size_t>(k)];
    const double fv = f[static_cast<size_t>(vk)];
    d[static_cast<size_t>(q)] = fv == inf ? inf : (q - vk) * (q - vk) + fv;
  }
}

// Squared distance from every pixel to the nearest pixel where feature != 0.
inline std::vector<double> squaredDistanceTo(const std::vector<std::uint8_t>& feature, int width, int height) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(feature.size());
  for (size_t i = 0; i < feature.size(); ++i) grid[i] = feature[i] ? 0.0 : inf;
  const int n = std::max(width, height);
  std::vector<double> f(static_cast<size_t>(n)), d(static_cast<size_t>(n)), z(static_cast<size_t>(n) + 1);
  std::vector<int> v(static_cast<size_t>(n));
  for (int x = 0; x < width; ++x) {
    f.resize(static_cast<size_t>(height));
    d.resize(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y) f[static_cast<size_t>(y)] = grid[static_cast<size_t>(y * width + x)];
    distanceTransform1d(f, d, v, z);
    for (int y = 0; y < height; ++y) grid[static_cast<size_t>(y * width + x)] = d[static_cast<size_t>(y)];
  }
  for (int y = 0; y < height; ++y) {
    f.resize(static_cast<size_t>(width));
    d.resize(static_cast<size_t>(width));
    for (int x = 0; x < width; ++x) f[static_cast<size_t>(x)] = grid[static_cast<size_t>(y * width + x)];
    distanceTransform1d(f, d, v, z);
    for (int x = 0; x < width; ++x) grid[static_cast<size_t>(y * width + x)] = d[static_cast<size_t>(x)];
  }
  return grid;
}

}  // namespace detail

// Builds the signed distance raster from a binary raster. Boundary sits half a
// pixel between an inside and an outside pixel centre.
inline SilhouetteMask maskFromBinary(int width, int height, std::vector<std::uint8_t> inside) {
  if (inside.size() != static_cast<size_t>(width) * static_cast<size_t>(height)) {
    throw DataError("mask raster size does not match its dimensions");
  }
  SilhouetteMask m;
  m.width = width;
  m.height = height;
  m.inside = std::move(inside);
  const size_t nIn = m.area();
  if (nIn == 0) throw DataError("silhouette mask is empty");
  std::vector<std::uint8_t> outside(m.inside.size());
  for (size_t i = 0; i < outside.size(); ++i) outside[i] = m.inside[i] ? 0 : 1;
  const auto toInside = detail::squaredDistanceTo(m.inside, width, height);
  const bool anyOutside = nIn < m.inside.size();
  const auto toOutside = anyOutside ? detail::squaredDistanceTo(outside, width, height) : std::vector<double>{};
  m.distance.resize(m.inside.size());
  for (size_t i = 0; i < m.inside.size(); ++i) {
    if (m.inside[i]) {
      m.distance[i] = anyOutside ? -static_cast<float>(std::sqrt(toOutside[i]) - 0.5) : -static_cast<float>(width + height);
    } else {
      m.distance[i] = static_cast<float>(std::sqrt(toInside[i]) - 0.5);
    }
  }
  return m;
}

// Union of projected triangles. Triangles with a corner at or behind the
// camera plane are skipped.
inline SilhouetteMask rasterizeSilhouette(const Camera& cam, const geom::TriMesh& mesh) {
  const int w = cam.width;
  const int h = cam.height;
  std::vector<std::uint8_t> inside(static_cast<size_t>(w) * static_cast<size_t>(h), 0);
  std::vector<Vec2> uv(static_cast<size_t>(mesh.numVertices()));
  std::vector<char> ok(static_cast<size_t>(mesh.numVertices()), 0);
  for (int v = 0; v < mesh.numVertices(); ++v) {
    const Vec3 p = mesh.vertex(v);
    if (cam.depth(p) > 1e-6) {
      uv[static_cast<size_t>(v)] = project(cam, p);
      ok[static_cast<size_t>(v)] = 1;
    }
  }
  for (int f = 0; f < mesh.numFaces(); ++f) {
    const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    if (!ok[static_cast<size_t>(a)] || !ok[static_cast<size_t>(b)] || !ok[static_cast<size_t>(c)]) continue;
    const Vec2 pa = uv[static_cast<size_t>(a)], pb = uv[static_cast<size_t>(b)], pc = uv[static_cast<size_t>(c)];
    const double area = (pb - pa).x() * (pc - pa).y() - (pb - pa).y() * (pc - pa).x();
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.x(), pb.x(), pc.x()}))));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max({pa.x(), pb.x(), pc.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({pa.y(), pb.y(), pc.y()}))));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max({pa.y(), pb.y(), pc.y()}))));
    const double sgn = area > 0 ? 1.0 : -1.0;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x, y);
        const auto edge = [&](const Vec2& s, const Vec2& e) {
          return sgn * ((e.x() - s.x()) * (p.y() - s.y()) - (e.y() - s.y()) * (p.x() - s.x()));
        };
        if (edge(pa, pb) >= 0.0 && edge(pb, pc) >= 0.0 && edge(pc, pa) >= 0.0) {
          inside[static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)] = 1;
        }
      }
    }
  }
  if (std::find(inside.begin(), inside.end(), std::uint8_t{1}) == inside.end()) {
    throw DataError("silhouette is empty: mesh is behind or outside the camera");
  }
  return maskFromBinary(w, h, std::move(inside));
}

struct Penalty {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();  // d value / d (u, v)
};

// Soft penalty: max(0, bilinear signed distance). Outside the image the
// clamped value is extended by the distance to the image border.
inline Penalty softPenalty(const SilhouetteMask& m, const Vec2& pixel) {
  if (!pixel.allFinite()) throw NumericError("silhouette penalty at a non-finite pixel");
  const double u = std::clamp(pixel.x(), 0.0, static_cast<double>(m.width - 1));
  const double v = std::clamp(pixel.y(), 0.0, static_cast<double>(m.height - 1));
  const int x0 = std::min(static_cast<int>(std::floor(u)), m.width - 2 < 0 ? 0 : m.width - 2);
  const int y0 = std::min(static_cast<int>(std::floor(v)), m.height - 2 < 0 ? 0 : m.height - 2);
  const int x1 = std::min(x0 + 1, m.width - 1);
  const int y1 = std::min(y0 + 1, m.height - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  const double d00 = m.sdf(x0, y0), d10 = m.sdf(x1, y0), d01 = m.sdf(x0, y1), d11 = m.sdf(x1, y1);
  const double val = (1 - fx) * (1 - fy) * d00 + fx * (1 - fy) * d10 + (1 - fx) * fy * d01 + fx * fy * d11;
  Vec2 grad((1 - fy) * (d10 - d00) + fy * (d11 - d01), (1 - fx) * (d01 - d00) + fx * (d11 - d10));
  const Vec2 off(pixel.x() - u, pixel.y() - v);
  const double outDist = off.norm();
  Penalty p;
  if (outDist > 0.0) {
    p.value = std::max(val, 0.0) + outDist;
    // Along the clamped axis the value grows by the border distance only.
    Vec2 g = val > 0.0 ? grad : Vec2::Zero();
    if (off.x() != 0.0) g.x() = 0.0;
    if (off.y() != 0.0) g.y() = 0.0;
    p.gradient = g + off / outDist;
    return p;
  }
  if (val > 0.0) {
    p.value = val;
    p.gradient = grad;
  }
  return p;
}

// Eq.-style indicator: 1 when the pixel falls outside the region (nearest
// pixel) or outside the image, 0 otherwise.
inline int hardPenalty(const SilhouetteMask& m, const Vec2& pixel) {
  if (!pixel.allFinite()) return 1;
  const long x = std::lround(pixel.x());
  const long y = std::lround(pixel.y());
  if (x < 0 || y < 0 || x >= m.width || y >= m.height) return 1;
  return m.at(static_cast<int>(x), static_cast<int>(y)) ? 0 : 1;
}

// ---------------------------------------------------------------------------
// PGM (P5, 8-bit). Inside pixels are written as 255.

inline void writePgm(const std::string& path, const SilhouetteMask& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P5\n" << m.width << ' ' << m.height << "\n255\n";
  for (auto b : m.inside) out.put(static_cast<char>(b ? 255 : 0));
}

inline SilhouetteMask readPgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  if (magic != "P5" || w <= 0 || h <= 0 || maxv <= 0 || maxv > 255) throw DataError(path + " is not an 8-bit P5 PGM");
  in.get();
  std::vector<std::uint8_t> inside(static_cast<size_t>(w) * static_cast<size_t>(h));
  for (auto& b : inside) {
    const int c = in.get();
    if (c == EOF) throw DataError(path + " is truncated");
    b = c > maxv / 2 ? 1 : 0;
  }
  return maskFromBinary(w, h, std::move(inside));
}

}  // namespace rbf::mv
