#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "rbf/multiview/camera.hpp"
#include "rbf/multiview/silhouette.hpp"
#include "rbf/multiview/triangulate.hpp"

using namespace rbf;
using namespace rbf::mv;

namespace {

Camera axisCamera(double f = 100.0, int size = 101) {
  Camera c;
  c.fx = c.fy = f;
  c.cx = c.cy = 50.0;
  c.width = c.height = size;
  return c;
}

Vec3 randomInBall(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (true) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (p.norm() <= 1.0) return radius * p;
  }
}

// Half-plane mask: columns [0, edge] inside.
SilhouetteMask halfPlane(int w, int h, int edge) {
  std::vector<std::uint8_t> in(static_cast<size_t>(w * h), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x <= edge; ++x) in[static_cast<size_t>(y * w + x)] = 1;
  }
  return maskFromBinary(w, h, in);
}

}  // namespace

TEST(Project, OpticalAxisAndOffset) {
  const Camera c = axisCamera();
  const Vec2 onAxis = project(c, Vec3(0, 0, 250));
  EXPECT_DOUBLE_EQ(onAxis.x(), 50.0);
  EXPECT_DOUBLE_EQ(onAxis.y(), 50.0);
  const Vec2 p = project(c, Vec3(1, 0, 100));
  EXPECT_DOUBLE_EQ(p.x(), 51.0);
  EXPECT_DOUBLE_EQ(p.y(), 50.0);
  const Vec2 far = project(c, Vec3(3, -2, 200));
  const Vec2 near = project(c, Vec3(3, -2, 100));
  EXPECT_NEAR((far - Vec2(50, 50)).norm() * 2.0, (near - Vec2(50, 50)).norm(), 1e-12);
}

TEST(Project, BehindCamera) {
  const Camera c = axisCamera();
  EXPECT_THROW(project(c, Vec3(0, 0, 0)), BehindCameraError);
  EXPECT_THROW(project(c, Vec3(0, 0, -5)), DegeneracyError);
}

TEST(Project, JacobianMatchesFiniteDifference) {
  const DomeRig rig = buildDomeRig(180.0);
  const Vec3 p(12.0, -30.0, 40.0);
  for (const auto& cam : rig.cameras) {
    const auto j = projectJacobian(cam, p);
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d[k] = 1e-5;
      const Vec2 fd = (project(cam, p + d) - project(cam, p - d)) / 2e-5;
      EXPECT_NEAR(j(0, k), fd.x(), 1e-6);
      EXPECT_NEAR(j(1, k), fd.y(), 1e-6);
    }
  }
}

TEST(Dome, FifteenCamerasAimedAtOrigin) {
  const DomeRig rig = buildDomeRig(180.0);
  ASSERT_EQ(rig.cameras.size(), 15u);
  for (size_t i = 0; i < rig.cameras.size(); ++i) {
    const Camera& c = rig.cameras[i];
    EXPECT_NO_THROW(c.validate());
    EXPECT_NEAR(c.center().norm(), rig.faceCentroids[i].norm(), 1e-9);
    // Distance from origin to the optical axis line.
    const Vec3 o = c.center();
    const Vec3 a = c.opticalAxis();
    EXPECT_LT((o - o.dot(a) * a).norm(), 1.0);
  }
}

TEST(Dome, FacesAreEquilateralWithEdge400) {
  const DomeGeometry g = domeGeometry();
  ASSERT_EQ(g.faces.size(), 15u);
  for (const auto& f : g.faces) {
    EXPECT_NEAR((f[0] - f[1]).norm(), 400.0, 1e-9);
    EXPECT_NEAR((f[1] - f[2]).norm(), 400.0, 1e-9);
    EXPECT_NEAR((f[2] - f[0]).norm(), 400.0, 1e-9);
  }
}

TEST(Dome, TubeSizedBallVisibleInEveryView) {
  const DomeRig rig = buildDomeRig(180.0);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p = randomInBall(rng, 150.0);
    for (const auto& c : rig.cameras) {
      const Vec2 uv = project(c, p);
      EXPECT_TRUE(uv.x() >= 0 && uv.x() <= c.width - 1 && uv.y() >= 0 && uv.y() <= c.height - 1);
    }
  }
}

TEST(Dome, RigJsonRoundTrip) {
  const DomeRig rig = buildDomeRig(180.0);
  const auto back = rigFromJson(rigToJson(rig.cameras));
  ASSERT_EQ(back.size(), rig.cameras.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].rotation, rig.cameras[i].rotation);
    EXPECT_EQ(back[i].translation, rig.cameras[i].translation);
    EXPECT_EQ(back[i].fx, rig.cameras[i].fx);
  }
  nlohmann::json bad = rigToJson(rig.cameras);
  bad["cameras"][0].erase("fx");
  EXPECT_THROW(rigFromJson(bad), DataError);
}

TEST(Triangulate, ExactFromThreeDomeViews) {
  const DomeRig rig = buildDomeRig(180.0);
  const Vec3 x(20.0, -15.0, 35.0);
  std::vector<Camera> cams = {rig.cameras[0], rig.cameras[5], rig.cameras[12]};
  std::vector<Vec2> px;
  for (const auto& c : cams) px.push_back(project(c, x));
  const Triangulation t = triangulate(cams, px);
  EXPECT_LT((t.point - x).norm(), 1e-6);
  EXPECT_LT(t.reprojectionError, 1e-6);
}

TEST(Triangulate, IdenticalCamerasDegenerate) {
  const DomeRig rig = buildDomeRig(180.0);
  std::vector<Camera> cams = {rig.cameras[2], rig.cameras[2]};
  const Vec2 p = project(rig.cameras[2], Vec3(1, 2, 3));
  EXPECT_THROW(triangulate(cams, {p, p}), DegeneracyError);
  EXPECT_THROW(triangulate(std::vector<Camera>{rig.cameras[0]}, {p}), DegeneracyError);
}

TEST(Triangulate, IdentityOverRigAndRandomPoints) {
  const DomeRig rig = buildDomeRig(180.0);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = randomInBall(rng, 140.0);
    std::vector<Vec2> px;
    for (const auto& c : rig.cameras) px.push_back(project(c, x));
    EXPECT_LT((triangulate(rig.cameras, px).point - x).norm(), 1e-6);
  }
}

TEST(Triangulate, HalfPixelNoiseMedianBelowOneMillimetre) {
  const DomeRig rig = buildDomeRig(180.0);
  std::mt19937_64 rng(33);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<double> errors;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 x = randomInBall(rng, 100.0);
    std::vector<Vec2> px;
    for (const auto& c : rig.cameras) px.push_back(project(c, x) + Vec2(noise(rng), noise(rng)));
    errors.push_back((triangulate(rig.cameras, px).point - x).norm());
  }
  std::nth_element(errors.begin(), errors.begin() + 50, errors.end());
  EXPECT_LT(errors[50], 1.0);
}

TEST(Silhouette, FullFrustumIsAllInside) {
  Camera c = axisCamera(100.0, 64);
  c.cx = c.cy = 32.0;
  geom::TriMesh quad;
  quad.vertices.resize(4, 3);
  quad.vertices << -1e4, -1e4, 100, 1e4, -1e4, 100, 1e4, 1e4, 100, -1e4, 1e4, 100;
  quad.faces.resize(2, 3);
  quad.faces << 0, 1, 2, 0, 2, 3;
  const SilhouetteMask m = rasterizeSilhouette(c, quad);
  EXPECT_EQ(m.area(), static_cast<size_t>(64 * 64));
  for (int y = 0; y < 63; y += 7) {
    for (int x = 0; x < 63; x += 7) {
      EXPECT_EQ(softPenalty(m, Vec2(x + 0.3, y + 0.6)).value, 0.0);
      EXPECT_EQ(hardPenalty(m, Vec2(x, y)), 0);
    }
  }
}

TEST(Silhouette, SphereAreaAndCentreDistance) {
  Camera c;
  c.fx = c.fy = 200.0;
  c.width = c.height = 256;
  c.cx = c.cy = 128.0;
  const double r = 50.0, d = 300.0;
  geom::TriMesh s = geom::icosphere(4, r);
  s.vertices.col(2).array() += d;
  const SilhouetteMask m = rasterizeSilhouette(c, s);
  const double rho = c.fx * r / std::sqrt(d * d - r * r);
  const double analytic = std::numbers::pi * rho * rho;
  EXPECT_NEAR(static_cast<double>(m.area()), analytic, 0.02 * analytic);
  EXPECT_NEAR(softPenalty(m, Vec2(c.cx, c.cy)).value, 0.0, 0.0);
  EXPECT_NEAR(m.sdf(128, 128), -rho, 1.0);
}

TEST(Silhouette, BehindCameraMeshIsEmptyError) {
  const Camera c = axisCamera();
  geom::TriMesh s = geom::icosphere(1, 5.0);
  s.vertices.col(2).array() -= 50.0;
  EXPECT_THROW(rasterizeSilhouette(c, s), DataError);
}

TEST(Silhouette, HalfPlaneDistances) {
  const SilhouetteMask m = halfPlane(200, 50, 99);  // boundary at u = 99.5
  EXPECT_EQ(softPenalty(m, Vec2(50.0, 25.0)).value, 0.0);
  EXPECT_EQ(hardPenalty(m, Vec2(50.0, 25.0)), 0);
  const Penalty p = softPenalty(m, Vec2(104.5, 25.0));
  EXPECT_NEAR(p.value, 5.0, 1e-6);
  EXPECT_NEAR(p.gradient.x(), 1.0, 1e-6);
  EXPECT_EQ(hardPenalty(m, Vec2(104.5, 25.0)), 1);
  // Boundary band: sign flips across the half-pixel boundary.
  EXPECT_NEAR(m.sdf(99, 10), -0.5, 1e-6);
  EXPECT_NEAR(m.sdf(100, 10), 0.5, 1e-6);
}

TEST(Silhouette, SoftPenaltyContinuousWithBoundedSlope) {
  Camera c = axisCamera(150.0, 96);
  c.cx = c.cy = 47.5;
  geom::TriMesh s = geom::icosphere(3, 20.0);
  s.vertices.col(2).array() += 120.0;
  const SilhouetteMask m = rasterizeSilhouette(c, s);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10.0, 105.0);
  const double h = 1e-3;
  for (int i = 0; i < 5000; ++i) {
    const Vec2 p(u(rng), u(rng));
    for (const Vec2& dir : {Vec2(1, 0), Vec2(0, 1)}) {
      const double slope = std::abs(softPenalty(m, p + h * dir).value - softPenalty(m, p).value) / h;
      EXPECT_LE(slope, 1.01);
    }
  }
}

TEST(Silhouette, OutsideImageCountsAsOutside) {
  const SilhouetteMask m = halfPlane(40, 40, 19);
  EXPECT_EQ(hardPenalty(m, Vec2(-3.0, 10.0)), 1);
  EXPECT_NEAR(softPenalty(m, Vec2(-3.0, 10.0)).value, 3.0, 1e-9);
  EXPECT_NEAR(softPenalty(m, Vec2(45.0, 10.0)).value, m.sdf(39, 10) + 6.0, 1e-6);
}

TEST(Silhouette, PgmRoundTrip) {
  const SilhouetteMask m = halfPlane(33, 17, 9);
  const auto path = std::filesystem::temp_directory_path() / "rbf_mask_roundtrip.pgm";
  writePgm(path.string(), m);
  const SilhouetteMask back = readPgm(path.string());
  EXPECT_EQ(back.inside, m.inside);
  EXPECT_EQ(back.distance, m.distance);
  std::filesystem::remove(path);
}
