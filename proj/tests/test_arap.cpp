#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rbf/arap/arap.hpp"

using namespace rbf;
using namespace rbf::arap;

namespace {

Mat3 randomRotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// Elongated ellipsoid so the test shape is not rotationally symmetric.
TriMesh body() {
  TriMesh m = geom::icosphere(2, 1.0);
  m.vertices.col(0) *= 3.0;
  return m;
}

}  // namespace

TEST(Arap, RestConstraintsGiveRestMesh) {
  const TriMesh m = body();
  ArapConstraints c;
  for (int v : {0, 5, 11}) c.hard[v] = m.vertex(v);
  const ArapResult r = arapDeformDetailed(m, c, {});
  EXPECT_LT((r.positions - m.vertices).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(r.energies.back(), 1e-20);
}

TEST(Arap, RecoversRigidMotion) {
  const TriMesh m = body();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat3 r = randomRotation(rng);
    const Vec3 t(10.0 * trial, -3.0, 2.0);
    ArapConstraints c;
    for (int v : {0, 3, 7, 10}) c.hard[v] = r * m.vertex(v) + t;
    ArapConfig cfg;
    cfg.iterations = 50;
    cfg.convergenceTol = 1e-12;
    const ArapResult res = arapDeformDetailed(m, c, cfg);
    for (int v = 0; v < m.numVertices(); ++v) {
      EXPECT_LT((res.positions.row(v).transpose() - (r * m.vertex(v) + t)).norm(), 1e-6);
    }
    EXPECT_LT(res.energies.back(), 1e-10);
  }
}

TEST(Arap, EnergyMonotoneOnRandomCases) {
  const TriMesh m = body();
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, m.numVertices() - 1);
  std::normal_distribution<double> g(0.0, 0.4);
  for (int trial = 0; trial < 50; ++trial) {
    ArapConstraints c;
    while (c.hard.size() < 4) {
      const int v = pick(rng);
      c.hard[v] = m.vertex(v) + Vec3(g(rng), g(rng), g(rng));
    }
    while (c.soft.size() < 3) {
      const int v = pick(rng);
      if (!c.hard.count(v)) c.soft[v] = {m.vertex(v) + Vec3(g(rng), g(rng), g(rng)), 0.5};
    }
    ArapConfig cfg;
    cfg.iterations = 10;
    cfg.convergenceTol = 1e-15;
    const ArapResult res = arapDeformDetailed(m, c, cfg);
    ASSERT_EQ(res.energies.size(), 10u);
    for (size_t i = 1; i < res.energies.size(); ++i) {
      EXPECT_LE(res.energies[i], res.energies[i - 1] * (1.0 + 1e-12) + 1e-15) << "trial " << trial << " iter " << i;
    }
    for (const auto& [v, p] : c.hard) EXPECT_EQ(res.positions.row(v).transpose(), p);
  }
}

TEST(Arap, AllVerticesHardReturnsTargets) {
  const TriMesh m = geom::icosphere(1);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  ArapConstraints c;
  Points targets(m.numVertices(), 3);
  for (int v = 0; v < m.numVertices(); ++v) {
    targets.row(v) << g(rng), g(rng), g(rng);
    c.hard[v] = targets.row(v).transpose();
  }
  EXPECT_EQ(arapDeform(m, c), targets);
}

TEST(Arap, RigidInvariance) {
  const TriMesh m = body();
  ArapConstraints c;
  c.hard[0] = m.vertex(0) + Vec3(0.3, 0.1, 0.0);
  c.hard[9] = m.vertex(9) + Vec3(-0.2, 0.0, 0.4);
  c.hard[20] = m.vertex(20);
  c.soft[30] = {m.vertex(30) + Vec3(0.0, 0.2, 0.0), 1.0};
  std::mt19937_64 rng(9);
  const Mat3 r = randomRotation(rng);
  const Vec3 t(4.0, -1.0, 2.5);
  TriMesh moved = m;
  for (int v = 0; v < m.numVertices(); ++v) moved.vertices.row(v) = (r * m.vertex(v) + t).transpose();
  ArapConstraints cm;
  for (const auto& [v, p] : c.hard) cm.hard[v] = r * p + t;
  for (const auto& [v, s] : c.soft) cm.soft[v] = {r * s.position + t, s.weight};
  const Points a = arapDeform(m, c);
  const Points b = arapDeform(moved, cm);
  for (int v = 0; v < m.numVertices(); ++v) {
    EXPECT_LT((r * a.row(v).transpose() + t - b.row(v).transpose()).norm(), 1e-9);
  }
}

TEST(Arap, Errors) {
  const TriMesh m = body();
  EXPECT_THROW(arapDeform(m, {}), NumericError);
  ArapConstraints zeroSoft;
  zeroSoft.soft[3] = {m.vertex(3), 0.0};
  EXPECT_THROW(arapDeform(m, zeroSoft), NumericError);
  ArapConstraints nan;
  nan.hard[1] = Vec3(std::nan(""), 0, 0);
  EXPECT_THROW(arapDeform(m, nan), NumericError);
  ArapConstraints overlap;
  overlap.hard[1] = m.vertex(1);
  overlap.soft[1] = {m.vertex(1), 1.0};
  EXPECT_THROW(arapDeform(m, overlap), DataError);
  ArapConfig bad;
  bad.iterations = 0;
  ArapConstraints ok;
  ok.hard[1] = m.vertex(1);
  EXPECT_THROW(arapDeform(m, ok, bad), ConfigError);
}

TEST(Arap, UnconstrainedComponentIsSingular) {
  TriMesh two = geom::icosphere(0);
  TriMesh other = two;
  other.vertices.col(0).array() += 5.0;
  TriMesh m;
  m.vertices.resize(24, 3);
  m.vertices << two.vertices, other.vertices;
  m.faces.resize(40, 3);
  m.faces << two.faces, (other.faces.array() + 12).matrix();
  ArapConstraints c;
  c.hard[0] = m.vertex(0);
  EXPECT_THROW(arapDeform(m, c), NumericError);
}

TEST(ArapAlign, IdentityWhenTargetIsSource) {
  const TriMesh m = body();
  std::map<int, Vec3> hard;
  for (int v : {0, 4, 8, 12}) hard[v] = m.vertex(v);
  const Points p = arapAlignToTarget(m, hard, m, 3);
  EXPECT_LT((p - m.vertices).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ArapAlign, ScaledTargetMeanDistanceAndMonotoneResidual) {
  const TriMesh m = body();
  TriMesh target = m;
  target.vertices *= 1.1;
  std::map<int, Vec3> hard;
  for (int v : {0, 1, 2, 3, 4, 5}) hard[v] = target.vertex(v);
  const double length = m.vertices.col(0).maxCoeff() - m.vertices.col(0).minCoeff();

  const AlignResult one = arapAlignToTargetDetailed(m, hard, target, 1);
  const AlignResult five = arapAlignToTargetDetailed(m, hard, target, 5);
  ASSERT_EQ(five.residuals.size(), 5u);
  EXPECT_LE(five.residuals.back(), one.residuals.back() + 1e-6);
  for (size_t i = 1; i < five.residuals.size(); ++i) EXPECT_LE(five.residuals[i], five.residuals[i - 1] + 1e-6);

  double mean = 0.0;
  for (int v = 0; v < m.numVertices(); ++v) mean += geom::closestPoint(target, five.positions.row(v).transpose()).distance;
  mean /= m.numVertices();
  EXPECT_LT(mean, 0.02 * length);
}

TEST(ArapAlign, PointCloudTarget) {
  const TriMesh m = body();
  Points cloud(3, 3);
  cloud << m.vertex(30).transpose() * 1.05, m.vertex(40).transpose() * 1.05, m.vertex(50).transpose() * 1.05;
  std::map<int, Vec3> hard;
  for (int v : {0, 1, 2, 3}) hard[v] = m.vertex(v);
  const AlignResult r = arapAlignToTargetDetailed(m, hard, cloud, 3);
  ASSERT_EQ(r.residuals.size(), 3u);
  EXPECT_LT(r.residuals.back(), detail::meanResidual(m, m.vertices, std::vector<char>(m.numVertices(), 0), cloud));
}
