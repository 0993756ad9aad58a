#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "rbf/model/io.hpp"
#include "rbf/model/train.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace rbf;
using namespace rbf::model;
using rbf::testing::smallRat;
using rbf::testing::tinyConfig;
using rbf::testing::trainedTiny;

namespace {

Mat3 rotZ(double a) { return canonical::yawRotation(a); }

Points rotated(const Points& p, const Mat3& r) { return (p * r.transpose()).eval(); }

// Keypoints already in the canonical heading, centred, with unit extent.
Points canonicalKeypoints() {
  Points k = Points::Zero(kKeypointCount, 3);
  k.row(kNose) << 1.0, 0.0, 0.2;
  k.row(kTailBase) << -1.0, 0.0, 0.2;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int i = 0; i < kKeypointCount; ++i) {
    if (i == kNose || i == kTailBase) continue;
    k.row(i) << u(rng), u(rng), u(rng);
  }
  k.rowwise() -= k.colwise().mean();
  k /= k.cwiseAbs().maxCoeff();
  // Re-centring must not move the heading off +X.
  const double heading = canonical::headingAngle(k.row(kNose).transpose(), k.row(kTailBase).transpose());
  return rotated(k, rotZ(-heading));
}

const CanonicalContext& context() {
  static const CanonicalContext ctx(smallRat().canonical.surface, 10);
  return ctx;
}

Matrix randomTokens(Eigen::Index rows, std::mt19937_64& rng) { return rbf::testing::randomMatrix(rows, 3, rng, 0.1); }

// Independent outside-count: pinhole projection, nearest pixel, image bounds.
int bruteForceOutside(const Points& pts, const std::vector<SilhouetteView>& views) {
  int count = 0;
  for (const auto& v : views) {
    const auto& c = *v.camera;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const Vec3 x = c.rotation * pts.row(i).transpose() + c.translation;
      if (x.z() <= 0.0) {
        ++count;
        continue;
      }
      const double u = c.fx * x.x() / x.z() + c.cx;
      const double w = c.fy * x.y() / x.z() + c.cy;
      const long px = std::lround(u), py = std::lround(w);
      if (px < 0 || py < 0 || px >= v.mask->width || py >= v.mask->height) {
        ++count;
        continue;
      }
      if (v.mask->inside[static_cast<size_t>(py * v.mask->width + px)] == 0) ++count;
    }
  }
  return count;
}

}  // namespace

// ---------------------------------------------------------------------------
// normalizePose

TEST(NormalizePose, CanonicalInputGivesIdentityRecord) {
  const Points k = canonicalKeypoints();
  const PoseRecord r = normalizePose(k, NormalizationMode::PerFrame, 1.0);
  EXPECT_NEAR(r.yaw, 0.0, 1e-12);
  EXPECT_LT(r.centre.norm(), 1e-12);
  EXPECT_NEAR(r.scale, 1.0, 1e-12);
  EXPECT_LT((r.apply(k) - k).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizePose, QuarterTurnGivesSameOutput) {
  const Points k = smallRat().data.frames[5].keypoints;
  for (auto mode : {NormalizationMode::PerFrame, NormalizationMode::FixedScale}) {
    const Points a = normalizePose(k, mode, 0.01).apply(k);
    const Points turned = rotated(k, rotZ(0.5 * std::numbers::pi));
    const Points b = normalizePose(turned, mode, 0.01).apply(turned);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(NormalizePose, YawScaleAndShiftAreRemoved) {
  const Points k = smallRat().data.frames[11].keypoints;
  const Points base = normalizePose(k, NormalizationMode::PerFrame, 1.0).apply(k);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Points moved = (1.7 + u(rng)) * rotated(k, rotZ(3.0 * u(rng)));
    moved.rowwise() += Eigen::RowVector3d(100 * u(rng), 100 * u(rng), 10 * u(rng));
    const PoseRecord r = normalizePose(moved, NormalizationMode::PerFrame, 1.0);
    EXPECT_LT((r.apply(moved) - base).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(r.apply(moved).cwiseAbs().maxCoeff(), 1.0, 1e-12);
  }
}

TEST(NormalizePose, RecordInverts) {
  const Points k = smallRat().data.frames[2].keypoints;
  const PoseRecord r = normalizePose(k, NormalizationMode::FixedScale, 0.02);
  EXPECT_LT((r.invert(r.apply(k)) - k).cwiseAbs().maxCoeff(), 1e-10);
  const Vec3 p(3.0, -4.0, 5.0);
  EXPECT_LT((r.invert(r.apply(p)) - p).norm(), 1e-12);
  const Points q = r.apply(k);
  Points viaMatrix = (q * r.inverseRowMatrix()).eval();
  viaMatrix.rowwise() += r.centre.transpose();
  EXPECT_LT((viaMatrix - k).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(NormalizePose, DisabledKeepsWorldAxes) {
  const Points k = smallRat().data.frames[0].keypoints;
  const PoseRecord r = normalizePose(k, NormalizationMode::Disabled, 0.5);
  EXPECT_EQ(r.yaw, 0.0);
  EXPECT_EQ(r.centre, Vec3::Zero());
  EXPECT_LT((r.apply(k) - 0.5 * k).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NormalizePose, CoincidentHeadingRejected) {
  Points k = canonicalKeypoints();
  k.row(kTailBase) = k.row(kNose);
  k(kTailBase, 2) += 0.5;  // vertical offset only
  EXPECT_THROW(normalizePose(k, NormalizationMode::PerFrame, 1.0), DegeneracyError);
  EXPECT_THROW(normalizePose(Points::Zero(3, 3), NormalizationMode::PerFrame, 1.0), DataError);
}

// ---------------------------------------------------------------------------
// initialGuess, encodeInputs, reconstructOutput

TEST(InitialGuess, CanonicalKeypointsGiveCanonicalAnchors) {
  const auto& ctx = context();
  const Points b = ctx.guesser->guess(ctx.keypoints, Eigen::VectorXd::Ones(kKeypointCount));
  EXPECT_LT((b - ctx.anchors).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(InitialGuess, YawedKeypointsGiveYawedAnchors) {
  const auto& ctx = context();
  for (double a : {0.4, -1.3, 2.9}) {
    const Mat3 r = rotZ(a);
    const Points b = ctx.guesser->guess(rotated(ctx.keypoints, r), Eigen::VectorXd::Ones(kKeypointCount));
    EXPECT_LT((b - rotated(ctx.anchors, r)).cwiseAbs().maxCoeff(), 1e-6) << "yaw " << a;
  }
}

TEST(InitialGuess, KeypointScaleCancels) {
  const auto& ctx = context();
  const Points b = ctx.guesser->guess(2.0 * ctx.keypoints, Eigen::VectorXd::Constant(kKeypointCount, 2.0));
  EXPECT_LT((b - ctx.anchors).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(ctx.guesser->guess(ctx.keypoints.topRows(3), Eigen::VectorXd::Ones(3)), DataError);
}

TEST(EncodeInputs, FormulaExamples) {
  const auto& ctx = context();
  const int n = ctx.anchorCount();
  IndividualParams p = IndividualParams::initial(kKeypointCount, n, 1.3, 0.8);
  std::mt19937_64 rng(1);
  p.TP = rbf::testing::randomMatrix(kKeypointCount, 3, rng, 0.05);
  p.TB = rbf::testing::randomMatrix(n, 3, rng, 0.05);
  // p = c (p̃ + t) is a root of the keypoint formula.
  const Points onRoot = 1.3 * (ctx.keypoints + p.TP);
  const Points bRoot = 0.8 * (ctx.anchors + p.TB);
  const Tokens zero = encodeInputs(onRoot, bRoot, p, ctx);
  EXPECT_LT(zero.keypoint.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(zero.surface.cwiseAbs().maxCoeff(), 1e-12);

  const IndividualParams unit = IndividualParams::initial(kKeypointCount, n, 1.0, 1.0);
  Points shifted = ctx.keypoints;
  shifted.col(0).array() += 0.1;
  const Tokens t = encodeInputs(shifted, ctx.anchors, unit, ctx);
  for (int i = 0; i < kKeypointCount; ++i) {
    EXPECT_NEAR(t.keypoint(i, 0), 0.1, 1e-12);
    EXPECT_NEAR(t.keypoint(i, 1), 0.0, 1e-12);
    EXPECT_NEAR(t.keypoint(i, 2), 0.0, 1e-12);
  }
  EXPECT_THROW(encodeInputs(ctx.keypoints.topRows(4), ctx.anchors, unit, ctx), ShapeError);
}

TEST(EncodeInputs, ScaleConsistencyIsBitwise) {
  const auto& ctx = context();
  const int n = ctx.anchorCount();
  const Points k = smallRat().data.frames[3].keypoints * 0.01;
  IndividualParams a = IndividualParams::initial(kKeypointCount, n, 1.0, 1.0);
  IndividualParams b = a;
  b.logCP.setConstant(std::log(2.0));
  ASSERT_EQ(b.cP()[0], 2.0);
  const Tokens ta = encodeInputs(k, ctx.anchors, a, ctx);
  const Tokens tb = encodeInputs(2.0 * k, ctx.anchors, b, ctx);
  EXPECT_EQ(ta.keypoint, tb.keypoint);
}

TEST(ReconstructOutput, Examples) {
  const auto& ctx = context();
  const int n = ctx.anchorCount();
  const Matrix zero = Matrix::Zero(n, 3);
  const PoseRecord identity;
  EXPECT_LT((reconstructOutput(zero, IndividualParams::initial(kKeypointCount, n, 1, 1), ctx, identity) - ctx.anchors).cwiseAbs().maxCoeff(),
            1e-15);
  EXPECT_LT((reconstructOutput(zero, IndividualParams::initial(kKeypointCount, n, 1, 2), ctx, identity) - 2.0 * ctx.anchors)
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  EXPECT_THROW(reconstructOutput(Matrix::Zero(n + 1, 3), IndividualParams::initial(kKeypointCount, n, 1, 1), ctx, identity), ShapeError);
}

TEST(ReconstructOutput, InvertsEncodingOnGroundTruth) {
  const auto& f = smallRat();
  const auto& ctx = context();
  const int n = ctx.anchorCount();
  std::mt19937_64 rng(3);
  IndividualParams p = IndividualParams::initial(kKeypointCount, n, 1.1, 0.9);
  p.TB = rbf::testing::randomMatrix(n, 3, rng, 0.03);
  const FrameSample& s = f.data.frames[7];
  const PoseRecord r = normalizePose(s.keypoints, NormalizationMode::FixedScale, ctx.fixedScale);
  const Points gtNorm = r.apply(s.surface);
  const Tokens t = encodeInputs(r.apply(s.keypoints), gtNorm, p, ctx);
  const Points world = reconstructOutput(t.surface, p, ctx, r);
  EXPECT_LT((r.apply(world) - gtNorm).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((world - s.surface).cwiseAbs().maxCoeff(), 1e-9);
  // Re-encoding the reconstruction gives the same tokens.
  const Tokens again = encodeInputs(r.apply(s.keypoints), r.apply(world), p, ctx);
  EXPECT_LT((again.surface - t.surface).cwiseAbs().maxCoeff(), 1e-12);
}

// ---------------------------------------------------------------------------
// Positional encoding

TEST(PositionalEncoding, SphereRangeDistinctAndDeterministic) {
  CanonicalSurface sphere;
  sphere.mesh = geom::icosphere(2);
  sphere.basis = geom::computeBasis(sphere.mesh, 16);
  RbfConfig cfg;
  const geom::SurfacePointRef a{3, Vec3(0.2, 0.3, 0.5)};
  const geom::SurfacePointRef b{40, Vec3(1.0 / 3, 1.0 / 3, 1.0 / 3)};
  const Matrix fa = encodingFeatures(sphere, a, cfg);
  const Matrix fb = encodingFeatures(sphere, b, cfg);
  ASSERT_EQ(fa.cols(), 128);
  EXPECT_LE(fa.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_GT((fa - fb).norm(), 1e-6);
  EXPECT_EQ(fa, encodingFeatures(sphere, a, cfg));

  cfg.encoding = EncodingKind::Euclidean;
  const Matrix ea = encodingFeatures(sphere, a, cfg);
  EXPECT_EQ(ea.cols(), 24);
  EXPECT_LE(ea.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_GT((ea - encodingFeatures(sphere, b, cfg)).norm(), 1e-6);

  cfg.eigenCount = 32;
  cfg.encoding = EncodingKind::Spectral;
  EXPECT_THROW(encodingFeatures(sphere, a, cfg), ConfigError);
}

TEST(PositionalEncoding, ProjectedToEmbedDim) {
  const auto& f = smallRat();
  RbfConfig cfg = tinyConfig();
  const RbfModel m(cfg, f.canonical.surface);
  const auto& ref = f.canonical.surface.surfaceAnchors[0];
  const Eigen::VectorXd e = positionalEncoding(m, f.canonical.surface, ref);
  EXPECT_EQ(e.size(), cfg.embedDim);
  EXPECT_EQ(e, positionalEncoding(m, f.canonical.surface, ref));
}

// ---------------------------------------------------------------------------
// Network

TEST(Forward, OutputShape) {
  const auto& f = smallRat();
  const RbfModel m(tinyConfig(), f.canonical.surface);
  std::mt19937_64 rng(2);
  Tape t;
  const Tensor d = m.forward(t, Tensor::constant(randomTokens(3 * kKeypointCount, rng)),
                             Tensor::constant(randomTokens(3 * m.anchorCount(), rng)), 3);
  EXPECT_EQ(d.rows(), 3 * m.anchorCount());
  EXPECT_EQ(d.cols(), 3);
  Tape t2;
  EXPECT_THROW(m.forward(t2, Tensor::constant(randomTokens(kKeypointCount, rng)), Tensor::constant(randomTokens(m.anchorCount(), rng)), 2),
               ShapeError);
}

TEST(Forward, KeypointPermutationWithTiedEncodingsIsInvariant) {
  const auto& f = smallRat();
  const RbfModel m(tinyConfig(), f.canonical.surface);
  std::mt19937_64 rng(6);
  const Matrix kp = randomTokens(kKeypointCount, rng);
  const Matrix sf = randomTokens(m.anchorCount(), rng);
  std::vector<int> perm(kKeypointCount);
  for (int i = 0; i < kKeypointCount; ++i) perm[static_cast<size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Tape t;
  const Matrix kEnc = m.keypointEncoding(t).value();
  const Tensor sEnc = m.surfaceEncoding(t);
  Matrix kpP(kKeypointCount, 3), kEncP(kKeypointCount, kEnc.cols());
  for (int i = 0; i < kKeypointCount; ++i) {
    kpP.row(i) = kp.row(perm[static_cast<size_t>(i)]);
    kEncP.row(i) = kEnc.row(perm[static_cast<size_t>(i)]);
  }
  const Matrix a = m.correction(t, Tensor::constant(kp), Tensor::constant(sf), Tensor::constant(kEnc), sEnc, 1).value();
  const Matrix b = m.correction(t, Tensor::constant(kpP), Tensor::constant(sf), Tensor::constant(kEncP), sEnc, 1).value();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Forward, ToyGradientMatchesFiniteDifferences) {
  const auto& f = smallRat();
  ASSERT_EQ(f.canonical.surface.anchorCount(), 12);
  RbfModel m(tinyConfig(), f.canonical.surface);
  std::mt19937_64 rng(9);
  const Tensor kp = Tensor::constant(randomTokens(kKeypointCount, rng));
  const Tensor sf = Tensor::constant(randomTokens(12, rng));
  std::vector<Tensor> weights;
  for (const auto& [_, w] : m.parameters().entries()) weights.push_back(w);
  const auto res = rbf::testing::gradCheck(
      [&](Tape& t) { return ad::meanSquaredError(t, m.forward(t, kp, sf, 1), Tensor::constant(Matrix::Zero(12, 3))); }, weights);
  EXPECT_LT(res.worstRelative, 1e-4) << res.worstInput;
}

TEST(Forward, HeadInitScaleZeroReturnsBase) {
  const auto& f = smallRat();
  RbfConfig cfg = tinyConfig();
  cfg.headInitScale = 0.0;
  const RbfModel m(cfg, f.canonical.surface);
  std::mt19937_64 rng(4);
  const Matrix sf = randomTokens(12, rng);
  const Matrix base = randomTokens(12, rng);
  Tape t;
  EXPECT_EQ(m.forward(t, Tensor::constant(randomTokens(kKeypointCount, rng)), Tensor::constant(sf), 1).value(), sf);
  EXPECT_EQ(m.forward(t, Tensor::constant(randomTokens(kKeypointCount, rng)), Tensor::constant(sf), 1, Tensor::constant(base)).value(), base);
}

// ---------------------------------------------------------------------------
// Losses

TEST(Loss3D, Examples) {
  FrameSample s = smallRat().data.frames[0];
  EXPECT_EQ(loss3D(s.surface, s), 0.0);
  std::fill(s.visible.begin(), s.visible.end(), 0);
  s.visible[4] = 1;
  Points pred = s.surface;
  pred.row(4) += Eigen::RowVector3d(3.0, 4.0, 0.0);
  EXPECT_DOUBLE_EQ(loss3D(pred, s), 5.0);
  s.visible[4] = 0;
  s.visible[5] = 1;
  EXPECT_EQ(loss3D(pred, s), 0.0);
  s.visible[5] = 0;
  EXPECT_THROW(loss3D(pred, s), DataError);
  EXPECT_THROW(loss3D(pred.topRows(3), s), ShapeError);
}

TEST(Loss3D, InvisibleGroundTruthNeverMatters) {
  FrameSample s = smallRat().data.frames[1];
  for (int j = 0; j < 12; j += 3) s.visible[static_cast<size_t>(j)] = 0;
  std::mt19937_64 rng(5);
  const Points pred = s.surface + rbf::testing::randomMatrix(12, 3, rng, 2.0);
  const double before = loss3D(pred, s);
  for (int j = 0; j < 12; j += 3) s.surface.row(j) = Eigen::RowVector3d(1e6, -1e6, 42.0);
  EXPECT_EQ(loss3D(pred, s), before);
}

TEST(LossSilhouette, InsidePointsCostNothing) {
  const auto& f = smallRat();
  const FrameSample& s = f.data.frames[0];
  const auto views = silhouetteViews(s, f.rig);
  ASSERT_FALSE(views.empty());
  // The body centroid (near the spine) is inside every silhouette.
  const Points centre = f.data.meshes[0].colwise().mean();
  EXPECT_EQ(lossSilhouette(centre, views, false), 0.0);
  EXPECT_EQ(lossSilhouette(centre, views, true), 0.0);
  EXPECT_THROW(lossSilhouette(centre, {}, true), DataError);
}

TEST(LossSilhouette, HardCountsOutsidePoints) {
  mv::Camera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 50.0;
  cam.width = cam.height = 101;
  std::vector<std::uint8_t> in(101 * 101, 0);
  for (int y = 0; y < 101; ++y) {
    for (int x = 0; x <= 60; ++x) in[static_cast<size_t>(y * 101 + x)] = 1;
  }
  const mv::SilhouetteMask mask = mv::maskFromBinary(101, 101, in);
  const std::vector<SilhouetteView> views{{&cam, &mask}};
  auto at = [](double u, double v) { return Eigen::RowVector3d((u - 50.0) * 2.0, (v - 50.0) * 2.0, 200.0); };
  Points p(5, 3);
  p.row(0) = at(10, 10);
  p.row(1) = at(80, 20);
  p.row(2) = at(55, 90);
  p.row(3) = at(95, 95);
  p.row(4) = at(70, 50);
  EXPECT_EQ(lossSilhouette(p, views, false), 3.0);
  p.row(0) << 0.0, 0.0, -10.0;  // behind the camera
  EXPECT_EQ(lossSilhouette(p, views, false), 4.0);
  EXPECT_NEAR(lossSilhouette(p.topRows(1), views, true), behindCameraPenalty(cam), 1e-12);
}

TEST(LossSilhouette, HardMatchesBruteForceOnRandomCases) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<mv::Camera> cams;
    std::vector<mv::SilhouetteMask> masks;
    for (int v = 0; v < 3; ++v) {
      const Vec3 eye(300 * u(rng), 300 * u(rng), 150 + 100 * std::abs(u(rng)));
      cams.push_back(mv::lookAt(eye, Vec3(20 * u(rng), 20 * u(rng), 0), Vec3::UnitZ(), 120.0, 64, 48));
      std::vector<std::uint8_t> in(64 * 48);
      const double cx = 32 + 10 * u(rng), cy = 24 + 8 * u(rng), r = 8 + 10 * std::abs(u(rng));
      for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 64; ++x) in[static_cast<size_t>(y * 64 + x)] = std::hypot(x - cx, y - cy) < r ? 1 : 0;
      }
      masks.push_back(mv::maskFromBinary(64, 48, in));
    }
    std::vector<SilhouetteView> views;
    for (int v = 0; v < 3; ++v) views.push_back({&cams[static_cast<size_t>(v)], &masks[static_cast<size_t>(v)]});
    Points pts(40, 3);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << 80 * u(rng), 80 * u(rng), 40 * u(rng);
    EXPECT_EQ(lossSilhouette(pts, views, false), static_cast<double>(bruteForceOutside(pts, views)));
  }
}

TEST(LossSilhouette, SoftGradientMatchesFiniteDifferences) {
  mv::Camera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 100.0;
  cam.width = 200;
  cam.height = 50;
  std::vector<std::uint8_t> in(200 * 50, 0);
  for (int y = 0; y < 50; ++y) {
    for (int x = 0; x <= 99; ++x) in[static_cast<size_t>(y * 200 + x)] = 1;
  }
  const mv::SilhouetteMask mask = mv::maskFromBinary(200, 50, in);
  const std::vector<SilhouetteView> views{{&cam, &mask}};
  // Projects to (104.3, 25.2): 4.8 px beyond the boundary at u = 99.5.
  const double z = 300.0;
  Tensor p = Tensor::parameter(Matrix(Eigen::RowVector3d((104.3 - 100.0) * z / 100.0, (25.2 - 100.0) * z / 100.0, z)));
  {
    Tape t;
    const Tensor l = silhouetteLossOp(t, p, views);
    EXPECT_NEAR(l.item(), 4.8, 1e-6);
    EXPECT_NEAR(l.item(), lossSilhouette(p.value(), views, true), 1e-12);
  }
  const auto res = rbf::testing::gradCheck([&](Tape& t) { return silhouetteLossOp(t, p, views); }, {p}, 1e-4);
  EXPECT_LT(res.worstRelative, 1e-3);
}

// ---------------------------------------------------------------------------
// Training and adaptation

TEST(Train, ZeroLearningRateLeavesWeightsBitwise) {
  const auto& f = smallRat();
  RbfConfig cfg = tinyConfig();
  cfg.epochs = 1;
  cfg.lrModel = 0.0;
  cfg.refinePeriod = 1;
  cfg.lrParams = 0.0;
  const RbfModel fresh(cfg, f.canonical.surface);
  std::vector<FrameSample> tr(f.data.frames.begin(), f.data.frames.begin() + 10);
  const auto r = train(tr, {}, f.canonical.surface, f.canonical.registry, f.canonical.alpha, f.rig, cfg);
  for (const auto& [name, w] : fresh.parameters().entries()) EXPECT_EQ(r.model.parameters().at(name).value(), w.value()) << name;
  const auto init = IndividualParams::initial(kKeypointCount, 12, f.canonical.alpha.at("rat0"), f.canonical.alpha.at("rat0"));
  EXPECT_EQ(r.params.at("rat0").TB, init.TB);
  EXPECT_EQ(r.params.at("rat0").logCB, init.logCB);
}

TEST(Train, ValidationImprovesAndLossIsNearlyMonotone) {
  const auto& t = trainedTiny();
  const auto& log = t.result.log;
  ASSERT_EQ(log.size(), 30u);
  EXPECT_LT(log.back().valLoss, 0.25 * t.result.initialValLoss);
  int ok = 0;
  for (size_t e = 1; e < log.size(); ++e) ok += log[e].trainLoss <= 1.05 * log[e - 1].trainLoss ? 1 : 0;
  EXPECT_GE(ok, static_cast<int>(0.9 * static_cast<double>(log.size() - 1)));
  int refinements = 0;
  for (const auto& l : log) refinements += std::isnan(l.silhouette) ? 0 : 1;
  EXPECT_EQ(refinements, 3);
}

TEST(Train, RejectsUnknownIndividualAndEmptySets) {
  const auto& f = smallRat();
  RbfConfig cfg = tinyConfig();
  cfg.epochs = 1;
  std::vector<FrameSample> tr(f.data.frames.begin(), f.data.frames.begin() + 2);
  tr[1].individual = "ghost";
  EXPECT_THROW(train(tr, {}, f.canonical.surface, f.canonical.registry, f.canonical.alpha, f.rig, cfg), DataError);
  EXPECT_THROW(train({}, {}, f.canonical.surface, f.canonical.registry, f.canonical.alpha, f.rig, cfg), DataError);
}

TEST(Train, FixedSeedReproducesBitwise) {
  const auto& f = smallRat();
  RbfConfig cfg = tinyConfig();
  cfg.epochs = 2;
  cfg.refinePeriod = 2;
  cfg.refineSteps = 2;
  std::vector<FrameSample> tr(f.data.frames.begin(), f.data.frames.begin() + 12);
  const auto a = train(tr, {}, f.canonical.surface, f.canonical.registry, f.canonical.alpha, f.rig, cfg);
  const auto b = train(tr, {}, f.canonical.surface, f.canonical.registry, f.canonical.alpha, f.rig, cfg);
  EXPECT_EQ(a.log.back().trainLoss, b.log.back().trainLoss);
  EXPECT_EQ(a.params.at("rat0").TB, b.params.at("rat0").TB);
}

TEST(Predict, YawOfInputRotatesOutput) {
  const auto& t = trainedTiny();
  const auto& ctx = context();
  const auto& p = t.result.params.at("rat0");
  const Points k = t.val[2].keypoints;
  const Points base = predictSurface(t.result.model, p, ctx, k);
  for (double a : {0.7, -2.2}) {
    const Mat3 r = rotZ(a);
    const Points out = predictSurface(t.result.model, p, ctx, rotated(k, r));
    EXPECT_LT((out - rotated(base, r)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(InferNewRat, ZeroStepsKeepsInitialisation) {
  const auto& t = trainedTiny();
  InferConfig ic;
  ic.steps = 0;
  const auto r = inferNewRat(t.val, context(), t.result.model, 1.25, 0.75, smallRat().rig, ic);
  const auto init = IndividualParams::initial(kKeypointCount, 12, 1.25, 0.75);
  EXPECT_EQ(r.params.logCP, init.logCP);
  EXPECT_EQ(r.params.TP, init.TP);
  EXPECT_EQ(r.params.logCB, init.logCB);
  EXPECT_EQ(r.params.TB, init.TB);
  EXPECT_EQ(r.predictions.size(), t.val.size());
  EXPECT_THROW(inferNewRat(t.val, context(), t.result.model, 0.0, 1.0, smallRat().rig, ic), ConfigError);
}

TEST(InferNewRat, NoSilhouettesWarns) {
  const auto& t = trainedTiny();
  std::vector<FrameSample> frames = t.val;
  for (auto& f : frames) f.masks.clear();
  const auto r = inferNewRat(frames, context(), t.result.model, 1.0, 1.0, smallRat().rig, InferConfig{});
  EXPECT_FALSE(r.warning.empty());
}

TEST(InferNewRat, SameRatStaysCloseToValidationLoss) {
  const auto& t = trainedTiny();
  const double val = t.result.log.back().valLoss;
  InferConfig ic;
  ic.steps = 10;
  const auto r = inferNewRat(t.val, context(), t.result.model, 1.0, 1.0, smallRat().rig, ic);
  double err = 0.0;
  for (size_t i = 0; i < t.val.size(); ++i) err += loss3D(r.predictions[i], t.val[i]);
  err /= static_cast<double>(t.val.size());
  EXPECT_LT(std::abs(err - val), 0.1 * val) << "adapted " << err << " validation " << val;
  ASSERT_EQ(r.silhouetteHistory.size(), 11u);
}

TEST(Checkpoint, ModelRoundTripPredictsIdentically) {
  const auto& t = trainedTiny();
  const auto& f = smallRat();
  const auto path = std::filesystem::temp_directory_path() / "rbf_model_roundtrip.ckpt";
  saveModel(path.string(), t.result.model, t.result.params);
  const LoadedModel back = loadModel(path.string(), f.canonical.surface);
  const auto& ctx = context();
  EXPECT_EQ(predictSurface(back.model, back.params.at("rat0"), ctx, t.val[0].keypoints),
            predictSurface(t.result.model, t.result.params.at("rat0"), ctx, t.val[0].keypoints));
  EXPECT_EQ(back.model.config().embedDim, 16);
  std::filesystem::remove(path);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  RbfConfig c;
  c.embedDim = 32;
  c.normalization = NormalizationMode::Disabled;
  c.encoding = EncodingKind::Euclidean;
  c.silhouetteViews = {1, 4};
  const RbfConfig back = rbfConfigFromJson(toJson(c));
  EXPECT_EQ(toJson(back), toJson(c));
  json::json bad = toJson(c);
  bad["dropout"] = 0.1;
  try {
    rbfConfigFromJson(bad);
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.dropout"), std::string::npos);
  }
  bad = toJson(c);
  bad["heads"] = 5;
  EXPECT_THROW(rbfConfigFromJson(bad), ConfigError);
  bad = toJson(c);
  bad["normalization"] = "sometimes";
  EXPECT_THROW(rbfConfigFromJson(bad), ConfigError);
}
