#include <gtest/gtest.h>

#include <filesystem>

#include "rbf/annotate/semi.hpp"
#include "rbf/synth/export.hpp"
#include "support/fixtures.hpp"

using namespace rbf;
using rbf::testing::smallRat;
using rbf::testing::trainedTiny;

namespace {

const model::CanonicalContext& context() {
  static const model::CanonicalContext ctx(smallRat().canonical.surface, 10);
  return ctx;
}

// Ground-truth frames stripped of their surface labels, paired with their detections.
std::vector<annotate::UnlabeledFrame> unlabeled(int first, int count) {
  const auto& f = smallRat();
  const auto byFrame = annotate::groupByFrame(f.data.detections);
  std::vector<annotate::UnlabeledFrame> out;
  for (int i = first; i < first + count; ++i) {
    annotate::UnlabeledFrame u;
    u.sample = f.data.frames[static_cast<size_t>(i)];
    u.sample.surface.setZero();
    std::fill(u.sample.visible.begin(), u.sample.visible.end(), 0);
    if (byFrame.count(i)) u.detections = byFrame.at(i);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

TEST(SemiAutomatic, TrainingFramesRoundTripToGroundTruth) {
  const auto& f = smallRat();
  const auto& t = trainedTiny();
  const auto frames = unlabeled(0, 30);
  const auto res = annotate::buildSemiAutomaticDataset(frames, f.rig, t.result.model, context(), t.result.params, f.canonical.registry);
  EXPECT_EQ(res.report.framesIn, 30);
  EXPECT_EQ(res.report.framesEmitted + res.report.framesSkipped, 30);
  ASSERT_GT(res.report.framesEmitted, 25);

  int matched = 0, total = 0;
  for (const auto& s : res.samples) {
    EXPECT_EQ(s.source, AnnotationSource::SemiAutomatic);
    const FrameSample& gt = f.data.frames[static_cast<size_t>(s.frame)];
    for (size_t c = 0; c < s.visible.size(); ++c) {
      if (!s.visible[c]) continue;
      ++total;
      matched += (s.surface.row(static_cast<Eigen::Index>(c)) - gt.surface.row(static_cast<Eigen::Index>(c))).norm() < 1e-6 ? 1 : 0;
    }
  }
  EXPECT_EQ(total, res.report.markersAssigned);
  EXPECT_GE(matched, static_cast<int>(0.95 * total)) << matched << " of " << total;
}

TEST(SemiAutomatic, VisibilityCountEqualsAcceptedAssignments) {
  const auto& f = smallRat();
  const auto& t = trainedTiny();
  const auto frames = unlabeled(30, 10);
  const auto res = annotate::buildSemiAutomaticDataset(frames, f.rig, t.result.model, context(), t.result.params, f.canonical.registry);
  int visible = 0;
  for (const auto& s : res.samples) {
    int own = 0;
    for (auto v : s.visible) own += v;
    EXPECT_GT(own, 0);
    visible += own;
  }
  EXPECT_EQ(visible, res.report.markersAssigned);
  EXPECT_EQ(res.report.distances.size(), static_cast<size_t>(visible));
  for (double d : res.report.distances) EXPECT_LE(d, annotate::MarkerConfig{}.rejectionRadius);
}

TEST(SemiAutomatic, FramesWithoutDetectionsAreSkipped) {
  const auto& f = smallRat();
  const auto& t = trainedTiny();
  auto frames = unlabeled(0, 4);
  frames[1].detections.clear();
  frames[3].detections.resize(1);
  const auto res = annotate::buildSemiAutomaticDataset(frames, f.rig, t.result.model, context(), t.result.params, f.canonical.registry);
  EXPECT_EQ(res.report.framesSkipped, 2);
  ASSERT_EQ(res.samples.size(), 2u);
  EXPECT_EQ(res.samples[0].frame, 0);
  EXPECT_EQ(res.samples[1].frame, 2);

  frames[0].sample.individual = "ghost";
  EXPECT_THROW(annotate::buildSemiAutomaticDataset(frames, f.rig, t.result.model, context(), t.result.params, f.canonical.registry),
               DataError);
}

TEST(DatasetIo, RoundTripPreservesEverything) {
  const auto& f = smallRat();
  data::Dataset d = synth::toDataset(f.data);
  d.frames[2].source = AnnotationSource::SemiAutomatic;
  d.frames[5].visible[3] = 0;
  d.frames[5].surface.row(3).setZero();
  const auto dir = std::filesystem::temp_directory_path() / "rbf_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  data::saveDataset(dir, d);
  const data::Dataset back = data::loadDataset(dir);

  EXPECT_EQ(back.anchorCount, d.anchorCount);
  EXPECT_EQ(back.frameInterval, d.frameInterval);
  ASSERT_EQ(back.cameras.size(), d.cameras.size());
  EXPECT_LT((back.cameras[4].rotation - d.cameras[4].rotation).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_EQ(back.individuals.size(), 1u);
  EXPECT_EQ(back.individuals[0].id, "rat0");
  EXPECT_EQ(back.individuals[0].markerCount, 12);
  ASSERT_EQ(back.references.size(), 1u);
  EXPECT_EQ(back.references[0].markers, d.references[0].markers);
  ASSERT_TRUE(back.references[0].surface.has_value());
  EXPECT_EQ(back.references[0].surface->faces, d.references[0].surface->faces);
  EXPECT_EQ(back.detections.size(), d.detections.size());
  EXPECT_EQ(back.frameIndex, d.frameIndex);
  ASSERT_EQ(back.frames.size(), d.frames.size());
  for (size_t i = 0; i < d.frames.size(); ++i) {
    const auto& a = d.frames[i];
    const auto& b = back.frames[i];
    EXPECT_EQ(b.individual, a.individual);
    EXPECT_EQ(b.frame, a.frame);
    EXPECT_EQ(b.source, a.source);
    EXPECT_EQ(b.visible, a.visible);
    EXPECT_EQ(b.keypoints, a.keypoints);
    EXPECT_EQ(b.surface, a.surface);
    ASSERT_EQ(b.masks.size(), a.masks.size());
    for (size_t v = 0; v < a.masks.size(); ++v) {
      ASSERT_EQ(static_cast<bool>(b.masks[v]), static_cast<bool>(a.masks[v]));
      if (a.masks[v]) EXPECT_EQ(b.masks[v]->inside, a.masks[v]->inside);
    }
  }
  EXPECT_EQ(back.select(AnnotationSource::SemiAutomatic).size(), 1u);
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, MalformedInputsAreDataErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "rbf_dataset_bad";
  std::filesystem::remove_all(dir);
  EXPECT_THROW(data::loadDataset(dir), DataError);
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "manifest.json") << R"({"format": "something-else", "version": 1})";
  }
  EXPECT_THROW(data::loadDataset(dir), DataError);
  const nlohmann::json frame = {{"index", 0}, {"individual", "a"}, {"frame", 0}, {"annotationSource", "manual"},
                                {"keypoints", nlohmann::json::array()}, {"surface", {nullptr, nullptr}}};
  int index = 0;
  EXPECT_THROW(data::frameFromJson(frame, 3, dir, index), DataError);
  std::filesystem::remove_all(dir);
}
