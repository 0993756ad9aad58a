#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbf/cli/commands.hpp"

using namespace rbf;
namespace fs = std::filesystem;

namespace {

cli::RunConfig smokeConfig() {
  auto c = cli::loadRunConfig(fs::path(RBF_SOURCE_DIR) / "configs" / "smoke.json");
  c.applySeed(7);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int countLines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rbf_cli_" + name);
  fs::remove_all(p);
  return p;
}

// One pipeline run shared by the tests below.
struct Run {
  fs::path root;
  cli::PipelineSummary summary;
  std::string log;
};

const Run& pipelineRun() {
  static const Run r = [] {
    Run run;
    run.root = scratch("pipeline");
    std::ostringstream log;
    run.summary = cli::pipeline(smokeConfig(), run.root, log);
    run.log = log.str();
    return run;
  }();
  return r;
}

int runCli(const std::string& args) {
  const std::string cmd = std::string(RBF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(RunConfig, JsonRoundTripAndStrictKeys) {
  const auto c = smokeConfig();
  EXPECT_EQ(cli::toJson(cli::runConfigFromJson(cli::toJson(c))), cli::toJson(c));
  auto j = cli::toJson(c);
  j["synth"]["noise"]["blur"] = 1.0;
  try {
    cli::runConfigFromJson(j);
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("synth.noise.blur"), std::string::npos) << e.what();
  }
  j = cli::toJson(c);
  j["schemaVersion"] = 2;
  EXPECT_THROW(cli::runConfigFromJson(j), ConfigError);
  j.erase("schemaVersion");
  EXPECT_THROW(cli::runConfigFromJson(j), ConfigError);
  j = cli::toJson(c);
  j["split"]["manual"] = "ten";
  EXPECT_THROW(cli::runConfigFromJson(j), ConfigError);
}

TEST(RunConfig, SeedReachesEveryStream) {
  cli::RunConfig a, b;
  a.applySeed(1);
  b.applySeed(2);
  EXPECT_NE(a.generate.seed, b.generate.seed);
  EXPECT_NE(a.model.seed, b.model.seed);
  EXPECT_NE(a.forecast.seed, b.forecast.seed);
  EXPECT_NE(a.individuals[0].seed, b.individuals[0].seed);
}

TEST(Report, HistogramCountsAndMean) {
  std::vector<double> v;
  for (int i = 0; i < 997; ++i) v.push_back(std::fmod(i * 0.731, 13.0));
  const auto h = cli::makeHistogram(v, 17);
  EXPECT_EQ(h.total(), 997);
  EXPECT_NEAR(h.weightedMean(), cli::meanOf(v), 1e-9);
  EXPECT_EQ(cli::makeHistogram({0.0, 0.0}, 4).counts[0], 2);
  EXPECT_THROW(cli::makeHistogram(v, 0), ConfigError);
  EXPECT_EQ(cli::medianOf({3.0, 1.0, 2.0, 10.0}), 2.5);
}

TEST(SynthGen, FrameCountAndDeterministicManifest) {
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  std::ostringstream log;
  const auto s = cli::synthGen(smokeConfig(), a, log);
  cli::synthGen(smokeConfig(), b, log);
  EXPECT_EQ(s.frames, 40);
  EXPECT_EQ(data::loadDataset(a).frames.size(), 40u);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  EXPECT_EQ(slurp(a / "frames" / "000017.json"), slurp(b / "frames" / "000017.json"));
  EXPECT_NE(log.str().find("40 frames, 12 markers"), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Split, BlocksAndStrippedLabels) {
  const auto& r = pipelineRun();
  const auto manual = data::loadDataset(r.root / "splits" / "manual");
  const auto unlabeled = data::loadDataset(r.root / "splits" / "unlabeled");
  const auto test = data::loadDataset(r.root / "splits" / "test");
  EXPECT_EQ(manual.frames.size(), 10u);
  EXPECT_EQ(unlabeled.frames.size(), 20u);
  EXPECT_EQ(test.frames.size(), 6u);
  EXPECT_EQ(test.frames.front().frame, 34);
  for (const auto& f : unlabeled.frames) EXPECT_EQ(f.visibleCount(), 0);
  EXPECT_FALSE(unlabeled.detections.empty());
  EXPECT_TRUE(manual.detections.empty());
  cli::SplitConfig big;
  big.manual = 100;
  EXPECT_THROW(cli::splitDataset(manual, big), ConfigError);
}

TEST(CanonicalBuild, AnchorCountAndAlphaLogged) {
  const auto& r = pipelineRun();
  const auto b = canonical::loadCanonical(r.root / "canonical");
  EXPECT_EQ(b.surface.anchorCount(), 12);
  EXPECT_NE(r.log.find("alpha[rat0]"), std::string::npos);
  const auto again = scratch("canonical_again");
  std::ostringstream log;
  cli::canonicalBuild(smokeConfig(), r.root / "data", again, log);
  EXPECT_EQ(slurp(again / "canonical.json"), slurp(r.root / "canonical" / "canonical.json"));
  EXPECT_EQ(slurp(again / "canonical.obj"), slurp(r.root / "canonical" / "canonical.obj"));
  fs::remove_all(again);
}

TEST(Train, LossRowsAndAnnotationFilter) {
  const auto& r = pipelineRun();
  EXPECT_EQ(countLines(r.root / "train_ma" / "loss.csv"), 1 + smokeConfig().model.epochs);
  EXPECT_EQ(r.summary.manualFrames, 10);
  EXPECT_GT(r.summary.combinedFrames, r.summary.manualFrames);
  // The same inputs with ma drop the semi-automatic frames.
  const auto out = scratch("train_filter");
  std::ostringstream log;
  auto cfg = smokeConfig();
  cfg.model.epochs = 1;
  const auto s = cli::trainCommand(cfg, {r.root / "splits" / "manual", r.root / "saa"}, {}, r.root / "canonical", cli::Annotations::Manual,
                                   out, log);
  EXPECT_EQ(s.trainFrames, 10);
  fs::remove_all(out);
}

TEST(Train, FixedSeedReproducesFinalLoss) {
  const auto& r = pipelineRun();
  const auto out = scratch("train_repeat");
  std::ostringstream log;
  const auto s = cli::trainCommand(smokeConfig(), {r.root / "splits" / "manual"}, {r.root / "splits" / "val"}, r.root / "canonical",
                                   cli::Annotations::Manual, out, log);
  EXPECT_EQ(slurp(out / "loss.csv"), slurp(r.root / "train_ma" / "loss.csv"));
  EXPECT_EQ(slurp(out / "model.ckpt"), slurp(r.root / "train_ma" / "model.ckpt"));
  EXPECT_TRUE(std::isfinite(s.finalTrainLoss));
  fs::remove_all(out);
}

TEST(Annotate, ReportAndEmptyInput) {
  const auto& r = pipelineRun();
  const auto saa = data::loadDataset(r.root / "saa");
  EXPECT_LE(saa.frames.size(), 20u);
  EXPECT_GT(saa.frames.size(), 0u);
  for (const auto& f : saa.frames) EXPECT_EQ(f.source, AnnotationSource::SemiAutomatic);
  EXPECT_EQ(countLines(r.root / "saa" / "annotate_report.csv"), 1 + static_cast<int>(saa.frames.size()));

  auto noDetections = data::loadDataset(r.root / "splits" / "unlabeled");
  noDetections.detections.clear();
  const auto in = scratch("annotate_in"), out = scratch("annotate_out");
  data::saveDataset(in, noDetections);
  std::ostringstream log;
  const auto rep = cli::annotateCommand(smokeConfig(), in, r.root / "train_ma" / "model.ckpt", r.root / "canonical", out, log);
  EXPECT_EQ(rep.framesEmitted, 0);
  EXPECT_TRUE(data::loadDataset(out).frames.empty());
  EXPECT_NE(log.str().find("warning"), std::string::npos);
  fs::remove_all(in);
  fs::remove_all(out);
}

TEST(Eval, HistogramMatchesMetricsAndOracleIsZero) {
  const auto& r = pipelineRun();
  const auto& e = r.summary.manualOnly;
  EXPECT_EQ(e.histogram.total(), e.points);
  EXPECT_NEAR(e.histogram.weightedMean(), e.mean, 1e-9);
  EXPECT_TRUE(fs::exists(r.root / "eval_ma" / "errors.svg"));
  EXPECT_NE(slurp(r.root / "eval_ma" / "errors.svg").find("mean "), std::string::npos);

  const auto out = scratch("oracle");
  std::ostringstream log;
  const auto o = cli::evalCommand(smokeConfig(), r.root / "splits" / "test", r.root / "train_ma" / "model.ckpt", r.root / "canonical", out,
                                  true, log);
  EXPECT_EQ(o.mean, 0.0);
  EXPECT_EQ(o.points, e.points);
  fs::remove_all(out);
}

TEST(Forecast, OneRowPerHorizonAndWindowCheck) {
  const auto& r = pipelineRun();
  const auto ck = scratch("forecast_ckpt"), out = scratch("forecast_out");
  std::ostringstream log;
  cli::forecastTrainCommand(smokeConfig(), {r.root / "data"}, ck, log);
  const auto rows =
      cli::forecastCommand(r.root / "data", ck / "forecast.ckpt", {1, 2, 4}, 3, r.root / "train_ma" / "model.ckpt", r.root / "canonical", out, log);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(countLines(out / "forecast.csv"), 4);
  EXPECT_EQ(rows[0].windows, 37);
  EXPECT_TRUE(std::isfinite(rows[2].surfaceMean));
  EXPECT_TRUE(fs::exists(out / "forecast.svg"));
  EXPECT_THROW(cli::forecastCommand(r.root / "data", ck / "forecast.ckpt", {1}, 5, {}, {}, out, log), ConfigError);
  fs::remove_all(ck);
  fs::remove_all(out);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("exit");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"schemaVersion": 1, "synth": {"frameCount": "many"}})";
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(runCli("synth-gen --config " + (dir / "bad.json").string() + " --out " + (dir / "x").string()), 2);
  EXPECT_EQ(runCli("synth-gen --config " + (dir / "broken.json").string() + " --out " + (dir / "x").string()), 2);
  EXPECT_EQ(runCli("synth-gen --bogus"), 2);
  EXPECT_EQ(runCli("eval --data " + (dir / "missing").string() + " --model m --canonical c --out " + (dir / "e").string()), 3);
  EXPECT_EQ(runCli("print-config"), 0);
  fs::remove_all(dir);
}
