#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rbf/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace rbf;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int threads = 1;
};

void addCommon(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "master seed for every random stream");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

cli::RunConfig resolve(const Common& c) {
  cli::RunConfig cfg = c.config.empty() ? cli::RunConfig{} : cli::loadRunConfig(c.config);
  cfg.applySeed(c.seed);
  cfg.validate();
  return cfg;
}

// Timestamps live only here, never in the artifacts.
void appendRunLog(const std::string& out, int argc, char** argv, int code) {
  if (out.empty() || !fs::is_directory(out)) return;
  std::ofstream log(fs::path(out) / "run.log", std::ios::app);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[64];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  log << stamp << " exit=" << code << " :";
  for (int i = 0; i < argc; ++i) log << ' ' << argv[i];
  log << '\n';
}

std::vector<fs::path> paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surface-point estimation from keypoints: synthetic data, training, annotation, evaluation and forecasting"};
  app.require_subcommand(1);
  Common common;
  std::string out, data, canonicalDir, checkpoint, forecaster, annotations = "ma";
  std::vector<std::string> dataList, valList;
  std::vector<int> horizons{1, 3, 5};
  int past = 0;
  bool oracle = false;

  auto* printConfig = app.add_subcommand("print-config", "write the effective configuration as JSON");
  addCommon(printConfig, common);

  auto* synthGen = app.add_subcommand("synth-gen", "generate a synthetic dataset");
  addCommon(synthGen, common);
  synthGen->add_option("--out", out, "dataset directory")->required();

  auto* canonical = app.add_subcommand("canonical-build", "build the canonical body surface");
  addCommon(canonical, common);
  canonical->add_option("--data", data, "dataset directory")->required();
  canonical->add_option("--out", out, "canonical surface directory")->required();

  auto* train = app.add_subcommand("train", "train the surface model");
  addCommon(train, common);
  train->add_option("--data", dataList, "training dataset directories")->required();
  train->add_option("--val", valList, "validation dataset directories");
  train->add_option("--canonical", canonicalDir, "canonical surface directory")->required();
  train->add_option("--annotations", annotations, "ma or ma+saa")->check(CLI::IsMember({"ma", "ma+saa"}));
  train->add_option("--out", out, "output directory (model.ckpt, loss.csv)")->required();

  auto* annotate = app.add_subcommand("annotate", "label unlabeled frames from marker detections");
  addCommon(annotate, common);
  annotate->add_option("--data", data, "unlabeled dataset directory")->required();
  annotate->add_option("--model", checkpoint, "surface model checkpoint")->required();
  annotate->add_option("--canonical", canonicalDir, "canonical surface directory")->required();
  annotate->add_option("--out", out, "output dataset directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a surface model on labelled frames");
  addCommon(eval, common);
  eval->add_option("--data", data, "test dataset directory")->required();
  eval->add_option("--model", checkpoint, "surface model checkpoint")->required();
  eval->add_option("--canonical", canonicalDir, "canonical surface directory")->required();
  eval->add_option("--out", out, "report directory")->required();
  eval->add_flag("--oracle", oracle, "score the ground truth against itself");

  auto* forecastTrain = app.add_subcommand("forecast-train", "train the keypoint forecaster");
  addCommon(forecastTrain, common);
  forecastTrain->add_option("--data", dataList, "dataset directories")->required();
  forecastTrain->add_option("--out", out, "output directory (forecast.ckpt, forecast_loss.csv)")->required();

  auto* fc = app.add_subcommand("forecast", "score keypoint forecasts per horizon");
  addCommon(fc, common);
  fc->add_option("--data", data, "dataset directory")->required();
  fc->add_option("--forecaster", forecaster, "forecast checkpoint")->required();
  fc->add_option("--horizons", horizons, "frames ahead")->delimiter(',');
  fc->add_option("--past", past, "expected past window length");
  fc->add_option("--model", checkpoint, "surface model checkpoint for surface errors");
  fc->add_option("--canonical", canonicalDir, "canonical surface directory");
  fc->add_option("--out", out, "report directory")->required();

  auto* pipeline = app.add_subcommand("pipeline", "generate, train with and without semi-automatic labels, evaluate");
  addCommon(pipeline, common);
  pipeline->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  int code = 0;
  try {
    const cli::RunConfig cfg = resolve(common);
    Eigen::setNbThreads(common.threads);
    auto& log = std::cout;
    if (*printConfig) {
      std::cout << cli::toJson(cfg).dump(2) << '\n';
    } else if (*synthGen) {
      cli::synthGen(cfg, out, log);
    } else if (*canonical) {
      cli::canonicalBuild(cfg, data, out, log);
    } else if (*train) {
      cli::trainCommand(cfg, paths(dataList), paths(valList), canonicalDir, cli::annotationsFromName(annotations), out, log);
    } else if (*annotate) {
      cli::annotateCommand(cfg, data, checkpoint, canonicalDir, out, log);
    } else if (*eval) {
      cli::evalCommand(cfg, data, checkpoint, canonicalDir, out, oracle, log);
    } else if (*forecastTrain) {
      cli::forecastTrainCommand(cfg, paths(dataList), out, log);
    } else if (*fc) {
      cli::forecastCommand(data, forecaster, horizons, past, checkpoint, canonicalDir, out, log);
    } else if (*pipeline) {
      cli::pipeline(cfg, out, log);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    code = 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    code = 3;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    code = 3;
  } catch (const DegeneracyError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    code = 4;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    code = 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = 1;
  }
  appendRunLog(out, argc, argv, code);
  return code;
}
