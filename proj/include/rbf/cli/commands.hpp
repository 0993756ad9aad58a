#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "rbf/annotate/semi.hpp"
#include "rbf/canonical/io.hpp"
#include "rbf/cli/report.hpp"
#include "rbf/cli/run_config.hpp"
#include "rbf/data/dataset.hpp"
#include "rbf/forecast/forecast.hpp"
#include "rbf/model/io.hpp"
#include "rbf/model/train.hpp"
#include "rbf/synth/export.hpp"

namespace rbf::cli {

namespace fs = std::filesystem;
using geom::Points;

enum class Annotations { Manual, ManualAndSemi };

inline Annotations annotationsFromName(const std::string& s) {
  if (s == "ma") return Annotations::Manual;
  if (s == "ma+saa") return Annotations::ManualAndSemi;
  throw ConfigError("--annotations must be 'ma' or 'ma+saa', got '" + s + "'");
}

// ---------------------------------------------------------------------------
// synth-gen

struct SynthSummary {
  int frames = 0;
  int markers = 0;
  int detections = 0;
};

inline SynthSummary synthGen(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto rig = mv::buildDomeRig(cfg.rig.focal, cfg.rig.width, cfg.rig.height).cameras;
  synth::GenerateConfig gc = cfg.generate;
  gc.keepMeshes = false;
  const auto ds = synth::generateDataset(cfg.individuals, rig, gc);
  data::saveDataset(out, synth::toDataset(ds));
  const SynthSummary s{static_cast<int>(ds.frames.size()), ds.anchorCount, static_cast<int>(ds.detections.size())};
  log << "synth-gen: " << s.frames << " frames, " << s.markers << " markers, " << s.detections << " detections, "
      << ds.individuals.size() << " individual(s) -> " << out.string() << "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Dataset subsets

namespace detail {

inline data::Dataset emptyLike(const data::Dataset& d) {
  data::Dataset out;
  out.cameras = d.cameras;
  out.anchorCount = d.anchorCount;
  out.frameInterval = d.frameInterval;
  out.individuals = d.individuals;
  out.references = d.references;
  return out;
}

// Keeps only detections whose key belongs to a kept frame.
inline void attachDetections(data::Dataset& out, const data::Dataset& from) {
  const std::set<int> keys(out.frameIndex.begin(), out.frameIndex.end());
  for (const auto& det : from.detections) {
    if (keys.count(det.frame)) out.detections.push_back(det);
  }
}

inline void stripLabels(FrameSample& s) {
  s.surface.setZero();
  std::fill(s.visible.begin(), s.visible.end(), 0);
}

inline data::Dataset mergeDatasets(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw ConfigError("at least one dataset is required");
  data::Dataset merged;
  for (size_t i = 0; i < dirs.size(); ++i) {
    data::Dataset d = data::loadDataset(dirs[i]);
    if (i == 0) {
      merged = std::move(d);
      continue;
    }
    if (d.anchorCount != merged.anchorCount) throw DataError(dirs[i].string() + ": anchor count differs from " + dirs[0].string());
    merged.frames.insert(merged.frames.end(), d.frames.begin(), d.frames.end());
    merged.frameIndex.insert(merged.frameIndex.end(), d.frameIndex.begin(), d.frameIndex.end());
  }
  return merged;
}

}  // namespace detail

struct Splits {
  data::Dataset manual, unlabeled, val, test;
};

// Per individual, consecutive blocks in the order manual, unlabeled, val, test.
// Unlabeled frames lose their surface labels but keep their detections.
inline Splits splitDataset(const data::Dataset& d, const SplitConfig& split) {
  Splits s{detail::emptyLike(d), detail::emptyLike(d), detail::emptyLike(d), detail::emptyLike(d)};
  std::map<std::string, int> seen;
  for (size_t i = 0; i < d.frames.size(); ++i) {
    const FrameSample& f = d.frames[i];
    const int k = seen[f.individual]++;
    data::Dataset* target = nullptr;
    if (k < split.manual) {
      target = &s.manual;
    } else if (k < split.manual + split.unlabeled) {
      target = &s.unlabeled;
    } else if (k < split.manual + split.unlabeled + split.val) {
      target = &s.val;
    } else if (k < split.total()) {
      target = &s.test;
    } else {
      continue;
    }
    target->frames.push_back(f);
    target->frameIndex.push_back(d.frameIndex[i]);
    if (target == &s.unlabeled) detail::stripLabels(target->frames.back());
  }
  for (const auto& [id, n] : seen) {
    if (n < split.total()) {
      throw ConfigError("split needs " + std::to_string(split.total()) + " frames per individual, " + id + " has " + std::to_string(n));
    }
  }
  detail::attachDetections(s.unlabeled, d);
  return s;
}

// ---------------------------------------------------------------------------
// canonical-build

inline canonical::BuildResult canonicalBuild(const RunConfig& cfg, const fs::path& dataDir, const fs::path& out, std::ostream& log) {
  const data::Dataset d = data::loadDataset(dataDir);
  if (d.references.empty()) throw DataError(dataDir.string() + " has no reference captures");
  std::string base = cfg.canonicalBase;
  if (base.empty()) {
    for (const auto& r : d.references) {
      if (r.surface && (base.empty() || r.individual < base)) base = r.individual;
    }
  }
  const canonical::ReferenceCapture* ref = nullptr;
  for (const auto& r : d.references) {
    if (r.individual == base) ref = &r;
  }
  if (!ref || !ref->surface) throw DataError("base individual '" + base + "' has no reference surface");
  const auto b = canonical::buildCanonical(d.references, *ref->surface, base, cfg.canonical);
  canonical::saveCanonical(out, b);
  log << "canonical-build: base " << base << ", N = " << b.surface.anchorCount() << "\n";
  for (const auto& [id, a] : b.alpha) log << "  alpha[" << id << "] = " << num(a) << "\n";
  return b;
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  int trainFrames = 0;
  double finalTrainLoss = 0.0;
  double finalValLoss = 0.0;
};

inline TrainSummary trainCommand(const RunConfig& cfg, const std::vector<fs::path>& dataDirs, const std::vector<fs::path>& valDirs,
                                 const fs::path& canonicalDir, Annotations annotations, const fs::path& out, std::ostream& log) {
  const data::Dataset d = detail::mergeDatasets(dataDirs);
  std::vector<FrameSample> trainSet;
  for (const auto& f : d.frames) {
    if (f.source == AnnotationSource::Manual || annotations == Annotations::ManualAndSemi) trainSet.push_back(f);
  }
  std::vector<FrameSample> valSet;
  if (!valDirs.empty()) valSet = detail::mergeDatasets(valDirs).frames;
  const auto canon = canonical::loadCanonical(canonicalDir);
  log << "train: " << trainSet.size() << " frames (" << (annotations == Annotations::Manual ? "ma" : "ma+saa") << "), "
      << valSet.size() << " validation frames\n";
  const auto r = model::train(trainSet, valSet, canon.surface, canon.registry, canon.alpha, d.cameras, cfg.model,
                              [&](const model::EpochLog& e) {
                                if (e.epoch % 10 == 0 || !std::isnan(e.silhouette)) {
                                  log << "  epoch " << e.epoch << " train " << svg::label(e.trainLoss) << " val "
                                      << svg::label(e.valLoss) << "\n";
                                }
                              });
  fs::create_directories(out);
  model::saveModel((out / "model.ckpt").string(), r.model, r.params);
  auto csv = openOut((out / "loss.csv").string());
  csv << "epoch,train_loss,val_loss,silhouette\n";
  for (const auto& e : r.log) csv << e.epoch << ',' << num(e.trainLoss) << ',' << num(e.valLoss) << ',' << num(e.silhouette) << '\n';
  TrainSummary s{static_cast<int>(trainSet.size()), r.log.empty() ? std::nan("") : r.log.back().trainLoss,
                 r.log.empty() ? std::nan("") : r.log.back().valLoss};
  log << "train: final loss " << num(s.finalTrainLoss) << " -> " << (out / "model.ckpt").string() << "\n";
  return s;
}

// ---------------------------------------------------------------------------
// annotate

inline annotate::SemiReport annotateCommand(const RunConfig& cfg, const fs::path& dataDir, const fs::path& checkpoint,
                                            const fs::path& canonicalDir, const fs::path& out, std::ostream& log) {
  const data::Dataset d = data::loadDataset(dataDir);
  const auto canon = canonical::loadCanonical(canonicalDir);
  const auto loaded = model::loadModel(checkpoint.string(), canon.surface);
  const model::CanonicalContext ctx(canon.surface, loaded.model.config().arapIterations);

  const auto byFrame = annotate::groupByFrame(d.detections);
  std::vector<annotate::UnlabeledFrame> frames;
  std::map<std::pair<std::string, int>, int> keyOf;
  for (size_t i = 0; i < d.frames.size(); ++i) {
    annotate::UnlabeledFrame u{d.frames[i], {}};
    detail::stripLabels(u.sample);
    const auto it = byFrame.find(d.frameIndex[i]);
    if (it != byFrame.end()) u.detections = it->second;
    keyOf[{u.sample.individual, u.sample.frame}] = d.frameIndex[i];
    frames.push_back(std::move(u));
  }
  if (d.detections.empty()) log << "annotate: warning: no marker detections in " << dataDir.string() << "; output is empty\n";
  const auto res = annotate::buildSemiAutomaticDataset(frames, d.cameras, loaded.model, ctx, loaded.params, canon.registry, cfg.markers);

  data::Dataset saa = detail::emptyLike(d);
  saa.frames = res.samples;
  for (const auto& s : res.samples) saa.frameIndex.push_back(keyOf.at({s.individual, s.frame}));
  data::saveDataset(out, saa);

  auto csv = openOut((out / "annotate_report.csv").string());
  csv << "individual,frame,assigned,mean_distance_mm,max_distance_mm\n";
  size_t at = 0;
  for (const auto& s : res.samples) {
    const int n = s.visibleCount();
    double sum = 0.0, mx = 0.0;
    for (int k = 0; k < n; ++k, ++at) {
      sum += res.report.distances[at];
      mx = std::max(mx, res.report.distances[at]);
    }
    csv << s.individual << ',' << s.frame << ',' << n << ',' << num(sum / n) << ',' << num(mx) << '\n';
  }
  log << "annotate: " << res.report.framesEmitted << " of " << res.report.framesIn << " frames emitted, "
      << res.report.markersAssigned << " of " << res.report.markersTriangulated << " triangulated markers assigned, mean distance "
      << svg::label(meanOf(res.report.distances)) << " mm\n";
  return res.report;
}

// ---------------------------------------------------------------------------
// eval

struct EvalSummary {
  double mean = 0.0;
  long points = 0;
  Histogram histogram;
};

// Individuals absent from the checkpoint are adapted from their silhouettes.
inline EvalSummary evalCommand(const RunConfig& cfg, const fs::path& dataDir, const fs::path& checkpoint, const fs::path& canonicalDir,
                               const fs::path& out, bool oracle, std::ostream& log) {
  const data::Dataset d = data::loadDataset(dataDir);
  const auto canon = canonical::loadCanonical(canonicalDir);
  const auto loaded = model::loadModel(checkpoint.string(), canon.surface);
  const model::CanonicalContext ctx(canon.surface, loaded.model.config().arapIterations);

  std::map<std::string, std::vector<FrameSample>> byId;
  for (const auto& f : d.frames) {
    if (f.visibleCount() > 0) byId[f.individual].push_back(f);
  }
  if (byId.empty()) throw DataError(dataDir.string() + " has no labelled frames");

  fs::create_directories(out);
  auto csv = openOut((out / "metrics.csv").string());
  csv << "individual,frames,points,mean_mm,median_mm,max_mm,adapted\n";
  std::vector<double> all;
  for (const auto& [id, samples] : byId) {
    std::vector<Points> predictions;
    bool adapted = false;
    if (oracle) {
      for (const auto& s : samples) predictions.push_back(s.surface);
    } else if (const auto it = loaded.params.find(id); it != loaded.params.end()) {
      std::vector<Points> kps;
      for (const auto& s : samples) kps.push_back(s.keypoints);
      predictions = model::predictSurfaces(loaded.model, it->second, ctx, kps);
    } else {
      const auto a = canon.alpha.find(id);
      if (a == canon.alpha.end()) throw DataError("individual " + id + " is in neither the checkpoint nor the canonical surface");
      const auto r = model::inferNewRat(samples, ctx, loaded.model, a->second, a->second, d.cameras, cfg.infer);
      if (!r.warning.empty()) log << "eval: warning: " << id << ": " << r.warning << "\n";
      predictions = r.predictions;
      adapted = true;
    }
    const auto errs = model::pointErrors(predictions, samples);
    all.insert(all.end(), errs.begin(), errs.end());
    csv << id << ',' << samples.size() << ',' << errs.size() << ',' << num(meanOf(errs)) << ',' << num(medianOf(errs)) << ','
        << num(errs.empty() ? 0.0 : *std::max_element(errs.begin(), errs.end())) << ',' << (adapted ? 1 : 0) << '\n';
  }
  EvalSummary s{meanOf(all), static_cast<long>(all.size()), makeHistogram(all, cfg.eval.bins)};
  csv << "all,," << all.size() << ',' << num(s.mean) << ',' << num(medianOf(all)) << ','
      << num(*std::max_element(all.begin(), all.end())) << ",\n";
  writeHistogramCsv((out / "histogram.csv").string(), s.histogram);
  writeHistogramSvg((out / "errors.svg").string(), s.histogram, s.mean, "Surface point L2 error", "error (mm)");
  log << "eval: " << s.points << " points, mean L2 " << svg::label(s.mean) << " mm\n";
  return s;
}

// ---------------------------------------------------------------------------
// Forecasting

struct LabelledSequence {
  forecast::KeypointSequence keypoints;
  std::vector<const FrameSample*> samples;
};

// Splits each individual's frames into runs of consecutive frame numbers.
inline std::vector<LabelledSequence> sequencesOf(const data::Dataset& d) {
  std::map<std::string, std::vector<const FrameSample*>> byId;
  for (const auto& f : d.frames) byId[f.individual].push_back(&f);
  std::vector<LabelledSequence> out;
  for (auto& [_, frames] : byId) {
    std::sort(frames.begin(), frames.end(), [](const FrameSample* a, const FrameSample* b) { return a->frame < b->frame; });
    for (size_t i = 0; i < frames.size(); ++i) {
      if (i == 0 || frames[i]->frame != frames[i - 1]->frame + 1) {
        out.emplace_back();
        out.back().keypoints.frameInterval = d.frameInterval;
      }
      out.back().keypoints.frames.push_back(frames[i]->keypoints);
      out.back().samples.push_back(frames[i]);
    }
  }
  return out;
}

inline forecast::ForecastTrainResult forecastTrainCommand(const RunConfig& cfg, const std::vector<fs::path>& dataDirs,
                                                           const fs::path& out, std::ostream& log) {
  const data::Dataset d = detail::mergeDatasets(dataDirs);
  std::vector<forecast::KeypointSequence> seqs;
  for (auto& s : sequencesOf(d)) {
    if (static_cast<int>(s.keypoints.frames.size()) > cfg.forecast.pastFrames) seqs.push_back(std::move(s.keypoints));
  }
  log << "forecast-train: " << seqs.size() << " sequence(s)\n";
  auto r = forecast::trainForecaster(seqs, cfg.forecast);
  fs::create_directories(out);
  forecast::saveForecaster((out / "forecast.ckpt").string(), r.model);
  auto csv = openOut((out / "forecast_loss.csv").string());
  csv << "epoch,train_loss\n";
  for (const auto& e : r.log) csv << e.epoch << ',' << num(e.trainLoss) << '\n';
  log << "forecast-train: final loss " << num(r.log.empty() ? std::nan("") : r.log.back().trainLoss) << "\n";
  return r;
}

struct HorizonRow {
  int horizon = 0;
  long windows = 0;
  double modelMedian = 0.0, modelMean = 0.0, constantMedian = 0.0, constantMean = 0.0;
  double surfaceMean = std::nan("");
};

// `pastFrames` < 1 accepts the checkpoint's window length. The surface
// columns are filled when a surface checkpoint is given.
inline std::vector<HorizonRow> forecastCommand(const fs::path& dataDir, const fs::path& forecaster, const std::vector<int>& horizons,
                                               int pastFrames, const fs::path& surfaceCheckpoint, const fs::path& canonicalDir,
                                               const fs::path& out, std::ostream& log) {
  if (horizons.empty()) throw ConfigError("--horizons must list at least one value");
  const auto f = forecast::loadForecaster(forecaster.string());
  const int tp = f.config().pastFrames;
  if (pastFrames > 0 && pastFrames != tp) {
    throw ConfigError("--past " + std::to_string(pastFrames) + " does not match the checkpoint's window of " + std::to_string(tp));
  }
  const data::Dataset d = data::loadDataset(dataDir);
  const auto seqs = sequencesOf(d);
  std::vector<forecast::KeypointSequence> kseqs;
  for (const auto& s : seqs) kseqs.push_back(s.keypoints);

  std::optional<canonical::BuildResult> canon;
  std::optional<model::LoadedModel> surface;
  std::optional<model::CanonicalContext> ctx;
  if (!surfaceCheckpoint.empty()) {
    if (canonicalDir.empty()) throw ConfigError("--model needs --canonical");
    canon = canonical::loadCanonical(canonicalDir);
    surface.emplace(model::loadModel(surfaceCheckpoint.string(), canon->surface));
    ctx.emplace(canon->surface, surface->model.config().arapIterations);
  }

  std::vector<HorizonRow> rows;
  for (int h : horizons) {
    const auto e = forecast::horizonErrors(f, kseqs, h);
    HorizonRow row{h, static_cast<long>(e.model.size() / kKeypointCount), medianOf(e.model), meanOf(e.model), medianOf(e.constant),
                   meanOf(e.constant)};
    if (surface) {
      std::vector<double> errs;
      for (const auto& s : seqs) {
        const auto it = surface->params.find(s.samples.front()->individual);
        if (it == surface->params.end()) throw DataError("surface checkpoint has no parameters for " + s.samples.front()->individual);
        for (size_t i = 0; i + static_cast<size_t>(tp + h) <= s.samples.size(); ++i) {
          const FrameSample& target = *s.samples[i + static_cast<size_t>(tp + h - 1)];
          if (target.visibleCount() == 0) continue;
          const std::vector<Points> past(s.keypoints.frames.begin() + static_cast<std::ptrdiff_t>(i),
                                         s.keypoints.frames.begin() + static_cast<std::ptrdiff_t>(i + static_cast<size_t>(tp)));
          const Points kp = forecast::forecastRollout(f, past, h).back();
          errs.push_back(model::loss3D(model::predictSurface(surface->model, it->second, *ctx, kp), target));
        }
      }
      row.surfaceMean = meanOf(errs);
    }
    rows.push_back(row);
  }

  fs::create_directories(out);
  auto csv = openOut((out / "forecast.csv").string());
  csv << "horizon,windows,keypoint_median_mm,keypoint_mean_mm,constant_median_mm,constant_mean_mm,surface_mean_mm\n";
  std::vector<std::string> cats;
  Series modelSeries{"forecast (median)", "steelblue", {}}, constSeries{"constant position (median)", "darkorange", {}};
  for (const auto& r : rows) {
    csv << r.horizon << ',' << r.windows << ',' << num(r.modelMedian) << ',' << num(r.modelMean) << ',' << num(r.constantMedian) << ','
        << num(r.constantMean) << ',' << num(r.surfaceMean) << '\n';
    cats.push_back(std::to_string(r.horizon));
    modelSeries.values.push_back(r.modelMedian);
    constSeries.values.push_back(r.constantMedian);
    log << "forecast: horizon " << r.horizon << " median " << svg::label(r.modelMedian) << " mm (constant "
        << svg::label(r.constantMedian) << " mm)\n";
  }
  writeGroupedBarsSvg((out / "forecast.svg").string(), cats, {modelSeries, constSeries}, "Keypoint forecast error",
                      "frames ahead", "median L2 error (mm)");
  return rows;
}

// ---------------------------------------------------------------------------
// pipeline

struct PipelineSummary {
  EvalSummary manualOnly, withSemi;
  int manualFrames = 0, combinedFrames = 0;
};

// synth-gen, split, canonical-build, train (ma), annotate, train (ma+saa),
// and eval of both models on the test split.
inline PipelineSummary pipeline(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  synthGen(cfg, out / "data", log);
  const Splits s = splitDataset(data::loadDataset(out / "data"), cfg.split);
  data::saveDataset(out / "splits" / "manual", s.manual);
  data::saveDataset(out / "splits" / "unlabeled", s.unlabeled);
  data::saveDataset(out / "splits" / "val", s.val);
  data::saveDataset(out / "splits" / "test", s.test);
  canonicalBuild(cfg, out / "data", out / "canonical", log);

  const std::vector<fs::path> val{out / "splits" / "val"};
  PipelineSummary p;
  p.manualFrames = trainCommand(cfg, {out / "splits" / "manual"}, val, out / "canonical", Annotations::Manual, out / "train_ma", log)
                       .trainFrames;
  annotateCommand(cfg, out / "splits" / "unlabeled", out / "train_ma" / "model.ckpt", out / "canonical", out / "saa", log);
  p.combinedFrames = trainCommand(cfg, {out / "splits" / "manual", out / "saa"}, val, out / "canonical", Annotations::ManualAndSemi,
                                  out / "train_ma_saa", log)
                         .trainFrames;
  p.manualOnly = evalCommand(cfg, out / "splits" / "test", out / "train_ma" / "model.ckpt", out / "canonical", out / "eval_ma", false, log);
  p.withSemi =
      evalCommand(cfg, out / "splits" / "test", out / "train_ma_saa" / "model.ckpt", out / "canonical", out / "eval_ma_saa", false, log);

  auto csv = openOut((out / "summary.csv").string());
  csv << "annotations,train_frames,test_points,test_mean_mm\n";
  csv << "ma," << p.manualFrames << ',' << p.manualOnly.points << ',' << num(p.manualOnly.mean) << '\n';
  csv << "ma+saa," << p.combinedFrames << ',' << p.withSemi.points << ',' << num(p.withSemi.mean) << '\n';
  log << "pipeline: MA " << svg::label(p.manualOnly.mean) << " mm, MA+SAA " << svg::label(p.withSemi.mean) << " mm\n";
  return p;
}

}  // namespace rbf::cli
