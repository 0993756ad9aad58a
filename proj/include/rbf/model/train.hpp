#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rbf/autodiff/optim.hpp"
#include "rbf/canonical/types.hpp"
#include "rbf/model/loss.hpp"
#include "rbf/model/model.hpp"

namespace rbf::model {

// ---------------------------------------------------------------------------
// Silhouette refinement of individual parameters with the network frozen.

struct ParamTensors {
  Tensor logCP, TP, logCB, TB;

  explicit ParamTensors(const IndividualParams& p)
      : logCP(Tensor::parameter(p.logCP)),
        TP(Tensor::parameter(p.TP)),
        logCB(Tensor::parameter(p.logCB)),
        TB(Tensor::parameter(p.TB)) {}

  std::vector<Tensor> all() const { return {logCP, TP, logCB, TB}; }
  IndividualParams value() const { return {logCP.value(), TP.value(), logCB.value(), TB.value()}; }
};

struct SilhouetteFrame {
  Points worldKeypoints;
  std::vector<SilhouetteView> views;
};

// Mean over frames of the soft silhouette loss of the predicted surface, as a
// differentiable function of the individual parameters. B̂ is a constant.
inline Tensor silhouetteObjective(Tape& t, const RbfModel& model, const CanonicalContext& ctx, const ParamTensors& p,
                                  const std::vector<SilhouetteFrame>& frames) {
  if (frames.empty()) throw DataError("silhouette objective needs at least one frame");
  const auto m = static_cast<Eigen::Index>(frames.size());
  const IndividualParams current = p.value();
  const Tensor ones = Tensor::constant(Matrix::Ones(1, 3));
  const Tensor invCP = ad::matmul(t, ad::exp(t, ad::scale(t, p.logCP, -1.0)), ones);
  const Tensor invCB = ad::matmul(t, ad::exp(t, ad::scale(t, p.logCB, -1.0)), ones);
  const Tensor cB = ad::matmul(t, ad::exp(t, p.logCB), ones);
  const Tensor kpBase = ad::add(t, Tensor::constant(ctx.keypoints), p.TP);
  const Tensor sfBase = ad::add(t, Tensor::constant(ctx.anchors), p.TB);

  std::vector<PoseRecord> records;
  std::vector<Tensor> kpTok, sfTok, bases;
  for (const auto& f : frames) {
    const PoseRecord r = normalizePose(f.worldKeypoints, model.config().normalization, ctx.fixedScale);
    const Points pn = r.apply(f.worldKeypoints);
    const Points bHat = ctx.guesser->guess(pn, current.cP());
    kpTok.push_back(ad::sub(t, ad::mul(t, Tensor::constant(pn), invCP), kpBase));
    sfTok.push_back(ad::sub(t, ad::mul(t, Tensor::constant(bHat), invCB), sfBase));
    bases.push_back(ad::sub(t, Tensor::constant(bHat), sfBase));
    records.push_back(r);
  }
  const Tensor delta = model.forward(t, ad::concat(t, kpTok, ad::Axis::Rows), ad::concat(t, sfTok, ad::Axis::Rows), m,
                                     ad::concat(t, bases, ad::Axis::Rows));
  const Eigen::Index n = ctx.anchorCount();
  Tensor total;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Tensor normalized = ad::mul(t, cB, ad::add(t, ad::sliceRows(t, delta, i * n, n), sfBase));
    const auto& r = records[static_cast<size_t>(i)];
    const Tensor world = ad::add(t, ad::matmul(t, normalized, Tensor::constant(Matrix(r.inverseRowMatrix()))),
                                 Tensor::constant(Matrix(r.centre.transpose())));
    const Tensor ls = silhouetteLossOp(t, world, frames[static_cast<size_t>(i)].views);
    total = total.defined() ? ad::add(t, total, ls) : ls;
  }
  return ad::scale(t, total, 1.0 / static_cast<double>(m));
}

struct RefineResult {
  IndividualParams params;
  std::vector<double> history;  // objective before the first step and after each step
};

inline RefineResult refineParams(const RbfModel& model, const CanonicalContext& ctx, const IndividualParams& init,
                                 const std::vector<SilhouetteFrame>& frames, int steps, double lr) {
  NoGradScope frozen(model.parameters());
  ParamTensors p(init);
  ad::Adam opt(p.all(), ad::AdamConfig{lr});
  RefineResult out;
  for (int s = 0; s <= steps; ++s) {
    Tape t;
    const Tensor obj = silhouetteObjective(t, model, ctx, p, frames);
    out.history.push_back(obj.item());
    if (s == steps) break;
    t.backward(obj);
    opt.step();
    opt.zeroGrad();
  }
  out.params = p.value();
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct EpochLog {
  int epoch = 0;
  double trainLoss = 0.0;
  double valLoss = std::numeric_limits<double>::quiet_NaN();
  double silhouette = std::numeric_limits<double>::quiet_NaN();  // set on refinement epochs
};

struct TrainResult {
  RbfModel model;
  std::map<std::string, IndividualParams> params;
  std::vector<EpochLog> log;
  double initialValLoss = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct Prepared {
  const FrameSample* sample = nullptr;
  PreparedFrame frame;
  Matrix gtNormalized;
  Matrix base;    // B̃ + T_B
  Matrix cBrows;  // c_B broadcast to N × 3
};

inline Prepared prepare(const FrameSample& s, const IndividualParams& p, const CanonicalContext& ctx, NormalizationMode mode) {
  Prepared out;
  out.sample = &s;
  out.frame = prepareFrame(s.keypoints, p, ctx, mode);
  const Points finite = s.surface.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
  out.gtNormalized = out.frame.record.apply(finite);
  out.base = ctx.anchors + p.TB;
  const Eigen::VectorXd c = p.cB();
  out.cBrows = c * Eigen::RowVector3d::Ones();
  return out;
}

inline double meanLoss(const RbfModel& model, const std::vector<Prepared>& frames, const std::map<std::string, IndividualParams>& params,
                       const CanonicalContext& ctx) {
  if (frames.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<const Tokens*> tokens;
  for (const auto& f : frames) tokens.push_back(&f.frame.tokens);
  const auto deltas = forwardBatched(model, tokens);
  double total = 0.0;
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    const Points world = reconstructOutput(deltas[i], params.at(f.sample->individual), ctx, f.frame.record);
    total += loss3D(world, *f.sample);
  }
  return total / static_cast<double>(frames.size());
}

}  // namespace detail

inline std::vector<SilhouetteFrame> silhouetteFrames(const std::vector<const FrameSample*>& samples,
                                                     const std::vector<mv::Camera>& cameras, const std::vector<int>& views,
                                                     int maxFrames) {
  std::vector<const FrameSample*> withMasks;
  for (const auto* s : samples) {
    if (s->hasMasks() && !silhouetteViews(*s, cameras, views).empty()) withMasks.push_back(s);
  }
  std::vector<SilhouetteFrame> out;
  const size_t take = std::min(withMasks.size(), static_cast<size_t>(maxFrames));
  for (size_t i = 0; i < take; ++i) {
    const FrameSample* s = withMasks[i * withMasks.size() / take];
    out.push_back({s->keypoints, silhouetteViews(*s, cameras, views)});
  }
  return out;
}

// Minimizes loss3D over the network; every refinePeriod epochs the individual
// parameters are refined on the soft silhouette loss with the network frozen.
inline TrainResult train(const std::vector<FrameSample>& trainSet, const std::vector<FrameSample>& valSet,
                         const CanonicalSurface& canonical, const canonical::MarkerRegistry& registry,
                         const std::map<std::string, double>& alpha, const std::vector<mv::Camera>& cameras,
                         const RbfConfig& config, const std::function<void(const EpochLog&)>& progress = {}) {
  config.validate();
  if (trainSet.empty()) throw DataError("train: empty training set");
  const int n = canonical.anchorCount();
  TrainResult result{RbfModel(config, canonical), {}, {}, std::numeric_limits<double>::quiet_NaN()};
  RbfModel& model = result.model;
  const CanonicalContext ctx(canonical, config.arapIterations);

  for (const auto* set : {&trainSet, &valSet}) {
    for (const auto& s : *set) {
      s.validate(n);
      if (!registry.contains(s.individual)) throw DataError("train: individual " + s.individual + " is not in the registry");
      if (s.visibleCount() == 0) {
        throw DataError("train: sample " + s.individual + "/" + std::to_string(s.frame) + " has no visible points");
      }
      if (!result.params.count(s.individual)) {
        const auto a = alpha.find(s.individual);
        if (a == alpha.end()) throw DataError("train: no scale alpha for individual " + s.individual);
        result.params[s.individual] = IndividualParams::initial(kKeypointCount, n, a->second, a->second);
      }
    }
  }

  auto prepareAll = [&](const std::vector<FrameSample>& set, std::vector<detail::Prepared>& out, const std::string& only) {
    if (only.empty()) out.clear();
    for (size_t i = 0; i < set.size(); ++i) {
      const auto& s = set[i];
      if (!only.empty() && s.individual != only) continue;
      auto p = detail::prepare(s, result.params.at(s.individual), ctx, config.normalization);
      if (only.empty()) {
        out.push_back(std::move(p));
      } else {
        out[i] = std::move(p);
      }
    }
  };
  std::vector<detail::Prepared> trainFrames, valFrames;
  prepareAll(trainSet, trainFrames, "");
  prepareAll(valSet, valFrames, "");

  std::map<std::string, std::vector<SilhouetteFrame>> refineFrames;
  {
    std::map<std::string, std::vector<const FrameSample*>> byInd;
    for (const auto& s : trainSet) byInd[s.individual].push_back(&s);
    for (const auto& [id, list] : byInd) {
      auto frames = silhouetteFrames(list, cameras, config.silhouetteViews, config.refineFrames);
      if (!frames.empty()) refineFrames[id] = std::move(frames);
    }
  }

  result.initialValLoss = detail::meanLoss(model, valFrames, result.params, ctx);

  ad::Adam opt(model.parameters(), ad::AdamConfig{config.lrModel});
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66Dull);
  std::vector<size_t> order(trainFrames.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bs = static_cast<size_t>(config.batchSize);
  const Eigen::Index k = kKeypointCount;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double progressFraction = config.epochs > 1 ? static_cast<double>(epoch - 1) / (config.epochs - 1) : 0.0;
    opt.setLearningRate(config.lrModel * (config.lrFinalFraction +
                                          (1.0 - config.lrFinalFraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progressFraction))));
    double epochLoss = 0.0;
    try {
      for (size_t start = 0; start < order.size(); start += bs) {
        const size_t count = std::min(bs, order.size() - start);
        const auto b = static_cast<Eigen::Index>(count);
        Matrix kt(b * k, 3), st(b * n, 3), rb(b * n, 3), gt(b * n, 3), base(b * n, 3), cb(b * n, 3);
        std::vector<double> weights(static_cast<size_t>(b * n), 0.0);
        for (size_t i = 0; i < count; ++i) {
          const auto& f = trainFrames[order[start + i]];
          const auto r = static_cast<Eigen::Index>(i);
          kt.middleRows(r * k, k) = f.frame.tokens.keypoint;
          st.middleRows(r * n, n) = f.frame.tokens.surface;
          rb.middleRows(r * n, n) = f.frame.tokens.base;
          gt.middleRows(r * n, n) = f.gtNormalized;
          base.middleRows(r * n, n) = f.base;
          cb.middleRows(r * n, n) = f.cBrows;
          const double w = 1.0 / (f.frame.record.scale * f.sample->visibleCount() * static_cast<double>(count));
          for (int j = 0; j < n; ++j) {
            if (f.sample->visible[static_cast<size_t>(j)]) weights[static_cast<size_t>(r * n + j)] = w;
          }
        }
        Tape t;
        const Tensor delta = model.forward(t, Tensor::constant(kt), Tensor::constant(st), b, Tensor::constant(rb));
        const Tensor pred = ad::mul(t, ad::add(t, delta, Tensor::constant(base)), Tensor::constant(cb));
        const Tensor loss = ad::weightedRowDistance(t, pred, Tensor::constant(gt), weights);
        if (!std::isfinite(loss.item())) throw NumericError("non-finite loss");
        epochLoss += loss.item() * static_cast<double>(count);
        t.backward(loss);
        opt.step();
        opt.zeroGrad();
      }
    } catch (const NumericError& e) {
      throw NumericError("training aborted at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochLog log;
    log.epoch = epoch;
    log.trainLoss = epochLoss / static_cast<double>(trainFrames.size());
    if (!std::isfinite(log.trainLoss)) throw NumericError("training aborted at epoch " + std::to_string(epoch) + ": non-finite loss");

    if (epoch % config.refinePeriod == 0 && config.refineSteps > 0 && !refineFrames.empty()) {
      double lsTotal = 0.0;
      for (const auto& [id, frames] : refineFrames) {
        const RefineResult r = refineParams(model, ctx, result.params.at(id), frames, config.refineSteps, config.lrParams);
        result.params[id] = r.params;
        lsTotal += r.history.back();
        prepareAll(trainSet, trainFrames, id);
        prepareAll(valSet, valFrames, id);
      }
      log.silhouette = lsTotal / static_cast<double>(refineFrames.size());
    }
    log.valLoss = detail::meanLoss(model, valFrames, result.params, ctx);
    result.log.push_back(log);
    if (progress) progress(log);
  }
  return result;
}

// Mean held-out surface error (mm) with per-individual parameters.
inline double evaluate(const RbfModel& model, const std::map<std::string, IndividualParams>& params, const CanonicalContext& ctx,
                       const std::vector<FrameSample>& samples) {
  std::vector<detail::Prepared> frames;
  for (const auto& s : samples) {
    const auto it = params.find(s.individual);
    if (it == params.end()) throw DataError("evaluate: no parameters for individual " + s.individual);
    frames.push_back(detail::prepare(s, it->second, ctx, model.config().normalization));
  }
  return detail::meanLoss(model, frames, params, ctx);
}

// Per-point errors (mm) of the visible points of every sample.
inline std::vector<double> pointErrors(const std::vector<Points>& predictions, const std::vector<FrameSample>& samples) {
  if (predictions.size() != samples.size()) throw DataError("pointErrors: prediction count mismatch");
  std::vector<double> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    for (Eigen::Index j = 0; j < predictions[i].rows(); ++j) {
      if (samples[i].visible[static_cast<size_t>(j)]) out.push_back((predictions[i].row(j) - samples[i].surface.row(j)).norm());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference-time adaptation to a new individual.

struct InferConfig {
  int steps = 50;
  double lr = 1e-3;
  int maxFrames = 8;
  std::vector<int> views;  // empty = all
};

struct InferResult {
  IndividualParams params;
  std::vector<Points> predictions;
  std::vector<double> silhouetteHistory;
  std::string warning;  // non-empty when L_s did not decrease
};

inline InferResult inferNewRat(const std::vector<FrameSample>& frames, const CanonicalContext& ctx, const RbfModel& model,
                               double alphaP, double alphaB, const std::vector<mv::Camera>& cameras, const InferConfig& config) {
  if (config.steps < 0 || config.maxFrames < 1) throw ConfigError("inferNewRat: steps must be >= 0 and maxFrames >= 1");
  InferResult out;
  out.params = IndividualParams::initial(kKeypointCount, ctx.anchorCount(), alphaP, alphaB);
  std::vector<const FrameSample*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  const auto sil = silhouetteFrames(ptrs, cameras, config.views, config.maxFrames);
  if (config.steps > 0) {
    if (sil.empty()) {
      out.warning = "no silhouettes available; parameters left at initialisation";
    } else {
      const RefineResult r = refineParams(model, ctx, out.params, sil, config.steps, config.lr);
      out.params = r.params;
      out.silhouetteHistory = r.history;
      if (!(r.history.back() < r.history.front())) {
        out.warning = "silhouette loss did not decrease (" + std::to_string(r.history.front()) + " -> " +
                      std::to_string(r.history.back()) + ")";
      }
    }
  }
  std::vector<Points> kps;
  for (const auto& f : frames) kps.push_back(f.keypoints);
  out.predictions = predictSurfaces(model, out.params, ctx, kps);
  return out;
}

}  // namespace rbf::model
