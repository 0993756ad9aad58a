#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rbf/autodiff/checkpoint.hpp"
#include "rbf/autodiff/nn.hpp"
#include "rbf/core/json_util.hpp"
#include "rbf/model/model.hpp"

namespace rbf::forecast {

using ad::Matrix;
using ad::Tape;
using ad::Tensor;
using geom::Points;

struct ForecastConfig {
  int pastFrames = 3;  // τ_p
  int embedDim = 64;
  int layers = 2;
  int heads = 4;
  int ffnMultiplier = 4;
  double unitLength = 100.0;  // mm per network unit
  int epochs = 40;
  int batchSize = 32;
  double lr = 1e-3;
  double lrFinalFraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("forecast." + m); };
    if (pastFrames < 1) fail("pastFrames must be >= 1");
    if (embedDim < 1 || heads < 1 || embedDim % heads != 0) fail("embedDim must be a positive multiple of heads");
    if (layers < 1 || ffnMultiplier < 1) fail("layers and ffnMultiplier must be >= 1");
    if (!(unitLength > 0.0)) fail("unitLength must be positive");
    if (epochs < 0 || batchSize < 1) fail("epochs must be >= 0 and batchSize >= 1");
    if (!(lr >= 0.0) || !(lrFinalFraction >= 0.0 && lrFinalFraction <= 1.0)) fail("lr must be >= 0, lrFinalFraction in [0, 1]");
  }
};

inline json::json toJson(const ForecastConfig& c) {
  return {{"pastFrames", c.pastFrames}, {"embedDim", c.embedDim},     {"layers", c.layers},
          {"heads", c.heads},           {"ffnMultiplier", c.ffnMultiplier}, {"unitLength", c.unitLength},
          {"epochs", c.epochs},         {"batchSize", c.batchSize},   {"lr", c.lr},
          {"lrFinalFraction", c.lrFinalFraction}, {"seed", c.seed}};
}

inline ForecastConfig forecastConfigFromJson(const json::json& j, const std::string& path = "forecast") {
  json::requireKeys(j, {"pastFrames", "embedDim", "layers", "heads", "ffnMultiplier", "unitLength", "epochs", "batchSize", "lr",
                        "lrFinalFraction", "seed"},
                    path);
  ForecastConfig c;
  json::read(j, "pastFrames", c.pastFrames, path);
  json::read(j, "embedDim", c.embedDim, path);
  json::read(j, "layers", c.layers, path);
  json::read(j, "heads", c.heads, path);
  json::read(j, "ffnMultiplier", c.ffnMultiplier, path);
  json::read(j, "unitLength", c.unitLength, path);
  json::read(j, "epochs", c.epochs, path);
  json::read(j, "batchSize", c.batchSize, path);
  json::read(j, "lr", c.lr, path);
  json::read(j, "lrFinalFraction", c.lrFinalFraction, path);
  json::read(j, "seed", c.seed, path);
  c.validate();
  return c;
}

// Ordered keypoint frames of one individual.
struct KeypointSequence {
  std::vector<Points> frames;
  double frameInterval = 1.0 / 30.0;

  void validate() const {
    for (size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].rows() != kKeypointCount) throw DataError("sequence frame " + std::to_string(i) + " has wrong keypoint count");
      if (!frames[i].allFinite()) throw DataError("sequence frame " + std::to_string(i) + " is not finite");
    }
  }
};

// Sinusoidal encoding of the position inside the window (0 = oldest).
inline Matrix temporalEncoding(int length, int dim) {
  Matrix e(length, dim);
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / dim);
      e(p, i) = (i % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return e;
}

// Window tokens: each frame flattened to 3K after subtracting the last
// frame's keypoint centroid, divided by unitLength.
class Forecaster {
 public:
  explicit Forecaster(const ForecastConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const Eigen::Index d = config_.embedDim;
    embed_ = ad::nn::Linear(params_, "embed", 3 * kKeypointCount, d, rng);
    for (int l = 0; l < config_.layers; ++l) {
      layers_.emplace_back(params_, "encoder." + std::to_string(l), d, config_.heads, d * config_.ffnMultiplier, rng);
    }
    norm_ = ad::nn::LayerNorm(params_, "norm", d);
    head_ = ad::nn::Linear(params_, "head", d, 3 * kKeypointCount, rng);
    position_ = temporalEncoding(config_.pastFrames, config_.embedDim);
  }

  Forecaster(const Forecaster&) = delete;
  Forecaster& operator=(const Forecaster&) = delete;
  Forecaster(Forecaster&&) = default;

  const ForecastConfig& config() const { return config_; }
  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }

  // Tokens (batch·τ_p) × 3K for a batch of windows, plus each window's centre.
  Matrix windowTokens(const std::vector<const Points*>& window, Eigen::Vector3d& centre) const {
    const int tp = config_.pastFrames;
    if (static_cast<int>(window.size()) != tp) {
      throw DataError("forecast needs exactly " + std::to_string(tp) + " past frames, got " + std::to_string(window.size()));
    }
    centre = window.back()->colwise().mean().transpose();
    Matrix tokens(tp, 3 * kKeypointCount);
    for (int f = 0; f < tp; ++f) {
      const Points& p = *window[static_cast<size_t>(f)];
      if (p.rows() != kKeypointCount) throw DataError("forecast frame has " + std::to_string(p.rows()) + " keypoints");
      for (int k = 0; k < kKeypointCount; ++k) {
        for (int c = 0; c < 3; ++c) tokens(f, 3 * k + c) = (p(k, c) - centre[c]) / config_.unitLength;
      }
    }
    return tokens;
  }

  // Next-frame displacement from the last past frame, in network units,
  // batch × 3K.
  Tensor forward(Tape& t, const Tensor& tokens, Eigen::Index batch) const {
    const int tp = config_.pastFrames;
    Tensor x = ad::add(t, embed_(t, tokens), Tensor::constant(repeat(position_, batch)));
    for (const auto& layer : layers_) x = layer(t, x, batch);
    x = norm_(t, x);
    std::vector<Tensor> last;
    for (Eigen::Index b = 0; b < batch; ++b) last.push_back(ad::sliceRows(t, x, b * tp + tp - 1, 1));
    return head_(t, batch == 1 ? last.front() : ad::concat(t, last, ad::Axis::Rows));
  }

 private:
  static Matrix repeat(const Matrix& m, Eigen::Index times) {
    Matrix out(m.rows() * times, m.cols());
    for (Eigen::Index i = 0; i < times; ++i) out.middleRows(i * m.rows(), m.rows()) = m;
    return out;
  }

  ForecastConfig config_;
  ad::ParameterSet params_;
  ad::nn::Linear embed_, head_;
  std::vector<ad::nn::EncoderLayer> layers_;
  ad::nn::LayerNorm norm_;
  Matrix position_;
};

inline Points addDisplacement(const Points& last, const Matrix& row, double unit) {
  Points next = last;
  for (int k = 0; k < kKeypointCount; ++k) {
    for (int c = 0; c < 3; ++c) next(k, c) += unit * row(0, 3 * k + c);
  }
  return next;
}

inline Points forecastStep(const Forecaster& f, const std::vector<Points>& past) {
  std::vector<const Points*> window;
  for (const auto& p : past) window.push_back(&p);
  Eigen::Vector3d centre;
  const Matrix tokens = f.windowTokens(window, centre);
  model::NoGradScope guard(f.parameters());
  Tape t;
  const Matrix out = f.forward(t, Tensor::constant(tokens), 1).value();
  return addDisplacement(past.back(), out, f.config().unitLength);
}

// Autoregressive rollout of `steps` frames; each prediction is appended to
// the window and the oldest frame dropped.
inline std::vector<Points> forecastRollout(const Forecaster& f, std::vector<Points> past, int steps) {
  if (steps < 1) throw ConfigError("forecast rollout length must be >= 1");
  std::vector<Points> out;
  for (int s = 0; s < steps; ++s) {
    Points next = forecastStep(f, past);
    past.erase(past.begin());
    past.push_back(next);
    out.push_back(std::move(next));
  }
  return out;
}

struct ForecastEpoch {
  int epoch = 0;
  double trainLoss = 0.0;
};

struct ForecastTrainResult {
  Forecaster model;
  std::vector<ForecastEpoch> log;
};

// Teacher-forced next-frame MSE (network units²) over every sliding window.
inline ForecastTrainResult trainForecaster(const std::vector<KeypointSequence>& sequences, const ForecastConfig& config,
                                           const std::function<void(const ForecastEpoch&)>& progress = {}) {
  config.validate();
  const int tp = config.pastFrames;
  struct Window {
    const KeypointSequence* seq;
    size_t start;
  };
  std::vector<Window> windows;
  for (const auto& s : sequences) {
    s.validate();
    if (static_cast<int>(s.frames.size()) < tp + 1) {
      throw DataError("forecast training sequence has " + std::to_string(s.frames.size()) + " frames, needs at least " +
                      std::to_string(tp + 1));
    }
    for (size_t i = 0; i + static_cast<size_t>(tp) < s.frames.size(); ++i) windows.push_back({&s, i});
  }
  if (windows.empty()) throw DataError("forecast training needs at least one sequence");

  ForecastTrainResult result{Forecaster(config), {}};
  Forecaster& net = result.model;
  ad::Adam opt(net.parameters(), ad::AdamConfig{config.lr});
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<size_t> order(windows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const int width = 3 * kKeypointCount;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double u = config.epochs > 1 ? static_cast<double>(epoch - 1) / (config.epochs - 1) : 0.0;
    opt.setLearningRate(config.lr * (config.lrFinalFraction + (1.0 - config.lrFinalFraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * u))));
    double total = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batchSize)) {
      const size_t count = std::min(static_cast<size_t>(config.batchSize), order.size() - start);
      const auto b = static_cast<Eigen::Index>(count);
      Matrix tokens(b * tp, width), target(b, width);
      for (size_t i = 0; i < count; ++i) {
        const Window& w = windows[order[start + i]];
        std::vector<const Points*> past;
        for (int f = 0; f < tp; ++f) past.push_back(&w.seq->frames[w.start + static_cast<size_t>(f)]);
        Eigen::Vector3d centre;
        tokens.middleRows(static_cast<Eigen::Index>(i) * tp, tp) = net.windowTokens(past, centre);
        const Points delta = (w.seq->frames[w.start + static_cast<size_t>(tp)] - *past.back()) / config.unitLength;
        for (int k = 0; k < kKeypointCount; ++k) {
          for (int c = 0; c < 3; ++c) target(static_cast<Eigen::Index>(i), 3 * k + c) = delta(k, c);
        }
      }
      Tape t;
      const Tensor loss = ad::meanSquaredError(t, net.forward(t, Tensor::constant(tokens), b), Tensor::constant(target));
      if (!std::isfinite(loss.item())) throw NumericError("forecast training aborted at epoch " + std::to_string(epoch) + ": non-finite loss");
      total += loss.item() * static_cast<double>(count);
      t.backward(loss);
      opt.step();
      opt.zeroGrad();
    }
    ForecastEpoch log{epoch, total / static_cast<double>(windows.size())};
    result.log.push_back(log);
    if (progress) progress(log);
  }
  return result;
}

// Future surfaces: forecast keypoints, then the surface model per frame.
inline std::vector<Points> forecastSurface(const Forecaster& f, const model::RbfModel& rbf, const model::CanonicalContext& ctx,
                                           const model::IndividualParams& params, const std::vector<Points>& past, int steps) {
  return model::predictSurfaces(rbf, params, ctx, forecastRollout(f, past, steps));
}

// Per-keypoint errors (mm) of the step-`horizon` prediction over every window
// of each sequence; the baseline repeats the last observed frame.
struct HorizonErrors {
  std::vector<double> model;
  std::vector<double> constant;
};

inline HorizonErrors horizonErrors(const Forecaster& f, const std::vector<KeypointSequence>& sequences, int horizon, int stride = 1) {
  if (horizon < 1 || stride < 1) throw ConfigError("horizon and stride must be >= 1");
  const int tp = f.config().pastFrames;
  HorizonErrors out;
  for (const auto& s : sequences) {
    for (size_t i = 0; i + static_cast<size_t>(tp + horizon) <= s.frames.size(); i += static_cast<size_t>(stride)) {
      const std::vector<Points> past(s.frames.begin() + static_cast<std::ptrdiff_t>(i),
                                     s.frames.begin() + static_cast<std::ptrdiff_t>(i + static_cast<size_t>(tp)));
      const Points& truth = s.frames[i + static_cast<size_t>(tp + horizon - 1)];
      const Points pred = forecastRollout(f, past, horizon).back();
      for (int k = 0; k < kKeypointCount; ++k) {
        out.model.push_back((pred.row(k) - truth.row(k)).norm());
        out.constant.push_back((past.back().row(k) - truth.row(k)).norm());
      }
    }
  }
  return out;
}

inline void saveForecaster(const std::string& path, const Forecaster& f) {
  ad::Checkpoint c = ad::checkpointFrom(f.parameters(), {{"format", "rbf-forecast"}, {"version", 1}, {"config", toJson(f.config())}});
  ad::writeCheckpoint(path, c);
}

inline Forecaster loadForecaster(const std::string& path) {
  const ad::Checkpoint c = ad::readCheckpoint(path);
  if (c.meta.value("format", "") != "rbf-forecast") throw DataError(path + " is not a forecast checkpoint");
  ForecastConfig config;
  try {
    config = forecastConfigFromJson(c.meta.at("config"), "checkpoint.config");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed checkpoint metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  Forecaster f(config);
  ad::loadInto(f.parameters(), c);
  return f;
}

}  // namespace rbf::forecast
