#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rbf/arap/arap.hpp"
#include "rbf/autodiff/nn.hpp"
#include "rbf/canonical/types.hpp"
#include "rbf/model/normalize.hpp"

namespace rbf::model {

using ad::Matrix;
using ad::Tape;
using ad::Tensor;
using canonical::CanonicalSurface;

// Point-wise scale (stored as log) and translation of one individual.
struct IndividualParams {
  Matrix logCP;  // K × 1
  Matrix TP;     // K × 3
  Matrix logCB;  // N × 1
  Matrix TB;     // N × 3

  static IndividualParams initial(int k, int n, double alphaP, double alphaB) {
    if (!(alphaP > 0.0) || !(alphaB > 0.0)) throw ConfigError("individual scale initialisation must be positive");
    IndividualParams p;
    p.logCP = Matrix::Constant(k, 1, std::log(alphaP));
    p.TP = Matrix::Zero(k, 3);
    p.logCB = Matrix::Constant(n, 1, std::log(alphaB));
    p.TB = Matrix::Zero(n, 3);
    return p;
  }

  Eigen::VectorXd cP() const { return logCP.col(0).array().exp(); }
  Eigen::VectorXd cB() const { return logCB.col(0).array().exp(); }

  void validate(int k, int n) const {
    if (logCP.rows() != k || logCP.cols() != 1 || TP.rows() != k || TP.cols() != 3 || logCB.rows() != n ||
        logCB.cols() != 1 || TB.rows() != n || TB.cols() != 3) {
      throw DataError("individual parameters do not match K=" + std::to_string(k) + ", N=" + std::to_string(n));
    }
    if (!logCP.allFinite() || !TP.allFinite() || !logCB.allFinite() || !TB.allFinite()) {
      throw NumericError("individual parameters are not finite");
    }
  }
};

// ---------------------------------------------------------------------------
// Positional encoding features before the learned projection.

inline int rawEncodingWidth(const RbfConfig& c) {
  if (c.encoding == EncodingKind::Spectral) return c.eigenCount * static_cast<int>(c.frequencies.size()) * 2;
  return 3 * static_cast<int>(c.frequencies.size()) * 2;
}

// Spectral: sin/cos(ω φ_e) over eigenfunctions e and frequencies ω.
// Euclidean: sin/cos(ω π/2 x_a) over the normalized canonical coordinates.
inline Matrix encodingFeatures(const CanonicalSurface& c, const geom::SurfacePointRef& ref, const RbfConfig& cfg) {
  Eigen::VectorXd coords;
  double freqScale = 1.0;
  if (cfg.encoding == EncodingKind::Spectral) {
    if (c.basis.count() < cfg.eigenCount) {
      throw ConfigError("canonical basis has " + std::to_string(c.basis.count()) + " eigenfunctions, config needs " +
                        std::to_string(cfg.eigenCount));
    }
    coords = geom::evalBasisAt(c.basis, c.mesh, ref).head(cfg.eigenCount);
  } else {
    coords = geom::evalPoint(c.mesh, ref);
    freqScale = 0.5 * std::numbers::pi;
  }
  Matrix out(1, rawEncodingWidth(cfg));
  Eigen::Index col = 0;
  for (Eigen::Index e = 0; e < coords.size(); ++e) {
    for (double w : cfg.frequencies) {
      out(0, col++) = std::sin(w * freqScale * coords[e]);
      out(0, col++) = std::cos(w * freqScale * coords[e]);
    }
  }
  return out;
}

inline Matrix encodingFeatures(const CanonicalSurface& c, const std::vector<geom::SurfacePointRef>& refs, const RbfConfig& cfg) {
  Matrix out(static_cast<Eigen::Index>(refs.size()), rawEncodingWidth(cfg));
  for (size_t i = 0; i < refs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = encodingFeatures(c, refs[i], cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Canonical quantities shared by every frame.

class InitialGuesser {
 public:
  InitialGuesser(const CanonicalSurface& c, int iterations)
      : mesh_(c.mesh), anchors_(c.surfaceAnchors), hard_(hardVertices(c)), solver_(c.mesh, hard_, {}) {
    config_.iterations = iterations;
  }

  // ARAP deformation of the canonical mesh with keypoint-anchor vertices
  // pinned to P / C_P; returns the deformed vertex positions.
  Points deform(const Points& normalizedKeypoints, const Eigen::VectorXd& cP) const {
    if (normalizedKeypoints.rows() != kKeypointCount || cP.size() != kKeypointCount) {
      throw DataError("initial guess needs " + std::to_string(kKeypointCount) + " keypoints and scales");
    }
    Points targets(kKeypointCount, 3);
    for (int k = 0; k < kKeypointCount; ++k) targets.row(k) = normalizedKeypoints.row(k) / cP[k];
    return solver_.solve(targets, {}, config_).positions;
  }

  // B̂: anchors read off the deformed mesh.
  Points guess(const Points& normalizedKeypoints, const Eigen::VectorXd& cP) const {
    return geom::evalPoints(mesh_.faces, deform(normalizedKeypoints, cP), anchors_);
  }

  const std::vector<int>& hardVertices() const { return hard_; }

 private:
  static std::vector<int> hardVertices(const CanonicalSurface& c) {
    std::vector<int> out;
    for (const auto& r : c.keypointAnchors) {
      const int v = geom::dominantVertex(c.mesh, r);
      for (int u : out) {
        if (u == v) throw DegeneracyError("two keypoint anchors share canonical vertex " + std::to_string(v));
      }
      out.push_back(v);
    }
    return out;
  }

  geom::TriMesh mesh_;
  std::vector<geom::SurfacePointRef> anchors_;
  std::vector<int> hard_;
  arap::ArapSolver solver_;
  arap::ArapConfig config_;
};

struct CanonicalContext {
  const CanonicalSurface* surface = nullptr;
  Points keypoints;  // P̃, normalized canonical frame
  Points anchors;    // B̃
  double fixedScale = 1.0;
  std::shared_ptr<const InitialGuesser> guesser;

  CanonicalContext() = default;
  CanonicalContext(const CanonicalSurface& c, int arapIterations)
      : surface(&c),
        keypoints(c.keypointPositions()),
        anchors(c.anchorPositions()),
        fixedScale(c.normalization.scale),
        guesser(std::make_shared<const InitialGuesser>(c, arapIterations)) {}

  int anchorCount() const { return static_cast<int>(anchors.rows()); }
};

// ---------------------------------------------------------------------------
// Tokens and output reconstruction (normalized frame).

struct Tokens {
  Matrix keypoint;  // K × 3: p_i / c_pi − (p̃_i + t_pi)
  Matrix surface;   // N × 3: b̂_j / c_bj − (b̃_j + t_bj)
  // N × 3: b̂_j − (b̃_j + t_bj). The network predicts δ as a correction to
  // this, so a zero correction reconstructs c_bj · b̂_j.
  Matrix base;
};

inline Tokens encodeInputs(const Points& p, const Points& bHat, const IndividualParams& params, const CanonicalContext& ctx) {
  if (p.rows() != ctx.keypoints.rows() || bHat.rows() != ctx.anchors.rows()) {
    throw ShapeError("encodeInputs: got " + std::to_string(p.rows()) + " keypoints / " + std::to_string(bHat.rows()) +
                     " surface points, canonical has " + std::to_string(ctx.keypoints.rows()) + " / " +
                     std::to_string(ctx.anchors.rows()));
  }
  const Eigen::VectorXd cP = params.cP();
  const Eigen::VectorXd cB = params.cB();
  Tokens t;
  t.keypoint.resize(p.rows(), 3);
  t.surface.resize(bHat.rows(), 3);
  t.base.resize(bHat.rows(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    t.keypoint.row(i) = p.row(i) / cP[i] - (ctx.keypoints.row(i) + params.TP.row(i));
  }
  for (Eigen::Index j = 0; j < bHat.rows(); ++j) {
    t.base.row(j) = bHat.row(j) - (ctx.anchors.row(j) + params.TB.row(j));
    t.surface.row(j) = bHat.row(j) / cB[j] - (ctx.anchors.row(j) + params.TB.row(j));
  }
  return t;
}

// c_j (δ_j + b̃_j + t_bj), normalized frame.
inline Points reconstructNormalized(const Matrix& delta, const IndividualParams& params, const CanonicalContext& ctx) {
  if (delta.rows() != ctx.anchors.rows() || delta.cols() != 3) throw ShapeError("reconstructOutput: δ must be N × 3");
  const Eigen::VectorXd cB = params.cB();
  Points out(delta.rows(), 3);
  for (Eigen::Index j = 0; j < delta.rows(); ++j) out.row(j) = cB[j] * (delta.row(j) + ctx.anchors.row(j) + params.TB.row(j));
  return out;
}

inline Points reconstructOutput(const Matrix& delta, const IndividualParams& params, const CanonicalContext& ctx,
                                const PoseRecord& record) {
  return record.invert(reconstructNormalized(delta, params, ctx));
}

// ---------------------------------------------------------------------------
// Network.

inline Tensor repeatRows(Tape& t, const Tensor& x, Eigen::Index times) {
  if (times == 1) return x;
  return ad::concat(t, std::vector<Tensor>(static_cast<size_t>(times), x), ad::Axis::Rows);
}

class RbfModel {
 public:
  RbfModel(const RbfConfig& config, const CanonicalSurface& canonical) : config_(config) {
    config_.validate();
    k_ = kKeypointCount;
    n_ = canonical.anchorCount();
    std::vector<geom::SurfacePointRef> kpRefs(canonical.keypointAnchors.begin(), canonical.keypointAnchors.end());
    featK_ = encodingFeatures(canonical, kpRefs, config_);
    featN_ = encodingFeatures(canonical, canonical.surfaceAnchors, config_);
    std::mt19937_64 rng(config_.seed);
    const Eigen::Index d = config_.embedDim;
    const Eigen::Index hidden = d * config_.ffnMultiplier;
    kpEmbed_ = ad::nn::Linear(params_, "embed.keypoint", 3, d, rng);
    sfEmbed_ = ad::nn::Linear(params_, "embed.surface", 3, d, rng);
    peProject_ = ad::nn::Linear(params_, "encoding.project", rawEncodingWidth(config_), d, rng);
    for (int l = 0; l < config_.encoderLayers; ++l) {
      enc_.emplace_back(params_, "encoder." + std::to_string(l), d, config_.heads, hidden, rng);
    }
    encNorm_ = ad::nn::LayerNorm(params_, "encoder.norm", d);
    for (int l = 0; l < config_.decoderLayers; ++l) {
      dec_.emplace_back(params_, "decoder." + std::to_string(l), d, config_.heads, hidden, rng);
    }
    decNorm_ = ad::nn::LayerNorm(params_, "decoder.norm", d);
    head_ = ad::nn::Linear(params_, "head", d, 3, rng);
    head_.weight.mutableValue() *= config_.headInitScale;
  }

  RbfModel(const RbfModel&) = delete;
  RbfModel& operator=(const RbfModel&) = delete;
  RbfModel(RbfModel&&) = default;

  const RbfConfig& config() const { return config_; }
  int keypointCount() const { return k_; }
  int anchorCount() const { return n_; }
  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }

  // Projected encodings of the keypoint and surface anchors (d columns).
  Tensor keypointEncoding(Tape& t) const { return peProject_(t, Tensor::constant(featK_)); }
  Tensor surfaceEncoding(Tape& t) const { return peProject_(t, Tensor::constant(featN_)); }

  // `batch` frames stacked row-wise: keypoint tokens (batch·K) × 3 and surface
  // tokens (batch·N) × 3. Returns δ = base + correction, (batch·N) × 3, where
  // `base` defaults to the surface tokens.
  Tensor forward(Tape& t, const Tensor& keypointTokens, const Tensor& surfaceTokens, Eigen::Index batch,
                 const Tensor& base = {}) const {
    const Tensor c = correction(t, keypointTokens, surfaceTokens, repeatRows(t, keypointEncoding(t), batch),
                                repeatRows(t, surfaceEncoding(t), batch), batch);
    return ad::add(t, base.defined() ? base : surfaceTokens, c);
  }

  // Head output alone, with explicit per-row encodings (same row layout as
  // the tokens).
  Tensor correction(Tape& t, const Tensor& keypointTokens, const Tensor& surfaceTokens, const Tensor& keypointEnc,
                    const Tensor& surfaceEnc, Eigen::Index batch) const {
    if (keypointTokens.rows() != batch * k_ || keypointTokens.cols() != 3 || surfaceTokens.rows() != batch * n_ ||
        surfaceTokens.cols() != 3) {
      throw ShapeError("forwardModel: tokens " + keypointTokens.shapeString() + " / " + surfaceTokens.shapeString() +
                       " do not match batch " + std::to_string(batch) + " with K=" + std::to_string(k_) +
                       ", N=" + std::to_string(n_));
    }
    Tensor x = ad::add(t, kpEmbed_(t, keypointTokens), keypointEnc);
    for (const auto& layer : enc_) x = layer(t, x, batch);
    const Tensor memory = encNorm_(t, x);
    Tensor y = ad::add(t, sfEmbed_(t, surfaceTokens), surfaceEnc);
    for (const auto& layer : dec_) y = layer(t, y, memory, batch);
    return head_(t, decNorm_(t, y));
  }

  // Convenience single-frame forward without gradient recording.
  Matrix forwardValue(const Tokens& tokens) const;

 private:
  RbfConfig config_;
  int k_ = 0;
  int n_ = 0;
  Matrix featK_, featN_;
  ad::ParameterSet params_;
  ad::nn::Linear kpEmbed_, sfEmbed_, peProject_, head_;
  std::vector<ad::nn::EncoderLayer> enc_;
  std::vector<ad::nn::DecoderLayer> dec_;
  ad::nn::LayerNorm encNorm_, decNorm_;
};

// Disables gradient tracking on a parameter set for its lifetime.
class NoGradScope {
 public:
  explicit NoGradScope(const ad::ParameterSet& ps) {
    for (const auto& [_, t] : ps.entries()) {
      Tensor handle = t;
      saved_.emplace_back(handle, handle.requiresGrad());
      handle.setRequiresGrad(false);
    }
  }
  ~NoGradScope() {
    for (auto& [t, on] : saved_) t.setRequiresGrad(on);
  }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  std::vector<std::pair<Tensor, bool>> saved_;
};

inline Matrix RbfModel::forwardValue(const Tokens& tokens) const {
  NoGradScope guard(params_);
  Tape t;
  return forward(t, Tensor::constant(tokens.keypoint), Tensor::constant(tokens.surface), 1, Tensor::constant(tokens.base)).value();
}

// d-vector encoding of one anchor under the model's learned projection.
inline Eigen::VectorXd positionalEncoding(const RbfModel& m, const CanonicalSurface& c, const geom::SurfacePointRef& ref) {
  NoGradScope guard(m.parameters());
  Tape t;
  const Tensor w = m.parameters().at("encoding.project.weight");
  const Tensor b = m.parameters().at("encoding.project.bias");
  const Tensor out = ad::add(t, ad::matmul(t, Tensor::constant(encodingFeatures(c, ref, m.config())), w), b);
  return out.value().row(0).transpose();
}

// ---------------------------------------------------------------------------
// Prediction.

struct PreparedFrame {
  PoseRecord record;
  Points keypoints;  // normalized
  Points bHat;       // normalized initial guess
  Tokens tokens;
};

inline PreparedFrame prepareFrame(const Points& worldKeypoints, const IndividualParams& params, const CanonicalContext& ctx,
                                  NormalizationMode mode) {
  PreparedFrame f;
  f.record = normalizePose(worldKeypoints, mode, ctx.fixedScale);
  f.keypoints = f.record.apply(worldKeypoints);
  f.bHat = ctx.guesser->guess(f.keypoints, params.cP());
  f.tokens = encodeInputs(f.keypoints, f.bHat, params, ctx);
  return f;
}

// δ for many prepared frames, evaluated in batches without gradients.
inline std::vector<Matrix> forwardBatched(const RbfModel& model, const std::vector<const Tokens*>& tokens) {
  NoGradScope guard(model.parameters());
  std::vector<Matrix> out;
  out.reserve(tokens.size());
  const size_t bs = static_cast<size_t>(model.config().batchSize);
  const Eigen::Index k = model.keypointCount();
  const Eigen::Index n = model.anchorCount();
  for (size_t start = 0; start < tokens.size(); start += bs) {
    const size_t count = std::min(bs, tokens.size() - start);
    const auto b = static_cast<Eigen::Index>(count);
    Matrix kt(b * k, 3), st(b * n, 3), base(b * n, 3);
    for (size_t i = 0; i < count; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      kt.middleRows(r * k, k) = tokens[start + i]->keypoint;
      st.middleRows(r * n, n) = tokens[start + i]->surface;
      base.middleRows(r * n, n) = tokens[start + i]->base;
    }
    Tape t;
    const Matrix delta = model.forward(t, Tensor::constant(kt), Tensor::constant(st), b, Tensor::constant(base)).value();
    for (size_t i = 0; i < count; ++i) out.push_back(delta.middleRows(static_cast<Eigen::Index>(i) * n, n));
  }
  return out;
}

// World-frame surface predictions for world-frame keypoint frames.
inline std::vector<Points> predictSurfaces(const RbfModel& model, const IndividualParams& params, const CanonicalContext& ctx,
                                           const std::vector<Points>& worldKeypoints) {
  params.validate(model.keypointCount(), model.anchorCount());
  std::vector<PreparedFrame> frames;
  frames.reserve(worldKeypoints.size());
  for (const auto& kp : worldKeypoints) frames.push_back(prepareFrame(kp, params, ctx, model.config().normalization));
  std::vector<const Tokens*> tokens;
  for (const auto& f : frames) tokens.push_back(&f.tokens);
  const auto deltas = forwardBatched(model, tokens);
  std::vector<Points> out;
  out.reserve(frames.size());
  for (size_t i = 0; i < frames.size(); ++i) out.push_back(reconstructOutput(deltas[i], params, ctx, frames[i].record));
  return out;
}

inline Points predictSurface(const RbfModel& model, const IndividualParams& params, const CanonicalContext& ctx,
                             const Points& worldKeypoints) {
  return predictSurfaces(model, params, ctx, {worldKeypoints}).front();
}

}  // namespace rbf::model
