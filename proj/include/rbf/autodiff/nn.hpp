#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rbf/autodiff/ops.hpp"
#include "rbf/autodiff/optim.hpp"

// Transformer building blocks on top of the tape. Token sequences of a batch
// are stacked row-wise; attention runs per sequence on row slices.
namespace rbf::ad::nn {

inline Matrix xavierUniform(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return w;
}

struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // 1 × out

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
    weight = ps.add(name + ".weight", xavierUniform(in, out, rng));
    bias = ps.add(name + ".bias", Matrix::Zero(1, out));
  }

  Tensor operator()(Tape& t, const Tensor& x) const { return add(t, matmul(t, x, weight), bias); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, Eigen::Index dim) {
    gain = ps.add(name + ".gain", Matrix::Ones(1, dim));
    bias = ps.add(name + ".bias", Matrix::Zero(1, dim));
  }

  Tensor operator()(Tape& t, const Tensor& x) const { return layerNormalize(t, x, gain, bias); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;
  Eigen::Index dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, Eigen::Index d, int h, std::mt19937_64& rng)
      : heads(h), dim(d) {
    if (h < 1 || d % h != 0) throw ConfigError("embedding dim " + std::to_string(d) + " not divisible by heads");
    q = Linear(ps, name + ".q", d, d, rng);
    k = Linear(ps, name + ".k", d, d, rng);
    v = Linear(ps, name + ".v", d, d, rng);
    o = Linear(ps, name + ".o", d, d, rng);
  }

  // `query` holds `batch` sequences of equal length stacked row-wise; so does
  // `context`. Each query sequence attends only to its own context sequence.
  Tensor operator()(Tape& t, const Tensor& query, const Tensor& context, Eigen::Index batch) const {
    if (batch < 1 || query.rows() % batch != 0 || context.rows() % batch != 0) {
      throw ShapeError("attention: rows " + query.shapeString() + " / " + context.shapeString() +
                       " not divisible by batch " + std::to_string(batch));
    }
    const Eigen::Index lq = query.rows() / batch;
    const Eigen::Index lk = context.rows() / batch;
    const Eigen::Index dh = dim / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor qa = q(t, query);
    const Tensor ka = k(t, context);
    const Tensor va = v(t, context);
    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
      std::vector<Tensor> cols;
      cols.reserve(static_cast<size_t>(heads));
      for (int h = 0; h < heads; ++h) {
        const Tensor qh = slice(t, qa, b * lq, lq, h * dh, dh);
        const Tensor kh = slice(t, ka, b * lk, lk, h * dh, dh);
        const Tensor vh = slice(t, va, b * lk, lk, h * dh, dh);
        const Tensor w = softmaxRows(t, scale(t, matmulTransposed(t, qh, kh), inv));
        cols.push_back(matmul(t, w, vh));
      }
      rows.push_back(heads == 1 ? cols[0] : concat(t, cols, Axis::Cols));
    }
    const Tensor merged = batch == 1 ? rows[0] : concat(t, rows, Axis::Rows);
    return o(t, merged);
  }
};

struct FeedForward {
  Linear in, out;

  FeedForward() = default;
  FeedForward(ParameterSet& ps, const std::string& name, Eigen::Index d, Eigen::Index hidden, std::mt19937_64& rng)
      : in(ps, name + ".in", d, hidden, rng), out(ps, name + ".out", hidden, d, rng) {}

  Tensor operator()(Tape& t, const Tensor& x) const { return out(t, relu(t, in(t, x))); }
};

// Pre-norm encoder layer.
struct EncoderLayer {
  LayerNorm norm1, norm2;
  MultiHeadAttention attn;
  FeedForward ffn;

  EncoderLayer() = default;
  EncoderLayer(ParameterSet& ps, const std::string& name, Eigen::Index d, int heads, Eigen::Index hidden,
               std::mt19937_64& rng)
      : norm1(ps, name + ".norm1", d),
        norm2(ps, name + ".norm2", d),
        attn(ps, name + ".attn", d, heads, rng),
        ffn(ps, name + ".ffn", d, hidden, rng) {}

  Tensor operator()(Tape& t, const Tensor& x, Eigen::Index batch) const {
    const Tensor n1 = norm1(t, x);
    const Tensor h = add(t, x, attn(t, n1, n1, batch));
    return add(t, h, ffn(t, norm2(t, h)));
  }
};

// Pre-norm decoder layer: self-attention, cross-attention to `memory`, FFN.
struct DecoderLayer {
  LayerNorm norm1, norm2, norm3;
  MultiHeadAttention self, cross;
  FeedForward ffn;

  DecoderLayer() = default;
  DecoderLayer(ParameterSet& ps, const std::string& name, Eigen::Index d, int heads, Eigen::Index hidden,
               std::mt19937_64& rng)
      : norm1(ps, name + ".norm1", d),
        norm2(ps, name + ".norm2", d),
        norm3(ps, name + ".norm3", d),
        self(ps, name + ".self", d, heads, rng),
        cross(ps, name + ".cross", d, heads, rng),
        ffn(ps, name + ".ffn", d, hidden, rng) {}

  Tensor operator()(Tape& t, const Tensor& x, const Tensor& memory, Eigen::Index batch) const {
    const Tensor n1 = norm1(t, x);
    const Tensor h1 = add(t, x, self(t, n1, n1, batch));
    const Tensor h2 = add(t, h1, cross(t, norm2(t, h1), memory, batch));
    return add(t, h2, ffn(t, norm3(t, h2)));
  }
};

}  // namespace rbf::ad::nn
