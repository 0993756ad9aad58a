#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rbf/autodiff/tensor.hpp"

namespace rbf::ad {

namespace detail {

inline void requireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shapeString() + " vs " + b.shapeString());
  }
}

}  // namespace detail

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: shape mismatch " + a.shapeString() + " vs " + b.shapeString());
  Matrix out = a.value() * b.value();
  return tape.record("matmul", std::move(out), {a, b}, [](const Matrix& g, std::vector<Tensor>& in) {
    if (in[0].requiresGrad()) Tape::accumulate(in[0], g * in[1].value().transpose());
    if (in[1].requiresGrad()) Tape::accumulate(in[1], in[0].value().transpose() * g);
  });
}

// a · bᵀ, used for attention scores.
inline Tensor matmulTransposed(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmulTransposed: shape mismatch " + a.shapeString() + " vs " + b.shapeString());
  }
  Matrix out = a.value() * b.value().transpose();
  return tape.record("matmulTransposed", std::move(out), {a, b}, [](const Matrix& g, std::vector<Tensor>& in) {
    if (in[0].requiresGrad()) Tape::accumulate(in[0], g * in[1].value());
    if (in[1].requiresGrad()) Tape::accumulate(in[1], g.transpose() * in[0].value());
  });
}

inline Tensor transpose(Tape& tape, const Tensor& a) {
  Matrix out = a.value().transpose();
  return tape.record("transpose", std::move(out), {a},
                     [](const Matrix& g, std::vector<Tensor>& in) { Tape::accumulate(in[0], g.transpose()); });
}

// Elementwise sum; `b` may also be a 1×cols row added to every row of `a`.
inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols()) {
    Matrix out = a.value().rowwise() + b.value().row(0);
    return tape.record("add", std::move(out), {a, b}, [](const Matrix& g, std::vector<Tensor>& in) {
      Tape::accumulate(in[0], g);
      if (in[1].requiresGrad()) Tape::accumulate(in[1], g.colwise().sum());
    });
  }
  detail::requireSameShape("add", a, b);
  Matrix out = a.value() + b.value();
  return tape.record("add", std::move(out), {a, b}, [](const Matrix& g, std::vector<Tensor>& in) {
    Tape::accumulate(in[0], g);
    Tape::accumulate(in[1], g);
  });
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::requireSameShape("sub", a, b);
  Matrix out = a.value() - b.value();
  return tape.record("sub", std::move(out), {a, b}, [](const Matrix& g, std::vector<Tensor>& in) {
    Tape::accumulate(in[0], g);
    if (in[1].requiresGrad()) Tape::accumulate(in[1], -g);
  });
}

inline Tensor scale(Tape& tape, const Tensor& a, double s) {
  Matrix out = s * a.value();
  return tape.record("scale", std::move(out), {a},
                     [s](const Matrix& g, std::vector<Tensor>& in) { Tape::accumulate(in[0], s * g); });
}

// Hadamard product.
inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::requireSameShape("mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return tape.record("mul", std::move(out), {a, b}, [](const Matrix& g, std::vector<Tensor>& in) {
    if (in[0].requiresGrad()) Tape::accumulate(in[0], g.cwiseProduct(in[1].value()));
    if (in[1].requiresGrad()) Tape::accumulate(in[1], g.cwiseProduct(in[0].value()));
  });
}

enum class Axis { Rows, Cols };

inline Tensor concat(Tape& tape, const std::vector<Tensor>& parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (axis == Axis::Rows) {
      if (p.cols() != parts[0].cols()) {
        throw ShapeError("concat: shape mismatch " + parts[0].shapeString() + " vs " + p.shapeString());
      }
      rows += p.rows();
      cols = p.cols();
    } else {
      if (p.rows() != parts[0].rows()) {
        throw ShapeError("concat: shape mismatch " + parts[0].shapeString() + " vs " + p.shapeString());
      }
      cols += p.cols();
      rows = p.rows();
    }
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    if (axis == Axis::Rows) {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    } else {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    }
  }
  return tape.record("concat", std::move(out), parts, [axis](const Matrix& g, std::vector<Tensor>& in) {
    Eigen::Index o = 0;
    for (auto& p : in) {
      if (axis == Axis::Rows) {
        if (p.requiresGrad()) Tape::accumulate(p, g.middleRows(o, p.rows()));
        o += p.rows();
      } else {
        if (p.requiresGrad()) Tape::accumulate(p, g.middleCols(o, p.cols()));
        o += p.cols();
      }
    }
  });
}

inline Tensor slice(Tape& tape, const Tensor& a, Eigen::Index row, Eigen::Index rowCount, Eigen::Index col,
                    Eigen::Index colCount) {
  if (row < 0 || col < 0 || rowCount < 0 || colCount < 0 || row + rowCount > a.rows() || col + colCount > a.cols()) {
    throw ShapeError("slice [" + std::to_string(row) + "+" + std::to_string(rowCount) + ", " + std::to_string(col) +
                     "+" + std::to_string(colCount) + "] out of range for " + a.shapeString());
  }
  Matrix out = a.value().block(row, col, rowCount, colCount);
  return tape.record("slice", std::move(out), {a}, [=](const Matrix& g, std::vector<Tensor>& in) {
    in[0].gradRef().block(row, col, rowCount, colCount) += g;
  });
}

inline Tensor sliceRows(Tape& tape, const Tensor& a, Eigen::Index row, Eigen::Index count) {
  return slice(tape, a, row, count, 0, a.cols());
}

inline Tensor sliceCols(Tape& tape, const Tensor& a, Eigen::Index col, Eigen::Index count) {
  return slice(tape, a, 0, a.rows(), col, count);
}

// Per-row (x − mean) / sqrt(var + eps), then gain and bias (both 1×cols).
inline Tensor layerNormalize(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layerNormalize: shape mismatch " + x.shapeString() + " vs gain " + gain.shapeString() +
                     " / bias " + bias.shapeString());
  }
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd invStd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    invStd[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * invStd[r];
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return tape.record("layerNormalize", std::move(out), {x, gain, bias},
                     [xhat, invStd, n](const Matrix& g, std::vector<Tensor>& in) {
                       if (in[1].requiresGrad()) Tape::accumulate(in[1], g.cwiseProduct(xhat).colwise().sum());
                       if (in[2].requiresGrad()) Tape::accumulate(in[2], g.colwise().sum());
                       if (!in[0].requiresGrad()) return;
                       const Matrix gh = g.array().rowwise() * in[1].value().row(0).array();
                       Matrix gx(gh.rows(), n);
                       for (Eigen::Index r = 0; r < gh.rows(); ++r) {
                         const double m1 = gh.row(r).mean();
                         const double m2 = gh.row(r).cwiseProduct(xhat.row(r)).mean();
                         gx.row(r) = invStd[r] * (gh.row(r).array() - m1 - xhat.row(r).array() * m2);
                       }
                       Tape::accumulate(in[0], gx);
                     });
}

inline Tensor softmaxRows(Tape& tape, const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  Matrix y = out;
  return tape.record("softmaxRows", std::move(out), {a}, [y](const Matrix& g, std::vector<Tensor>& in) {
    Matrix gx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      gx.row(r) = y.row(r).array() * (g.row(r).array() - dot);
    }
    Tape::accumulate(in[0], gx);
  });
}

inline Tensor relu(Tape& tape, const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return tape.record("relu", std::move(out), {a}, [](const Matrix& g, std::vector<Tensor>& in) {
    Tape::accumulate(in[0], (in[0].value().array() > 0.0).select(g, 0.0).matrix());
  });
}

inline Tensor sin(Tape& tape, const Tensor& a) {
  Matrix out = a.value().array().sin().matrix();
  return tape.record("sin", std::move(out), {a}, [](const Matrix& g, std::vector<Tensor>& in) {
    Tape::accumulate(in[0], g.cwiseProduct(in[0].value().array().cos().matrix()));
  });
}

inline Tensor cos(Tape& tape, const Tensor& a) {
  Matrix out = a.value().array().cos().matrix();
  return tape.record("cos", std::move(out), {a}, [](const Matrix& g, std::vector<Tensor>& in) {
    Tape::accumulate(in[0], -g.cwiseProduct(in[0].value().array().sin().matrix()));
  });
}

inline Tensor exp(Tape& tape, const Tensor& a) {
  Matrix out = a.value().array().exp().matrix();
  Matrix y = out;
  return tape.record("exp", std::move(out), {a},
                     [y](const Matrix& g, std::vector<Tensor>& in) { Tape::accumulate(in[0], g.cwiseProduct(y)); });
}

inline Tensor sum(Tape& tape, const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape.record("sum", std::move(out), {a}, [](const Matrix& g, std::vector<Tensor>& in) {
    Tape::accumulate(in[0], Matrix::Constant(in[0].rows(), in[0].cols(), g(0, 0)));
  });
}

inline Tensor meanSquaredError(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::requireSameShape("meanSquaredError", a, b);
  const double n = static_cast<double>(a.value().size());
  Matrix diff = a.value() - b.value();
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return tape.record("meanSquaredError", std::move(out), {a, b}, [diff, n](const Matrix& g, std::vector<Tensor>& in) {
    const Matrix d = (2.0 * g(0, 0) / n) * diff;
    Tape::accumulate(in[0], d);
    if (in[1].requiresGrad()) Tape::accumulate(in[1], -d);
  });
}

// Mean Euclidean norm of (a − b) over the rows where mask is set; rows × 3
// residuals give the masked L2 surface loss.
inline Tensor maskedMeanRowDistance(Tape& tape, const Tensor& a, const Tensor& b, const std::vector<char>& mask) {
  detail::requireSameShape("maskedMeanRowDistance", a, b);
  if (static_cast<Eigen::Index>(mask.size()) != a.rows()) throw ShapeError("maskedMeanRowDistance: mask length mismatch");
  Matrix diff = a.value() - b.value();
  Eigen::VectorXd norms(a.rows());
  double total = 0.0;
  int count = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    norms[r] = diff.row(r).norm();
    if (mask[static_cast<size_t>(r)]) {
      total += norms[r];
      ++count;
    }
  }
  if (count == 0) throw DataError("masked loss with an empty visibility mask");
  Matrix out(1, 1);
  out(0, 0) = total / count;
  return tape.record("maskedMeanRowDistance", std::move(out), {a, b},
                     [diff, norms, mask, count](const Matrix& g, std::vector<Tensor>& in) {
                       Matrix d = Matrix::Zero(diff.rows(), diff.cols());
                       for (Eigen::Index r = 0; r < diff.rows(); ++r) {
                         if (mask[static_cast<size_t>(r)] && norms[r] > 0.0) {
                           d.row(r) = diff.row(r) * (g(0, 0) / (count * norms[r]));
                         }
                       }
                       Tape::accumulate(in[0], d);
                       if (in[1].requiresGrad()) Tape::accumulate(in[1], -d);
                     });
}

// Σ_r w_r · ‖a_r − b_r‖ over rows with non-zero weight. Batched masked
// losses use per-row weights 1 / (visible count · batch).
inline Tensor weightedRowDistance(Tape& tape, const Tensor& a, const Tensor& b, const std::vector<double>& weights) {
  detail::requireSameShape("weightedRowDistance", a, b);
  if (static_cast<Eigen::Index>(weights.size()) != a.rows()) throw ShapeError("weightedRowDistance: weight length mismatch");
  Matrix diff = a.value() - b.value();
  Eigen::VectorXd norms = Eigen::VectorXd::Zero(a.rows());
  double total = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if (weights[static_cast<size_t>(r)] == 0.0) continue;
    norms[r] = diff.row(r).norm();
    total += weights[static_cast<size_t>(r)] * norms[r];
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return tape.record("weightedRowDistance", std::move(out), {a, b},
                     [diff, norms, weights](const Matrix& g, std::vector<Tensor>& in) {
                       Matrix d = Matrix::Zero(diff.rows(), diff.cols());
                       for (Eigen::Index r = 0; r < diff.rows(); ++r) {
                         const double w = weights[static_cast<size_t>(r)];
                         if (w != 0.0 && norms[r] > 0.0) d.row(r) = diff.row(r) * (g(0, 0) * w / norms[r]);
                       }
                       Tape::accumulate(in[0], d);
                       if (in[1].requiresGrad()) Tape::accumulate(in[1], -d);
                     });
}

}  // namespace rbf::ad
