#pragma once

#include <cmath>
#include <vector>

#include "rbf/autodiff/ops.hpp"
#include "rbf/model/sample.hpp"
#include "rbf/multiview/camera.hpp"

namespace rbf::model {

using geom::Points;
using geom::Vec3;

// Mean Euclidean distance (mm) over the sample's visible surface points.
inline double loss3D(const Points& predicted, const FrameSample& sample) {
  if (predicted.rows() != sample.surface.rows() || static_cast<size_t>(predicted.rows()) != sample.visible.size()) {
    throw ShapeError("loss3D: prediction has " + std::to_string(predicted.rows()) + " rows, sample has " +
                     std::to_string(sample.surface.rows()));
  }
  double total = 0.0;
  int count = 0;
  for (Eigen::Index j = 0; j < predicted.rows(); ++j) {
    if (!sample.visible[static_cast<size_t>(j)]) continue;
    total += (predicted.row(j) - sample.surface.row(j)).norm();
    ++count;
  }
  if (count == 0) throw DataError("loss3D: sample " + sample.individual + "/" + std::to_string(sample.frame) + " has no visible points");
  return total / count;
}

struct SilhouetteView {
  const mv::Camera* camera = nullptr;
  const mv::SilhouetteMask* mask = nullptr;
};

// Views of a sample that carry a mask, optionally restricted to `subset`.
inline std::vector<SilhouetteView> silhouetteViews(const FrameSample& s, const std::vector<mv::Camera>& cameras,
                                                   const std::vector<int>& subset = {}) {
  std::vector<SilhouetteView> out;
  for (size_t v = 0; v < s.masks.size(); ++v) {
    if (!s.masks[v]) continue;
    if (!subset.empty() && std::find(subset.begin(), subset.end(), static_cast<int>(v)) == subset.end()) continue;
    if (v >= cameras.size()) throw DataError("mask for view " + std::to_string(v) + " has no camera");
    out.push_back({&cameras[v], s.masks[v].get()});
  }
  return out;
}

inline double behindCameraPenalty(const mv::Camera& cam) { return std::hypot(static_cast<double>(cam.width), static_cast<double>(cam.height)); }

// Σ over views and points of the silhouette penalty. The hard variant counts
// (view, point) pairs that fall outside the mask; points behind a camera count
// as outside (hard) or cost the image diagonal (soft).
inline double lossSilhouette(const Points& points, const std::vector<SilhouetteView>& views, bool soft) {
  if (views.empty()) throw DataError("lossSilhouette needs at least one view");
  double total = 0.0;
  for (const auto& view : views) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const Vec3 p = points.row(i).transpose();
      if (!(view.camera->depth(p) > 0.0)) {
        total += soft ? behindCameraPenalty(*view.camera) : 1.0;
        continue;
      }
      const mv::Vec2 px = mv::project(*view.camera, p);
      total += soft ? mv::softPenalty(*view.mask, px).value : mv::hardPenalty(*view.mask, px);
    }
  }
  return total;
}

// Differentiable soft silhouette loss over an n × 3 tensor of world points.
inline ad::Tensor silhouetteLossOp(ad::Tape& tape, const ad::Tensor& points, const std::vector<SilhouetteView>& views) {
  if (points.cols() != 3) throw ShapeError("silhouette loss expects n × 3 points, got " + points.shapeString());
  if (views.empty()) throw DataError("lossSilhouette needs at least one view");
  ad::Matrix grad = ad::Matrix::Zero(points.rows(), 3);
  double total = 0.0;
  for (const auto& view : views) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const Vec3 p = points.value().row(i).transpose();
      if (!(view.camera->depth(p) > 0.0)) {
        total += behindCameraPenalty(*view.camera);
        continue;
      }
      const mv::Penalty pen = mv::softPenalty(*view.mask, mv::project(*view.camera, p));
      total += pen.value;
      if (pen.gradient.squaredNorm() > 0.0) grad.row(i) += (pen.gradient.transpose() * mv::projectJacobian(*view.camera, p));
    }
  }
  ad::Matrix out(1, 1);
  out(0, 0) = total;
  return tape.record("silhouetteLoss", std::move(out), {points}, [grad](const ad::Matrix& g, std::vector<ad::Tensor>& in) {
    ad::Tape::accumulate(in[0], g(0, 0) * grad);
  });
}

}  // namespace rbf::model
