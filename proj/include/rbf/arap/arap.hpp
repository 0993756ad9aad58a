#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "rbf/geom/closest_point.hpp"
#include "rbf/geom/laplacian.hpp"
#include "rbf/geom/mesh.hpp"

namespace rbf::arap {

using geom::Mat3;
using geom::Points;
using geom::TriMesh;
using geom::Vec3;

struct SoftTarget {
  Vec3 position;
  double weight = 1.0;
};

struct ArapConstraints {
  std::map<int, Vec3> hard;
  std::map<int, SoftTarget> soft;
};

struct ArapConfig {
  int iterations = 10;
  double convergenceTol = 1e-4;  // max vertex update between iterations (mesh units)
  double softWeightDefault = 1.0;
};

struct ArapResult {
  Points positions;
  // Total energy (rigidity + soft penalty) after each global step.
  std::vector<double> energies;
};

inline void validate(const TriMesh& mesh, const ArapConstraints& c, const ArapConfig& config) {
  if (config.iterations < 1) throw ConfigError("ARAP iterations must be >= 1");
  if (!(config.convergenceTol > 0.0)) throw ConfigError("ARAP convergence tolerance must be > 0");
  bool anchored = !c.hard.empty();
  for (const auto& [idx, target] : c.hard) {
    if (idx < 0 || idx >= mesh.numVertices()) throw DataError("hard constraint on invalid vertex " + std::to_string(idx));
    if (!target.allFinite()) throw NumericError("hard constraint target for vertex " + std::to_string(idx) + " is not finite");
  }
  for (const auto& [idx, target] : c.soft) {
    if (idx < 0 || idx >= mesh.numVertices()) throw DataError("soft constraint on invalid vertex " + std::to_string(idx));
    if (c.hard.count(idx)) throw DataError("vertex " + std::to_string(idx) + " is both hard and soft constrained");
    if (!target.position.allFinite() || !std::isfinite(target.weight)) {
      throw NumericError("soft constraint target for vertex " + std::to_string(idx) + " is not finite");
    }
    if (target.weight < 0.0) throw DataError("soft constraint weight must be >= 0");
    if (target.weight > 0.0) anchored = true;
  }
  if (!anchored) throw NumericError("ARAP global system is singular: no hard constraint and no positive soft weight");
}

// Local/global ARAP solver with the global system factorized once for a fixed
// constraint layout. Targets may change between solves.
class ArapSolver {
 public:
  ArapSolver(const TriMesh& mesh, std::vector<int> hardIndices, std::map<int, double> softWeights)
      : rest_(mesh.vertices),
        weights_(geom::cotangentWeights(mesh)),
        hard_(std::move(hardIndices)),
        softWeights_(std::move(softWeights)) {
    const int nv = mesh.numVertices();
    freeIndex_.assign(static_cast<size_t>(nv), -1);
    std::vector<char> isHard(static_cast<size_t>(nv), 0);
    for (int h : hard_) isHard[static_cast<size_t>(h)] = 1;
    for (int v = 0; v < nv; ++v) {
      if (!isHard[static_cast<size_t>(v)]) {
        freeIndex_[static_cast<size_t>(v)] = static_cast<int>(free_.size());
        free_.push_back(v);
      }
    }
    const geom::SparseMatrix k = geom::stiffnessFromWeights(nv, weights_);
    std::vector<Eigen::Triplet<double>> ff;
    std::vector<Eigen::Triplet<double>> fh;
    std::vector<int> hardCol(static_cast<size_t>(nv), -1);
    for (size_t i = 0; i < hard_.size(); ++i) hardCol[static_cast<size_t>(hard_[i])] = static_cast<int>(i);
    for (int col = 0; col < k.outerSize(); ++col) {
      for (geom::SparseMatrix::InnerIterator it(k, col); it; ++it) {
        const int r = freeIndex_[static_cast<size_t>(it.row())];
        if (r < 0) continue;
        const int cf = freeIndex_[static_cast<size_t>(it.col())];
        if (cf >= 0) {
          ff.emplace_back(r, cf, it.value());
        } else {
          fh.emplace_back(r, hardCol[static_cast<size_t>(it.col())], it.value());
        }
      }
    }
    for (const auto& [v, w] : softWeights_) {
      const int r = freeIndex_[static_cast<size_t>(v)];
      if (r >= 0) ff.emplace_back(r, r, w);
    }
    const auto nf = static_cast<Eigen::Index>(free_.size());
    aff_.resize(nf, nf);
    aff_.setFromTriplets(ff.begin(), ff.end());
    afh_.resize(nf, static_cast<Eigen::Index>(hard_.size()));
    afh_.setFromTriplets(fh.begin(), fh.end());
    if (nf > 0) {
      chol_.compute(aff_);
      if (chol_.info() != Eigen::Success) {
        throw NumericError("ARAP global system is singular (a component lacks constraints)");
      }
      // LDLT succeeds on some semi-definite systems; reject null pivots.
      const double scale = aff_.diagonal().cwiseAbs().maxCoeff();
      if ((chol_.vectorD().array() <= 1e-12 * scale).any()) {
        throw NumericError("ARAP global system is singular (a component lacks constraints)");
      }
    }
  }

  const std::vector<int>& hardIndices() const { return hard_; }

  // hardTargets follow hardIndices() order; softTargets are keyed by vertex.
  ArapResult solve(const Points& hardTargets, const std::map<int, Vec3>& softTargets, const ArapConfig& config,
                   const Points* initial = nullptr) const {
    const auto nv = rest_.rows();
    Points current = initial ? *initial : initialGuess(hardTargets);
    for (size_t i = 0; i < hard_.size(); ++i) current.row(hard_[i]) = hardTargets.row(static_cast<Eigen::Index>(i));

    Eigen::MatrixXd hardMat(static_cast<Eigen::Index>(hard_.size()), 3);
    for (size_t i = 0; i < hard_.size(); ++i) hardMat.row(static_cast<Eigen::Index>(i)) = hardTargets.row(static_cast<Eigen::Index>(i));

    ArapResult result;
    std::vector<Mat3> rotations(static_cast<size_t>(nv));
    for (int it = 0; it < config.iterations; ++it) {
      localStep(current, rotations);
      Points next = current;
      if (!free_.empty()) {
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(free_.size()), 3);
        for (const auto& e : weights_.edges) {
          const Vec3 restEdge = (rest_.row(e.i) - rest_.row(e.j)).transpose();
          const Vec3 term = 0.5 * e.w * (rotations[static_cast<size_t>(e.i)] + rotations[static_cast<size_t>(e.j)]) * restEdge;
          const int fi = freeIndex_[static_cast<size_t>(e.i)];
          const int fj = freeIndex_[static_cast<size_t>(e.j)];
          if (fi >= 0) rhs.row(fi) += term.transpose();
          if (fj >= 0) rhs.row(fj) -= term.transpose();
        }
        for (const auto& [v, target] : softTargets) {
          const int r = freeIndex_[static_cast<size_t>(v)];
          const auto w = softWeights_.find(v);
          if (r >= 0 && w != softWeights_.end()) rhs.row(r) += w->second * target.transpose();
        }
        if (!hard_.empty()) rhs -= afh_ * hardMat;
        const Eigen::MatrixXd sol = chol_.solve(rhs);
        if (!sol.allFinite()) throw NumericError("ARAP global solve produced non-finite positions");
        for (size_t i = 0; i < free_.size(); ++i) next.row(free_[i]) = sol.row(static_cast<Eigen::Index>(i));
      }
      const double change = (next - current).rowwise().norm().maxCoeff();
      current = std::move(next);
      result.energies.push_back(energy(current, rotations, softTargets));
      if (change < config.convergenceTol) break;
    }
    result.positions = std::move(current);
    return result;
  }

  // Energy with rotations refitted to the given positions.
  double energy(const Points& positions, const std::map<int, Vec3>& softTargets) const {
    std::vector<Mat3> rotations(static_cast<size_t>(rest_.rows()));
    localStep(positions, rotations);
    return energy(positions, rotations, softTargets);
  }

 private:
  // Rigid (rotation + translation) fit of the rest hard vertices onto their
  // targets when at least three are given; otherwise the rest pose.
  Points initialGuess(const Points& hardTargets) const {
    if (hard_.size() < 3) return rest_;
    Points src(static_cast<Eigen::Index>(hard_.size()), 3);
    for (size_t i = 0; i < hard_.size(); ++i) src.row(static_cast<Eigen::Index>(i)) = rest_.row(hard_[i]);
    const Vec3 muS = src.colwise().mean().transpose();
    const Vec3 muT = hardTargets.colwise().mean().transpose();
    const Eigen::MatrixXd xs = src.rowwise() - muS.transpose();
    const Eigen::MatrixXd ys = hardTargets.rowwise() - muT.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> shape(xs);
    if (shape.singularValues()[1] <= 1e-9 * shape.singularValues()[0]) return rest_;
    const Mat3 cov = ys.transpose() * xs;
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
    Points out(rest_.rows(), 3);
    for (Eigen::Index v = 0; v < rest_.rows(); ++v) {
      out.row(v) = (r * (rest_.row(v).transpose() - muS) + muT).transpose();
    }
    return out;
  }

  void localStep(const Points& current, std::vector<Mat3>& rotations) const {
    std::vector<Mat3> cov(rotations.size(), Mat3::Zero());
    for (const auto& e : weights_.edges) {
      const Vec3 restEdge = (rest_.row(e.i) - rest_.row(e.j)).transpose();
      const Vec3 defEdge = (current.row(e.i) - current.row(e.j)).transpose();
      const Mat3 outer = e.w * restEdge * defEdge.transpose();
      cov[static_cast<size_t>(e.i)] += outer;
      cov[static_cast<size_t>(e.j)] += outer;
    }
    for (size_t v = 0; v < cov.size(); ++v) {
      if (cov[v].isZero(0.0)) {
        rotations[v].setIdentity();
        continue;
      }
      Eigen::JacobiSVD<Mat3> svd(cov[v], Eigen::ComputeFullU | Eigen::ComputeFullV);
      Mat3 u = svd.matrixU();
      Mat3 r = svd.matrixV() * u.transpose();
      if (r.determinant() < 0.0) {
        u.col(2) *= -1.0;
        r = svd.matrixV() * u.transpose();
      }
      rotations[v] = r;
    }
  }

  double energy(const Points& positions, const std::vector<Mat3>& rotations, const std::map<int, Vec3>& softTargets) const {
    double total = 0.0;
    for (const auto& e : weights_.edges) {
      const Vec3 restEdge = (rest_.row(e.i) - rest_.row(e.j)).transpose();
      const Vec3 defEdge = (positions.row(e.i) - positions.row(e.j)).transpose();
      total += 0.5 * e.w * (defEdge - rotations[static_cast<size_t>(e.i)] * restEdge).squaredNorm();
      total += 0.5 * e.w * (defEdge - rotations[static_cast<size_t>(e.j)] * restEdge).squaredNorm();
    }
    for (const auto& [v, target] : softTargets) {
      const auto w = softWeights_.find(v);
      if (w != softWeights_.end()) total += w->second * (positions.row(v).transpose() - target).squaredNorm();
    }
    return total;
  }

  Points rest_;
  geom::EdgeWeights weights_;
  std::vector<int> hard_;
  std::map<int, double> softWeights_;
  std::vector<int> free_;
  std::vector<int> freeIndex_;
  geom::SparseMatrix aff_;
  geom::SparseMatrix afh_;
  Eigen::SimplicialLDLT<geom::SparseMatrix> chol_;
};

inline ArapResult arapDeformDetailed(const TriMesh& mesh, const ArapConstraints& constraints, const ArapConfig& config,
                                     const Points* initial = nullptr) {
  validate(mesh, constraints, config);
  std::vector<int> hard;
  Points hardTargets(static_cast<Eigen::Index>(constraints.hard.size()), 3);
  for (const auto& [idx, target] : constraints.hard) {
    hardTargets.row(static_cast<Eigen::Index>(hard.size())) = target.transpose();
    hard.push_back(idx);
  }
  std::map<int, double> softWeights;
  std::map<int, Vec3> softTargets;
  for (const auto& [idx, s] : constraints.soft) {
    softWeights[idx] = s.weight;
    softTargets[idx] = s.position;
  }
  const ArapSolver solver(mesh, hard, softWeights);
  return solver.solve(hardTargets, softTargets, config, initial);
}

inline Points arapDeform(const TriMesh& mesh, const ArapConstraints& constraints, const ArapConfig& config = {}) {
  return arapDeformDetailed(mesh, constraints, config).positions;
}

// Target for iterative closest-point alignment: a surface, or a point cloud.
using AlignTarget = std::variant<TriMesh, Points>;

struct AlignResult {
  Points positions;
  // Mean distance from soft-constrained samples to the target after each
  // outer iteration.
  std::vector<double> residuals;
};

namespace detail {

// Mesh target: every free vertex is pulled toward its closest point on the
// target. Cloud target: every cloud point pulls its closest free vertex
// (several points on one vertex are averaged).
inline std::map<int, Vec3> softTargetsFor(const TriMesh& mesh, const Points& current, const std::vector<char>& isHard,
                                          const AlignTarget& target) {
  std::map<int, Vec3> out;
  if (const auto* surf = std::get_if<TriMesh>(&target)) {
    for (int v = 0; v < mesh.numVertices(); ++v) {
      if (isHard[static_cast<size_t>(v)]) continue;
      out[v] = geom::closestPoint(*surf, current.row(v).transpose()).point;
    }
    return out;
  }
  const Points& cloud = std::get<Points>(target);
  std::map<int, std::pair<Vec3, int>> acc;
  for (Eigen::Index q = 0; q < cloud.rows(); ++q) {
    const Vec3 p = cloud.row(q).transpose();
    int best = -1;
    double bestD = std::numeric_limits<double>::infinity();
    for (int v = 0; v < mesh.numVertices(); ++v) {
      if (isHard[static_cast<size_t>(v)]) continue;
      const double d = (current.row(v).transpose() - p).squaredNorm();
      if (d < bestD) {
        bestD = d;
        best = v;
      }
    }
    if (best < 0) continue;
    auto& slot = acc[best];
    if (slot.second == 0) slot.first.setZero();
    slot.first += p;
    slot.second += 1;
  }
  for (const auto& [v, s] : acc) out[v] = s.first / static_cast<double>(s.second);
  return out;
}

inline double meanResidual(const TriMesh& mesh, const Points& current, const std::vector<char>& isHard,
                           const AlignTarget& target) {
  double sum = 0.0;
  int count = 0;
  if (const auto* surf = std::get_if<TriMesh>(&target)) {
    for (int v = 0; v < mesh.numVertices(); ++v) {
      if (isHard[static_cast<size_t>(v)]) continue;
      sum += geom::closestPoint(*surf, current.row(v).transpose()).distance;
      ++count;
    }
  } else {
    const Points& cloud = std::get<Points>(target);
    for (Eigen::Index q = 0; q < cloud.rows(); ++q) {
      double best = std::numeric_limits<double>::infinity();
      for (int v = 0; v < mesh.numVertices(); ++v) {
        if (isHard[static_cast<size_t>(v)]) continue;
        best = std::min(best, (current.row(v) - cloud.row(q)).norm());
      }
      sum += best;
      ++count;
    }
  }
  return count ? sum / count : 0.0;
}

}  // namespace detail

// Alternates closest-point target selection with ARAP solves, warm-starting
// each solve from the previous deformation.
inline AlignResult arapAlignToTargetDetailed(const TriMesh& mesh, const std::map<int, Vec3>& hardKeypoints,
                                             const AlignTarget& target, int outerIterations,
                                             const ArapConfig& config = {}) {
  if (outerIterations < 1) throw ConfigError("outer iterations must be >= 1");
  if (const auto* surf = std::get_if<TriMesh>(&target)) surf->validate();
  std::vector<char> isHard(static_cast<size_t>(mesh.numVertices()), 0);
  ArapConstraints hardOnly;
  hardOnly.hard = hardKeypoints;
  if (!hardOnly.hard.empty()) validate(mesh, hardOnly, config);
  for (const auto& [v, p] : hardKeypoints) isHard[static_cast<size_t>(v)] = 1;

  Points current;
  if (!hardKeypoints.empty()) {
    current = arapDeformDetailed(mesh, hardOnly, config).positions;
  } else {
    current = mesh.vertices;
  }
  AlignResult result;
  for (int outer = 0; outer < outerIterations; ++outer) {
    ArapConstraints c;
    c.hard = hardKeypoints;
    for (const auto& [v, p] : detail::softTargetsFor(mesh, current, isHard, target)) {
      c.soft[v] = {p, config.softWeightDefault};
    }
    if (c.hard.empty() && c.soft.empty()) break;
    current = arapDeformDetailed(mesh, c, config, &current).positions;
    result.residuals.push_back(detail::meanResidual(mesh, current, isHard, target));
  }
  result.positions = std::move(current);
  return result;
}

inline Points arapAlignToTarget(const TriMesh& mesh, const std::map<int, Vec3>& hardKeypoints, const AlignTarget& target,
                                int outerIterations, const ArapConfig& config = {}) {
  return arapAlignToTargetDetailed(mesh, hardKeypoints, target, outerIterations, config).positions;
}

}  // namespace rbf::arap
