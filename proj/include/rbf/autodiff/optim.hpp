#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rbf/autodiff/tensor.hpp"

namespace rbf::ad {

// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, Tensor::parameter(std::move(init)));
    return entries_.back().second;
  }

  Tensor& at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter " + name);
    return entries_[it->second].second;
  }
  const Tensor& at(const std::string& name) const { return const_cast<ParameterSet*>(this)->at(name); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  size_t scalarCount() const {
    size_t n = 0;
    for (const auto& [_, t] : entries_) n += static_cast<size_t>(t.value().size());
    return n;
  }

  void zeroGrad() {
    for (auto& [_, t] : entries_) t.zeroGrad();
  }

  // Deep copy of values, fresh gradient state.
  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& [name, t] : entries_) out.add(name, t.value());
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, size_t> index_;
};

struct AdamConfig {
  double learningRate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }

  Adam(ParameterSet& set, AdamConfig config) : Adam(tensorsOf(set), config) {}

  const AdamConfig& config() const { return config_; }
  void setLearningRate(double lr) { config_.learningRate = lr; }
  long stepCount() const { return step_; }

  // Parameters without a gradient are treated as having zero gradient.
  void step() {
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (p.rows() != m_[i].rows() || p.cols() != m_[i].cols()) throw ShapeError("Adam: parameter changed shape");
      if (!p.hasGrad()) {
        m_[i] *= config_.beta1;
        v_[i] *= config_.beta2;
        continue;
      }
      const Matrix& g = p.grad();
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
      const auto mhat = m_[i].array() / c1;
      const auto vhat = v_[i].array() / c2;
      p.mutableValue().array() -= config_.learningRate * mhat / (vhat.sqrt() + config_.epsilon);
    }
  }

  void zeroGrad() {
    for (auto& p : params_) p.zeroGrad();
  }

 private:
  static std::vector<Tensor> tensorsOf(ParameterSet& set) {
    std::vector<Tensor> out;
    for (auto& [_, t] : set.entries()) out.push_back(t);
    return out;
  }

  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long step_ = 0;
};

}  // namespace rbf::ad
