#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rbf/core/error.hpp"

// Minimal dense reverse-mode automatic differentiation over 2-D float64
// tensors. A Tape records every op whose inputs require gradients; backward()
// replays the records in reverse exactly once.
namespace rbf::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

struct TensorImpl {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requiresGrad = false;
  const Tape* producer = nullptr;  // tape that recorded this tensor, if any
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  bool defined() const { return impl_ != nullptr; }
  Eigen::Index rows() const { return impl_->value.rows(); }
  Eigen::Index cols() const { return impl_->value.cols(); }
  std::vector<size_t> shape() const { return {static_cast<size_t>(rows()), static_cast<size_t>(cols())}; }
  std::string shapeString() const { return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]"; }

  const Matrix& value() const { return impl_->value; }
  Matrix& mutableValue() { return impl_->value; }
  double item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor " + shapeString());
    return impl_->value(0, 0);
  }

  bool requiresGrad() const { return impl_->requiresGrad; }
  void setRequiresGrad(bool on) { impl_->requiresGrad = on; }
  bool hasGrad() const { return impl_->grad.size() > 0; }
  const Matrix& grad() const { return impl_->grad; }
  Matrix& gradRef() {
    if (impl_->grad.size() == 0) impl_->grad = Matrix::Zero(rows(), cols());
    return impl_->grad;
  }
  void zeroGrad() { impl_->grad.resize(0, 0); }

  // Same storage; the result carries no gradient history.
  Tensor detach() const { return constant(impl_->value); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  friend class Tape;
  Tensor(Matrix value, bool requiresGrad) : impl_(std::make_shared<TensorImpl>()) {
    impl_->value = std::move(value);
    impl_->requiresGrad = requiresGrad;
  }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<TensorImpl> impl_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Records `value` as the output of an op over `inputs`. `backward` receives
  // the output gradient and must accumulate into the inputs via accumulate().
  Tensor record(const std::string& op, Matrix value, std::vector<Tensor> inputs,
                std::function<void(const Matrix& gradOut, std::vector<Tensor>& inputs)> backward) {
    if (!value.allFinite()) throw NumericError(op + " produced a non-finite value");
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requiresGrad();
    Tensor out(std::move(value), needs);
    if (!needs) return out;
    if (consumed_) throw Error("tape already consumed by backward()");
    out.impl_->producer = this;
    records_.push_back({out.impl_, std::move(inputs), std::move(backward)});
    return out;
  }

  size_t size() const { return records_.size(); }

  void backward(const Tensor& loss) {
    if (consumed_) throw Error("backward() called twice on one tape");
    if (!loss.defined() || loss.impl()->producer != this) {
      throw Error("backward() on a tensor that was not produced on this tape");
    }
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward() needs a scalar loss, got " + loss.shapeString());
    loss.impl()->grad = Matrix::Constant(1, 1, 1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->output->grad.size() == 0) continue;
      it->backward(it->output->grad, it->inputs);
      for (const auto& in : it->inputs) {
        if (in.requiresGrad() && in.hasGrad() && !in.grad().allFinite()) {
          throw NumericError("non-finite gradient during backward()");
        }
      }
    }
    // Release intermediate gradients; leaf gradients stay for the optimizer.
    for (auto& r : records_) r.output->grad.resize(0, 0);
    records_.clear();
    consumed_ = true;
  }

  static void accumulate(Tensor& t, const Matrix& g) {
    if (!t.requiresGrad()) return;
    t.gradRef() += g;
  }

 private:
  struct Record {
    std::shared_ptr<TensorImpl> output;
    std::vector<Tensor> inputs;
    std::function<void(const Matrix&, std::vector<Tensor>&)> backward;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
};

}  // namespace rbf::ad
