#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rbf/autodiff/ops.hpp"

namespace rbf::testing {

struct GradCheckResult {
  double worstRelative = 0.0;
  std::string worstInput;
};

// Compares tape gradients of f against central differences (step h) for every
// entry of every input. Error per input = ‖analytic − numeric‖ / max(‖numeric‖, floor).
inline GradCheckResult gradCheck(const std::function<ad::Tensor(ad::Tape&)>& f, std::vector<ad::Tensor> inputs,
                                 double h = 1e-5, double floor = 1e-5) {
  for (auto& in : inputs) in.zeroGrad();
  {
    ad::Tape tape;
    tape.backward(f(tape));
  }
  GradCheckResult res;
  for (size_t i = 0; i < inputs.size(); ++i) {
    ad::Tensor& x = inputs[i];
    const ad::Matrix analytic = x.hasGrad() ? x.grad() : ad::Matrix::Zero(x.rows(), x.cols());
    ad::Matrix numeric(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.value().size(); ++k) {
      const double orig = x.value().data()[k];
      x.mutableValue().data()[k] = orig + h;
      double fp = 0.0;
      {
        ad::Tape t;
        fp = f(t).item();
      }
      x.mutableValue().data()[k] = orig - h;
      double fm = 0.0;
      {
        ad::Tape t;
        fm = f(t).item();
      }
      x.mutableValue().data()[k] = orig;
      numeric.data()[k] = (fp - fm) / (2.0 * h);
    }
    const double rel = (analytic - numeric).norm() / std::max(numeric.norm(), floor);
    if (rel > res.worstRelative) {
      res.worstRelative = rel;
      res.worstInput = "input " + std::to_string(i);
    }
    x.zeroGrad();
  }
  return res;
}

// Random projection to a scalar so every output entry carries a distinct weight.
inline ad::Tensor project(ad::Tape& t, const ad::Tensor& y, unsigned seed = 99) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  ad::Matrix r(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = g(rng);
  return ad::sum(t, ad::mul(t, y, ad::Tensor::constant(r)));
}

inline ad::Matrix randomMatrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  ad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace rbf::testing
