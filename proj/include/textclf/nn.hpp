#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "textclf/common.hpp"

namespace textclf::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// One learnable tensor with its gradient and Adam moments.
template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> m;
  Mat<S> v;

  void setup(std::string param_name, Eigen::Index rows, Eigen::Index cols) {
    name = std::move(param_name);
    value = Mat<S>::Zero(rows, cols);
    grad = Mat<S>::Zero(rows, cols);
    m = Mat<S>::Zero(rows, cols);
    v = Mat<S>::Zero(rows, cols);
  }

  void zero_grad() { grad.setZero(); }
  std::size_t count() const { return static_cast<std::size_t>(value.size()); }
};

// Glorot-uniform fill from the portable RNG so initialization is identical
// across platforms for a fixed seed.
template <typename S>
void glorot_init(Param<S>& p, SplitMix64& rng) {
  const double fan_in = static_cast<double>(p.value.rows());
  const double fan_out = static_cast<double>(p.value.cols());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index c = 0; c < p.value.cols(); ++c)
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      p.value(r, c) = static_cast<S>((rng.next_unit() * 2.0 - 1.0) * limit);
}

template <typename S>
void uniform_init(Param<S>& p, SplitMix64& rng, double scale) {
  for (Eigen::Index c = 0; c < p.value.cols(); ++c)
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      p.value(r, c) = static_cast<S>((rng.next_unit() * 2.0 - 1.0) * scale);
}

template <typename S>
struct AdamConfig {
  S learning_rate = static_cast<S>(1e-3);
  S beta1 = static_cast<S>(0.9);
  S beta2 = static_cast<S>(0.999);
  S epsilon = static_cast<S>(1e-8);
  S clip_norm = static_cast<S>(1.0);  // global gradient-norm clip; <=0 disables
};

template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig<S> config = {}) : config_(config) {}

  void step(const std::vector<Param<S>*>& params) {
    ++t_;
    if (config_.clip_norm > S(0)) {
      double sq = 0.0;
      for (const Param<S>* p : params) sq += static_cast<double>(p->grad.squaredNorm());
      const double norm = std::sqrt(sq);
      if (norm > static_cast<double>(config_.clip_norm)) {
        const S scale = static_cast<S>(static_cast<double>(config_.clip_norm) / norm);
        for (Param<S>* p : params) p->grad *= scale;
      }
    }
    const S bc1 = S(1) - std::pow(config_.beta1, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(config_.beta2, static_cast<S>(t_));
    for (Param<S>* p : params) {
      p->m = config_.beta1 * p->m + (S(1) - config_.beta1) * p->grad;
      p->v = config_.beta2 * p->v.array().matrix() +
             (S(1) - config_.beta2) * p->grad.array().square().matrix();
      auto m_hat = p->m.array() / bc1;
      auto v_hat = p->v.array() / bc2;
      p->value.array() -= config_.learning_rate * m_hat / (v_hat.sqrt() + config_.epsilon);
    }
  }

  std::uint64_t steps_taken() const { return t_; }
  void reset(std::uint64_t t = 0) { t_ = t; }

 private:
  AdamConfig<S> config_;
  std::uint64_t t_ = 0;
};

// Row-wise softmax, numerically stabilized.
template <typename S>
void softmax_rows_inplace(Mat<S>& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S max = x.row(r).maxCoeff();
    x.row(r) = (x.row(r).array() - max).exp();
    x.row(r) /= x.row(r).sum();
  }
}

// d(softmax)/dx given the forward probabilities and upstream gradient,
// row-wise: dS = P .* (dP - rowsum(dP .* P)).
template <typename S>
Mat<S> softmax_rows_backward(const Mat<S>& probs, const Mat<S>& dprobs) {
  Mat<S> out(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const S dot = probs.row(r).dot(dprobs.row(r));
    out.row(r) = probs.row(r).array() * (dprobs.row(r).array() - dot);
  }
  return out;
}

}  // namespace textclf::nn
