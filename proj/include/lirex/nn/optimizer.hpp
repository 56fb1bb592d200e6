#pragma once

#include <cmath>
#include <vector>

#include "lirex/errors.hpp"
#include "lirex/nn/tensor.hpp"

namespace lirex::nn {

// Adam with bias correction and a fixed learning rate.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr_ <= 0.0) throw ConfigError("optimizer: learning rate must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -=
          lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

 private:
  std::vector<Parameter*> params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace lirex::nn
