#include "hidfd/optim.hpp"

#include <cmath>

#include "hidfd/errors.hpp"

namespace hidfd {
namespace {

void check_conform(const char* op, const Tensor& param, const Tensor& other) {
  if (param.shape() != other.shape()) {
    throw DimensionError(op, "parameter " + shape_string(param.shape()) + " vs " +
                                 shape_string(other.shape()));
  }
}

}  // namespace

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, const SgdOptions& opt) {
  if (!(opt.lr > 0.0)) throw ContractError("sgd_step: learning rate must be positive");
  check_conform("sgd_step", param, grad);
  if (velocity.size() == 0) velocity = Tensor::zeros_like(param);
  check_conform("sgd_step", param, velocity);
  auto p = param.data();
  auto g = grad.data();
  auto v = velocity.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = opt.momentum * v[i] + g[i] + opt.weight_decay * p[i];
    p[i] -= opt.lr * v[i];
  }
}

void adam_step(Tensor& param, const Tensor& grad, AdamMoments& moments, std::size_t step,
               const AdamOptions& opt) {
  if (opt.beta1 < 0.0 || opt.beta1 >= 1.0 || opt.beta2 < 0.0 || opt.beta2 >= 1.0) {
    throw ContractError("adam_step: betas must lie in [0, 1)");
  }
  if (step == 0) throw ContractError("adam_step: step count is 1-based");
  check_conform("adam_step", param, grad);
  if (moments.m.size() == 0) moments.m = Tensor::zeros_like(param);
  if (moments.v.size() == 0) moments.v = Tensor::zeros_like(param);
  check_conform("adam_step", param, moments.m);
  check_conform("adam_step", param, moments.v);
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  auto p = param.data();
  auto g = grad.data();
  auto m = moments.m.data();
  auto v = moments.v.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
    v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

Sgd::Sgd(std::vector<Parameter*> params, SgdOptions opt)
    : params_(std::move(params)), opt_(opt) {
  for (Parameter* p : params_) velocity_.push_back(Tensor::zeros_like(p->value));
}

void Sgd::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    sgd_step(params_[i]->value, params_[i]->grad, velocity_[i], opt_);
  }
}

void Sgd::set_lr(double lr) { opt_.lr = lr; }

Adam::Adam(std::vector<Parameter*> params, AdamOptions opt)
    : params_(std::move(params)), opt_(opt) {
  for (Parameter* p : params_) {
    moments_.push_back({Tensor::zeros_like(p->value), Tensor::zeros_like(p->value)});
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(params_[i]->value, params_[i]->grad, moments_[i], t_, opt_);
  }
}

}  // namespace hidfd
