#pragma once

#include <cstddef>
#include <vector>

#include "hidfd/tensor.hpp"

namespace hidfd {

struct SgdOptions {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- momentum * v + grad + weight_decay * param ; param <- param - lr * v
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, const SgdOptions& opt);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

// Bias-corrected Adam update; `step` is the 1-based update count.
void adam_step(Tensor& param, const Tensor& grad, AdamMoments& moments, std::size_t step,
               const AdamOptions& opt);

class Sgd {
 public:
  Sgd(std::vector<Parameter*> params, SgdOptions opt);

  void zero_grad();
  void step();
  void set_lr(double lr);
  const SgdOptions& options() const noexcept { return opt_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> velocity_;
  SgdOptions opt_;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions opt);

  void zero_grad();
  void step();
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamMoments> moments_;
  AdamOptions opt_;
  std::size_t t_ = 0;
};

}  // namespace hidfd
