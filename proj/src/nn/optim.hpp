#pragma once

#include <vector>

#include "nn/tensor.hpp"

namespace argex::nn {

double global_grad_norm(const std::vector<Var*>& params);
bool grads_finite(const std::vector<Var*>& params);
void zero_grads(const std::vector<Var*>& params);

// Plain SGD with optional global-norm clipping (clip_norm <= 0 disables).
void sgd_step(const std::vector<Var*>& params, double lr, double clip_norm = 0.0);

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Var*>& params, double clip_norm = 0.0);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace argex::nn
