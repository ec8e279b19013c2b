#include "nn/optim.hpp"

#include <cmath>

namespace argex::nn {

double global_grad_norm(const std::vector<Var*>& params) {
  double sq = 0.0;
  for (Var* p : params) {
    if (p->has_grad()) sq += p->grad().squaredNorm();
  }
  return std::sqrt(sq);
}

bool grads_finite(const std::vector<Var*>& params) {
  for (Var* p : params) {
    if (p->has_grad() && !p->grad().allFinite()) return false;
  }
  return true;
}

void zero_grads(const std::vector<Var*>& params) {
  for (Var* p : params) p->zero_grad();
}

void sgd_step(const std::vector<Var*>& params, double lr, double clip_norm) {
  double scale = 1.0;
  if (clip_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  for (Var* p : params) {
    if (p->has_grad()) p->value_mut() -= (lr * scale) * p->grad();
  }
}

void Adam::step(const std::vector<Var*>& params, double clip_norm) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = Mat::Zero(params[i]->rows(), params[i]->cols());
      v_[i] = Mat::Zero(params[i]->rows(), params[i]->cols());
    }
  }
  double scale = 1.0;
  if (clip_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) continue;
    const Mat g = params[i]->grad() * scale;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    params[i]->value_mut().array() -=
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

}  // namespace argex::nn
