#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace argex::nn {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff over dense double matrices. Graphs are built
// dynamically; temporaries release their tape as soon as the last Var handle
// dies. Single-threaded by design so runs are bit-reproducible.

struct Node {
  Mat value;
  Mat grad;
  bool grad_init = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Mat& ensure_grad() {
    if (!grad_init) {
      grad = Mat::Zero(value.rows(), value.cols());
      grad_init = true;
    }
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(Mat v, bool requires_grad = false) : n_(std::make_shared<Node>()) {
    n_->value = std::move(v);
    n_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(n_); }
  Eigen::Index rows() const { return n_->value.rows(); }
  Eigen::Index cols() const { return n_->value.cols(); }
  const Mat& value() const { return n_->value; }
  Mat& value_mut() { return n_->value; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  Mat& grad() { return n_->ensure_grad(); }
  bool has_grad() const { return n_ && n_->grad_init; }
  void zero_grad() {
    if (n_) {
      n_->grad_init = false;
      n_->grad.resize(0, 0);
    }
  }
  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

// Thread-local switch; sampling/inference paths run with gradients off so no
// tape is retained.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_rowvec(const Var& a, const Var& bias);  // bias is 1 x cols
Var scale(const Var& a, double s);
Var add_const(const Var& a, const Mat& c);
Var relu(const Var& a);
Var row_softmax(const Var& a);
Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
Var embedding_rows(const Var& table, const std::vector<int>& ids);
// Per-row log softmax gathered at the target index; returns n x 1.
Var gather_log_softmax(const Var& logits, const std::vector<int>& targets);
Var sum_all(const Var& a);  // 1 x 1
Var weighted_sum(const Var& column, const Eigen::VectorXd& weights);  // 1 x 1
Var dropout(const Var& a, double p, std::mt19937_64& rng);
Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index n);
Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n);
Var concat_cols(const std::vector<Var>& parts);

void backward(const Var& scalar_loss);

}  // namespace argex::nn
