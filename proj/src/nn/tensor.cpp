#include "nn/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace argex::nn {

namespace {

thread_local bool t_grad_enabled = true;

// Attaches the backward closure when any input needs gradients.
template <typename Fn>
Var make_op(Mat value, std::vector<NodePtr> parents, Fn&& backward) {
  Var out(std::move(value), false);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  if (needs) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::forward<Fn>(backward);
  }
  return out;
}

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

Var matmul(const Var& a, const Var& b) {
  auto an = a.node(), bn = b.node();
  return make_op(an->value * bn->value, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->ensure_grad().noalias() += self.grad * bn->value.transpose();
    if (bn->requires_grad) bn->ensure_grad().noalias() += an->value.transpose() * self.grad;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  auto an = a.node(), bn = b.node();
  return make_op(an->value * bn->value.transpose(), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->ensure_grad().noalias() += self.grad * bn->value;
    if (bn->requires_grad) bn->ensure_grad().noalias() += self.grad.transpose() * an->value;
  });
}

Var add(const Var& a, const Var& b) {
  auto an = a.node(), bn = b.node();
  return make_op(an->value + bn->value, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad;
    if (bn->requires_grad) bn->ensure_grad() += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  auto an = a.node(), bn = b.node();
  return make_op(an->value - bn->value, {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad;
    if (bn->requires_grad) bn->ensure_grad() -= self.grad;
  });
}

Var add_rowvec(const Var& a, const Var& bias) {
  auto an = a.node(), bn = bias.node();
  Mat v = an->value;
  v.rowwise() += bn->value.row(0);
  return make_op(std::move(v), {an, bn}, [an, bn](Node& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad;
    if (bn->requires_grad) bn->ensure_grad().row(0) += self.grad.colwise().sum();
  });
}

Var scale(const Var& a, double s) {
  auto an = a.node();
  return make_op(an->value * s, {an}, [an, s](Node& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad * s;
  });
}

Var add_const(const Var& a, const Mat& c) {
  auto an = a.node();
  return make_op(an->value + c, {an}, [an](Node& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad;
  });
}

Var relu(const Var& a) {
  auto an = a.node();
  return make_op(an->value.cwiseMax(0.0), {an}, [an](Node& self) {
    if (an->requires_grad)
      an->ensure_grad().array() +=
          self.grad.array() * (an->value.array() > 0.0).cast<double>();
  });
}

Var row_softmax(const Var& a) {
  auto an = a.node();
  Mat p = an->value;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  auto probs = std::make_shared<Mat>(p);
  return make_op(std::move(p), {an}, [an, probs](Node& self) {
    if (!an->requires_grad) return;
    Mat& da = an->ensure_grad();
    for (Eigen::Index i = 0; i < probs->rows(); ++i) {
      const double dot = self.grad.row(i).dot(probs->row(i));
      da.row(i).array() +=
          probs->row(i).array() * (self.grad.row(i).array() - dot);
    }
  });
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps) {
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  const Eigen::Index n = an->value.rows(), c = an->value.cols();
  auto xhat = std::make_shared<Mat>(n, c);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  Mat out(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = an->value.row(i).mean();
    const double var = (an->value.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(i) = is;
    xhat->row(i) = (an->value.row(i).array() - mu) * is;
    out.row(i) = xhat->row(i).cwiseProduct(gn->value.row(0)) + bn->value.row(0);
  }
  return make_op(std::move(out), {an, gn, bn}, [an, gn, bn, xhat, inv_std](Node& self) {
    const Eigen::Index c = xhat->cols();
    if (gn->requires_grad)
      gn->ensure_grad().row(0) += (self.grad.array() * xhat->array()).colwise().sum().matrix();
    if (bn->requires_grad) bn->ensure_grad().row(0) += self.grad.colwise().sum();
    if (!an->requires_grad) return;
    Mat& da = an->ensure_grad();
    for (Eigen::Index i = 0; i < xhat->rows(); ++i) {
      Eigen::RowVectorXd dxhat = self.grad.row(i).cwiseProduct(gn->value.row(0));
      const double m1 = dxhat.mean();
      const double m2 = dxhat.cwiseProduct(xhat->row(i)).mean();
      da.row(i) += ((dxhat.array() - m1 - xhat->row(i).array() * m2) * (*inv_std)(i)).matrix();
      (void)c;
    }
  });
}

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
  auto tn = table.node();
  Mat out(static_cast<Eigen::Index>(ids.size()), tn->value.cols());
  for (size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = tn->value.row(ids[i]);
  return make_op(std::move(out), {tn}, [tn, ids](Node& self) {
    if (!tn->requires_grad) return;
    Mat& dt = tn->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      dt.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

Var gather_log_softmax(const Var& logits, const std::vector<int>& targets) {
  auto ln = logits.node();
  const Eigen::Index n = ln->value.rows();
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw std::invalid_argument("gather_log_softmax: one target per row required");
  auto probs = std::make_shared<Mat>(n, ln->value.cols());
  Mat out(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = ln->value.row(i).maxCoeff();
    Eigen::RowVectorXd shifted = (ln->value.row(i).array() - mx).exp();
    const double z = shifted.sum();
    probs->row(i) = shifted / z;
    out(i, 0) = ln->value(i, targets[i]) - (mx + std::log(z));
  }
  return make_op(std::move(out), {ln}, [ln, probs, targets](Node& self) {
    if (!ln->requires_grad) return;
    Mat& dl = ln->ensure_grad();
    for (Eigen::Index i = 0; i < probs->rows(); ++i) {
      const double g = self.grad(i, 0);
      dl.row(i) -= g * probs->row(i);
      dl(i, targets[i]) += g;
    }
  });
}

Var sum_all(const Var& a) {
  auto an = a.node();
  Mat out(1, 1);
  out(0, 0) = an->value.sum();
  return make_op(std::move(out), {an}, [an](Node& self) {
    if (an->requires_grad) an->ensure_grad().array() += self.grad(0, 0);
  });
}

Var weighted_sum(const Var& column, const Eigen::VectorXd& weights) {
  auto cn = column.node();
  if (cn->value.cols() != 1 || cn->value.rows() != weights.size())
    throw std::invalid_argument("weighted_sum: column vector and weights must align");
  Mat out(1, 1);
  out(0, 0) = cn->value.col(0).dot(weights);
  return make_op(std::move(out), {cn}, [cn, weights](Node& self) {
    if (cn->requires_grad) cn->ensure_grad().col(0) += self.grad(0, 0) * weights;
  });
}

Var dropout(const Var& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  auto an = a.node();
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  auto mask = std::make_shared<Mat>(an->value.rows(), an->value.cols());
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < mask->rows(); ++i)
    for (Eigen::Index j = 0; j < mask->cols(); ++j)
      (*mask)(i, j) = dist(rng) < p ? 0.0 : 1.0 / keep;
  return make_op(an->value.cwiseProduct(*mask), {an}, [an, mask](Node& self) {
    if (an->requires_grad) an->ensure_grad() += self.grad.cwiseProduct(*mask);
  });
}

Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index n) {
  auto an = a.node();
  return make_op(an->value.middleRows(r0, n), {an}, [an, r0, n](Node& self) {
    if (an->requires_grad) an->ensure_grad().middleRows(r0, n) += self.grad;
  });
}

Var slice_cols(const Var& a, Eigen::Index c0, Eigen::Index n) {
  auto an = a.node();
  return make_op(an->value.middleCols(c0, n), {an, }, [an, c0, n](Node& self) {
    if (an->requires_grad) an->ensure_grad().middleCols(c0, n) += self.grad;
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    cols += p.cols();
    parents.push_back(p.node());
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op(std::move(out), std::move(parents), [](Node& self) {
    Eigen::Index at = 0;
    for (auto& parent : self.parents) {
      const Eigen::Index w = parent->value.cols();
      if (parent->requires_grad) parent->ensure_grad() += self.grad.middleCols(at, w);
      at += w;
    }
  });
}

void backward(const Var& scalar_loss) {
  if (scalar_loss.rows() != 1 || scalar_loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1");
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(scalar_loss.node().get(), 0);
  visited.insert(scalar_loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (parent && parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  scalar_loss.node()->ensure_grad()(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn && (*it)->grad_init) (*it)->backward_fn(**it);
  }
}

}  // namespace argex::nn
