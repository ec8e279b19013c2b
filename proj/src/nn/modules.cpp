#include "nn/modules.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace argex::nn {

namespace {

Mat normal_matrix(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Mat causal_mask(Eigen::Index n) {
  Mat m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = -1e9;
  return m;
}

}  // namespace

void Linear::init(int in, int out, bool bias, const LoraConfig& lora_cfg, std::mt19937_64& rng) {
  const double std = std::sqrt(2.0 / (in + out));
  W = Var(normal_matrix(in, out, std, rng), true);
  use_bias = bias;
  if (use_bias) b = Var(Mat::Zero(1, out), true);
  lora = lora_cfg;
  if (lora.rank > 0) {
    A = Var(normal_matrix(in, lora.rank, 0.02, rng), true);
    B = Var(Mat::Zero(lora.rank, out), true);
  }
}

Var Linear::forward(const Var& x, const RunCtx& ctx) const {
  Var y = matmul(x, W);
  if (use_bias) y = add_rowvec(y, b);
  if (lora.rank > 0) {
    Var h = x;
    if (ctx.train && lora.dropout > 0.0 && ctx.rng) h = dropout(h, lora.dropout, *ctx.rng);
    y = add(y, scale(matmul(matmul(h, A), B), lora.scale / lora.rank));
  }
  return y;
}

Mat Linear::apply_nograd(const Mat& x) const {
  Mat y = x * W.value();
  if (use_bias) y.rowwise() += b.value().row(0);
  if (lora.rank > 0) y += (lora.scale / lora.rank) * ((x * A.value()) * B.value());
  return y;
}

void Linear::collect(std::vector<Var*>& out) {
  out.push_back(&W);
  if (use_bias) out.push_back(&b);
  if (lora.rank > 0) {
    out.push_back(&A);
    out.push_back(&B);
  }
}

void Linear::collect_adapters(std::vector<Var*>& out) {
  if (lora.rank > 0) {
    out.push_back(&A);
    out.push_back(&B);
  }
}

void LayerNormModule::init(int width) {
  gain = Var(Mat::Ones(1, width), true);
  bias = Var(Mat::Zero(1, width), true);
}

Var LayerNormModule::forward(const Var& x) const { return layer_norm(x, gain, bias); }

Eigen::RowVectorXd LayerNormModule::apply_nograd_row(const Eigen::RowVectorXd& x) const {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const double is = 1.0 / std::sqrt(var + 1e-5);
  Eigen::RowVectorXd xhat = (x.array() - mu) * is;
  return xhat.cwiseProduct(gain.value().row(0)) + bias.value().row(0);
}

void LayerNormModule::collect(std::vector<Var*>& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

void Embedding::init(int vocab, int width, std::mt19937_64& rng) {
  table = Var(normal_matrix(vocab, width, 0.05, rng), true);
}

void MultiHeadAttention::init(int model_width, int head_count, const LoraConfig& qv_lora,
                              std::mt19937_64& rng) {
  if (model_width % head_count != 0)
    throw std::invalid_argument("attention width must divide evenly across heads");
  heads = head_count;
  d_model = model_width;
  d_head = model_width / head_count;
  LoraConfig none;
  wq.init(model_width, model_width, true, qv_lora, rng);
  wk.init(model_width, model_width, true, none, rng);
  wv.init(model_width, model_width, true, qv_lora, rng);
  wo.init(model_width, model_width, true, none, rng);
}

Var MultiHeadAttention::forward(const Var& q_in, const Var& kv_in, bool causal,
                                const RunCtx& ctx) const {
  Var q = wq.forward(q_in, ctx);
  Var k = wk.forward(kv_in, ctx);
  Var v = wv.forward(kv_in, ctx);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));

  Mat mask;
  if (causal) {
    if (q.rows() != k.rows())
      throw std::invalid_argument("causal attention requires matching q/k lengths");
    mask = causal_mask(q.rows());
  }

  std::vector<Var> head_outputs;
  head_outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * d_head, d_head);
    Var kh = slice_cols(k, h * d_head, d_head);
    Var vh = slice_cols(v, h * d_head, d_head);
    Var scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (causal) scores = add_const(scores, mask);
    Var probs = row_softmax(scores);
    head_outputs.push_back(matmul(probs, vh));
  }
  Var merged = heads == 1 ? head_outputs.front() : concat_cols(head_outputs);
  return wo.forward(merged, ctx);
}

void MultiHeadAttention::collect(std::vector<Var*>& out) {
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
}

void MultiHeadAttention::collect_adapters(std::vector<Var*>& out) {
  wq.collect_adapters(out);
  wv.collect_adapters(out);
}

void Mlp::init(int model_width, int hidden, std::mt19937_64& rng) {
  LoraConfig none;
  fc1.init(model_width, hidden, true, none, rng);
  fc2.init(hidden, model_width, true, none, rng);
}

Var Mlp::forward(const Var& x, const RunCtx& ctx) const {
  return fc2.forward(relu(fc1.forward(x, ctx)), ctx);
}

void Mlp::collect(std::vector<Var*>& out) {
  fc1.collect(out);
  fc2.collect(out);
}

void EncoderBlock::init(int model_width, int heads, int hidden, const LoraConfig& qv_lora,
                        std::mt19937_64& rng) {
  ln1.init(model_width);
  attn.init(model_width, heads, qv_lora, rng);
  ln2.init(model_width);
  mlp.init(model_width, hidden, rng);
}

Var EncoderBlock::forward(const Var& x, bool causal, const RunCtx& ctx) const {
  Var h = ln1.forward(x);
  Var y = add(x, attn.forward(h, h, causal, ctx));
  return add(y, mlp.forward(ln2.forward(y), ctx));
}

void EncoderBlock::collect(std::vector<Var*>& out) {
  ln1.collect(out);
  attn.collect(out);
  ln2.collect(out);
  mlp.collect(out);
}

void EncoderBlock::collect_adapters(std::vector<Var*>& out) { attn.collect_adapters(out); }

void DecoderBlock::init(int model_width, int heads, int hidden, std::mt19937_64& rng) {
  LoraConfig none;
  ln1.init(model_width);
  self_attn.init(model_width, heads, none, rng);
  ln2.init(model_width);
  cross_attn.init(model_width, heads, none, rng);
  ln3.init(model_width);
  mlp.init(model_width, hidden, rng);
}

Var DecoderBlock::forward(const Var& x, const Var& memory, const RunCtx& ctx) const {
  Var h = ln1.forward(x);
  Var y = add(x, self_attn.forward(h, h, /*causal=*/true, ctx));
  y = add(y, cross_attn.forward(ln2.forward(y), memory, /*causal=*/false, ctx));
  return add(y, mlp.forward(ln3.forward(y), ctx));
}

void DecoderBlock::collect(std::vector<Var*>& out) {
  ln1.collect(out);
  self_attn.collect(out);
  ln2.collect(out);
  cross_attn.collect(out);
  ln3.collect(out);
  mlp.collect(out);
}

void save_params(std::ostream& out, const std::vector<Var*>& params) {
  for (const Var* p : params) {
    const Mat& m = p->value();
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
}

void load_params(std::istream& in, const std::vector<Var*>& params) {
  for (Var* p : params) {
    Mat& m = p->value_mut();
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw std::runtime_error("parameter stream truncated");
  }
}

}  // namespace argex::nn
