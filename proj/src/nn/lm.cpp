#include "nn/lm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "common.hpp"

namespace argex::nn {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Temperature + nucleus filtering over one logit row; deterministic for a
// fixed rng stream.
int sample_from_logits(const Eigen::RowVectorXd& logits, const SamplingParams& params,
                       std::mt19937_64& rng) {
  Eigen::RowVectorXd scaled = logits / std::max(params.temperature, 1e-6);
  const double mx = scaled.maxCoeff();
  Eigen::RowVectorXd probs = (scaled.array() - mx).exp();
  probs /= probs.sum();

  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs(a) > probs(b); });

  double cum = 0.0;
  size_t keep = 0;
  for (; keep < order.size(); ++keep) {
    cum += probs(order[keep]);
    if (cum >= params.top_p) {
      ++keep;
      break;
    }
  }
  keep = std::max<size_t>(keep, 1);

  double z = 0.0;
  for (size_t i = 0; i < keep; ++i) z += probs(order[i]);
  double u = uniform01(rng) * z;
  for (size_t i = 0; i < keep; ++i) {
    u -= probs(order[i]);
    if (u <= 0.0) return order[i];
  }
  return order[keep - 1];
}

}  // namespace

TinyCausalLM::TinyCausalLM(const LMConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  auto rng = make_rng(init_seed);
  tok_.init(cfg_.vocab, cfg_.d_model, rng);
  pos_.init(cfg_.max_len, cfg_.d_model, rng);
  blocks_.resize(cfg_.layers);
  for (auto& b : blocks_) b.init(cfg_.d_model, cfg_.heads, cfg_.d_ff, cfg_.lora, rng);
  final_ln_.init(cfg_.d_model);
}

Var TinyCausalLM::full_logits(const std::vector<int>& ids, const RunCtx& ctx) const {
  if (static_cast<int>(ids.size()) > cfg_.max_len)
    fail(Error::Kind::invalid_argument,
         "sequence of " + std::to_string(ids.size()) + " tokens exceeds the model context length " +
             std::to_string(cfg_.max_len));
  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = add(tok_.forward(ids), pos_.forward(positions));
  for (const auto& b : blocks_) x = b.forward(x, /*causal=*/true, ctx);
  x = final_ln_.forward(x);
  return matmul_nt(x, tok_.table);  // tied output projection
}

Var TinyCausalLM::conditional_logprob(const std::vector<int>& in_ids,
                                      const std::vector<int>& out_ids, const RunCtx& ctx) const {
  std::vector<int> ids;
  ids.reserve(in_ids.size() + out_ids.size() + 2);
  ids.push_back(0);  // bos
  ids.insert(ids.end(), in_ids.begin(), in_ids.end());
  ids.insert(ids.end(), out_ids.begin(), out_ids.end());
  ids.push_back(1);  // eos

  Var logits = full_logits(ids, ctx);
  const Eigen::Index n_in = static_cast<Eigen::Index>(in_ids.size());
  const Eigen::Index count = static_cast<Eigen::Index>(out_ids.size()) + 1;
  Var rows = slice_rows(logits, n_in, count);
  std::vector<int> targets(ids.begin() + n_in + 1, ids.end());
  return sum_all(gather_log_softmax(rows, targets));
}

double TinyCausalLM::conditional_logprob_value(const std::vector<int>& in_ids,
                                               const std::vector<int>& out_ids) const {
  NoGradGuard guard;
  RunCtx ctx;
  return conditional_logprob(in_ids, out_ids, ctx).value()(0, 0);
}

// Incremental sampler with per-layer key/value caches; mirrors full_logits
// exactly (pinned by a unit test).
class LMSampler {
 public:
  explicit LMSampler(const TinyCausalLM& m) : m_(m), k_(m.cfg_.layers), v_(m.cfg_.layers) {
    for (int l = 0; l < m.cfg_.layers; ++l) {
      k_[l].resize(0, m.cfg_.d_model);
      v_[l].resize(0, m.cfg_.d_model);
    }
  }

  Eigen::RowVectorXd step(int token_id) {
    const auto& cfg = m_.cfg_;
    if (pos_ >= cfg.max_len)
      fail(Error::Kind::invalid_argument,
           "sampler exceeded the model context length " + std::to_string(cfg.max_len));
    Eigen::RowVectorXd x =
        m_.tok_.table.value().row(token_id) + m_.pos_.table.value().row(pos_);
    for (int l = 0; l < cfg.layers; ++l) {
      const EncoderBlock& b = m_.blocks_[l];
      Eigen::RowVectorXd h = b.ln1.apply_nograd_row(x);
      Eigen::RowVectorXd q = b.attn.wq.apply_nograd(h);
      Eigen::RowVectorXd knew = b.attn.wk.apply_nograd(h);
      Eigen::RowVectorXd vnew = b.attn.wv.apply_nograd(h);
      append_row(k_[l], knew);
      append_row(v_[l], vnew);

      const int dh = b.attn.d_head;
      Eigen::RowVectorXd merged(cfg.d_model);
      const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
      for (int head = 0; head < b.attn.heads; ++head) {
        Eigen::RowVectorXd scores =
            (q.segment(head * dh, dh) * k_[l].middleCols(head * dh, dh).transpose()) * inv_sqrt;
        const double mx = scores.maxCoeff();
        Eigen::RowVectorXd p = (scores.array() - mx).exp();
        p /= p.sum();
        merged.segment(head * dh, dh) = p * v_[l].middleCols(head * dh, dh);
      }
      x += b.attn.wo.apply_nograd(merged);
      Eigen::RowVectorXd h2 = b.ln2.apply_nograd_row(x);
      x += b.mlp.fc2.apply_nograd(b.mlp.fc1.apply_nograd(h2).cwiseMax(0.0));
    }
    ++pos_;
    Eigen::RowVectorXd final_h = m_.final_ln_.apply_nograd_row(x);
    return final_h * m_.tok_.table.value().transpose();
  }

  int position() const { return pos_; }

 private:
  static void append_row(Mat& m, const Eigen::RowVectorXd& row) {
    m.conservativeResize(m.rows() + 1, Eigen::NoChange);
    m.row(m.rows() - 1) = row;
  }

  const TinyCausalLM& m_;
  std::vector<Mat> k_, v_;
  int pos_ = 0;
};

Eigen::RowVectorXd TinyCausalLM::last_logits_full(const std::vector<int>& ids) const {
  NoGradGuard guard;
  RunCtx ctx;
  Var logits = full_logits(ids, ctx);
  return logits.value().row(logits.rows() - 1);
}

Eigen::RowVectorXd TinyCausalLM::last_logits_incremental(const std::vector<int>& ids) const {
  NoGradGuard guard;
  LMSampler sampler(*this);
  Eigen::RowVectorXd logits;
  for (int id : ids) logits = sampler.step(id);
  return logits;
}

std::vector<int> TinyCausalLM::sample(const std::vector<int>& in_ids,
                                      const SamplingParams& params, std::mt19937_64& rng) const {
  NoGradGuard guard;
  LMSampler sampler(*this);
  Eigen::RowVectorXd logits = sampler.step(0 /*bos*/);
  for (int id : in_ids) logits = sampler.step(id);

  std::vector<int> out;
  const int cap = std::min(params.max_new_tokens, cfg_.max_len - sampler.position());
  for (int i = 0; i < cap; ++i) {
    const int next = sample_from_logits(logits, params, rng);
    if (next == 1 /*eos*/) break;
    out.push_back(next);
    if (i + 1 < cap) logits = sampler.step(next);
  }
  return out;
}

std::vector<Var*> TinyCausalLM::params() {
  std::vector<Var*> out;
  tok_.collect(out);
  pos_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  final_ln_.collect(out);
  return out;
}

std::vector<Var*> TinyCausalLM::adapter_params() {
  std::vector<Var*> out;
  for (auto& b : blocks_) b.collect_adapters(out);
  return out;
}

void TinyCausalLM::save(std::ostream& out) const {
  nlohmann::ordered_json header;
  header["kind"] = "causal_lm";
  header["vocab"] = cfg_.vocab;
  header["d_model"] = cfg_.d_model;
  header["layers"] = cfg_.layers;
  header["heads"] = cfg_.heads;
  header["d_ff"] = cfg_.d_ff;
  header["max_len"] = cfg_.max_len;
  header["lora_rank"] = cfg_.lora.rank;
  header["lora_scale"] = cfg_.lora.scale;
  header["lora_dropout"] = cfg_.lora.dropout;
  out << header.dump() << "\n";
  save_params(out, const_cast<TinyCausalLM*>(this)->params());
}

TinyCausalLM TinyCausalLM::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(Error::Kind::io, "model stream missing header");
  nlohmann::ordered_json header = nlohmann::ordered_json::parse(line);
  if (header.value("kind", "") != "causal_lm")
    fail(Error::Kind::io, "model stream is not a causal_lm checkpoint");
  LMConfig cfg;
  cfg.vocab = header.at("vocab").get<int>();
  cfg.d_model = header.at("d_model").get<int>();
  cfg.layers = header.at("layers").get<int>();
  cfg.heads = header.at("heads").get<int>();
  cfg.d_ff = header.at("d_ff").get<int>();
  cfg.max_len = header.at("max_len").get<int>();
  cfg.lora.rank = header.at("lora_rank").get<int>();
  cfg.lora.scale = header.at("lora_scale").get<double>();
  cfg.lora.dropout = header.at("lora_dropout").get<double>();
  TinyCausalLM model(cfg, /*init_seed=*/0);
  load_params(in, model.params());
  return model;
}

}  // namespace argex::nn
