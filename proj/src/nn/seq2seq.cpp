#include "nn/seq2seq.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "common.hpp"

namespace argex::nn {

TinySeq2Seq::TinySeq2Seq(const Seq2SeqConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  auto rng = make_rng(init_seed);
  LoraConfig none;
  tok_.init(cfg_.vocab, cfg_.d_model, rng);
  pos_src_.init(cfg_.max_src, cfg_.d_model, rng);
  pos_tgt_.init(cfg_.max_tgt, cfg_.d_model, rng);
  enc_blocks_.resize(cfg_.enc_layers);
  for (auto& b : enc_blocks_) b.init(cfg_.d_model, cfg_.heads, cfg_.d_ff, none, rng);
  enc_ln_.init(cfg_.d_model);
  dec_blocks_.resize(cfg_.dec_layers);
  for (auto& b : dec_blocks_) b.init(cfg_.d_model, cfg_.heads, cfg_.d_ff, rng);
  dec_ln_.init(cfg_.d_model);
}

void TinySeq2Seq::check_lengths(size_t src, size_t tgt) const {
  if (static_cast<int>(src) > cfg_.max_src)
    fail(Error::Kind::invalid_argument,
         "source of " + std::to_string(src) + " tokens exceeds the encoder limit " +
             std::to_string(cfg_.max_src));
  if (static_cast<int>(tgt) + 1 > cfg_.max_tgt)
    fail(Error::Kind::invalid_argument,
         "target of " + std::to_string(tgt) + " tokens exceeds the decoder limit " +
             std::to_string(cfg_.max_tgt));
}

Var TinySeq2Seq::encode(const std::vector<int>& src_ids, const RunCtx& ctx) const {
  std::vector<int> positions(src_ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = add(tok_.forward(src_ids), pos_src_.forward(positions));
  for (const auto& b : enc_blocks_) x = b.forward(x, /*causal=*/false, ctx);
  return enc_ln_.forward(x);
}

Var TinySeq2Seq::decode_logits(const Var& memory, const std::vector<int>& dec_input,
                               const RunCtx& ctx) const {
  std::vector<int> positions(dec_input.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = add(tok_.forward(dec_input), pos_tgt_.forward(positions));
  for (const auto& b : dec_blocks_) x = b.forward(x, memory, ctx);
  x = dec_ln_.forward(x);
  return matmul_nt(x, tok_.table);
}

Var TinySeq2Seq::conditional_logprob(const std::vector<int>& src_ids,
                                     const std::vector<int>& tgt_ids, const RunCtx& ctx) const {
  check_lengths(src_ids.size(), tgt_ids.size());
  Var memory = encode(src_ids, ctx);
  std::vector<int> dec_input;
  dec_input.reserve(tgt_ids.size() + 1);
  dec_input.push_back(0);  // bos
  dec_input.insert(dec_input.end(), tgt_ids.begin(), tgt_ids.end());
  Var logits = decode_logits(memory, dec_input, ctx);
  std::vector<int> targets = tgt_ids;
  targets.push_back(1);  // eos
  return sum_all(gather_log_softmax(logits, targets));
}

double TinySeq2Seq::conditional_logprob_value(const std::vector<int>& src_ids,
                                              const std::vector<int>& tgt_ids) const {
  NoGradGuard guard;
  RunCtx ctx;
  return conditional_logprob(src_ids, tgt_ids, ctx).value()(0, 0);
}

Eigen::VectorXd TinySeq2Seq::next_token_logprobs(const std::vector<int>& src_ids,
                                                 const std::vector<int>& tgt_prefix) const {
  NoGradGuard guard;
  RunCtx ctx;
  check_lengths(src_ids.size(), tgt_prefix.size());
  Var memory = encode(src_ids, ctx);
  std::vector<int> dec_input;
  dec_input.push_back(0);
  dec_input.insert(dec_input.end(), tgt_prefix.begin(), tgt_prefix.end());
  Var logits = decode_logits(memory, dec_input, ctx);
  Eigen::RowVectorXd row = logits.value().row(logits.rows() - 1);
  const double mx = row.maxCoeff();
  const double lse = mx + std::log((row.array() - mx).exp().sum());
  return (row.array() - lse).matrix().transpose();
}

// Incremental greedy decoder; self-attention keys grow, cross-attention
// keys are fixed projections of the encoder memory.
class Seq2SeqDecoderState {
 public:
  Seq2SeqDecoderState(const TinySeq2Seq& m, const Mat& memory)
      : m_(m), self_k_(m.cfg_.dec_layers), self_v_(m.cfg_.dec_layers) {
    for (int l = 0; l < m.cfg_.dec_layers; ++l) {
      const auto& b = m.dec_blocks_[l];
      self_k_[l].resize(0, m.cfg_.d_model);
      self_v_[l].resize(0, m.cfg_.d_model);
      cross_k_.push_back(b.cross_attn.wk.apply_nograd(memory));
      cross_v_.push_back(b.cross_attn.wv.apply_nograd(memory));
    }
  }

  Eigen::RowVectorXd step(int token_id) {
    const auto& cfg = m_.cfg_;
    if (pos_ >= cfg.max_tgt)
      fail(Error::Kind::invalid_argument,
           "decoder exceeded the target limit " + std::to_string(cfg.max_tgt));
    Eigen::RowVectorXd x =
        m_.tok_.table.value().row(token_id) + m_.pos_tgt_.table.value().row(pos_);
    for (int l = 0; l < cfg.dec_layers; ++l) {
      const DecoderBlock& b = m_.dec_blocks_[l];
      Eigen::RowVectorXd h = b.ln1.apply_nograd_row(x);
      Eigen::RowVectorXd q = b.self_attn.wq.apply_nograd(h);
      append_row(self_k_[l], b.self_attn.wk.apply_nograd(h));
      append_row(self_v_[l], b.self_attn.wv.apply_nograd(h));
      x += b.self_attn.wo.apply_nograd(attend(q, self_k_[l], self_v_[l], b.self_attn));

      Eigen::RowVectorXd h2 = b.ln2.apply_nograd_row(x);
      Eigen::RowVectorXd qc = b.cross_attn.wq.apply_nograd(h2);
      x += b.cross_attn.wo.apply_nograd(attend(qc, cross_k_[l], cross_v_[l], b.cross_attn));

      Eigen::RowVectorXd h3 = b.ln3.apply_nograd_row(x);
      x += b.mlp.fc2.apply_nograd(b.mlp.fc1.apply_nograd(h3).cwiseMax(0.0));
    }
    ++pos_;
    Eigen::RowVectorXd final_h = m_.dec_ln_.apply_nograd_row(x);
    return final_h * m_.tok_.table.value().transpose();
  }

 private:
  static void append_row(Mat& m, const Eigen::RowVectorXd& row) {
    m.conservativeResize(m.rows() + 1, Eigen::NoChange);
    m.row(m.rows() - 1) = row;
  }

  static Eigen::RowVectorXd attend(const Eigen::RowVectorXd& q, const Mat& k, const Mat& v,
                                   const MultiHeadAttention& attn) {
    const int dh = attn.d_head;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Eigen::RowVectorXd merged(attn.d_model);
    for (int head = 0; head < attn.heads; ++head) {
      Eigen::RowVectorXd scores =
          (q.segment(head * dh, dh) * k.middleCols(head * dh, dh).transpose()) * inv_sqrt;
      const double mx = scores.maxCoeff();
      Eigen::RowVectorXd p = (scores.array() - mx).exp();
      p /= p.sum();
      merged.segment(head * dh, dh) = p * v.middleCols(head * dh, dh);
    }
    return merged;
  }

  const TinySeq2Seq& m_;
  std::vector<Mat> self_k_, self_v_, cross_k_, cross_v_;
  int pos_ = 0;
};

Eigen::RowVectorXd TinySeq2Seq::next_logits_incremental(const std::vector<int>& src_ids,
                                                        const std::vector<int>& tgt_prefix) const {
  NoGradGuard guard;
  RunCtx ctx;
  const Mat memory = encode(src_ids, ctx).value();
  Seq2SeqDecoderState state(*this, memory);
  Eigen::RowVectorXd logits = state.step(0 /*bos*/);
  for (int id : tgt_prefix) logits = state.step(id);
  return logits;
}

DecodeResult TinySeq2Seq::decode_greedy_masked(const std::vector<int>& src_ids,
                                               const std::vector<bool>& allowed,
                                               int max_new_tokens) const {
  NoGradGuard guard;
  RunCtx ctx;
  check_lengths(src_ids.size(), 0);
  if (static_cast<int>(allowed.size()) != cfg_.vocab)
    fail(Error::Kind::invalid_argument, "mask size does not match the vocabulary");

  const Mat memory = encode(src_ids, ctx).value();
  Seq2SeqDecoderState state(*this, memory);
  Eigen::RowVectorXd logits = state.step(0 /*bos*/);

  DecodeResult result;
  const int cap = std::min(max_new_tokens, cfg_.max_tgt - 1);
  for (int i = 0; i < cap; ++i) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int id = 0; id < cfg_.vocab; ++id) {
      if (!allowed[id]) continue;
      if (logits(id) > best_score) {
        best_score = logits(id);
        best = id;
      }
    }
    if (best < 0 || best == 1 /*eos*/) return result;
    result.ids.push_back(best);
    if (i + 1 < cap) logits = state.step(best);
  }
  result.truncated = true;
  return result;
}

std::vector<Var*> TinySeq2Seq::params() {
  std::vector<Var*> out;
  tok_.collect(out);
  pos_src_.collect(out);
  pos_tgt_.collect(out);
  for (auto& b : enc_blocks_) b.collect(out);
  enc_ln_.collect(out);
  for (auto& b : dec_blocks_) b.collect(out);
  dec_ln_.collect(out);
  return out;
}

void TinySeq2Seq::save(std::ostream& out) const {
  nlohmann::ordered_json header;
  header["kind"] = "seq2seq";
  header["vocab"] = cfg_.vocab;
  header["d_model"] = cfg_.d_model;
  header["enc_layers"] = cfg_.enc_layers;
  header["dec_layers"] = cfg_.dec_layers;
  header["heads"] = cfg_.heads;
  header["d_ff"] = cfg_.d_ff;
  header["max_src"] = cfg_.max_src;
  header["max_tgt"] = cfg_.max_tgt;
  out << header.dump() << "\n";
  save_params(out, const_cast<TinySeq2Seq*>(this)->params());
}

TinySeq2Seq TinySeq2Seq::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(Error::Kind::io, "model stream missing header");
  nlohmann::ordered_json header = nlohmann::ordered_json::parse(line);
  if (header.value("kind", "") != "seq2seq")
    fail(Error::Kind::io, "model stream is not a seq2seq checkpoint");
  Seq2SeqConfig cfg;
  cfg.vocab = header.at("vocab").get<int>();
  cfg.d_model = header.at("d_model").get<int>();
  cfg.enc_layers = header.at("enc_layers").get<int>();
  cfg.dec_layers = header.at("dec_layers").get<int>();
  cfg.heads = header.at("heads").get<int>();
  cfg.d_ff = header.at("d_ff").get<int>();
  cfg.max_src = header.at("max_src").get<int>();
  cfg.max_tgt = header.at("max_tgt").get<int>();
  TinySeq2Seq model(cfg, /*init_seed=*/0);
  load_params(in, model.params());
  return model;
}

}  // namespace argex::nn
