#pragma once

#include <iosfwd>
#include <set>
#include <vector>

#include "nn/modules.hpp"

namespace argex::nn {

struct Seq2SeqConfig {
  int vocab = 0;
  int d_model = 64;
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 2;
  int d_ff = 256;
  int max_src = 512;
  int max_tgt = 160;
};

struct DecodeResult {
  std::vector<int> ids;
  bool truncated = false;
};

// Conditional-generation transformer: bidirectional encoder over the source,
// causal decoder with cross attention. Embeddings shared and tied.
class TinySeq2Seq {
 public:
  TinySeq2Seq(const Seq2SeqConfig& cfg, uint64_t init_seed);

  const Seq2SeqConfig& config() const { return cfg_; }

  // log P(tgt | src) summed token by token, including the closing end token.
  Var conditional_logprob(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids,
                          const RunCtx& ctx) const;
  double conditional_logprob_value(const std::vector<int>& src_ids,
                                   const std::vector<int>& tgt_ids) const;

  // Distribution over the next token given a target prefix; the stepwise
  // route used by the factorization oracle and by constrained decoding.
  Eigen::VectorXd next_token_logprobs(const std::vector<int>& src_ids,
                                      const std::vector<int>& tgt_prefix) const;

  // Greedy decode emitting only ids marked allowed (the end token should be
  // in the set); ties break toward the lowest id.
  DecodeResult decode_greedy_masked(const std::vector<int>& src_ids,
                                    const std::vector<bool>& allowed, int max_new_tokens) const;

  // Next-token logits via the cached incremental decoder; tests pin this
  // against the full-forward route behind next_token_logprobs.
  Eigen::RowVectorXd next_logits_incremental(const std::vector<int>& src_ids,
                                             const std::vector<int>& tgt_prefix) const;

  std::vector<Var*> params();
  void save(std::ostream& out) const;
  static TinySeq2Seq load(std::istream& in);

 private:
  Var encode(const std::vector<int>& src_ids, const RunCtx& ctx) const;
  Var decode_logits(const Var& memory, const std::vector<int>& dec_input, const RunCtx& ctx) const;
  void check_lengths(size_t src, size_t tgt) const;

  Seq2SeqConfig cfg_;
  Embedding tok_, pos_src_, pos_tgt_;
  std::vector<EncoderBlock> enc_blocks_;
  LayerNormModule enc_ln_;
  std::vector<DecoderBlock> dec_blocks_;
  LayerNormModule dec_ln_;

  friend class Seq2SeqDecoderState;
};

}  // namespace argex::nn
