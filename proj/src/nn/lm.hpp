#pragma once

#include <iosfwd>
#include <random>
#include <vector>

#include "nn/modules.hpp"
#include "nn/tokenizer.hpp"

namespace argex::nn {

struct LMConfig {
  int vocab = 0;
  int d_model = 64;
  int layers = 2;
  int heads = 2;
  int d_ff = 256;
  int max_len = 512;
  LoraConfig lora{8, 32.0, 0.05};
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 0.95;
  int max_new_tokens = 512;
};

// Decoder-only transformer over the shared word vocabulary. Token embeddings
// are tied to the output projection.
class TinyCausalLM {
 public:
  explicit TinyCausalLM(const LMConfig& cfg, uint64_t init_seed);

  const LMConfig& config() const { return cfg_; }

  // log P(out | in) for the sequence [bos] in out [eos]; the sum runs over the
  // out tokens plus the closing end token. Differentiable.
  Var conditional_logprob(const std::vector<int>& in_ids, const std::vector<int>& out_ids,
                          const RunCtx& ctx) const;
  double conditional_logprob_value(const std::vector<int>& in_ids,
                                   const std::vector<int>& out_ids) const;

  // Nucleus sampling with a per-call rng; stops at the end token or the cap.
  std::vector<int> sample(const std::vector<int>& in_ids, const SamplingParams& params,
                          std::mt19937_64& rng) const;

  // Last-position logits through the full forward and through the cached
  // incremental sampler; tests pin the two routes against each other.
  Eigen::RowVectorXd last_logits_full(const std::vector<int>& ids) const;
  Eigen::RowVectorXd last_logits_incremental(const std::vector<int>& ids) const;

  std::vector<Var*> params();
  std::vector<Var*> adapter_params();
  void save(std::ostream& out) const;
  static TinyCausalLM load(std::istream& in);

 private:
  Var full_logits(const std::vector<int>& ids, const RunCtx& ctx) const;

  LMConfig cfg_;
  Embedding tok_, pos_;
  std::vector<EncoderBlock> blocks_;
  LayerNormModule final_ln_;

  friend class LMSampler;
};

}  // namespace argex::nn
