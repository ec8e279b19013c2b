#pragma once

#include <iosfwd>
#include <random>
#include <vector>

#include "nn/tensor.hpp"

namespace argex::nn {

struct RunCtx {
  bool train = false;
  std::mt19937_64* rng = nullptr;  // consumed by dropout in train mode
};

// Low-rank adapter settings; rank 0 disables the adapter.
struct LoraConfig {
  int rank = 0;
  double scale = 32.0;
  double dropout = 0.05;
};

struct Linear {
  Var W;  // in x out
  Var b;  // 1 x out
  bool use_bias = true;
  LoraConfig lora;
  Var A;  // in x rank
  Var B;  // rank x out

  void init(int in, int out, bool bias, const LoraConfig& lora_cfg, std::mt19937_64& rng);
  Var forward(const Var& x, const RunCtx& ctx) const;
  Mat apply_nograd(const Mat& x) const;
  void collect(std::vector<Var*>& out);
  void collect_adapters(std::vector<Var*>& out);
};

struct LayerNormModule {
  Var gain, bias;

  void init(int width);
  Var forward(const Var& x) const;
  Eigen::RowVectorXd apply_nograd_row(const Eigen::RowVectorXd& x) const;
  void collect(std::vector<Var*>& out);
};

struct Embedding {
  Var table;  // vocab x width

  void init(int vocab, int width, std::mt19937_64& rng);
  Var forward(const std::vector<int>& ids) const { return embedding_rows(table, ids); }
  void collect(std::vector<Var*>& out) { out.push_back(&table); }
};

struct MultiHeadAttention {
  int heads = 1;
  int d_model = 0;
  int d_head = 0;
  Linear wq, wk, wv, wo;

  // The low-rank adapter, when enabled, sits on the query and value projections.
  void init(int model_width, int head_count, const LoraConfig& qv_lora, std::mt19937_64& rng);
  Var forward(const Var& q_in, const Var& kv_in, bool causal, const RunCtx& ctx) const;
  void collect(std::vector<Var*>& out);
  void collect_adapters(std::vector<Var*>& out);
};

struct Mlp {
  Linear fc1, fc2;

  void init(int model_width, int hidden, std::mt19937_64& rng);
  Var forward(const Var& x, const RunCtx& ctx) const;
  void collect(std::vector<Var*>& out);
};

// Pre-norm residual block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct EncoderBlock {
  LayerNormModule ln1, ln2;
  MultiHeadAttention attn;
  Mlp mlp;

  void init(int model_width, int heads, int hidden, const LoraConfig& qv_lora,
            std::mt19937_64& rng);
  Var forward(const Var& x, bool causal, const RunCtx& ctx) const;
  void collect(std::vector<Var*>& out);
  void collect_adapters(std::vector<Var*>& out);
};

struct DecoderBlock {
  LayerNormModule ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  Mlp mlp;

  void init(int model_width, int heads, int hidden, std::mt19937_64& rng);
  Var forward(const Var& x, const Var& memory, const RunCtx& ctx) const;
  void collect(std::vector<Var*>& out);
};

// Raw little-endian doubles in collection order; shapes must already match.
void save_params(std::ostream& out, const std::vector<Var*>& params);
void load_params(std::istream& in, const std::vector<Var*>& params);

}  // namespace argex::nn
