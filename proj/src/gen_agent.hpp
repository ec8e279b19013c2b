#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "nn/lm.hpp"
#include "nn/optim.hpp"
#include "nn/tokenizer.hpp"
#include "ontology.hpp"
#include "prompting.hpp"

namespace argex {

struct DecodingParams {
  double temperature = 1.0;
  double top_p = 0.95;
  int max_length = 512;
};

struct GenerationConfig {
  int samples_per_type = 20;  // K
  DecodingParams decoding;
  nn::LMConfig model;
  bool train_adapters_only = false;
};

struct ReinforceStats {
  int batches_applied = 0;
  int batches_skipped_nonfinite = 0;
  double last_grad_norm = 0.0;
};

// The generation agent behind a model-agnostic surface: scoring, sampling and
// gradient steps on log P(output | input). The desk-scale implementation is a
// from-scratch transformer; larger models slot in behind the same interface.
class LMAdapter {
 public:
  virtual ~LMAdapter() = default;

  virtual double score(const PromptPair& pair) const = 0;
  virtual std::vector<std::string> sample(const std::string& input_text, int count,
                                          const DecodingParams& params, uint64_t seed) const = 0;
  // One pass over the pairs; returns the epoch mean of per-sample total NLL.
  virtual double sft_epoch(const std::vector<PromptPair>& pairs, double lr,
                           uint64_t shuffle_seed) = 0;
  // Ascent on (1/N) sum_i weight_i * log P(out_i | in_i), minibatched, clipped.
  virtual ReinforceStats reinforce_step(const std::vector<PromptPair>& pairs,
                                        const std::vector<double>& weights, double lr,
                                        double clip_norm, int batch_size, uint64_t seed) = 0;
  virtual bool trained() const = 0;
  virtual void mark_trained() = 0;
  virtual void save(const std::filesystem::path& file) const = 0;
  virtual std::unique_ptr<LMAdapter> clone() const = 0;
};

class TinyLMAdapter : public LMAdapter {
 public:
  TinyLMAdapter(const nn::LMConfig& cfg, std::shared_ptr<const nn::Vocab> vocab,
                uint64_t init_seed, bool train_adapters_only = false);
  static std::unique_ptr<TinyLMAdapter> load(const std::filesystem::path& file,
                                             std::shared_ptr<const nn::Vocab> vocab);

  double score(const PromptPair& pair) const override;
  std::vector<std::string> sample(const std::string& input_text, int count,
                                  const DecodingParams& params, uint64_t seed) const override;
  double sft_epoch(const std::vector<PromptPair>& pairs, double lr,
                   uint64_t shuffle_seed) override;
  ReinforceStats reinforce_step(const std::vector<PromptPair>& pairs,
                                const std::vector<double>& weights, double lr, double clip_norm,
                                int batch_size, uint64_t seed) override;
  bool trained() const override { return trained_; }
  void mark_trained() override { trained_ = true; }
  void save(const std::filesystem::path& file) const override;
  std::unique_ptr<LMAdapter> clone() const override;

  nn::TinyCausalLM& model() { return model_; }
  const nn::Tokenizer& tokenizer() const { return tokenizer_; }

 private:
  std::vector<nn::Var*> trainable_params();

  std::shared_ptr<const nn::Vocab> vocab_;
  nn::Tokenizer tokenizer_;
  nn::TinyCausalLM model_;
  std::unique_ptr<nn::Adam> sft_optimizer_;
  bool train_adapters_only_ = false;
  bool trained_ = false;
};

struct SftResult {
  std::vector<double> epoch_losses;
};

// Supervised fine-tuning on seen-type instances via their serialized prompt
// pairs. Raises if any instance falls outside `allowed_types`.
SftResult sft_train(LMAdapter& agent, const std::vector<EventInstance>& seen_data,
                    const std::vector<EventSchema>& schemas,
                    const std::set<std::string>& allowed_types, int epochs, double lr,
                    uint64_t seed);

struct ProposeTypeReport {
  int requested = 0;
  int kept = 0;
  int missing_trigger = 0;
  int missing_section = 0;
  int empty_context = 0;
  int unanchorable_arguments = 0;
};

struct ProposeReport {
  std::map<std::string, ProposeTypeReport> per_type;
  std::vector<std::string> warnings;

  ProposeTypeReport totals() const;
};

// K candidates per unseen event type; rejected samples (missing trigger or
// sections) are excluded and tallied. Deterministic for a fixed seed.
SyntheticDataset propose(const LMAdapter& agent, const OntologySplit& split,
                         const std::vector<EventSchema>& schemas, const GenerationConfig& config,
                         uint64_t seed, int round_index, ProposeReport* report = nullptr);

double sequence_logprob(const LMAdapter& agent, const PromptPair& pair);

void save_propose_report(const ProposeReport& report, const std::filesystem::path& path);

}  // namespace argex
