#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "gen_agent.hpp"
#include "nn/optim.hpp"
#include "nn/seq2seq.hpp"
#include "nn/tokenizer.hpp"
#include "ontology.hpp"
#include "prompting.hpp"

namespace argex {

struct ExtractorConfig {
  nn::Seq2SeqConfig model;
  // Eq-style scores are unnormalized totals; per-token normalization is an
  // ablation switch.
  bool length_normalize = false;
};

// Decode-time restriction: document tokens plus the template's own tokens
// plus the end token. The unknown marker is never allowed, which keeps every
// emitted token copyable from the document or the template scaffold.
struct VocabularyMask {
  std::vector<bool> allowed;             // indexed by token id
  std::set<std::string> allowed_tokens;  // surface strings, "</s>" included
};

class ExtractorModel {
 public:
  virtual ~ExtractorModel() = default;

  // log P(target | source), token-factorized, end token included.
  virtual double score(const std::string& target, const std::string& source) const = 0;
  // The same quantity assembled one token at a time from next-token
  // distributions; a distinct computation route from score().
  virtual std::vector<double> stepwise_logprobs(const std::string& target,
                                                const std::string& source) const = 0;
  virtual VocabularyMask build_mask(const Document& document,
                                    const EventSchema& schema) const = 0;
  virtual std::vector<std::string> decode_constrained(const std::string& source,
                                                      const VocabularyMask& mask,
                                                      bool* truncated = nullptr) const = 0;
  virtual double train_epoch(const std::vector<std::pair<std::string, std::string>>& pairs,
                             double lr, uint64_t shuffle_seed) = 0;
  virtual ReinforceStats reinforce_step(
      const std::vector<std::pair<std::string, std::string>>& pairs,
      const std::vector<double>& weights, double lr, double clip_norm, int batch_size,
      uint64_t seed) = 0;
  virtual bool trained() const = 0;
  virtual void mark_trained() = 0;
  virtual void save(const std::filesystem::path& file) const = 0;
  virtual std::unique_ptr<ExtractorModel> clone() const = 0;
};

class TinyExtractor : public ExtractorModel {
 public:
  TinyExtractor(const ExtractorConfig& cfg, std::shared_ptr<const nn::Vocab> vocab,
                uint64_t init_seed);
  static std::unique_ptr<TinyExtractor> load(const std::filesystem::path& file,
                                             std::shared_ptr<const nn::Vocab> vocab);

  double score(const std::string& target, const std::string& source) const override;
  std::vector<double> stepwise_logprobs(const std::string& target,
                                        const std::string& source) const override;
  VocabularyMask build_mask(const Document& document, const EventSchema& schema) const override;
  std::vector<std::string> decode_constrained(const std::string& source,
                                              const VocabularyMask& mask,
                                              bool* truncated = nullptr) const override;
  double train_epoch(const std::vector<std::pair<std::string, std::string>>& pairs, double lr,
                     uint64_t shuffle_seed) override;
  ReinforceStats reinforce_step(const std::vector<std::pair<std::string, std::string>>& pairs,
                                const std::vector<double>& weights, double lr, double clip_norm,
                                int batch_size, uint64_t seed) override;
  bool trained() const override { return trained_; }
  void mark_trained() override { trained_ = true; }
  void save(const std::filesystem::path& file) const override;
  std::unique_ptr<ExtractorModel> clone() const override;

  nn::TinySeq2Seq& model() { return model_; }
  const ExtractorConfig& config() const { return cfg_; }

 private:
  ExtractorConfig cfg_;
  std::shared_ptr<const nn::Vocab> vocab_;
  nn::Tokenizer tokenizer_;
  nn::TinySeq2Seq model_;
  std::unique_ptr<nn::Adam> optimizer_;
  bool trained_ = false;
};

struct TrainResult {
  std::vector<double> epoch_losses;
};

// Negative log-likelihood training on gold-filled templates (Eq-4 style).
TrainResult train_extractor(ExtractorModel& model, const std::vector<EventInstance>& seen_data,
                            const std::vector<EventSchema>& schemas, int epochs, double lr,
                            uint64_t seed);

struct ExtractReport {
  bool unalignable = false;
  bool truncated = false;
  int unanchorable_slots = 0;
};

// Constrained decode + template alignment; slots left as the placeholder
// marker become empty roles, fillers anchor to their first document occurrence.
EventInstance extract(const ExtractorModel& model, const EventSchema& schema,
                      const Document& document, const ArgumentSpan& trigger,
                      ExtractReport* report = nullptr);

// Eq-5 log-likelihood of the instance's own filled template given its document.
double score_sample(const ExtractorModel& model, const EventSchema& schema,
                    const EventInstance& instance);

// Greedy leftmost alignment of decoded output against the template scaffold.
// Returns role -> value text (placeholder-valued slots map to empty); nullopt
// when the scaffold cannot be matched.
std::optional<std::map<std::string, std::string>> align_decoded_to_template(
    const std::vector<std::string>& decoded_tokens, const EventSchema& schema);

}  // namespace argex
