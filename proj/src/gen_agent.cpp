#include "gen_agent.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nn/optim.hpp"

namespace argex {

using nn::RunCtx;
using nn::Var;

TinyLMAdapter::TinyLMAdapter(const nn::LMConfig& cfg, std::shared_ptr<const nn::Vocab> vocab,
                             uint64_t init_seed, bool train_adapters_only)
    : vocab_(std::move(vocab)),
      tokenizer_(vocab_.get()),
      model_([&] {
        nn::LMConfig c = cfg;
        c.vocab = vocab_->size();
        return c;
      }(), init_seed),
      train_adapters_only_(train_adapters_only) {}

std::vector<nn::Var*> TinyLMAdapter::trainable_params() {
  if (train_adapters_only_) {
    auto adapters = model_.adapter_params();
    if (!adapters.empty()) return adapters;
  }
  return model_.params();
}

double TinyLMAdapter::score(const PromptPair& pair) const {
  return model_.conditional_logprob_value(tokenizer_.encode(pair.input_text),
                                          tokenizer_.encode(pair.output_text));
}

std::vector<std::string> TinyLMAdapter::sample(const std::string& input_text, int count,
                                               const DecodingParams& params,
                                               uint64_t seed) const {
  nn::SamplingParams sp;
  sp.temperature = params.temperature;
  sp.top_p = params.top_p;
  sp.max_new_tokens = params.max_length;
  const std::vector<int> in_ids = tokenizer_.encode(input_text);
  std::vector<std::string> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    auto rng = make_rng(derive_seed(seed, "sample/" + std::to_string(i)));
    out.push_back(tokenizer_.decode(model_.sample(in_ids, sp, rng)));
  }
  return out;
}

double TinyLMAdapter::sft_epoch(const std::vector<PromptPair>& pairs, double lr,
                                uint64_t shuffle_seed) {
  if (pairs.empty()) fail(Error::Kind::invalid_argument, "sft_epoch: no training pairs");
  if (!sft_optimizer_) sft_optimizer_ = std::make_unique<nn::Adam>(lr);
  sft_optimizer_->set_lr(lr);

  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto params = trainable_params();
  auto all_params = model_.params();
  const int batch_size = 8;
  double loss_sum = 0.0;
  int in_batch = 0;
  RunCtx ctx;
  ctx.train = true;
  ctx.rng = &rng;
  for (size_t idx : order) {
    const auto& pair = pairs[idx];
    Var lp = model_.conditional_logprob(tokenizer_.encode(pair.input_text),
                                        tokenizer_.encode(pair.output_text), ctx);
    Var loss = nn::scale(lp, -1.0 / batch_size);
    nn::backward(loss);
    loss_sum += -lp.value()(0, 0);
    if (!std::isfinite(loss_sum))
      fail(Error::Kind::stage, "sft_epoch: non-finite loss, aborting with diagnostics: sample '" +
                                   pair.input_text.substr(0, 60) + "...'");
    if (++in_batch == batch_size) {
      sft_optimizer_->step(params, /*clip_norm=*/5.0);
      nn::zero_grads(all_params);
      in_batch = 0;
    }
  }
  if (in_batch > 0) {
    sft_optimizer_->step(params, 5.0);
    nn::zero_grads(all_params);
  }
  trained_ = true;
  return loss_sum / static_cast<double>(pairs.size());
}

ReinforceStats TinyLMAdapter::reinforce_step(const std::vector<PromptPair>& pairs,
                                             const std::vector<double>& weights, double lr,
                                             double clip_norm, int batch_size, uint64_t seed) {
  if (pairs.size() != weights.size())
    fail(Error::Kind::invalid_argument, "reinforce_step: one weight per pair required");
  ReinforceStats stats;
  if (pairs.empty() || lr == 0.0) return stats;

  auto params = trainable_params();
  auto all_params = model_.params();
  auto rng = make_rng(seed);
  RunCtx ctx;
  ctx.train = true;
  ctx.rng = &rng;

  const size_t n = pairs.size();
  const size_t bs = batch_size > 0 ? static_cast<size_t>(batch_size) : n;
  for (size_t start = 0; start < n; start += bs) {
    const size_t stop = std::min(n, start + bs);
    for (size_t i = start; i < stop; ++i) {
      Var lp = model_.conditional_logprob(tokenizer_.encode(pairs[i].input_text),
                                          tokenizer_.encode(pairs[i].output_text), ctx);
      // Descent on the negated weighted log-likelihood is ascent on E[alpha].
      nn::backward(nn::scale(lp, -weights[i] / static_cast<double>(stop - start)));
    }
    if (!nn::grads_finite(params)) {
      ++stats.batches_skipped_nonfinite;
      nn::zero_grads(all_params);
      continue;
    }
    stats.last_grad_norm = nn::global_grad_norm(params);
    nn::sgd_step(params, lr, clip_norm);
    nn::zero_grads(all_params);
    ++stats.batches_applied;
  }
  return stats;
}

void TinyLMAdapter::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(Error::Kind::io, "cannot write checkpoint: " + file.string());
  nlohmann::ordered_json meta;
  meta["trained"] = trained_;
  meta["vocab_fingerprint"] = vocab_->fingerprint();
  out << meta.dump() << "\n";
  model_.save(out);
}

std::unique_ptr<TinyLMAdapter> TinyLMAdapter::load(const std::filesystem::path& file,
                                                   std::shared_ptr<const nn::Vocab> vocab) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(Error::Kind::io, "cannot open checkpoint: " + file.string());
  std::string meta_line;
  std::getline(in, meta_line);
  nlohmann::ordered_json meta = nlohmann::ordered_json::parse(meta_line);
  if (meta.at("vocab_fingerprint").get<uint64_t>() != vocab->fingerprint())
    fail(Error::Kind::io, "checkpoint vocabulary does not match: " + file.string());
  nn::TinyCausalLM model = nn::TinyCausalLM::load(in);
  auto adapter = std::make_unique<TinyLMAdapter>(model.config(), std::move(vocab), 0);
  std::stringstream buf;
  model.save(buf);
  buf.seekg(0);
  std::string header;
  std::getline(buf, header);
  nn::load_params(buf, adapter->model_.params());
  adapter->trained_ = meta.value("trained", false);
  return adapter;
}

std::unique_ptr<LMAdapter> TinyLMAdapter::clone() const {
  auto copy = std::make_unique<TinyLMAdapter>(model_.config(), vocab_, 0, train_adapters_only_);
  std::stringstream buf;
  model_.save(buf);
  buf.seekg(0);
  std::string header;
  std::getline(buf, header);
  nn::load_params(buf, copy->model_.params());
  copy->trained_ = trained_;
  return copy;
}

SftResult sft_train(LMAdapter& agent, const std::vector<EventInstance>& seen_data,
                    const std::vector<EventSchema>& schemas,
                    const std::set<std::string>& allowed_types, int epochs, double lr,
                    uint64_t seed) {
  if (seen_data.empty()) fail(Error::Kind::invalid_argument, "sft_train: empty training data");
  std::vector<PromptPair> pairs;
  pairs.reserve(seen_data.size());
  for (const auto& inst : seen_data) {
    if (!allowed_types.count(inst.event_type_id))
      fail(Error::Kind::invalid_argument,
           "sft_train: instance of unseen event type '" + inst.event_type_id + "' in training data");
    const EventSchema& schema = schema_by_type(schemas, inst.event_type_id);
    pairs.push_back({build_generation_prompt(schema), serialize_output(schema, inst)});
  }
  SftResult result;
  for (int e = 0; e < epochs; ++e) {
    result.epoch_losses.push_back(
        agent.sft_epoch(pairs, lr, derive_seed(seed, "sft-epoch/" + std::to_string(e))));
  }
  if (epochs > 0) agent.mark_trained();
  return result;
}

ProposeTypeReport ProposeReport::totals() const {
  ProposeTypeReport t;
  for (const auto& [type, r] : per_type) {
    (void)type;
    t.requested += r.requested;
    t.kept += r.kept;
    t.missing_trigger += r.missing_trigger;
    t.missing_section += r.missing_section;
    t.empty_context += r.empty_context;
    t.unanchorable_arguments += r.unanchorable_arguments;
  }
  return t;
}

SyntheticDataset propose(const LMAdapter& agent, const OntologySplit& split,
                         const std::vector<EventSchema>& schemas, const GenerationConfig& config,
                         uint64_t seed, int round_index, ProposeReport* report) {
  if (!agent.trained())
    fail(Error::Kind::missing_prerequisite, "propose: the generation agent is not trained");
  if (config.samples_per_type < 1)
    fail(Error::Kind::invalid_argument, "propose: K must be at least 1");
  split.validate();

  ProposeReport local;
  ProposeReport& rep = report ? *report : local;

  SyntheticDataset dataset;
  dataset.round_index = round_index;
  for (const std::string& type_id : split.unseen_types) {
    const EventSchema& schema = schema_by_type(schemas, type_id);
    const std::string prompt = build_generation_prompt(schema);
    ProposeTypeReport& tr = rep.per_type[type_id];
    tr.requested += config.samples_per_type;

    const uint64_t type_seed = derive_seed(seed, "propose/" + type_id);
    const auto raw = agent.sample(prompt, config.samples_per_type, config.decoding, type_seed);
    for (size_t j = 0; j < raw.size(); ++j) {
      const std::string sample_id =
          type_id + "/r" + std::to_string(round_index) + "/" + std::to_string(j);
      ParseReport parse_rep;
      auto parsed = parse_output(raw[j], schema, &parse_rep, "syn-" + sample_id);
      tr.unanchorable_arguments += parse_rep.unanchorable_arguments;
      if (std::holds_alternative<ParseRejection>(parsed)) {
        switch (std::get<ParseRejection>(parsed)) {
          case ParseRejection::missing_trigger: ++tr.missing_trigger; break;
          case ParseRejection::missing_section: ++tr.missing_section; break;
          case ParseRejection::empty_context: ++tr.empty_context; break;
        }
        continue;
      }
      SyntheticSample sample;
      sample.sample_id = sample_id;
      sample.instance = std::get<EventInstance>(parsed);
      sample.input_text = prompt;
      sample.output_text = raw[j];  // raw sequence, the one the policy actually emitted
      dataset.samples.push_back(std::move(sample));
      ++tr.kept;
    }
    if (tr.kept == 0)
      rep.warnings.push_back("event type " + type_id + ": all " +
                             std::to_string(config.samples_per_type) + " candidates rejected");
  }
  return dataset;
}

double sequence_logprob(const LMAdapter& agent, const PromptPair& pair) {
  return agent.score(pair);
}

void save_propose_report(const ProposeReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  const auto totals = report.totals();
  j["requested"] = totals.requested;
  j["kept"] = totals.kept;
  j["missing_trigger"] = totals.missing_trigger;
  j["missing_section"] = totals.missing_section;
  j["empty_context"] = totals.empty_context;
  j["unanchorable_arguments"] = totals.unanchorable_arguments;
  nlohmann::ordered_json per_type = nlohmann::ordered_json::object();
  for (const auto& [type, r] : report.per_type) {
    nlohmann::ordered_json t;
    t["requested"] = r.requested;
    t["kept"] = r.kept;
    t["missing_trigger"] = r.missing_trigger;
    t["missing_section"] = r.missing_section;
    t["empty_context"] = r.empty_context;
    t["unanchorable_arguments"] = r.unanchorable_arguments;
    per_type[type] = t;
  }
  j["per_type"] = per_type;
  j["warnings"] = report.warnings;
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write propose report: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace argex
