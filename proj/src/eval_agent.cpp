#include "eval_agent.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "nn/optim.hpp"

namespace argex {

using nn::RunCtx;
using nn::Var;

TinyExtractor::TinyExtractor(const ExtractorConfig& cfg, std::shared_ptr<const nn::Vocab> vocab,
                             uint64_t init_seed)
    : cfg_(cfg),
      vocab_(std::move(vocab)),
      tokenizer_(vocab_.get()),
      model_([&] {
        nn::Seq2SeqConfig c = cfg.model;
        c.vocab = vocab_->size();
        return c;
      }(), init_seed) {}

double TinyExtractor::score(const std::string& target, const std::string& source) const {
  const std::vector<int> tgt = tokenizer_.encode(target);
  double total = model_.conditional_logprob_value(tokenizer_.encode(source), tgt);
  if (cfg_.length_normalize) total /= static_cast<double>(tgt.size() + 1);
  return total;
}

std::vector<double> TinyExtractor::stepwise_logprobs(const std::string& target,
                                                     const std::string& source) const {
  const std::vector<int> src = tokenizer_.encode(source);
  std::vector<int> tgt = tokenizer_.encode(target);
  tgt.push_back(1);  // eos
  std::vector<double> out;
  std::vector<int> prefix;
  for (int id : tgt) {
    const Eigen::VectorXd dist = model_.next_token_logprobs(src, prefix);
    out.push_back(dist(id));
    prefix.push_back(id);
  }
  return out;
}

VocabularyMask TinyExtractor::build_mask(const Document& document,
                                         const EventSchema& schema) const {
  VocabularyMask mask;
  mask.allowed.assign(vocab_->size(), false);
  auto admit = [&](const std::string& token) {
    const int id = vocab_->id(token);
    if (id == vocab_->unk_id()) return;  // out-of-vocabulary tokens are not copyable
    mask.allowed[id] = true;
    mask.allowed_tokens.insert(token);
  };
  for (const auto& t : nn::word_tokenize(document.text())) admit(t);
  for (const auto& t : nn::word_tokenize(schema.template_text)) admit(t);
  mask.allowed[vocab_->eos_id()] = true;
  mask.allowed_tokens.insert(nn::Vocab::kEos);
  return mask;
}

std::vector<std::string> TinyExtractor::decode_constrained(const std::string& source,
                                                           const VocabularyMask& mask,
                                                           bool* truncated) const {
  nn::DecodeResult r = model_.decode_greedy_masked(tokenizer_.encode(source), mask.allowed,
                                                   model_.config().max_tgt - 1);
  if (truncated) *truncated = r.truncated;
  std::vector<std::string> tokens;
  tokens.reserve(r.ids.size());
  for (int id : r.ids) tokens.push_back(vocab_->token(id));
  return tokens;
}

double TinyExtractor::train_epoch(const std::vector<std::pair<std::string, std::string>>& pairs,
                                  double lr, uint64_t shuffle_seed) {
  if (pairs.empty()) fail(Error::Kind::invalid_argument, "train_epoch: no training pairs");
  if (!optimizer_) optimizer_ = std::make_unique<nn::Adam>(lr);
  optimizer_->set_lr(lr);

  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto params = model_.params();
  const int batch_size = 8;
  double loss_sum = 0.0;
  int in_batch = 0;
  RunCtx ctx;
  ctx.train = true;
  ctx.rng = &rng;
  for (size_t idx : order) {
    const auto& [source, target] = pairs[idx];
    Var lp = model_.conditional_logprob(tokenizer_.encode(source), tokenizer_.encode(target), ctx);
    nn::backward(nn::scale(lp, -1.0 / batch_size));
    loss_sum += -lp.value()(0, 0);
    if (!std::isfinite(loss_sum))
      fail(Error::Kind::stage, "train_epoch: non-finite loss on source '" +
                                   source.substr(0, 60) + "...'");
    if (++in_batch == batch_size) {
      optimizer_->step(params, 5.0);
      nn::zero_grads(params);
      in_batch = 0;
    }
  }
  if (in_batch > 0) {
    optimizer_->step(params, 5.0);
    nn::zero_grads(params);
  }
  trained_ = true;
  return loss_sum / static_cast<double>(pairs.size());
}

ReinforceStats TinyExtractor::reinforce_step(
    const std::vector<std::pair<std::string, std::string>>& pairs,
    const std::vector<double>& weights, double lr, double clip_norm, int batch_size,
    uint64_t seed) {
  if (pairs.size() != weights.size())
    fail(Error::Kind::invalid_argument, "reinforce_step: one weight per pair required");
  ReinforceStats stats;
  if (pairs.empty() || lr == 0.0) return stats;

  auto params = model_.params();
  auto rng = make_rng(seed);
  RunCtx ctx;
  ctx.train = true;
  ctx.rng = &rng;

  const size_t n = pairs.size();
  const size_t bs = batch_size > 0 ? static_cast<size_t>(batch_size) : n;
  for (size_t start = 0; start < n; start += bs) {
    const size_t stop = std::min(n, start + bs);
    for (size_t i = start; i < stop; ++i) {
      Var lp = model_.conditional_logprob(tokenizer_.encode(pairs[i].first),
                                          tokenizer_.encode(pairs[i].second), ctx);
      nn::backward(nn::scale(lp, -weights[i] / static_cast<double>(stop - start)));
    }
    if (!nn::grads_finite(params)) {
      ++stats.batches_skipped_nonfinite;
      nn::zero_grads(params);
      continue;
    }
    stats.last_grad_norm = nn::global_grad_norm(params);
    nn::sgd_step(params, lr, clip_norm);
    nn::zero_grads(params);
    ++stats.batches_applied;
  }
  return stats;
}

void TinyExtractor::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(Error::Kind::io, "cannot write checkpoint: " + file.string());
  nlohmann::ordered_json meta;
  meta["trained"] = trained_;
  meta["length_normalize"] = cfg_.length_normalize;
  meta["vocab_fingerprint"] = vocab_->fingerprint();
  out << meta.dump() << "\n";
  model_.save(out);
}

std::unique_ptr<TinyExtractor> TinyExtractor::load(const std::filesystem::path& file,
                                                   std::shared_ptr<const nn::Vocab> vocab) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(Error::Kind::io, "cannot open checkpoint: " + file.string());
  std::string meta_line;
  std::getline(in, meta_line);
  nlohmann::ordered_json meta = nlohmann::ordered_json::parse(meta_line);
  if (meta.at("vocab_fingerprint").get<uint64_t>() != vocab->fingerprint())
    fail(Error::Kind::io, "checkpoint vocabulary does not match: " + file.string());
  nn::TinySeq2Seq model = nn::TinySeq2Seq::load(in);
  ExtractorConfig cfg;
  cfg.model = model.config();
  cfg.length_normalize = meta.value("length_normalize", false);
  auto extractor = std::make_unique<TinyExtractor>(cfg, std::move(vocab), 0);
  std::stringstream buf;
  model.save(buf);
  buf.seekg(0);
  std::string header;
  std::getline(buf, header);
  nn::load_params(buf, extractor->model_.params());
  extractor->trained_ = meta.value("trained", false);
  return extractor;
}

std::unique_ptr<ExtractorModel> TinyExtractor::clone() const {
  auto copy = std::make_unique<TinyExtractor>(cfg_, vocab_, 0);
  std::stringstream buf;
  model_.save(buf);
  buf.seekg(0);
  std::string header;
  std::getline(buf, header);
  nn::load_params(buf, copy->model_.params());
  copy->trained_ = trained_;
  return copy;
}

TrainResult train_extractor(ExtractorModel& model, const std::vector<EventInstance>& seen_data,
                            const std::vector<EventSchema>& schemas, int epochs, double lr,
                            uint64_t seed) {
  if (seen_data.empty())
    fail(Error::Kind::invalid_argument, "train_extractor: empty training data");
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(seen_data.size());
  for (const auto& inst : seen_data) {
    const EventSchema& schema = schema_by_type(schemas, inst.event_type_id);
    if (trim_copy(schema.template_text).empty())
      fail(Error::Kind::invalid_argument,
           "train_extractor: no template for event type '" + inst.event_type_id + "'");
    pairs.emplace_back(build_extractor_input(schema, inst.document),
                       fill_template(schema, inst).filled_text);
  }
  TrainResult result;
  for (int e = 0; e < epochs; ++e) {
    result.epoch_losses.push_back(
        model.train_epoch(pairs, lr, derive_seed(seed, "extractor-epoch/" + std::to_string(e))));
  }
  if (epochs > 0) model.mark_trained();
  return result;
}

std::optional<std::map<std::string, std::string>> align_decoded_to_template(
    const std::vector<std::string>& decoded_tokens, const EventSchema& schema) {
  static const std::regex kPlaceholder("^<arg([0-9]+)>$");
  const std::vector<std::string> tmpl = nn::word_tokenize(schema.template_text);

  // Scaffold segments between placeholders: seg0 <p1> seg1 <p2> ... segK.
  std::vector<std::vector<std::string>> segments(1);
  std::vector<int> placeholder_numbers;
  for (const auto& tok : tmpl) {
    std::smatch m;
    if (std::regex_match(tok, m, kPlaceholder)) {
      placeholder_numbers.push_back(std::stoi(m[1].str()));
      segments.emplace_back();
    } else {
      segments.back().push_back(tok);
    }
  }

  std::map<std::string, std::string> values;
  int pos = 0;
  if (!segments[0].empty()) {
    const int at = find_token_subsequence(decoded_tokens, segments[0], 0);
    if (at < 0) return std::nullopt;
    pos = at + static_cast<int>(segments[0].size());
  }
  for (size_t i = 0; i < placeholder_numbers.size(); ++i) {
    const auto& seg = segments[i + 1];
    const std::string role = canonical_role(schema.role_for_placeholder(placeholder_numbers[i]));
    std::vector<std::string> value;
    if (seg.empty()) {
      if (i + 1 == placeholder_numbers.size()) {
        value.assign(decoded_tokens.begin() + pos, decoded_tokens.end());
        pos = static_cast<int>(decoded_tokens.size());
      }
      // Adjacent placeholders: the leftmost one takes the empty reading.
    } else {
      const int at = find_token_subsequence(decoded_tokens, seg, pos);
      if (at < 0) return std::nullopt;
      value.assign(decoded_tokens.begin() + pos, decoded_tokens.begin() + at);
      pos = at + static_cast<int>(seg.size());
    }
    const std::string text = join_tokens(value, " ");
    const std::string marker = "<arg" + std::to_string(placeholder_numbers[i]) + ">";
    values[role] = (text == marker) ? "" : text;
  }
  return values;
}

EventInstance extract(const ExtractorModel& model, const EventSchema& schema,
                      const Document& document, const ArgumentSpan& trigger,
                      ExtractReport* report) {
  if (!model.trained())
    fail(Error::Kind::missing_prerequisite, "extract: the extractor is not trained");
  ExtractReport local;
  ExtractReport& rep = report ? *report : local;

  const VocabularyMask mask = model.build_mask(document, schema);
  const std::string source = build_extractor_input(schema, document);
  const std::vector<std::string> decoded = model.decode_constrained(source, mask, &rep.truncated);

  EventInstance inst;
  inst.document = document;
  inst.event_type_id = schema.event_type_id;
  inst.trigger = trigger;
  inst.provenance = Provenance::predicted;

  auto aligned = align_decoded_to_template(decoded, schema);
  if (!aligned) {
    rep.unalignable = true;
    inst.validate();
    return inst;  // all-empty prediction
  }
  for (const auto& [role, value] : *aligned) {
    if (value.empty()) continue;
    std::vector<ArgumentSpan> fillers;
    for (const std::string& raw : split_on(value, kFillerDelimiter)) {
      const std::string filler = trim_copy(raw);
      if (filler.empty()) continue;
      const auto needle = split_whitespace(filler);
      const int at = find_token_subsequence(document.tokens, needle);
      if (at < 0) {
        ++rep.unanchorable_slots;
        continue;
      }
      ArgumentSpan span;
      span.start = at;
      span.end = at + static_cast<int>(needle.size());
      span.text = join_tokens(needle, " ");
      fillers.push_back(span);
    }
    if (!fillers.empty()) inst.arguments[role] = std::move(fillers);
  }
  inst.validate_against_schema(schema);
  return inst;
}

double score_sample(const ExtractorModel& model, const EventSchema& schema,
                    const EventInstance& instance) {
  const FilledTemplate filled = fill_template(schema, instance);
  const std::string source = build_extractor_input(schema, instance.document);
  return model.score(filled.filled_text, source);
}

}  // namespace argex
