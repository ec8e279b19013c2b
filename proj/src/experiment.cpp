#include "experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "prompting.hpp"

namespace argex {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

template <typename T>
T field(const ordered_json& j, const std::string& key, T fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    fail(Error::Kind::config, path + "." + key + ": wrong type");
  }
}

ordered_json section(const ordered_json& j, const std::string& key) {
  if (!j.contains(key)) return ordered_json::object();
  if (!j.at(key).is_object()) fail(Error::Kind::config, key + ": must be an object");
  return j.at(key);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

ordered_json slice_to_json(const SliceScore& s) {
  ordered_json j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  j["gold"] = s.gold;
  j["predicted"] = s.predicted;
  j["matched"] = s.matched;
  return j;
}

void write_json_file(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::io, "cannot open " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(Error::Kind::io, path.string() + ": " + e.what());
  }
  return j;
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  ordered_json paths;
  paths["ontology"] = c.ontology.string();
  paths["corpus"] = c.corpus.string();
  paths["corpus_format"] = c.corpus_format;
  paths["heldout"] = c.heldout.string();
  paths["heldout_format"] = c.heldout_format;
  paths["out_dir"] = c.out_dir.string();
  if (c.target_ontology) paths["target_ontology"] = c.target_ontology->string();
  j["paths"] = paths;
  ordered_json split;
  split["mode"] = c.split_mode;
  split["unseen_fraction"] = c.unseen_fraction;
  j["split"] = split;
  ordered_json gen;
  gen["samples_per_type"] = c.generation.samples_per_type;
  gen["temperature"] = c.generation.decoding.temperature;
  gen["top_p"] = c.generation.decoding.top_p;
  gen["max_length"] = c.generation.decoding.max_length;
  gen["train_adapters_only"] = c.generation.train_adapters_only;
  ordered_json lora;
  lora["rank"] = c.generation.model.lora.rank;
  lora["scale"] = c.generation.model.lora.scale;
  lora["dropout"] = c.generation.model.lora.dropout;
  gen["lora"] = lora;
  ordered_json gmodel;
  gmodel["d_model"] = c.generation.model.d_model;
  gmodel["layers"] = c.generation.model.layers;
  gmodel["heads"] = c.generation.model.heads;
  gmodel["d_ff"] = c.generation.model.d_ff;
  gmodel["max_len"] = c.generation.model.max_len;
  gen["model"] = gmodel;
  j["generation"] = gen;
  ordered_json ext;
  ordered_json emodel;
  emodel["d_model"] = c.extractor.model.d_model;
  emodel["enc_layers"] = c.extractor.model.enc_layers;
  emodel["dec_layers"] = c.extractor.model.dec_layers;
  emodel["heads"] = c.extractor.model.heads;
  emodel["d_ff"] = c.extractor.model.d_ff;
  emodel["max_src"] = c.extractor.model.max_src;
  emodel["max_tgt"] = c.extractor.model.max_tgt;
  ext["model"] = emodel;
  ext["length_normalize"] = c.extractor.length_normalize;
  j["extractor"] = ext;
  ordered_json sft;
  ordered_json sg, se;
  sg["epochs"] = c.sft_gen.epochs;
  sg["lr"] = c.sft_gen.lr;
  se["epochs"] = c.sft_eval.epochs;
  se["lr"] = c.sft_eval.lr;
  sft["gen"] = sg;
  sft["eval"] = se;
  j["sft"] = sft;
  ordered_json rl;
  rl["gamma1"] = c.rl.gamma1;
  rl["gamma2"] = c.rl.gamma2;
  rl["rounds"] = c.rl.rounds;
  rl["seeds"] = c.rl.seeds;
  rl["batch_size"] = c.rl.batch_size;
  rl["clip_norm"] = c.rl.clip_norm;
  rl["penalty_enabled"] = c.rl.penalty_enabled;
  j["rl"] = rl;
  ordered_json metrics;
  metrics["probe_fraction"] = c.probe_fraction;
  metrics["eval_limit"] = c.eval_limit;
  j["metrics"] = metrics;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (ontology.empty()) fail(Error::Kind::config, "paths.ontology: required");
  if (corpus.empty()) fail(Error::Kind::config, "paths.corpus: required");
  if (out_dir.empty()) fail(Error::Kind::config, "paths.out_dir: required");
  if (split_mode != "fraction" && split_mode != "cross")
    fail(Error::Kind::config, "split.mode: must be 'fraction' or 'cross'");
  if (split_mode == "cross" && !target_ontology)
    fail(Error::Kind::config, "paths.target_ontology: required in cross mode");
  if (split_mode == "fraction" && !(unseen_fraction > 0.0 && unseen_fraction < 1.0))
    fail(Error::Kind::config, "split.unseen_fraction: must lie in (0, 1)");
  if (generation.samples_per_type < 1)
    fail(Error::Kind::config, "generation.samples_per_type: must be >= 1");
  if (!(generation.decoding.temperature > 0.0))
    fail(Error::Kind::config, "generation.temperature: must be > 0");
  if (!(generation.decoding.top_p > 0.0 && generation.decoding.top_p <= 1.0))
    fail(Error::Kind::config, "generation.top_p: must lie in (0, 1]");
  if (sft_gen.epochs < 0 || sft_eval.epochs < 0)
    fail(Error::Kind::config, "sft.*.epochs: must be >= 0");
  if (!(probe_fraction > 0.0 && probe_fraction <= 1.0))
    fail(Error::Kind::config, "metrics.probe_fraction: must lie in (0, 1]");
  rl.validate();
}

ExperimentConfig load_experiment_config(const fs::path& config_path,
                                        const std::optional<std::string>& out_dir_override) {
  std::ifstream in(config_path);
  if (!in) fail(Error::Kind::config, "cannot open config file: " + config_path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(Error::Kind::config, config_path.string() + ": malformed JSON: " + e.what());
  }
  const fs::path base = fs::absolute(config_path).parent_path();

  ExperimentConfig c;
  c.seed = field<uint64_t>(j, "seed", 1, "");

  const ordered_json paths = section(j, "paths");
  c.ontology = resolve(base, field<std::string>(paths, "ontology", "", "paths"));
  c.corpus = resolve(base, field<std::string>(paths, "corpus", "", "paths"));
  c.corpus_format = field<std::string>(paths, "corpus_format", "canonical", "paths");
  const std::string heldout = field<std::string>(paths, "heldout", "", "paths");
  if (!heldout.empty()) c.heldout = resolve(base, heldout);
  c.heldout_format = field<std::string>(paths, "heldout_format", "canonical", "paths");
  c.out_dir = resolve(base, field<std::string>(paths, "out_dir", "", "paths"));
  const std::string target = field<std::string>(paths, "target_ontology", "", "paths");
  if (!target.empty()) c.target_ontology = resolve(base, target);
  if (out_dir_override) c.out_dir = fs::path(*out_dir_override);

  const ordered_json split = section(j, "split");
  c.split_mode = field<std::string>(split, "mode", "fraction", "split");
  c.unseen_fraction = field<double>(split, "unseen_fraction", 0.3, "split");

  const ordered_json gen = section(j, "generation");
  c.generation.samples_per_type = field<int>(gen, "samples_per_type", 20, "generation");
  c.generation.decoding.temperature = field<double>(gen, "temperature", 1.0, "generation");
  c.generation.decoding.top_p = field<double>(gen, "top_p", 0.95, "generation");
  c.generation.decoding.max_length = field<int>(gen, "max_length", 512, "generation");
  c.generation.train_adapters_only =
      field<bool>(gen, "train_adapters_only", false, "generation");
  const ordered_json lora = section(gen, "lora");
  c.generation.model.lora.rank = field<int>(lora, "rank", 8, "generation.lora");
  c.generation.model.lora.scale = field<double>(lora, "scale", 32.0, "generation.lora");
  c.generation.model.lora.dropout = field<double>(lora, "dropout", 0.05, "generation.lora");
  const ordered_json gmodel = section(gen, "model");
  c.generation.model.d_model = field<int>(gmodel, "d_model", 64, "generation.model");
  c.generation.model.layers = field<int>(gmodel, "layers", 2, "generation.model");
  c.generation.model.heads = field<int>(gmodel, "heads", 2, "generation.model");
  c.generation.model.d_ff = field<int>(gmodel, "d_ff", 256, "generation.model");
  c.generation.model.max_len = field<int>(gmodel, "max_len", 512, "generation.model");

  const ordered_json ext = section(j, "extractor");
  const ordered_json emodel = section(ext, "model");
  c.extractor.model.d_model = field<int>(emodel, "d_model", 64, "extractor.model");
  c.extractor.model.enc_layers = field<int>(emodel, "enc_layers", 2, "extractor.model");
  c.extractor.model.dec_layers = field<int>(emodel, "dec_layers", 2, "extractor.model");
  c.extractor.model.heads = field<int>(emodel, "heads", 2, "extractor.model");
  c.extractor.model.d_ff = field<int>(emodel, "d_ff", 256, "extractor.model");
  c.extractor.model.max_src = field<int>(emodel, "max_src", 512, "extractor.model");
  c.extractor.model.max_tgt = field<int>(emodel, "max_tgt", 160, "extractor.model");
  c.extractor.length_normalize = field<bool>(ext, "length_normalize", false, "extractor");

  const ordered_json sft = section(j, "sft");
  const ordered_json sft_gen = section(sft, "gen");
  c.sft_gen.epochs = field<int>(sft_gen, "epochs", 10, "sft.gen");
  c.sft_gen.lr = field<double>(sft_gen, "lr", 3e-4, "sft.gen");
  const ordered_json sft_eval = section(sft, "eval");
  c.sft_eval.epochs = field<int>(sft_eval, "epochs", 15, "sft.eval");
  c.sft_eval.lr = field<double>(sft_eval, "lr", 3e-4, "sft.eval");

  const ordered_json rl = section(j, "rl");
  c.rl.gamma1 = field<double>(rl, "gamma1", 3e-4, "rl");
  c.rl.gamma2 = field<double>(rl, "gamma2", 3e-4, "rl");
  c.rl.rounds = field<int>(rl, "rounds", 5, "rl");
  c.rl.seeds = field<std::vector<uint64_t>>(rl, "seeds", {1, 2, 3}, "rl");
  c.rl.batch_size = field<int>(rl, "batch_size", 8, "rl");
  c.rl.clip_norm = field<double>(rl, "clip_norm", 1.0, "rl");
  c.rl.penalty_enabled = field<bool>(rl, "penalty_enabled", true, "rl");

  const ordered_json metrics = section(j, "metrics");
  c.probe_fraction = field<double>(metrics, "probe_fraction", 0.5, "metrics");
  c.eval_limit = field<int>(metrics, "eval_limit", 0, "metrics");

  c.validate();
  return c;
}

StageOptions parse_stage_options(const std::string& options_json) {
  StageOptions o;
  if (trim_copy(options_json).empty()) return o;
  ordered_json j;
  try {
    j = ordered_json::parse(options_json);
  } catch (const std::exception& e) {
    fail(Error::Kind::invalid_argument, std::string("malformed stage options: ") + e.what());
  }
  if (j.contains("seed")) o.interaction_seed = j.at("seed").get<uint64_t>();
  if (j.contains("round")) o.round = j.at("round").get<int>();
  if (j.contains("min_reward")) o.min_reward = j.at("min_reward").get<double>();
  if (j.contains("out")) o.out = j.at("out").get<std::string>();
  if (j.contains("data")) o.data = j.at("data").get<std::string>();
  if (j.contains("use_sft")) o.use_sft = j.at("use_sft").get<bool>();
  if (j.contains("series")) o.series = j.at("series").get<std::string>();
  return o;
}

// -------------------------------------------------------------------------
// Context

struct ExperimentContext::Loaded {
  std::vector<EventSchema> schemas;  // effective ontology
  OntologySplit split;
  std::vector<EventInstance> train_pool;
  std::vector<EventInstance> heldout_pool;

  std::vector<EventInstance> seen_train() const {
    std::vector<EventInstance> out;
    for (const auto& i : train_pool)
      if (split.seen_types.count(i.event_type_id)) out.push_back(i);
    return out;
  }
  std::vector<EventInstance> heldout_filtered(bool unseen) const {
    std::vector<EventInstance> out;
    for (const auto& i : heldout_pool) {
      const bool is_unseen = split.unseen_types.count(i.event_type_id) > 0;
      if (is_unseen == unseen) out.push_back(i);
    }
    return out;
  }
};

ExperimentContext::ExperimentContext(const ExperimentConfig& config) : config_(config) {
  fs::create_directories(config_.out_dir);
  fs::create_directories(config_.out_dir / "status");
  lock_path_ = config_.out_dir / ".lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    fail(Error::Kind::locked, "experiment directory is locked by another process (" +
                                  lock_path_.string() + " exists)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] ssize_t n = ::write(fd, pid.c_str(), pid.size());
  ::close(fd);
  lock_held_ = true;

  log_file_ = std::make_unique<std::ofstream>(config_.out_dir / "run.log", std::ios::app);

  const fs::path manifest = config_.out_dir / "manifest.json";
  if (!fs::exists(manifest)) {
    ordered_json j;
    j["tool"] = argex_version_string();
    j["config"] = config_to_json(config_);
    ordered_json seeds;
    seeds["split"] = derive_seed(config_.seed, "split");
    seeds["init/gen"] = derive_seed(config_.seed, "init/gen");
    seeds["init/eval"] = derive_seed(config_.seed, "init/eval");
    seeds["sft/gen"] = derive_seed(config_.seed, "sft/gen");
    seeds["sft/eval"] = derive_seed(config_.seed, "sft/eval");
    seeds["note"] =
        "per-round tags: propose/seed=<s>/round=<r>, revise-gen/..., revise-eval/..., probe";
    j["derived_seeds"] = seeds;
    write_json_file(j, manifest);
  }
}

ExperimentContext::~ExperimentContext() {
  if (lock_held_) {
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }
}

void ExperimentContext::log(const std::string& message) {
  if (log_file_ && log_file_->good()) (*log_file_) << timestamp() << " " << message << std::endl;
  std::cerr << "[argex] " << message << std::endl;
}

void ExperimentContext::require(const fs::path& artifact, const std::string& produced_by) const {
  if (!fs::exists(artifact))
    fail(Error::Kind::missing_prerequisite,
         "missing artifact " + artifact.string() + "; run the '" + produced_by + "' stage first");
}

fs::path ExperimentContext::round_dir(uint64_t interaction_seed, int round) const {
  return config_.out_dir / ("seed_" + std::to_string(interaction_seed)) /
         ("round_" + std::to_string(round));
}

std::shared_ptr<ExperimentContext::Loaded> ExperimentContext::load_core(bool need_heldout) {
  auto core = std::make_shared<Loaded>();
  require(config_.out_dir / "split.json", "split");
  core->split = load_split(config_.out_dir / "split.json");
  core->schemas = load_ontology(config_.out_dir / "ontology_effective.jsonl");
  core->train_pool = ingest(config_.corpus, corpus_format_from_name(config_.corpus_format));
  if (need_heldout) {
    if (config_.heldout.empty())
      fail(Error::Kind::config, "paths.heldout: required for this stage");
    core->heldout_pool = ingest(config_.heldout, corpus_format_from_name(config_.heldout_format));
  }
  return core;
}

std::shared_ptr<const nn::Vocab> ExperimentContext::ensure_vocab(const Loaded& core) {
  const fs::path vocab_path = config_.out_dir / "vocab.json";
  if (fs::exists(vocab_path))
    return std::make_shared<nn::Vocab>(nn::Vocab::load(vocab_path));

  // Built from seen training text plus the full ontology surface (prompts,
  // templates, role and type names) and the structural literals.
  std::vector<std::string> texts;
  for (const auto& inst : core.seen_train()) {
    const EventSchema& schema = schema_by_type(core.schemas, inst.event_type_id);
    texts.push_back(serialize_output(schema, inst));
    texts.push_back(build_extractor_input(schema, inst.document));
  }
  std::vector<std::string> extras;
  for (const auto& schema : core.schemas) {
    extras.push_back(build_generation_prompt(schema));
    extras.push_back(schema.template_text);
  }
  extras.push_back(kEmptyMarker);
  extras.push_back(kFillerDelimiter);
  auto vocab = std::make_shared<nn::Vocab>(nn::Vocab::build(texts, extras));
  vocab->save(vocab_path);
  log("vocabulary built: " + std::to_string(vocab->size()) + " tokens");
  return vocab;
}

std::unique_ptr<LMAdapter> ExperimentContext::load_gen_checkpoint(
    uint64_t interaction_seed, int round, std::shared_ptr<const nn::Vocab> vocab) const {
  if (round <= 0) {
    const fs::path ckpt = config_.out_dir / "sft" / "gen.ckpt";
    require(ckpt, "sft-gen");
    return TinyLMAdapter::load(ckpt, std::move(vocab));
  }
  const fs::path ckpt = round_dir(interaction_seed, round - 1) / "gen.ckpt";
  require(ckpt, "revise (round " + std::to_string(round - 1) + ")");
  return TinyLMAdapter::load(ckpt, std::move(vocab));
}

std::unique_ptr<ExtractorModel> ExperimentContext::load_eval_checkpoint(
    uint64_t interaction_seed, int round, std::shared_ptr<const nn::Vocab> vocab) const {
  if (round <= 0) {
    const fs::path ckpt = config_.out_dir / "sft" / "eval.ckpt";
    require(ckpt, "sft-eval");
    return TinyExtractor::load(ckpt, std::move(vocab));
  }
  const fs::path ckpt = round_dir(interaction_seed, round - 1) / "eval.ckpt";
  require(ckpt, "revise (round " + std::to_string(round - 1) + ")");
  return TinyExtractor::load(ckpt, std::move(vocab));
}

void ExperimentContext::write_status(const std::string& stage, const StageOptions& options,
                                     const std::vector<std::string>& artifacts) {
  ordered_json j;
  j["stage"] = stage;
  j["ok"] = true;
  if (options.interaction_seed) j["seed"] = *options.interaction_seed;
  if (options.round) j["round"] = *options.round;
  j["artifacts"] = artifacts;
  j["finished_at"] = timestamp();
  std::string name = stage;
  if (options.interaction_seed) name += "_s" + std::to_string(*options.interaction_seed);
  if (options.round) name += "_r" + std::to_string(*options.round);
  write_json_file(j, config_.out_dir / "status" / (name + ".json"));
}

// -------------------------------------------------------------------------
// Stages

void ExperimentContext::stage_split() {
  std::vector<EventSchema> schemas = load_ontology(config_.ontology);
  OntologySplit split;
  std::vector<EventSchema> effective;
  if (config_.split_mode == "cross") {
    std::vector<EventSchema> target = load_ontology(*config_.target_ontology);
    split = cross_corpus_split(schemas, target);
    effective = schemas;
    for (const auto& s : target)
      if (split.unseen_types.count(s.event_type_id)) effective.push_back(s);
  } else {
    split = build_split(schemas, config_.unseen_fraction, derive_seed(config_.seed, "split"));
    effective = schemas;
  }
  save_split(split, config_.out_dir / "split.json");
  save_ontology(effective, config_.out_dir / "ontology_effective.jsonl");
  save_template_registry(registry_from_schemas(effective),
                         config_.out_dir / "templates.jsonl");
  log("split: " + std::to_string(split.seen_types.size()) + " seen / " +
      std::to_string(split.unseen_types.size()) + " unseen event types");
  write_status("split", {}, {"split.json", "ontology_effective.jsonl", "templates.jsonl"});
}

void ExperimentContext::stage_sft_gen() {
  auto core = load_core(false);
  auto vocab = ensure_vocab(*core);
  fs::create_directories(config_.out_dir / "sft");

  TinyLMAdapter agent(config_.generation.model, vocab, derive_seed(config_.seed, "init/gen"),
                      config_.generation.train_adapters_only);
  const auto seen = core->seen_train();
  log("sft-gen: " + std::to_string(seen.size()) + " seen instances, " +
      std::to_string(config_.sft_gen.epochs) + " epochs");
  const SftResult result = sft_train(agent, seen, core->schemas, core->split.seen_types,
                                     config_.sft_gen.epochs, config_.sft_gen.lr,
                                     derive_seed(config_.seed, "sft/gen"));
  agent.save(config_.out_dir / "sft" / "gen.ckpt");
  ordered_json j;
  j["epoch_losses"] = result.epoch_losses;
  write_json_file(j, config_.out_dir / "sft" / "gen_loss.json");
  ordered_json cfg;
  cfg["generation"] = config_to_json(config_)["generation"];
  write_json_file(cfg, config_.out_dir / "sft" / "gen_config.json");
  write_status("sft-gen", {}, {"sft/gen.ckpt", "sft/gen_loss.json"});
}

void ExperimentContext::stage_sft_eval() {
  auto core = load_core(false);
  auto vocab = ensure_vocab(*core);
  fs::create_directories(config_.out_dir / "sft");

  TinyExtractor extractor(config_.extractor, vocab, derive_seed(config_.seed, "init/eval"));
  const auto seen = core->seen_train();
  log("sft-eval: " + std::to_string(seen.size()) + " seen instances, " +
      std::to_string(config_.sft_eval.epochs) + " epochs");
  const TrainResult result = train_extractor(extractor, seen, core->schemas,
                                             config_.sft_eval.epochs, config_.sft_eval.lr,
                                             derive_seed(config_.seed, "sft/eval"));
  extractor.save(config_.out_dir / "sft" / "eval.ckpt");
  ordered_json j;
  j["epoch_losses"] = result.epoch_losses;
  write_json_file(j, config_.out_dir / "sft" / "eval_loss.json");

  const StructureBand band = fit_structure_band(seen, core->schemas);
  ordered_json b;
  b["tau"] = band.tau;
  b["epsilon"] = band.epsilon;
  write_json_file(b, config_.out_dir / "band.json");
  write_status("sft-eval", {}, {"sft/eval.ckpt", "sft/eval_loss.json", "band.json"});
}

namespace {

void write_synthetic_files(const SyntheticDataset& dataset, const fs::path& dir) {
  std::ofstream syn(dir / "synthetic.jsonl");
  std::ofstream prompts(dir / "prompts.jsonl");
  if (!syn || !prompts) fail(Error::Kind::io, "cannot write round files in " + dir.string());
  for (const auto& s : dataset.samples) {
    syn << instance_to_json_line(s.instance) << "\n";
    ordered_json p;
    p["sample_id"] = s.sample_id;
    p["event_type_id"] = s.instance.event_type_id;
    p["input_text"] = s.input_text;
    p["output_text"] = s.output_text;
    prompts << p.dump() << "\n";
  }
}

SyntheticDataset read_synthetic_files(const fs::path& dir, int round) {
  SyntheticDataset dataset;
  dataset.round_index = round;
  std::ifstream syn(dir / "synthetic.jsonl");
  std::ifstream prompts(dir / "prompts.jsonl");
  if (!syn || !prompts)
    fail(Error::Kind::missing_prerequisite,
         "missing artifact " + (dir / "synthetic.jsonl").string() +
             "; run the 'propose' stage first");
  std::string syn_line, prompt_line;
  while (std::getline(syn, syn_line)) {
    if (!std::getline(prompts, prompt_line))
      fail(Error::Kind::io, "synthetic.jsonl and prompts.jsonl disagree in " + dir.string());
    if (trim_copy(syn_line).empty()) continue;
    SyntheticSample s;
    s.instance = instance_from_json_line(syn_line);
    const ordered_json p = ordered_json::parse(prompt_line);
    s.sample_id = p.at("sample_id").get<std::string>();
    s.input_text = p.at("input_text").get<std::string>();
    s.output_text = p.at("output_text").get<std::string>();
    dataset.samples.push_back(std::move(s));
  }
  return dataset;
}

}  // namespace

void ExperimentContext::stage_propose(uint64_t interaction_seed, int round) {
  auto core = load_core(false);
  auto vocab = ensure_vocab(*core);
  auto agent = load_gen_checkpoint(interaction_seed, round, vocab);

  const fs::path dir = round_dir(interaction_seed, round);
  fs::create_directories(dir);

  ProposeReport report;
  const uint64_t seed = derive_seed(
      config_.seed, "propose/seed=" + std::to_string(interaction_seed) + "/round=" +
                        std::to_string(round));
  SyntheticDataset dataset =
      propose(*agent, core->split, core->schemas, config_.generation, seed, round, &report);
  write_synthetic_files(dataset, dir);
  save_propose_report(report, dir / "propose_report.json");
  const auto totals = report.totals();
  log("propose s" + std::to_string(interaction_seed) + " r" + std::to_string(round) + ": kept " +
      std::to_string(totals.kept) + "/" + std::to_string(totals.requested));
  StageOptions opts;
  opts.interaction_seed = interaction_seed;
  opts.round = round;
  write_status("propose", opts, {"synthetic.jsonl", "prompts.jsonl", "propose_report.json"});
}

void ExperimentContext::stage_score(uint64_t interaction_seed, int round) {
  auto core = load_core(false);
  auto vocab = ensure_vocab(*core);
  const fs::path dir = round_dir(interaction_seed, round);
  SyntheticDataset dataset = read_synthetic_files(dir, round);
  auto extractor = load_eval_checkpoint(interaction_seed, round, vocab);
  require(config_.out_dir / "band.json", "sft-eval");
  const ordered_json band = read_json_file(config_.out_dir / "band.json");

  std::vector<std::string> ids;
  std::vector<double> ells, rhos;
  for (const auto& s : dataset.samples) {
    const EventSchema& schema = schema_by_type(core->schemas, s.instance.event_type_id);
    ids.push_back(s.sample_id);
    ells.push_back(score_sample(*extractor, schema, s.instance));
    rhos.push_back(empty_argument_ratio(s.instance, schema));
  }
  if (dataset.samples.empty()) {
    // Degenerate round: an empty ledger records the fact.
    write_reward_ledger(dir / "ledger.jsonl", RewardStats{}, {});
  } else {
    const ScoreDatasetResult scored =
        score_dataset(ids, ells, rhos, band.at("tau").get<double>(),
                      band.at("epsilon").get<double>(), config_.rl.penalty_enabled);
    write_reward_ledger(dir / "ledger.jsonl", scored.stats, scored.samples);
  }
  log("score s" + std::to_string(interaction_seed) + " r" + std::to_string(round) + ": " +
      std::to_string(dataset.samples.size()) + " samples");
  StageOptions opts;
  opts.interaction_seed = interaction_seed;
  opts.round = round;
  write_status("score", opts, {"ledger.jsonl"});
}

void ExperimentContext::stage_revise(uint64_t interaction_seed, int round) {
  auto core = load_core(false);
  auto vocab = ensure_vocab(*core);
  const fs::path dir = round_dir(interaction_seed, round);
  require(dir / "ledger.jsonl", "score");
  SyntheticDataset dataset = read_synthetic_files(dir, round);
  const ScoreDatasetResult scored = read_reward_ledger(dir / "ledger.jsonl");

  auto agent = load_gen_checkpoint(interaction_seed, round, vocab);
  auto extractor = load_eval_checkpoint(interaction_seed, round, vocab);

  if (dataset.samples.empty()) {
    log("revise s" + std::to_string(interaction_seed) + " r" + std::to_string(round) +
        ": degenerate round, agents carried forward unchanged");
  } else {
    const std::string tag =
        "seed=" + std::to_string(interaction_seed) + "/round=" + std::to_string(round);
    revise_generation(*agent, dataset, scored.samples, config_.rl.gamma1, config_.rl.clip_norm,
                      config_.rl.batch_size, derive_seed(config_.seed, "revise-gen/" + tag));
    revise_extractor(*extractor, dataset, scored.samples, core->schemas, config_.rl.gamma2,
                     config_.rl.clip_norm, config_.rl.batch_size,
                     derive_seed(config_.seed, "revise-eval/" + tag));
  }
  agent->save(dir / "gen.ckpt");
  extractor->save(dir / "eval.ckpt");
  StageOptions opts;
  opts.interaction_seed = interaction_seed;
  opts.round = round;
  write_status("revise", opts, {"gen.ckpt", "eval.ckpt"});
}

void ExperimentContext::stage_eval(const StageOptions& options) {
  auto core = load_core(true);
  auto vocab = ensure_vocab(*core);

  std::unique_ptr<ExtractorModel> extractor;
  fs::path out_path;
  if (options.use_sft) {
    const fs::path ckpt = config_.out_dir / "sft" / "eval.ckpt";
    require(ckpt, "sft-eval");
    extractor = TinyExtractor::load(ckpt, vocab);
    out_path = config_.out_dir / "eval_sft.json";
  } else {
    if (!options.interaction_seed || !options.round)
      fail(Error::Kind::invalid_argument, "eval: --seed and --round are required (or --use-sft)");
    const fs::path ckpt = round_dir(*options.interaction_seed, *options.round) / "eval.ckpt";
    require(ckpt, "revise");
    extractor = TinyExtractor::load(ckpt, vocab);
    out_path = round_dir(*options.interaction_seed, *options.round) / "metrics.json";
  }

  const bool unseen = options.data.value_or("unseen") == "unseen";
  std::vector<EventInstance> gold = core->heldout_filtered(unseen);
  if (config_.eval_limit > 0 && static_cast<int>(gold.size()) > config_.eval_limit)
    gold.resize(config_.eval_limit);
  if (gold.empty()) fail(Error::Kind::stage, "eval: no held-out instances for the requested slice");

  std::vector<EventInstance> predicted;
  predicted.reserve(gold.size());
  for (const auto& g : gold) {
    const EventSchema& schema = schema_by_type(core->schemas, g.event_type_id);
    predicted.push_back(extract(*extractor, schema, g.document, g.trigger));
  }
  const F1Report f1 = span_f1(predicted, gold, core->split);

  ordered_json j;
  j["instances"] = gold.size();
  j["slice"] = unseen ? "unseen-types" : "seen-types";
  j["f1"] = ordered_json::object();
  j["f1"]["seen_roles"] = slice_to_json(f1.seen_roles);
  j["f1"]["unseen_roles"] = slice_to_json(f1.unseen_roles);
  j["f1"]["overall"] = slice_to_json(f1.overall);
  if (options.interaction_seed && options.round) {
    const fs::path ledger = round_dir(*options.interaction_seed, *options.round) / "ledger.jsonl";
    if (fs::exists(ledger)) {
      const ScoreDatasetResult scored = read_reward_ledger(ledger);
      double rho = 0.0, alpha = 0.0;
      for (const auto& s : scored.samples) {
        rho += s.rho;
        alpha += s.alpha;
      }
      const double n = std::max<size_t>(scored.samples.size(), 1);
      j["synthetic_count"] = scored.samples.size();
      j["mean_rho"] = rho / n;
      j["mean_alpha"] = alpha / n;
      j["degenerate"] = scored.samples.empty();
      j["round"] = *options.round;
      j["interaction_seed"] = *options.interaction_seed;
    }
    write_canonical(predicted,
                    round_dir(*options.interaction_seed, *options.round) / "predictions.jsonl");
  }
  write_json_file(j, out_path);
  log("eval: overall F1 " + std::to_string(f1.overall.f1) + " on " +
      std::to_string(gold.size()) + " instances -> " + out_path.string());
  write_status("eval", options, {out_path.string()});
}

void ExperimentContext::stage_loop() {
  if (!fs::exists(config_.out_dir / "split.json")) stage_split();
  if (!fs::exists(config_.out_dir / "sft" / "gen.ckpt")) stage_sft_gen();
  if (!fs::exists(config_.out_dir / "sft" / "eval.ckpt") ||
      !fs::exists(config_.out_dir / "band.json"))
    stage_sft_eval();

  for (uint64_t s : config_.rl.seeds) {
    for (int r = 0; r < config_.rl.rounds; ++r) {
      const fs::path dir = round_dir(s, r);
      if (!fs::exists(dir / "synthetic.jsonl")) stage_propose(s, r);
      if (!fs::exists(dir / "ledger.jsonl")) stage_score(s, r);
      if (!fs::exists(dir / "gen.ckpt") || !fs::exists(dir / "eval.ckpt")) stage_revise(s, r);
      if (!fs::exists(dir / "metrics.json")) {
        StageOptions opts;
        opts.interaction_seed = s;
        opts.round = r;
        stage_eval(opts);
      }
    }
  }

  // Best round per seed by overall dev F1; the final report averages the
  // best-round scores across seeds.
  ordered_json per_seed = ordered_json::array();
  double sum_overall = 0.0, sum_seen = 0.0, sum_unseen = 0.0;
  std::ofstream series(config_.out_dir / "loop_series.csv");
  series << "round,dimension,scope,value\n";
  for (uint64_t s : config_.rl.seeds) {
    std::vector<double> overall;
    std::vector<ordered_json> rounds_json;
    for (int r = 0; r < config_.rl.rounds; ++r) {
      const ordered_json m = read_json_file(round_dir(s, r) / "metrics.json");
      overall.push_back(m.at("f1").at("overall").at("f1").get<double>());
      rounds_json.push_back(m);
      const std::string scope = "seed_" + std::to_string(s);
      series << r << ",f1_overall," << scope << "," << overall.back() << "\n";
      if (m.contains("mean_rho")) {
        series << r << ",mean_rho," << scope << "," << m.at("mean_rho").get<double>() << "\n";
        series << r << ",mean_alpha," << scope << "," << m.at("mean_alpha").get<double>() << "\n";
      }
    }
    const int best = select_best_round(overall);
    const ordered_json& best_m = rounds_json[best];
    ordered_json entry;
    entry["seed"] = s;
    entry["per_round_overall_f1"] = overall;
    entry["best_round"] = best;
    entry["best_f1"] = best_m.at("f1");
    per_seed.push_back(entry);
    sum_overall += best_m.at("f1").at("overall").at("f1").get<double>();
    sum_seen += best_m.at("f1").at("seen_roles").at("f1").get<double>();
    sum_unseen += best_m.at("f1").at("unseen_roles").at("f1").get<double>();
  }
  const double n_seeds = static_cast<double>(config_.rl.seeds.size());
  ordered_json report;
  report["rounds"] = config_.rl.rounds;
  report["seeds"] = config_.rl.seeds;
  report["per_seed"] = per_seed;
  ordered_json mean_best;
  mean_best["overall_f1"] = sum_overall / n_seeds;
  mean_best["seen_roles_f1"] = sum_seen / n_seeds;
  mean_best["unseen_roles_f1"] = sum_unseen / n_seeds;
  report["mean_best"] = mean_best;
  write_json_file(report, config_.out_dir / "report.json");
  log("loop complete: mean best-round overall F1 " + std::to_string(sum_overall / n_seeds));
  write_status("loop", {}, {"report.json", "loop_series.csv"});
}

void ExperimentContext::stage_probe(const StageOptions& options) {
  auto core = load_core(true);
  auto vocab = ensure_vocab(*core);

  std::unique_ptr<ExtractorModel> extractor;
  std::string tag;
  if (options.use_sft || !options.interaction_seed || !options.round) {
    const fs::path ckpt = config_.out_dir / "sft" / "eval.ckpt";
    require(ckpt, "sft-eval");
    extractor = TinyExtractor::load(ckpt, vocab);
    tag = "sft";
  } else {
    const fs::path ckpt = round_dir(*options.interaction_seed, *options.round) / "eval.ckpt";
    require(ckpt, "revise");
    extractor = TinyExtractor::load(ckpt, vocab);
    tag = "s" + std::to_string(*options.interaction_seed) + "_r" + std::to_string(*options.round);
  }

  const bool unseen = options.data.value_or("seen") == "unseen";
  const std::vector<EventInstance> data = core->heldout_filtered(unseen);
  if (data.empty()) fail(Error::Kind::stage, "probe: no held-out instances for the requested slice");
  const PerturbationReport report = sensitivity_probe(
      *extractor, data, core->schemas, config_.probe_fraction, derive_seed(config_.seed, "probe"));
  const fs::path out_path = config_.out_dir / ("probe_" + tag + ".json");
  save_perturbation_report(report, out_path);
  log("probe: mean normal " + std::to_string(report.mean_normal) + ", empty " +
      std::to_string(report.mean_empty) + ", mismatch " + std::to_string(report.mean_mismatch));
  write_status("probe", options, {out_path.string()});
}

void ExperimentContext::stage_diversity(const StageOptions& options) {
  if (!options.interaction_seed)
    fail(Error::Kind::invalid_argument, "diversity: --seed is required");
  const uint64_t s = *options.interaction_seed;
  std::map<int, SyntheticDataset> by_round;
  for (int r = 0;; ++r) {
    const fs::path dir = round_dir(s, r);
    if (!fs::exists(dir / "synthetic.jsonl")) break;
    SyntheticDataset ds = read_synthetic_files(dir, r);
    if (!ds.samples.empty()) by_round[r] = std::move(ds);
  }
  if (by_round.empty())
    fail(Error::Kind::missing_prerequisite,
         "diversity: no proposed rounds found for seed " + std::to_string(s) +
             "; run the 'propose' stage first");
  const DiversityReport report = diversity(by_round);
  const fs::path seed_dir = config_.out_dir / ("seed_" + std::to_string(s));
  save_diversity_report(report, seed_dir / "diversity.json", seed_dir / "diversity_series.csv");
  write_status("diversity", options, {"diversity.json", "diversity_series.csv"});
}

void ExperimentContext::stage_export(const StageOptions& options) {
  if (!options.interaction_seed || !options.round)
    fail(Error::Kind::invalid_argument, "export: --seed and --round are required");
  const fs::path dir = round_dir(*options.interaction_seed, *options.round);
  SyntheticDataset dataset = read_synthetic_files(dir, *options.round);
  require(dir / "ledger.jsonl", "score");
  const ScoreDatasetResult scored = read_reward_ledger(dir / "ledger.jsonl");
  if (scored.samples.size() != dataset.samples.size())
    fail(Error::Kind::stage, "export: ledger does not cover the synthetic dataset");
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    if (scored.samples[i].sample_id != dataset.samples[i].sample_id)
      fail(Error::Kind::stage, "export: ledger order does not match the synthetic dataset");
    dataset.samples[i].reward = scored.samples[i].alpha;
  }
  const fs::path out_path =
      options.out ? fs::path(*options.out) : dir / "export.jsonl";
  const int written = export_synthetic(dataset, out_path, options.min_reward);
  log("export: wrote " + std::to_string(written) + " records to " + out_path.string());
  write_status("export", options, {out_path.string()});
}

void ExperimentContext::stage_plot(const StageOptions& options) {
  const fs::path series = options.series ? fs::path(*options.series)
                                         : config_.out_dir / "loop_series.csv";
  require(series, "loop (or pass --series)");
  const fs::path out = options.out ? fs::path(*options.out) : config_.out_dir / "plots";
  render_series_charts(series, out);
  write_status("plot", options, {out.string()});
}

void ExperimentContext::run_stage(const std::string& stage, const StageOptions& options) {
  auto need_seed_round = [&]() {
    if (!options.interaction_seed || !options.round)
      fail(Error::Kind::invalid_argument, stage + ": --seed and --round are required");
  };
  if (stage == "split") {
    stage_split();
  } else if (stage == "sft-gen") {
    require(config_.out_dir / "split.json", "split");
    stage_sft_gen();
  } else if (stage == "sft-eval") {
    require(config_.out_dir / "split.json", "split");
    stage_sft_eval();
  } else if (stage == "propose") {
    need_seed_round();
    stage_propose(*options.interaction_seed, *options.round);
  } else if (stage == "score") {
    need_seed_round();
    stage_score(*options.interaction_seed, *options.round);
  } else if (stage == "revise") {
    need_seed_round();
    stage_revise(*options.interaction_seed, *options.round);
  } else if (stage == "eval") {
    stage_eval(options);
  } else if (stage == "loop") {
    stage_loop();
  } else if (stage == "probe") {
    stage_probe(options);
  } else if (stage == "diversity") {
    stage_diversity(options);
  } else if (stage == "export") {
    stage_export(options);
  } else if (stage == "plot") {
    stage_plot(options);
  } else {
    fail(Error::Kind::invalid_argument, "unknown stage '" + stage + "'");
  }
}

// -------------------------------------------------------------------------

void render_series_charts(const fs::path& series_csv, const fs::path& out_dir) {
  std::ifstream in(series_csv);
  if (!in) fail(Error::Kind::io, "cannot open series file: " + series_csv.string());
  fs::create_directories(out_dir);

  struct Point {
    int round;
    double value;
  };
  std::map<std::string, std::map<std::string, std::vector<Point>>> by_dimension;
  std::string line;
  std::getline(in, line);  // header
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    const auto parts = split_on(line, ",");
    if (parts.size() != 4)
      fail(Error::Kind::io,
           series_csv.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
    by_dimension[parts[1]][parts[2]].push_back({std::stoi(parts[0]), std::stod(parts[3])});
  }

  const int width = 640, height = 400, margin = 50;
  for (const auto& [dimension, scopes] : by_dimension) {
    double lo = 1e300, hi = -1e300;
    int max_round = 0;
    for (const auto& [scope, pts] : scopes)
      for (const auto& p : pts) {
        lo = std::min(lo, p.value);
        hi = std::max(hi, p.value);
        max_round = std::max(max_round, p.round);
      }
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    auto x_of = [&](int round) {
      return margin + (width - 2 * margin) *
                          (max_round > 0 ? static_cast<double>(round) / max_round : 0.5);
    };
    auto y_of = [&](double v) {
      return height - margin - (height - 2 * margin) * (v - lo) / (hi - lo);
    };

    std::ofstream svg(out_dir / (dimension + ".svg"));
    if (!svg) fail(Error::Kind::io, "cannot write chart in " + out_dir.string());
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
        << "' y2='" << height - margin << "' stroke='black'/>\n";
    svg << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
        << height - margin << "' stroke='black'/>\n";
    svg << "<text x='" << width / 2 << "' y='" << height - 12
        << "' text-anchor='middle' font-size='13'>round</text>\n";
    svg << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>"
        << dimension << "</text>\n";
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf"};
    int color_idx = 0;
    int legend_y = margin;
    for (const auto& [scope, pts] : scopes) {
      const char* color = kColors[color_idx++ % 7];
      svg << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
      std::vector<Point> sorted = pts;
      std::sort(sorted.begin(), sorted.end(),
                [](const Point& a, const Point& b) { return a.round < b.round; });
      for (const auto& p : sorted) svg << x_of(p.round) << "," << y_of(p.value) << " ";
      svg << "'/>\n";
      for (const auto& p : sorted)
        svg << "<circle cx='" << x_of(p.round) << "' cy='" << y_of(p.value) << "' r='3' fill='"
            << color << "'/>\n";
      svg << "<text x='" << width - margin + 4 << "' y='" << legend_y << "' font-size='11' fill='"
          << color << "'>" << scope << "</text>\n";
      legend_y += 14;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", lo + pad);
    svg << "<text x='" << margin - 4 << "' y='" << height - margin
        << "' text-anchor='end' font-size='11'>" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", hi - pad);
    svg << "<text x='" << margin - 4 << "' y='" << margin + 4
        << "' text-anchor='end' font-size='11'>" << buf << "</text>\n";
    svg << "</svg>\n";
  }
}

void make_fixture(const fs::path& out_dir, const std::string& options_json) {
  MicroWorldOptions options;
  if (!trim_copy(options_json).empty()) {
    ordered_json j;
    try {
      j = ordered_json::parse(options_json);
    } catch (const std::exception& e) {
      fail(Error::Kind::invalid_argument, std::string("malformed fixture options: ") + e.what());
    }
    options.docs_per_type = field<int>(j, "docs_per_type", options.docs_per_type, "fixture");
    options.heldout_per_type =
        field<int>(j, "heldout_per_type", options.heldout_per_type, "fixture");
    options.empty_rate = field<double>(j, "empty_rate", options.empty_rate, "fixture");
    options.seed = field<uint64_t>(j, "seed", options.seed, "fixture");
  }
  const MicroWorld world = make_micro_world(options);
  write_micro_world(world, out_dir);

  ordered_json config;
  config["seed"] = 1;
  ordered_json paths;
  paths["ontology"] = "ontology.jsonl";
  paths["corpus"] = "corpus.jsonl";
  paths["heldout"] = "heldout.jsonl";
  paths["out_dir"] = "exp";
  config["paths"] = paths;
  ordered_json split;
  split["mode"] = "fraction";
  split["unseen_fraction"] = 0.3;
  config["split"] = split;
  ordered_json gen;
  gen["samples_per_type"] = 8;
  gen["max_length"] = 120;
  config["generation"] = gen;
  ordered_json sft;
  ordered_json sg, se;
  sg["epochs"] = 12;
  se["epochs"] = 16;
  sft["gen"] = sg;
  sft["eval"] = se;
  config["sft"] = sft;
  ordered_json rl;
  rl["rounds"] = 5;
  rl["seeds"] = std::vector<uint64_t>{1, 2, 3};
  config["rl"] = rl;
  write_json_file(config, out_dir / "config.json");
}

std::string argex_version_string() { return "argex 0.1.0"; }

}  // namespace argex
