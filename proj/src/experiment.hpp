#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "eval_agent.hpp"
#include "gen_agent.hpp"
#include "metrics.hpp"
#include "microworld.hpp"
#include "ontology.hpp"
#include "reward.hpp"
#include "rl_loop.hpp"

namespace argex {

struct SftStageConfig {
  int epochs = 10;
  double lr = 3e-4;
};

struct ExperimentConfig {
  uint64_t seed = 1;

  // paths are resolved relative to the config file's directory
  std::filesystem::path ontology;
  std::filesystem::path corpus;
  std::string corpus_format = "canonical";
  std::filesystem::path heldout;
  std::string heldout_format = "canonical";
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> target_ontology;  // cross-corpus mode

  std::string split_mode = "fraction";  // fraction | cross
  double unseen_fraction = 0.3;

  GenerationConfig generation;
  ExtractorConfig extractor;
  SftStageConfig sft_gen;
  SftStageConfig sft_eval;
  RLConfig rl;

  double probe_fraction = 0.5;
  int eval_limit = 0;  // 0 = evaluate every held-out instance

  void validate() const;
};

// Parses and validates the config file; errors carry the offending field path.
ExperimentConfig load_experiment_config(const std::filesystem::path& config_path,
                                        const std::optional<std::string>& out_dir_override = {});

// Per-stage options passed through the C API / CLI as a small JSON object.
struct StageOptions {
  std::optional<uint64_t> interaction_seed;
  std::optional<int> round;
  std::optional<double> min_reward;
  std::optional<std::string> out;
  std::optional<std::string> data;  // probe/eval source: "seen" | "unseen"
  bool use_sft = false;
  std::optional<std::string> series;  // plot input
};

StageOptions parse_stage_options(const std::string& options_json);

// Owns the experiment directory (lock file held for the object's lifetime),
// the manifest, and the run log.
class ExperimentContext {
 public:
  explicit ExperimentContext(const ExperimentConfig& config);
  ~ExperimentContext();
  ExperimentContext(const ExperimentContext&) = delete;

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return config_.out_dir; }
  void log(const std::string& message);

  void run_stage(const std::string& stage, const StageOptions& options);

  // Individual stages; `loop` composes exactly these, skipping completed work.
  void stage_split();
  void stage_sft_gen();
  void stage_sft_eval();
  void stage_propose(uint64_t interaction_seed, int round);
  void stage_score(uint64_t interaction_seed, int round);
  void stage_revise(uint64_t interaction_seed, int round);
  void stage_eval(const StageOptions& options);
  void stage_loop();
  void stage_probe(const StageOptions& options);
  void stage_diversity(const StageOptions& options);
  void stage_export(const StageOptions& options);
  void stage_plot(const StageOptions& options);

  std::filesystem::path round_dir(uint64_t interaction_seed, int round) const;

 private:
  struct Loaded;
  std::shared_ptr<Loaded> load_core(bool need_heldout);
  std::shared_ptr<const nn::Vocab> ensure_vocab(const Loaded& core);
  std::unique_ptr<LMAdapter> load_gen_checkpoint(uint64_t interaction_seed, int round,
                                                 std::shared_ptr<const nn::Vocab> vocab) const;
  std::unique_ptr<ExtractorModel> load_eval_checkpoint(uint64_t interaction_seed, int round,
                                                       std::shared_ptr<const nn::Vocab> vocab) const;
  void write_status(const std::string& stage, const StageOptions& options,
                    const std::vector<std::string>& artifacts);
  void require(const std::filesystem::path& artifact, const std::string& produced_by) const;

  ExperimentConfig config_;
  std::filesystem::path lock_path_;
  bool lock_held_ = false;
  std::unique_ptr<std::ofstream> log_file_;
};

// Renders a (round, dimension, scope, value) CSV series as one SVG line chart
// per dimension.
void render_series_charts(const std::filesystem::path& series_csv,
                          const std::filesystem::path& out_dir);

// Writes the micro-world fixture plus a starter experiment config.
// options_json: {"docs_per_type", "heldout_per_type", "empty_rate", "seed"}.
void make_fixture(const std::filesystem::path& out_dir, const std::string& options_json);

std::string argex_version_string();

}  // namespace argex
