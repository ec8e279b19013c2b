#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "experiment.hpp"
#include "test_util.hpp"

using namespace argex;
using namespace argex::testing;

namespace {

// A deliberately tiny configuration so stage tests stay fast.
void write_tiny_config(const std::filesystem::path& dir, bool penalty_enabled = true,
                       int rounds = 1, const std::string& seeds = "[1]") {
  std::ofstream out(dir / "config.json");
  out << R"({
  "seed": 5,
  "paths": {"ontology": "ontology.jsonl", "corpus": "corpus.jsonl",
            "heldout": "heldout.jsonl", "out_dir": "exp"},
  "split": {"mode": "fraction", "unseen_fraction": 0.3},
  "generation": {"samples_per_type": 3, "max_length": 100,
                 "model": {"d_model": 24, "layers": 1, "heads": 2, "d_ff": 48, "max_len": 256},
                 "lora": {"rank": 2, "scale": 8.0, "dropout": 0.0}},
  "extractor": {"model": {"d_model": 24, "enc_layers": 1, "dec_layers": 1, "heads": 2,
                           "d_ff": 48, "max_src": 256, "max_tgt": 48}},
  "sft": {"gen": {"epochs": 2, "lr": 0.003}, "eval": {"epochs": 2, "lr": 0.003}},
  "rl": {"gamma1": 0.0003, "gamma2": 0.0003, "rounds": )"
      << rounds << R"(, "seeds": )" << seeds << R"(, "batch_size": 4, "clip_norm": 1.0,
         "penalty_enabled": )"
      << (penalty_enabled ? "true" : "false") << R"(},
  "metrics": {"probe_fraction": 0.5, "eval_limit": 6}
})";
}

void write_fixture(const std::filesystem::path& dir) {
  const MicroWorld world = make_micro_world({.docs_per_type = 8, .heldout_per_type = 3,
                                             .empty_rate = 0.15, .seed = 2});
  write_micro_world(world, dir);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing applies defaults and reports field paths") {
  TempDir dir("config");
  write_fixture(dir.path);
  write_tiny_config(dir.path);
  const ExperimentConfig config = load_experiment_config(dir.path / "config.json");
  CHECK(config.generation.samples_per_type == 3);
  CHECK(config.generation.decoding.top_p == 0.95);  // default
  CHECK(config.rl.rounds == 1);
  CHECK(config.out_dir == dir.path / "exp");

  std::ofstream bad(dir.path / "bad.json");
  bad << R"({"paths": {"ontology": "o", "corpus": "c", "out_dir": "e"},
             "rl": {"gamma1": "fast"}})";
  bad.close();
  try {
    load_experiment_config(dir.path / "bad.json");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::config);
    CHECK(std::string(e.what()).find("rl.gamma1") != std::string::npos);
  }

  std::ofstream invalid(dir.path / "invalid.json");
  invalid << R"({"paths": {"ontology": "o", "corpus": "c", "out_dir": "e"},
                 "split": {"unseen_fraction": 1.5}})";
  invalid.close();
  try {
    load_experiment_config(dir.path / "invalid.json");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("split.unseen_fraction") != std::string::npos);
  }
}

TEST_CASE("make_fixture writes a loadable starter kit") {
  TempDir dir("fixture");
  make_fixture(dir.path, R"({"docs_per_type": 4, "heldout_per_type": 2, "seed": 9})");
  CHECK(std::filesystem::exists(dir.path / "ontology.jsonl"));
  CHECK(std::filesystem::exists(dir.path / "corpus.jsonl"));
  CHECK(std::filesystem::exists(dir.path / "heldout.jsonl"));
  CHECK(std::filesystem::exists(dir.path / "config.json"));
  CHECK(load_experiment_config(dir.path / "config.json").rl.rounds == 5);
}

TEST_CASE("stage prerequisites are enforced with the prior stage named") {
  TempDir dir("prereq");
  write_fixture(dir.path);
  write_tiny_config(dir.path);
  const ExperimentConfig config = load_experiment_config(dir.path / "config.json");
  ExperimentContext ctx(config);
  StageOptions opts;
  opts.interaction_seed = 1;
  opts.round = 0;
  try {
    ctx.run_stage("score", opts);
    FAIL("expected a missing-prerequisite error");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::missing_prerequisite);
    CHECK(std::string(e.what()).find("split") != std::string::npos);
  }
  ctx.stage_split();
  try {
    ctx.run_stage("score", opts);
    FAIL("expected a missing-prerequisite error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("propose") != std::string::npos);
  }
}

TEST_CASE("the experiment directory is locked by one context at a time") {
  TempDir dir("lock");
  write_fixture(dir.path);
  write_tiny_config(dir.path);
  const ExperimentConfig config = load_experiment_config(dir.path / "config.json");
  ExperimentContext first(config);
  try {
    ExperimentContext second(config);
    FAIL("expected the lock to reject a second owner");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::locked);
  }
}

TEST_CASE("loop equals the stage subcommands run in sequence") {
  TempDir dir("composition");
  write_fixture(dir.path);
  write_tiny_config(dir.path);

  // Run A: one loop call end to end.
  const ExperimentConfig config_a =
      load_experiment_config(dir.path / "config.json", (dir.path / "exp_a").string());
  {
    ExperimentContext ctx(config_a);
    ctx.stage_loop();
  }

  // Run B: the same work as individual stage calls, then loop for the report.
  const ExperimentConfig config_b =
      load_experiment_config(dir.path / "config.json", (dir.path / "exp_b").string());
  {
    ExperimentContext ctx(config_b);
    ctx.stage_split();
    ctx.stage_sft_gen();
    ctx.stage_sft_eval();
    ctx.stage_propose(1, 0);
    ctx.stage_score(1, 0);
    ctx.stage_revise(1, 0);
    StageOptions opts;
    opts.interaction_seed = 1;
    opts.round = 0;
    ctx.stage_eval(opts);
    ctx.stage_loop();  // everything exists; assembles the report only
  }

  for (const char* rel :
       {"seed_1/round_0/ledger.jsonl", "seed_1/round_0/synthetic.jsonl",
        "seed_1/round_0/prompts.jsonl", "seed_1/round_0/metrics.json", "report.json"}) {
    CHECK(slurp(dir.path / "exp_a" / rel) == slurp(dir.path / "exp_b" / rel));
  }
}

TEST_CASE("export honors the reward threshold from the ledger") {
  TempDir dir("export");
  write_fixture(dir.path);
  write_tiny_config(dir.path);
  const ExperimentConfig config = load_experiment_config(dir.path / "config.json");
  ExperimentContext ctx(config);
  ctx.stage_loop();

  const auto ledger = read_reward_ledger(ctx.round_dir(1, 0) / "ledger.jsonl");
  if (!ledger.samples.empty()) {
    StageOptions opts;
    opts.interaction_seed = 1;
    opts.round = 0;
    opts.min_reward = 0.0;
    ctx.stage_export(opts);
    int expected = 0;
    for (const auto& s : ledger.samples) expected += s.alpha >= 0.0 ? 1 : 0;
    const auto exported = ingest(ctx.round_dir(1, 0) / "export.jsonl", CorpusFormat::canonical);
    CHECK(static_cast<int>(exported.size()) == expected);
    for (const auto& inst : exported) CHECK(inst.provenance == Provenance::synthetic);
  }
}

TEST_CASE("diversity and plot stages produce their artifacts") {
  TempDir dir("diversity");
  write_fixture(dir.path);
  write_tiny_config(dir.path);
  const ExperimentConfig config = load_experiment_config(dir.path / "config.json");
  ExperimentContext ctx(config);
  ctx.stage_loop();

  // Hand-written synthetic rounds so the analysis has non-degenerate input
  // regardless of what the tiny loop model kept.
  const MicroWorld world = make_micro_world({.docs_per_type = 3, .heldout_per_type = 0,
                                             .empty_rate = 0.1, .seed = 31});
  for (int r = 0; r < 2; ++r) {
    const auto round = ctx.round_dir(9, r);
    std::filesystem::create_directories(round);
    std::ofstream syn(round / "synthetic.jsonl");
    std::ofstream prompts(round / "prompts.jsonl");
    int i = 0;
    for (const auto& inst : world.corpus) {
      syn << instance_to_json_line(inst) << "\n";
      prompts << R"({"sample_id":"s)" << i++ << R"(","event_type_id":")" << inst.event_type_id
              << R"(","input_text":"p","output_text":"o"})" << "\n";
    }
  }
  StageOptions opts;
  opts.interaction_seed = 9;
  ctx.stage_diversity(opts);
  CHECK(std::filesystem::exists(config.out_dir / "seed_9" / "diversity.json"));
  CHECK(std::filesystem::exists(config.out_dir / "seed_9" / "diversity_series.csv"));

  StageOptions plot_opts;
  ctx.stage_plot(plot_opts);
  CHECK(std::filesystem::exists(config.out_dir / "plots" / "f1_overall.svg"));
}

TEST_CASE("probe stage writes a paired report") {
  TempDir dir("probe");
  write_fixture(dir.path);
  write_tiny_config(dir.path);
  const ExperimentConfig config = load_experiment_config(dir.path / "config.json");
  ExperimentContext ctx(config);
  ctx.stage_split();
  ctx.stage_sft_gen();
  ctx.stage_sft_eval();
  StageOptions opts;
  opts.use_sft = true;
  ctx.stage_probe(opts);
  CHECK(std::filesystem::exists(config.out_dir / "probe_sft.json"));
}
