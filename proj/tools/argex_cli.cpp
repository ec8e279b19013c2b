// Command-line front end over the argex C API. Exit codes: 0 success,
// 1 usage/config error, 2 stage failure.
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "argex.h"

namespace {

struct StageArgs {
  std::string config;
  std::string out_dir;
  std::optional<uint64_t> seed;
  std::optional<int> round;
  std::optional<double> min_reward;
  std::optional<std::string> out;
  std::optional<std::string> data;
  bool use_sft = false;
  std::optional<std::string> series;
};

std::string options_json(const StageArgs& a) {
  std::ostringstream j;
  j << "{";
  bool first = true;
  auto sep = [&] {
    if (!first) j << ",";
    first = false;
  };
  if (a.seed) {
    sep();
    j << "\"seed\":" << *a.seed;
  }
  if (a.round) {
    sep();
    j << "\"round\":" << *a.round;
  }
  if (a.min_reward) {
    sep();
    j << "\"min_reward\":" << *a.min_reward;
  }
  if (a.out) {
    sep();
    j << "\"out\":\"" << *a.out << "\"";
  }
  if (a.data) {
    sep();
    j << "\"data\":\"" << *a.data << "\"";
  }
  if (a.use_sft) {
    sep();
    j << "\"use_sft\":true";
  }
  if (a.series) {
    sep();
    j << "\"series\":\"" << *a.series << "\"";
  }
  j << "}";
  return j.str();
}

int exit_code(argex_status status) {
  switch (status) {
    case ARGEX_OK: return 0;
    case ARGEX_ERR_INVALID_ARGUMENT:
    case ARGEX_ERR_CONFIG: return 1;
    default: return 2;
  }
}

int run_stage(const char* stage, const StageArgs& args) {
  char err[1024] = {0};
  argex_experiment* experiment = nullptr;
  argex_status status =
      argex_experiment_open(args.config.c_str(),
                            args.out_dir.empty() ? nullptr : args.out_dir.c_str(), &experiment,
                            err, sizeof(err));
  if (status != ARGEX_OK) {
    std::fprintf(stderr, "error: %s\n", err);
    return exit_code(status);
  }
  status = argex_experiment_run(experiment, stage, options_json(args).c_str());
  if (status != ARGEX_OK)
    std::fprintf(stderr, "error: %s\n", argex_experiment_error(experiment));
  argex_experiment_close(experiment);
  return exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"argex: propose-evaluate-revise pipeline for zero-shot document-level "
               "event argument extraction"};
  app.require_subcommand(1);

  StageArgs args;
  std::string fixture_dir = "fixture";
  int fixture_docs = 80, fixture_heldout = 30;
  double fixture_empty_rate = 0.15;
  uint64_t fixture_seed = 1;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config)
      cmd->add_option("--config", args.config, "experiment config file")->required();
    cmd->add_option("--out-dir", args.out_dir, "override paths.out_dir from the config");
  };
  auto add_seed_round = [&](CLI::App* cmd) {
    cmd->add_option_function<uint64_t>(
        "--seed", [&](uint64_t v) { args.seed = v; }, "interaction seed");
    cmd->add_option_function<int>(
        "--round", [&](int v) { args.round = v; }, "round index (0-based)");
  };

  const char* stages_with_seed_round[] = {"propose", "score", "revise"};
  for (const char* name : stages_with_seed_round) {
    auto* cmd = app.add_subcommand(name, std::string(name) + " stage for one seed and round");
    add_common(cmd);
    add_seed_round(cmd);
  }
  for (const char* name : {"split", "sft-gen", "sft-eval", "loop"}) {
    auto* cmd = app.add_subcommand(name, std::string(name) + " stage");
    add_common(cmd);
  }
  {
    auto* cmd = app.add_subcommand("eval", "span-F1 evaluation on held-out data");
    add_common(cmd);
    add_seed_round(cmd);
    cmd->add_flag("--use-sft", args.use_sft, "evaluate the SFT extractor");
    cmd->add_option_function<std::string>(
        "--data", [&](std::string v) { args.data = v; }, "slice: unseen (default) or seen");
  }
  {
    auto* cmd = app.add_subcommand("probe", "evaluation-agent sensitivity probe");
    add_common(cmd);
    add_seed_round(cmd);
    cmd->add_flag("--use-sft", args.use_sft, "probe the SFT extractor");
    cmd->add_option_function<std::string>(
        "--data", [&](std::string v) { args.data = v; }, "slice: seen (default) or unseen");
  }
  {
    auto* cmd = app.add_subcommand("diversity", "per-round diversity analysis for one seed");
    add_common(cmd);
    add_seed_round(cmd);
  }
  {
    auto* cmd = app.add_subcommand("export", "write scored synthetic data as canonical records");
    add_common(cmd);
    add_seed_round(cmd);
    cmd->add_option_function<double>(
        "--min-reward", [&](double v) { args.min_reward = v; }, "reward threshold (ties kept)");
    cmd->add_option_function<std::string>(
        "--out", [&](std::string v) { args.out = v; }, "output file");
  }
  {
    auto* cmd = app.add_subcommand("plot", "render a series CSV as SVG charts");
    add_common(cmd);
    cmd->add_option_function<std::string>(
        "--series", [&](std::string v) { args.series = v; }, "series CSV path");
    cmd->add_option_function<std::string>(
        "--out", [&](std::string v) { args.out = v; }, "output directory");
  }
  auto* fixture = app.add_subcommand("fixture", "generate the micro-world fixture corpus");
  fixture->add_option("--out", fixture_dir, "output directory");
  fixture->add_option("--docs-per-type", fixture_docs, "training documents per event type");
  fixture->add_option("--heldout-per-type", fixture_heldout, "held-out documents per event type");
  fixture->add_option("--empty-rate", fixture_empty_rate, "chance a non-core role is unfilled");
  fixture->add_option("--seed", fixture_seed, "fixture seed");
  auto* version = app.add_subcommand("version", "print the library version");

  CLI11_PARSE(app, argc, argv);

  if (version->parsed()) {
    std::printf("%s\n", argex_version());
    return 0;
  }
  if (fixture->parsed()) {
    std::ostringstream j;
    j << "{\"docs_per_type\":" << fixture_docs << ",\"heldout_per_type\":" << fixture_heldout
      << ",\"empty_rate\":" << fixture_empty_rate << ",\"seed\":" << fixture_seed << "}";
    char err[1024] = {0};
    const argex_status status =
        argex_make_fixture(fixture_dir.c_str(), j.str().c_str(), err, sizeof(err));
    if (status != ARGEX_OK) std::fprintf(stderr, "error: %s\n", err);
    return exit_code(status);
  }
  for (auto* cmd : app.get_subcommands()) return run_stage(cmd->get_name().c_str(), args);
  return 1;
}
