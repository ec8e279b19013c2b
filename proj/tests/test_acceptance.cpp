// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs the desk-scale pipeline end to end on the micro-world corpus.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eval_agent.hpp"
#include "experiment.hpp"
#include "gen_agent.hpp"
#include "metrics.hpp"
#include "microworld.hpp"
#include "reward.hpp"
#include "rl_loop.hpp"

using namespace argex;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Criterion {
  std::string name;
  std::chrono::steady_clock::time_point start;
  explicit Criterion(std::string n) : name(std::move(n)), start(std::chrono::steady_clock::now()) {}
  void report(bool ok, const std::string& details) const {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %s (%.1fs) %s\n", ok ? "PASS" : "FAIL", name.c_str(), seconds,
                details.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
  }
};

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("argex_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Desk-scale experiment configuration shared by the loop-based criteria.
void write_desk_config(const fs::path& dir, int rounds, const std::string& seeds,
                       bool penalty_enabled, int gen_epochs, int eval_epochs, int k) {
  std::ofstream out(dir / "config.json");
  out << R"({
  "seed": 11,
  "paths": {"ontology": "ontology.jsonl", "corpus": "corpus.jsonl",
            "heldout": "heldout.jsonl", "out_dir": "exp"},
  "split": {"mode": "fraction", "unseen_fraction": 0.3},
  "generation": {"samples_per_type": )"
      << k << R"(, "max_length": 110, "temperature": 1.0, "top_p": 0.95,
                 "model": {"d_model": 48, "layers": 2, "heads": 2, "d_ff": 192, "max_len": 320},
                 "lora": {"rank": 8, "scale": 32.0, "dropout": 0.05}},
  "extractor": {"model": {"d_model": 48, "enc_layers": 2, "dec_layers": 2, "heads": 2,
                           "d_ff": 192, "max_src": 320, "max_tgt": 56}},
  "sft": {"gen": {"epochs": )"
      << gen_epochs << R"(, "lr": 0.0025}, "eval": {"epochs": )" << eval_epochs
      << R"(, "lr": 0.0025}},
  "rl": {"gamma1": 0.0005, "gamma2": 0.0005, "rounds": )"
      << rounds << R"(, "seeds": )" << seeds << R"(, "batch_size": 8, "clip_norm": 1.0,
         "penalty_enabled": )"
      << (penalty_enabled ? "true" : "false") << R"(},
  "metrics": {"probe_fraction": 0.5, "eval_limit": 30}
})";
}

// ---------------------------------------------------------------------------
// 1. Reward math exactness.
void criterion_reward_math() {
  Criterion c("criterion 1: reward normalization and penalty exactness");
  bool ok = true;
  std::string details;

  auto rng = make_rng(101);
  std::normal_distribution<double> noise(-35.0, 11.0);
  double worst_mean = 0.0, worst_std = 0.0;
  for (size_t n : {5, 128, 1000, 10000}) {
    std::vector<std::string> ids;
    std::vector<double> ells, rhos(n, 0.4);
    for (size_t i = 0; i < n; ++i) {
      ids.push_back(std::to_string(i));
      ells.push_back(noise(rng));
    }
    const auto result = score_dataset(ids, ells, rhos, 0.4, 0.3, true);
    double mean = 0.0;
    for (const auto& s : result.samples) mean += s.alpha;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& s : result.samples) var += (s.alpha - mean) * (s.alpha - mean);
    const double stddev = std::sqrt(var / static_cast<double>(n));
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(stddev - 1.0));
  }
  ok = ok && worst_mean < 1e-9 && worst_std < 1e-9;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> spread(0.0, 0.5);
  int mismatches = 0;
  for (int i = 0; i < 100000; ++i) {
    const double rho = unit(rng), tau = unit(rng), eps = spread(rng);
    const double expected =
        (rho >= tau - eps && rho <= tau + eps) ? 0.0 : std::abs(rho - tau);
    if (penalty(rho, tau, eps) != expected) ++mismatches;
  }
  ok = ok && mismatches == 0;
  details = "max |mean| " + std::to_string(worst_mean) + ", max |std-1| " +
            std::to_string(worst_std) + ", penalty mismatches " + std::to_string(mismatches) +
            "/100000";
  c.report(ok, details);
}

// ---------------------------------------------------------------------------
// 2. Policy-gradient correctness on the tabular softmax bandit.
void criterion_policy_gradient() {
  Criterion c("criterion 2: REINFORCE estimator vs analytic gradient");
  Eigen::VectorXd rewards(3);
  rewards << 1.0, 0.0, -1.0;
  const GradientCheckResult check = gradient_estimator_check(rewards, 100000, 17);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  const auto trajectory = bandit_ascend(theta, rewards, 0.2, 50);
  bool monotone = true;
  for (size_t i = 1; i < trajectory.size(); ++i)
    monotone = monotone && trajectory[i] > trajectory[i - 1];

  const bool ok = check.max_abs_dev_fd < 1e-6 && check.max_abs_dev_mc < 1e-2 && monotone;
  c.report(ok, "fd dev " + std::to_string(check.max_abs_dev_fd) + ", mc dev " +
                   std::to_string(check.max_abs_dev_mc) + ", ascent " +
                   (monotone ? "strictly increasing" : "NOT monotone"));
}

// ---------------------------------------------------------------------------
// 5. Span-F1 oracle equivalence.
void criterion_span_f1() {
  Criterion c("criterion 5: span-F1 scorer vs brute-force matcher");
  OntologySplit split;
  split.seen_types = {"seen.type"};
  split.unseen_types = {"unseen.type"};
  split.seen_roles = {"r0", "r1", "r2"};

  auto rng = make_rng(55);
  auto random_inst = [&](const Document& doc) {
    EventInstance inst;
    inst.document = doc;
    inst.event_type_id = "unseen.type";
    inst.trigger.start = 0;
    inst.trigger.end = 1;
    inst.trigger.text = doc.tokens[0];
    std::uniform_int_distribution<int> n_args(0, 8);
    std::uniform_int_distribution<int> role(0, 5);
    std::uniform_int_distribution<int> pos(0, static_cast<int>(doc.tokens.size()) - 1);
    const int k = n_args(rng);
    for (int i = 0; i < k; ++i) {
      const int s = pos(rng);
      std::uniform_int_distribution<int> width(1, std::min<int>(2, doc.tokens.size() - s));
      const int e = s + width(rng);
      ArgumentSpan span;
      span.start = s;
      span.end = e;
      std::vector<std::string> piece(doc.tokens.begin() + s, doc.tokens.begin() + e);
      span.text = join_tokens(piece, " ");
      inst.arguments["r" + std::to_string(role(rng))].push_back(span);
    }
    return inst;
  };

  int disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Document doc;
    doc.doc_id = "d" + std::to_string(trial);
    for (int i = 0; i < 12; ++i) doc.tokens.push_back("w" + std::to_string(i));
    const EventInstance gold = random_inst(doc);
    const EventInstance pred = random_inst(doc);
    const F1Report report = span_f1({pred}, {gold}, split);

    // Oracle: per-(role, span) multiset intersection.
    std::map<std::string, int> gold_keys, pred_keys;
    int gold_n = 0, pred_n = 0;
    for (const auto& [role, fillers] : gold.arguments)
      for (const auto& f : fillers) {
        gold_keys[role + "|" + std::to_string(f.start) + "|" + std::to_string(f.end)]++;
        ++gold_n;
      }
    for (const auto& [role, fillers] : pred.arguments)
      for (const auto& f : fillers) {
        pred_keys[role + "|" + std::to_string(f.start) + "|" + std::to_string(f.end)]++;
        ++pred_n;
      }
    int matched = 0;
    for (const auto& [key, count] : pred_keys) {
      auto it = gold_keys.find(key);
      if (it != gold_keys.end()) matched += std::min(count, it->second);
    }
    if (report.overall.matched != matched || report.overall.gold != gold_n ||
        report.overall.predicted != pred_n ||
        report.overall.matched != report.seen_roles.matched + report.unseen_roles.matched)
      ++disagreements;
  }

  // Hand-counted fixture: 2 predicted, 3 gold, 1 exact match.
  Document doc;
  doc.doc_id = "fixture";
  for (int i = 0; i < 8; ++i) doc.tokens.push_back("w" + std::to_string(i));
  EventInstance gold;
  gold.document = doc;
  gold.event_type_id = "unseen.type";
  gold.trigger = {0, 1, "w0"};
  gold.arguments["r0"].push_back({1, 2, "w1"});
  gold.arguments["r1"].push_back({3, 4, "w3"});
  gold.arguments["r1"].push_back({5, 6, "w5"});
  EventInstance pred = gold;
  pred.arguments.clear();
  pred.arguments["r0"].push_back({1, 2, "w1"});
  pred.arguments["r1"].push_back({4, 5, "w4"});
  const F1Report fixture = span_f1({pred}, {gold}, split);
  const bool fixture_ok = std::abs(fixture.overall.precision - 0.5) < 1e-12 &&
                          std::abs(fixture.overall.recall - 1.0 / 3.0) < 1e-12 &&
                          std::abs(fixture.overall.f1 - 0.4) < 1e-12;

  c.report(disagreements == 0 && fixture_ok,
           "disagreements " + std::to_string(disagreements) + "/1000, fixture P=" +
               std::to_string(fixture.overall.precision) + " R=" +
               std::to_string(fixture.overall.recall) + " F1=" +
               std::to_string(fixture.overall.f1));
}

// ---------------------------------------------------------------------------
// 6. Propose-stage filtering over injected defects.
void criterion_propose_filtering() {
  Criterion c("criterion 6: trigger discard rule over injected defects");
  EventSchema schema;
  schema.event_type_id = "conflict.attack";
  schema.name = schema.event_type_id;
  schema.roles = {"attacker", "target", "place"};
  schema.template_text = "<arg1> attacked <arg2> in <arg3>";

  auto rng = make_rng(66);
  std::uniform_int_distribution<int> defect(0, 4);
  std::uniform_int_distribution<int> word(0, 9);
  static const char* kWords[] = {"rebels", "convoy", "Berlin", "port",  "soldiers",
                                 "night",  "smoke",  "roads",  "walls", "crowd"};

  int survivors_without_trigger = 0;
  int none_marked_filled = 0;
  int kept = 0, rejected = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string context;
    for (int w = 0; w < 8; ++w) context += std::string(kWords[word(rng)]) + " ";
    std::string trigger = "attacked";
    bool trigger_present = true;
    std::string text;
    switch (defect(rng)) {
      case 0:  // clean sample
        context += "attacked ";
        text = "Context: " + context + "Trigger: attacked Role-Arguments: attacker: " +
               kWords[word(rng)] + "; target: None; place: None";
        break;
      case 1:  // trigger absent from the context
        trigger_present = false;
        text = "Context: " + context + "Trigger: attacked Role-Arguments: attacker: None; "
               "target: None; place: None";
        break;
      case 2:  // missing sections entirely
        trigger_present = false;
        text = context;
        break;
      case 3:  // None-marked roles plus an unanchorable argument
        context += "attacked ";
        text = "Context: " + context + "Trigger: attacked Role-Arguments: attacker: zeppelin; "
               "target: None; place: None";
        break;
      default:  // empty context
        trigger_present = false;
        text = "Context:  Trigger: attacked Role-Arguments: attacker: None; target: None; "
               "place: None";
        break;
    }
    const auto parsed = parse_output(text, schema);
    if (std::holds_alternative<EventInstance>(parsed)) {
      ++kept;
      const EventInstance& inst = std::get<EventInstance>(parsed);
      if (inst.document.text().find(inst.trigger.text) == std::string::npos ||
          (!trigger_present))
        ++survivors_without_trigger;
      // Any role serialized as None must be empty in the parsed instance.
      for (const auto& role : {"target", "place"})
        if (inst.role_filled(role)) ++none_marked_filled;
      (void)trigger;
    } else {
      ++rejected;
    }
  }
  const bool ok = survivors_without_trigger == 0 && none_marked_filled == 0 && kept > 0;
  c.report(ok, "kept " + std::to_string(kept) + ", rejected " + std::to_string(rejected) +
                   ", trigger-less survivors " + std::to_string(survivors_without_trigger) +
                   ", None-marked filled " + std::to_string(none_marked_filled));
}

// ---------------------------------------------------------------------------
// 7. Constrained decoding soundness.
void criterion_mask_soundness() {
  Criterion c("criterion 7: decoding stays inside the allowed vocabulary");
  const MicroWorld world = make_micro_world({.docs_per_type = 18, .heldout_per_type = 0,
                                             .empty_rate = 0.15, .seed = 44});
  std::vector<std::string> texts;
  for (const auto& inst : world.corpus) {
    const EventSchema& schema = schema_by_type(world.schemas, inst.event_type_id);
    texts.push_back(serialize_output(schema, inst));
    texts.push_back(build_extractor_input(schema, inst.document));
  }
  auto vocab = std::make_shared<nn::Vocab>(nn::Vocab::build(texts, {}));

  ExtractorConfig cfg;
  cfg.model.d_model = 32;
  cfg.model.enc_layers = 1;
  cfg.model.dec_layers = 1;
  cfg.model.heads = 2;
  cfg.model.d_ff = 64;
  cfg.model.max_src = 320;
  cfg.model.max_tgt = 48;
  TinyExtractor extractor(cfg, vocab, 77);  // random weights: worst case for the mask
  extractor.mark_trained();

  auto rng = make_rng(91);
  std::uniform_int_distribution<int> pick_doc(0, static_cast<int>(world.corpus.size()) - 1);
  std::uniform_int_distribution<int> pick_schema(0, static_cast<int>(world.schemas.size()) - 1);
  int violations = 0;
  int decoded_tokens = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Document& doc = world.corpus[pick_doc(rng)].document;
    const EventSchema& schema = world.schemas[pick_schema(rng)];
    const VocabularyMask mask = extractor.build_mask(doc, schema);
    const auto decoded =
        extractor.decode_constrained(build_extractor_input(schema, doc), mask);
    decoded_tokens += static_cast<int>(decoded.size());
    for (const auto& token : decoded)
      if (!mask.allowed_tokens.count(token)) ++violations;
  }
  c.report(violations == 0, "500 document/template pairs, " + std::to_string(decoded_tokens) +
                                " decoded tokens, " + std::to_string(violations) + " violations");
}

// ---------------------------------------------------------------------------
// 3. Evaluation-agent sensitivity (trained extractor, paired probe).
void criterion_sensitivity() {
  Criterion c("criterion 3: trained extractor separates degraded samples");
  const MicroWorld world = make_micro_world({.docs_per_type = 80, .heldout_per_type = 30,
                                             .empty_rate = 0.15, .seed = 21});
  const OntologySplit split = build_split(world.schemas, 0.3, 11);

  std::vector<EventInstance> seen_train, seen_heldout;
  for (const auto& inst : world.corpus)
    if (split.seen_types.count(inst.event_type_id)) seen_train.push_back(inst);
  for (const auto& inst : world.heldout)
    if (split.seen_types.count(inst.event_type_id)) seen_heldout.push_back(inst);

  std::vector<std::string> texts;
  for (const auto& inst : seen_train) {
    const EventSchema& schema = schema_by_type(world.schemas, inst.event_type_id);
    texts.push_back(serialize_output(schema, inst));
    texts.push_back(build_extractor_input(schema, inst.document));
  }
  std::vector<std::string> extras;
  for (const auto& s : world.schemas) extras.push_back(s.template_text);
  auto vocab = std::make_shared<nn::Vocab>(nn::Vocab::build(texts, extras));

  ExtractorConfig cfg;
  cfg.model.d_model = 48;
  cfg.model.enc_layers = 2;
  cfg.model.dec_layers = 2;
  cfg.model.heads = 2;
  cfg.model.d_ff = 192;
  cfg.model.max_src = 320;
  cfg.model.max_tgt = 56;
  TinyExtractor extractor(cfg, vocab, 7);
  train_extractor(extractor, seen_train, world.schemas, 10, 2.5e-3, 19);

  const PerturbationReport report =
      sensitivity_probe(extractor, seen_heldout, world.schemas, 0.5, 23);
  const bool ok = seen_train.size() >= 500 && report.normal.size() >= 200 &&
                  report.mean_normal > report.mean_mismatch &&
                  report.mean_normal > report.mean_empty &&
                  report.sign_test_p_mismatch < 0.05 && report.sign_test_p_empty < 0.05;
  c.report(ok, "train " + std::to_string(seen_train.size()) + ", pairs " +
                   std::to_string(report.normal.size()) + ", mean ell normal/empty/mismatch " +
                   std::to_string(report.mean_normal) + "/" + std::to_string(report.mean_empty) +
                   "/" + std::to_string(report.mean_mismatch) + ", p " +
                   std::to_string(report.sign_test_p_empty) + "/" +
                   std::to_string(report.sign_test_p_mismatch));
}

// ---------------------------------------------------------------------------
// 4. Structural constraint keeps the empty-argument rate near the band.
void criterion_structure_band() {
  Criterion c("criterion 4: penalty pulls the empty-argument rate toward the band");
  const fs::path dir = work_dir() / "band";
  fs::create_directories(dir);
  write_micro_world(make_micro_world({.docs_per_type = 60, .heldout_per_type = 12,
                                      .empty_rate = 0.15, .seed = 2}),
                    dir);

  auto run_arm = [&](bool penalty_enabled, const std::string& arm) {
    write_desk_config(dir, /*rounds=*/3, "[1,2,3]", penalty_enabled, /*gen_epochs=*/8,
                      /*eval_epochs=*/8, /*k=*/12);
    const ExperimentConfig config =
        load_experiment_config(dir / "config.json", (dir / arm).string());
    ExperimentContext ctx(config);
    ctx.stage_loop();
    const auto band = nlohmann::ordered_json::parse(slurp(dir / arm / "band.json"));
    const double tau = band.at("tau").get<double>();
    double dev_sum = 0.0;
    for (uint64_t s : {1, 2, 3}) {
      const auto metrics = nlohmann::ordered_json::parse(
          slurp(dir / arm / ("seed_" + std::to_string(s)) / "round_2" / "metrics.json"));
      dev_sum += std::abs(metrics.at("mean_rho").get<double>() - tau);
    }
    return dev_sum / 3.0;
  };

  const double with_penalty = run_arm(true, "exp_on");
  const double without_penalty = run_arm(false, "exp_off");
  const bool ok = with_penalty <= without_penalty;
  c.report(ok, "mean |rho-tau| with penalty " + std::to_string(with_penalty) +
                   " vs without " + std::to_string(without_penalty));
}

// ---------------------------------------------------------------------------
// 8. Bit-identical reruns.
void criterion_reproducibility() {
  Criterion c("criterion 8: identical config and seeds give bit-identical outputs");
  const fs::path dir = work_dir() / "repro";
  fs::create_directories(dir);
  write_micro_world(make_micro_world({.docs_per_type = 24, .heldout_per_type = 8,
                                      .empty_rate = 0.15, .seed = 3}),
                    dir);
  write_desk_config(dir, /*rounds=*/2, "[1,2]", true, /*gen_epochs=*/3, /*eval_epochs=*/3,
                    /*k=*/6);

  for (const char* arm : {"run_a", "run_b"}) {
    const ExperimentConfig config =
        load_experiment_config(dir / "config.json", (dir / arm).string());
    ExperimentContext ctx(config);
    ctx.stage_loop();
  }

  int compared = 0, differing = 0;
  std::vector<std::string> files = {"report.json", "loop_series.csv"};
  for (uint64_t s : {1, 2})
    for (int r = 0; r < 2; ++r) {
      const std::string base = "seed_" + std::to_string(s) + "/round_" + std::to_string(r) + "/";
      files.push_back(base + "ledger.jsonl");
      files.push_back(base + "metrics.json");
      files.push_back(base + "synthetic.jsonl");
    }
  for (const auto& rel : files) {
    ++compared;
    if (slurp(dir / "run_a" / rel) != slurp(dir / "run_b" / rel)) ++differing;
  }
  c.report(differing == 0,
           std::to_string(compared) + " files compared, " + std::to_string(differing) +
               " differ");
}

// ---------------------------------------------------------------------------
// 9. End-to-end smoke: five rounds, three seeds, averaged best-round report.
void criterion_end_to_end() {
  Criterion c("criterion 9: five-round three-seed loop with averaged best-round report");
  const fs::path dir = work_dir() / "smoke";
  fs::create_directories(dir);
  write_micro_world(make_micro_world({.docs_per_type = 60, .heldout_per_type = 12,
                                      .empty_rate = 0.15, .seed = 4}),
                    dir);
  write_desk_config(dir, /*rounds=*/5, "[1,2,3]", true, /*gen_epochs=*/8, /*eval_epochs=*/8,
                    /*k=*/8);
  const ExperimentConfig config =
      load_experiment_config(dir / "config.json", (dir / "exp").string());
  {
    ExperimentContext ctx(config);
    ctx.stage_loop();
  }

  bool ok = true;
  std::string details;
  const auto gen_loss =
      nlohmann::ordered_json::parse(slurp(dir / "exp" / "sft" / "gen_loss.json"));
  const auto eval_loss =
      nlohmann::ordered_json::parse(slurp(dir / "exp" / "sft" / "eval_loss.json"));
  const auto gen_curve = gen_loss.at("epoch_losses").get<std::vector<double>>();
  const auto eval_curve = eval_loss.at("epoch_losses").get<std::vector<double>>();
  ok = ok && gen_curve.back() < gen_curve.front() && eval_curve.back() < eval_curve.front();

  const auto report = nlohmann::ordered_json::parse(slurp(dir / "exp" / "report.json"));
  ok = ok && report.at("rounds").get<int>() == 5;
  ok = ok && report.at("per_seed").size() == 3;
  for (const auto& entry : report.at("per_seed"))
    ok = ok && entry.at("per_round_overall_f1").size() == 5;
  ok = ok && report.contains("mean_best") &&
       report.at("mean_best").contains("overall_f1");
  const double mean_best = report.at("mean_best").at("overall_f1").get<double>();

  int round_dirs = 0;
  for (uint64_t s : {1, 2, 3})
    for (int r = 0; r < 5; ++r)
      round_dirs += fs::exists(dir / "exp" / ("seed_" + std::to_string(s)) /
                               ("round_" + std::to_string(r)) / "metrics.json")
                        ? 1
                        : 0;
  ok = ok && round_dirs == 15;

  details = "sft losses " + std::to_string(gen_curve.front()) + "->" +
            std::to_string(gen_curve.back()) + " (gen), " + std::to_string(eval_curve.front()) +
            "->" + std::to_string(eval_curve.back()) + " (eval); " +
            std::to_string(round_dirs) + "/15 rounds, mean best-round F1 " +
            std::to_string(mean_best);
  c.report(ok, details);
}

}  // namespace

int main() {
  std::printf("argex acceptance suite\n");
  criterion_reward_math();
  criterion_policy_gradient();
  criterion_span_f1();
  criterion_propose_filtering();
  criterion_mask_soundness();
  criterion_reproducibility();
  criterion_sensitivity();
  criterion_structure_band();
  criterion_end_to_end();
  std::printf("%d criterion(s) failed\n", g_failures);
  std::error_code ec;
  fs::remove_all(work_dir(), ec);
  return g_failures == 0 ? 0 : 1;
}
