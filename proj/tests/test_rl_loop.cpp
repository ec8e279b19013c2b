#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eval_agent.hpp"
#include "microworld.hpp"
#include "rl_loop.hpp"
#include "test_util.hpp"

using namespace argex;
using namespace argex::testing;

TEST_CASE("bandit analytic gradient matches finite differences within 1e-6") {
  Eigen::VectorXd rewards(3);
  rewards << 1.0, 0.0, -1.0;
  const GradientCheckResult result = gradient_estimator_check(rewards, 100000, 7);
  CHECK(result.max_abs_dev_fd < 1e-6);
  CHECK(result.max_abs_dev_mc < 1e-2);
}

TEST_CASE("uniform rewards make the exact gradient the zero vector") {
  Eigen::VectorXd rewards = Eigen::VectorXd::Constant(4, 0.75);
  Eigen::VectorXd theta(4);
  theta << 0.3, -0.2, 0.9, 0.0;
  const Eigen::VectorXd grad = bandit_analytic_gradient(theta, rewards);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fifty ascent steps strictly increase the expected reward") {
  Eigen::VectorXd rewards(3);
  rewards << 1.0, 0.0, -1.0;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  const auto trajectory = bandit_ascend(theta, rewards, 0.2, 50);
  REQUIRE(trajectory.size() == 51);
  for (size_t i = 1; i < trajectory.size(); ++i) CHECK(trajectory[i] > trajectory[i - 1]);
}

TEST_CASE("monte-carlo REINFORCE estimate tightens with sample count") {
  Eigen::VectorXd rewards(3);
  rewards << 0.9, 0.1, -0.4;
  Eigen::VectorXd theta(3);
  theta << 0.5, 0.0, -0.5;
  const Eigen::VectorXd exact = bandit_analytic_gradient(theta, rewards);
  const Eigen::VectorXd coarse = bandit_monte_carlo_gradient(theta, rewards, 500, 3);
  const Eigen::VectorXd fine = bandit_monte_carlo_gradient(theta, rewards, 200000, 3);
  CHECK((fine - exact).cwiseAbs().maxCoeff() < (coarse - exact).cwiseAbs().maxCoeff() + 1e-3);
  CHECK((fine - exact).cwiseAbs().maxCoeff() < 5e-3);
}

TEST_CASE("select_best_round prefers the earliest tie") {
  CHECK(select_best_round({0.1, 0.5, 0.5, 0.2}) == 1);
  CHECK(select_best_round({0.7}) == 0);
  CHECK_THROWS_AS(select_best_round({}), Error);
}

TEST_CASE("RLConfig validation reports the offending field") {
  RLConfig config;
  config.gamma1 = 0.0;
  try {
    config.validate();
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("gamma1") != std::string::npos);
  }
  config = RLConfig{};
  config.rounds = 0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = RLConfig{};
  config.seeds.clear();
  CHECK_THROWS_AS(config.validate(), Error);
}

namespace {

struct ReviseSetup {
  MicroWorld world;
  std::shared_ptr<nn::Vocab> vocab;
  SyntheticDataset dataset;

  ReviseSetup() {
    world = make_micro_world(
        {.docs_per_type = 6, .heldout_per_type = 0, .empty_rate = 0.1, .seed = 9});
    std::vector<std::string> texts;
    for (const auto& inst : world.corpus) {
      const EventSchema& schema = schema_by_type(world.schemas, inst.event_type_id);
      texts.push_back(serialize_output(schema, inst));
      texts.push_back(build_extractor_input(schema, inst.document));
    }
    vocab = std::make_shared<nn::Vocab>(nn::Vocab::build(texts, {}));
    for (int i = 0; i < 4; ++i) {
      const auto& inst = world.corpus[i * 7];
      const EventSchema& schema = schema_by_type(world.schemas, inst.event_type_id);
      SyntheticSample s;
      s.sample_id = "s" + std::to_string(i);
      s.instance = inst;
      s.instance.provenance = Provenance::synthetic;
      s.input_text = build_generation_prompt(schema);
      s.output_text = serialize_output(schema, inst);
      dataset.samples.push_back(std::move(s));
    }
  }

  std::vector<ScoredSample> scores(std::vector<double> alphas) const {
    std::vector<ScoredSample> out;
    for (size_t i = 0; i < alphas.size(); ++i) {
      ScoredSample s;
      s.index = static_cast<int>(i);
      s.sample_id = dataset.samples[i].sample_id;
      s.alpha = alphas[i];
      out.push_back(s);
    }
    return out;
  }
};

}  // namespace

TEST_CASE("revise_generation with all-zero weights leaves the agent unchanged") {
  ReviseSetup setup;
  nn::LMConfig cfg;
  cfg.d_model = 16;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_ff = 32;
  cfg.max_len = 200;
  TinyLMAdapter agent(cfg, setup.vocab, 3);
  agent.mark_trained();
  const PromptPair probe{setup.dataset.samples[0].input_text,
                         setup.dataset.samples[0].output_text};
  const double before = agent.score(probe);
  revise_generation(agent, setup.dataset, setup.scores({0.0, 0.0, 0.0, 0.0}), 0.1, 1.0, 2, 5);
  CHECK(agent.score(probe) == before);
}

TEST_CASE("revise_extractor raises the likelihood of a positive sample") {
  ReviseSetup setup;
  ExtractorConfig cfg;
  cfg.model.d_model = 16;
  cfg.model.enc_layers = 1;
  cfg.model.dec_layers = 1;
  cfg.model.heads = 1;
  cfg.model.d_ff = 32;
  cfg.model.max_src = 200;
  cfg.model.max_tgt = 48;
  TinyExtractor extractor(cfg, setup.vocab, 3);
  extractor.mark_trained();

  SyntheticDataset one;
  one.samples.push_back(setup.dataset.samples[0]);
  const EventSchema& schema =
      schema_by_type(setup.world.schemas, one.samples[0].instance.event_type_id);
  const double before = score_sample(extractor, schema, one.samples[0].instance);

  std::vector<ScoredSample> scored(1);
  scored[0].index = 0;
  scored[0].sample_id = one.samples[0].sample_id;
  scored[0].alpha = 1.0;
  // Small step along the ascent direction: first-order improvement.
  revise_extractor(extractor, one, scored, setup.world.schemas, 1e-3, 0.0, 1, 5);
  CHECK(score_sample(extractor, schema, one.samples[0].instance) > before);
}

TEST_CASE("a single unit-weight sample reduces to a supervised gradient step") {
  ReviseSetup setup;
  nn::LMConfig cfg;
  cfg.d_model = 16;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_ff = 32;
  cfg.max_len = 200;
  TinyLMAdapter reinforce_agent(cfg, setup.vocab, 3);
  reinforce_agent.mark_trained();

  SyntheticDataset one;
  one.samples.push_back(setup.dataset.samples[0]);
  std::vector<ScoredSample> scored(1);
  scored[0].index = 0;
  scored[0].alpha = 1.0;
  const PromptPair probe{one.samples[0].input_text, one.samples[0].output_text};
  const double before = reinforce_agent.score(probe);
  revise_generation(reinforce_agent, one, scored, 1e-3, 0.0, 1, 5);
  // Ascending the unit-weighted log-likelihood raises the sequence score.
  CHECK(reinforce_agent.score(probe) > before);
}

TEST_CASE("revise guards score/dataset alignment") {
  ReviseSetup setup;
  nn::LMConfig cfg;
  cfg.d_model = 16;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_ff = 32;
  cfg.max_len = 200;
  TinyLMAdapter agent(cfg, setup.vocab, 3);
  agent.mark_trained();
  CHECK_THROWS_AS(revise_generation(agent, setup.dataset, {}, 0.1, 1.0, 2, 5), Error);
  CHECK_THROWS_AS(
      revise_generation(agent, setup.dataset, setup.scores({1.0}), 0.1, 1.0, 2, 5), Error);
}
