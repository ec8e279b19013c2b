#include "rl_loop.hpp"

#include <cmath>

#include "prompting.hpp"

namespace argex {

void RLConfig::validate() const {
  if (!(gamma1 > 0.0)) fail(Error::Kind::config, "rl.gamma1: must be > 0");
  if (!(gamma2 > 0.0)) fail(Error::Kind::config, "rl.gamma2: must be > 0");
  if (rounds < 1) fail(Error::Kind::config, "rl.rounds: must be >= 1");
  if (seeds.empty()) fail(Error::Kind::config, "rl.seeds: must be non-empty");
  if (batch_size < 1) fail(Error::Kind::config, "rl.batch_size: must be >= 1");
}

ReinforceStats revise_generation(LMAdapter& agent, const SyntheticDataset& dataset,
                                 const std::vector<ScoredSample>& scored, double gamma1,
                                 double clip_norm, int batch_size, uint64_t seed) {
  if (scored.empty()) fail(Error::Kind::invalid_argument, "revise_generation: no scored samples");
  if (scored.size() != dataset.samples.size())
    fail(Error::Kind::invalid_argument, "revise_generation: scores do not cover the dataset");
  std::vector<PromptPair> pairs;
  std::vector<double> weights;
  pairs.reserve(scored.size());
  for (const auto& s : scored) {
    const auto& sample = dataset.samples.at(s.index);
    pairs.push_back({sample.input_text, sample.output_text});
    weights.push_back(s.alpha);
  }
  return agent.reinforce_step(pairs, weights, gamma1, clip_norm, batch_size, seed);
}

ReinforceStats revise_extractor(ExtractorModel& model, const SyntheticDataset& dataset,
                                const std::vector<ScoredSample>& scored,
                                const std::vector<EventSchema>& schemas, double gamma2,
                                double clip_norm, int batch_size, uint64_t seed) {
  if (scored.empty()) fail(Error::Kind::invalid_argument, "revise_extractor: no scored samples");
  if (scored.size() != dataset.samples.size())
    fail(Error::Kind::invalid_argument, "revise_extractor: scores do not cover the dataset");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<double> weights;
  pairs.reserve(scored.size());
  for (const auto& s : scored) {
    const auto& sample = dataset.samples.at(s.index);
    const EventSchema& schema = schema_by_type(schemas, sample.instance.event_type_id);
    pairs.emplace_back(build_extractor_input(schema, sample.instance.document),
                       fill_template(schema, sample.instance).filled_text);
    weights.push_back(s.alpha);
  }
  return model.reinforce_step(pairs, weights, gamma2, clip_norm, batch_size, seed);
}

Eigen::VectorXd softmax_policy(const Eigen::VectorXd& theta) {
  const double mx = theta.maxCoeff();
  Eigen::VectorXd p = (theta.array() - mx).exp();
  return p / p.sum();
}

double bandit_expected_reward(const Eigen::VectorXd& theta, const Eigen::VectorXd& rewards) {
  return softmax_policy(theta).dot(rewards);
}

Eigen::VectorXd bandit_analytic_gradient(const Eigen::VectorXd& theta,
                                         const Eigen::VectorXd& rewards) {
  const Eigen::VectorXd p = softmax_policy(theta);
  const double expected = p.dot(rewards);
  return p.array() * (rewards.array() - expected);
}

Eigen::VectorXd bandit_finite_difference_gradient(const Eigen::VectorXd& theta,
                                                  const Eigen::VectorXd& rewards, double h) {
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd t = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    t(i) = theta(i) + h;
    const double up = bandit_expected_reward(t, rewards);
    t(i) = theta(i) - h;
    const double down = bandit_expected_reward(t, rewards);
    t(i) = theta(i);
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

Eigen::VectorXd bandit_monte_carlo_gradient(const Eigen::VectorXd& theta,
                                            const Eigen::VectorXd& rewards, int n_samples,
                                            uint64_t seed) {
  const Eigen::VectorXd p = softmax_policy(theta);
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  for (int s = 0; s < n_samples; ++s) {
    double u = coin(rng);
    int action = 0;
    for (; action < p.size() - 1; ++action) {
      u -= p(action);
      if (u <= 0.0) break;
    }
    // reward * grad log pi(action) = reward * (onehot - pi)
    Eigen::VectorXd g = -p;
    g(action) += 1.0;
    grad += rewards(action) * g;
  }
  return grad / static_cast<double>(n_samples);
}

GradientCheckResult gradient_estimator_check(const Eigen::VectorXd& rewards, int n_mc_samples,
                                             uint64_t seed) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(rewards.size());
  GradientCheckResult result;
  result.analytic = bandit_analytic_gradient(theta, rewards);
  const Eigen::VectorXd fd = bandit_finite_difference_gradient(theta, rewards);
  const Eigen::VectorXd mc = bandit_monte_carlo_gradient(theta, rewards, n_mc_samples, seed);
  result.max_abs_dev_fd = (result.analytic - fd).cwiseAbs().maxCoeff();
  result.max_abs_dev_mc = (result.analytic - mc).cwiseAbs().maxCoeff();
  return result;
}

std::vector<double> bandit_ascend(Eigen::VectorXd& theta, const Eigen::VectorXd& rewards,
                                  double lr, int steps) {
  std::vector<double> trajectory;
  trajectory.push_back(bandit_expected_reward(theta, rewards));
  for (int s = 0; s < steps; ++s) {
    theta += lr * bandit_analytic_gradient(theta, rewards);
    trajectory.push_back(bandit_expected_reward(theta, rewards));
  }
  return trajectory;
}

int select_best_round(const std::vector<double>& per_round_overall_f1) {
  if (per_round_overall_f1.empty())
    fail(Error::Kind::invalid_argument, "select_best_round: no rounds");
  int best = 0;
  for (size_t i = 1; i < per_round_overall_f1.size(); ++i) {
    if (per_round_overall_f1[i] > per_round_overall_f1[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace argex
