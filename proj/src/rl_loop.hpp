#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "corpus.hpp"
#include "eval_agent.hpp"
#include "gen_agent.hpp"
#include "reward.hpp"

namespace argex {

struct RLConfig {
  double gamma1 = 1e-3;  // generation-agent learning rate
  double gamma2 = 1e-3;  // evaluation-agent learning rate
  int rounds = 5;
  std::vector<uint64_t> seeds = {1, 2, 3};
  int batch_size = 8;
  double clip_norm = 1.0;
  bool penalty_enabled = true;

  void validate() const;
};

// Reward-weighted ascent on log P(output | input) over the scored samples;
// one pass per round.
ReinforceStats revise_generation(LMAdapter& agent, const SyntheticDataset& dataset,
                                 const std::vector<ScoredSample>& scored, double gamma1,
                                 double clip_norm, int batch_size, uint64_t seed);

// Reward-weighted self-training of the extractor on the synthetic samples'
// own filled templates.
ReinforceStats revise_extractor(ExtractorModel& model, const SyntheticDataset& dataset,
                                const std::vector<ScoredSample>& scored,
                                const std::vector<EventSchema>& schemas, double gamma2,
                                double clip_norm, int batch_size, uint64_t seed);

// --- Tabular softmax bandit: validation harness for the estimator form. ---

Eigen::VectorXd softmax_policy(const Eigen::VectorXd& theta);
double bandit_expected_reward(const Eigen::VectorXd& theta, const Eigen::VectorXd& rewards);
// Exact gradient of E[reward] under a softmax policy.
Eigen::VectorXd bandit_analytic_gradient(const Eigen::VectorXd& theta,
                                         const Eigen::VectorXd& rewards);
Eigen::VectorXd bandit_finite_difference_gradient(const Eigen::VectorXd& theta,
                                                  const Eigen::VectorXd& rewards,
                                                  double h = 1e-6);
// Monte-Carlo REINFORCE estimate: mean of reward * grad log pi(action).
Eigen::VectorXd bandit_monte_carlo_gradient(const Eigen::VectorXd& theta,
                                            const Eigen::VectorXd& rewards, int n_samples,
                                            uint64_t seed);

struct GradientCheckResult {
  double max_abs_dev_fd = 0.0;  // analytic vs finite differences
  double max_abs_dev_mc = 0.0;  // analytic vs Monte-Carlo estimate
  Eigen::VectorXd analytic;
};

GradientCheckResult gradient_estimator_check(const Eigen::VectorXd& rewards, int n_mc_samples,
                                             uint64_t seed);

// Plain gradient ascent on the bandit; returns the expected-reward trajectory
// (length steps + 1, initial value included).
std::vector<double> bandit_ascend(Eigen::VectorXd& theta, const Eigen::VectorXd& rewards,
                                  double lr, int steps);

// Best round per seed by overall dev F1 (earliest round wins ties).
int select_best_round(const std::vector<double>& per_round_overall_f1);

}  // namespace argex
