#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "ontology.hpp"

namespace argex {

struct RewardStats {
  double mu = 0.0;       // mean of log-likelihoods over the synthetic dataset
  double delta = 0.0;    // population standard deviation of the same
  double tau = 0.0;      // expected empty-argument proportion in seen data
  double epsilon = 0.0;  // its population standard deviation
  int count = 0;
  bool penalty_enabled = true;
  bool degenerate_delta = false;  // all log-likelihoods identical
};

struct ScoredSample {
  int index = -1;
  std::string sample_id;
  double ell = 0.0;      // raw log-likelihood
  double rho = 0.0;      // empty-argument ratio
  double penalty = 0.0;  // structural completeness penalty
  double alpha = 0.0;    // final reward
};

struct StructureBand {
  double tau = 0.0;
  double epsilon = 0.0;
};

// tau = mean empty-argument ratio over the seen data, epsilon = its
// population standard deviation.
StructureBand fit_structure_band(const std::vector<EventInstance>& seen_data,
                                 const std::vector<EventSchema>& schemas);

// 0 inside [tau - eps, tau + eps], |rho - tau| outside.
double penalty(double rho, double tau, double epsilon);

struct ScoreDatasetResult {
  std::vector<ScoredSample> samples;
  RewardStats stats;
};

// Normalizes the log-likelihoods over the whole dataset (not per event type)
// and subtracts the structural penalty. With the penalty disabled the reward
// is the normalized log-likelihood alone. All log-likelihoods identical is a
// degenerate case: the normalized term is defined as zero.
ScoreDatasetResult score_dataset(const std::vector<std::string>& sample_ids,
                                 const std::vector<double>& log_likelihoods,
                                 const std::vector<double>& empty_ratios, double tau,
                                 double epsilon, bool structural_penalty_enabled);

void write_reward_ledger(const std::filesystem::path& path, const RewardStats& stats,
                         const std::vector<ScoredSample>& samples);
ScoreDatasetResult read_reward_ledger(const std::filesystem::path& path);

}  // namespace argex
