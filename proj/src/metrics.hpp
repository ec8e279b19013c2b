#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "eval_agent.hpp"
#include "ontology.hpp"

namespace argex {

struct SliceScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int gold = 0;
  int predicted = 0;
  int matched = 0;
};

struct F1Report {
  SliceScore seen_roles;
  SliceScore unseen_roles;
  SliceScore overall;
};

// Exact-match span F1: a predicted (role, span) is correct iff an unmatched
// gold item with the same role and identical token offsets exists in the same
// instance. Slices by classify_role against the split.
F1Report span_f1(const std::vector<EventInstance>& predicted,
                 const std::vector<EventInstance>& gold, const OntologySplit& split);

enum class PerturbMode { empty, mismatch };

struct PerturbOutcome {
  int perturbed_instances = 0;
  int removed_arguments = 0;
  int skipped_small = 0;  // mismatch mode on instances with < 2 filled roles
};

// empty: removes each filler independently with the given probability.
// mismatch: deranges the role -> filler-list assignment among filled roles.
// The originals are untouched; deterministic per seed.
std::vector<EventInstance> perturb(const std::vector<EventInstance>& dataset, PerturbMode mode,
                                   double fraction, uint64_t seed,
                                   PerturbOutcome* outcome = nullptr);

struct PerturbationReport {
  std::vector<double> normal;
  std::vector<double> empty;
  std::vector<double> mismatch;
  double mean_normal = 0.0;
  double mean_empty = 0.0;
  double mean_mismatch = 0.0;
  // One-sided paired sign tests for normal > variant.
  double sign_test_p_empty = 1.0;
  double sign_test_p_mismatch = 1.0;
};

// Scores each instance under normal / empty / mismatch conditions.
PerturbationReport sensitivity_probe(const ExtractorModel& model,
                                     const std::vector<EventInstance>& dataset,
                                     const std::vector<EventSchema>& schemas, double fraction,
                                     uint64_t seed);

// One-sided sign test: P(at least `wins` successes out of `wins + losses`
// fair coin flips); ties are dropped by the caller.
double sign_test_p_value(int wins, int losses);

struct DiversityRow {
  int round = 0;
  std::string dimension;  // lexical | semantic | logical | syntactic
  std::string scope;      // per_input | across_input
  double value = 0.0;     // in [0, 1]
};

struct DiversityReport {
  std::vector<DiversityRow> rows;
  std::vector<std::string> notes;
};

// Pluggable sentence encoder for the semantic dimension; the default hashes
// token counts into a fixed-width vector.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Eigen::VectorXd embed(const std::vector<std::string>& tokens) const = 0;
};

// Pluggable pairwise profile for the logical dimension. The default compares
// role-argument structure and is an explicit approximation.
class LogicalProfiler {
 public:
  virtual ~LogicalProfiler() = default;
  virtual double similarity(const EventInstance& a, const EventInstance& b) const = 0;
};

// Per-input diversity among the samples sharing one prompt; across-input over
// pairs from different prompts. Rounds with single-sample groups are noted.
DiversityReport diversity(const std::map<int, SyntheticDataset>& datasets_by_round,
                          const TextEncoder* encoder = nullptr,
                          const LogicalProfiler* profiler = nullptr);

void save_f1_report(const F1Report& report, const std::filesystem::path& path);
void save_perturbation_report(const PerturbationReport& report, const std::filesystem::path& path);
void save_diversity_report(const DiversityReport& report, const std::filesystem::path& json_path,
                           const std::filesystem::path& series_csv_path);

// Coarse rule-based part-of-speech tags for the syntactic profile.
std::vector<std::string> rough_pos_tags(const std::vector<std::string>& tokens);

}  // namespace argex
