#include "reward.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace argex {

using ordered_json = nlohmann::ordered_json;

StructureBand fit_structure_band(const std::vector<EventInstance>& seen_data,
                                 const std::vector<EventSchema>& schemas) {
  if (seen_data.empty())
    fail(Error::Kind::invalid_argument, "fit_structure_band: empty training data");
  std::vector<double> ratios;
  ratios.reserve(seen_data.size());
  for (const auto& inst : seen_data)
    ratios.push_back(empty_argument_ratio(inst, schema_by_type(schemas, inst.event_type_id)));

  StructureBand band;
  double sum = 0.0;
  for (double r : ratios) sum += r;
  band.tau = sum / static_cast<double>(ratios.size());
  double sq = 0.0;
  for (double r : ratios) sq += (r - band.tau) * (r - band.tau);
  band.epsilon = std::sqrt(sq / static_cast<double>(ratios.size()));
  return band;
}

double penalty(double rho, double tau, double epsilon) {
  if (!(rho >= 0.0 && rho <= 1.0))
    fail(Error::Kind::invalid_argument, "penalty: rho must lie in [0, 1]");
  if (rho >= tau - epsilon && rho <= tau + epsilon) return 0.0;
  return std::abs(rho - tau);
}

ScoreDatasetResult score_dataset(const std::vector<std::string>& sample_ids,
                                 const std::vector<double>& log_likelihoods,
                                 const std::vector<double>& empty_ratios, double tau,
                                 double epsilon, bool structural_penalty_enabled) {
  const size_t n = log_likelihoods.size();
  if (n == 0) fail(Error::Kind::invalid_argument, "score_dataset: empty dataset");
  if (sample_ids.size() != n || empty_ratios.size() != n)
    fail(Error::Kind::invalid_argument, "score_dataset: one id and one ratio per sample required");

  ScoreDatasetResult result;
  result.stats.tau = tau;
  result.stats.epsilon = epsilon;
  result.stats.count = static_cast<int>(n);
  result.stats.penalty_enabled = structural_penalty_enabled;

  double sum = 0.0;
  for (double l : log_likelihoods) sum += l;
  result.stats.mu = sum / static_cast<double>(n);
  double sq = 0.0;
  for (double l : log_likelihoods) sq += (l - result.stats.mu) * (l - result.stats.mu);
  result.stats.delta = std::sqrt(sq / static_cast<double>(n));
  result.stats.degenerate_delta = result.stats.delta == 0.0;

  result.samples.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    ScoredSample s;
    s.index = static_cast<int>(i);
    s.sample_id = sample_ids[i];
    s.ell = log_likelihoods[i];
    s.rho = empty_ratios[i];
    s.penalty = structural_penalty_enabled ? penalty(s.rho, tau, epsilon) : 0.0;
    const double normalized =
        result.stats.degenerate_delta ? 0.0 : (s.ell - result.stats.mu) / result.stats.delta;
    s.alpha = normalized - s.penalty;
    result.samples.push_back(std::move(s));
  }
  return result;
}

void write_reward_ledger(const std::filesystem::path& path, const RewardStats& stats,
                         const std::vector<ScoredSample>& samples) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write reward ledger: " + path.string());
  ordered_json header;
  header["type"] = "stats";
  header["mu"] = stats.mu;
  header["delta"] = stats.delta;
  header["tau"] = stats.tau;
  header["epsilon"] = stats.epsilon;
  header["count"] = stats.count;
  header["penalty_enabled"] = stats.penalty_enabled;
  header["degenerate_delta"] = stats.degenerate_delta;
  out << header.dump() << "\n";
  for (const auto& s : samples) {
    ordered_json j;
    j["type"] = "sample";
    j["id"] = s.sample_id;
    j["ell"] = s.ell;
    j["rho"] = s.rho;
    j["penalty"] = s.penalty;
    j["alpha"] = s.alpha;
    out << j.dump() << "\n";
  }
}

ScoreDatasetResult read_reward_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::io, "cannot open reward ledger: " + path.string());
  ScoreDatasetResult result;
  std::string line;
  int line_no = 0;
  int index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail(Error::Kind::io,
           path.string() + ":" + std::to_string(line_no) + ": malformed ledger line: " + e.what());
    }
    if (j.value("type", "") == "stats") {
      result.stats.mu = j.at("mu").get<double>();
      result.stats.delta = j.at("delta").get<double>();
      result.stats.tau = j.at("tau").get<double>();
      result.stats.epsilon = j.at("epsilon").get<double>();
      result.stats.count = j.at("count").get<int>();
      result.stats.penalty_enabled = j.value("penalty_enabled", true);
      result.stats.degenerate_delta = j.value("degenerate_delta", false);
    } else {
      ScoredSample s;
      s.index = index++;
      s.sample_id = j.at("id").get<std::string>();
      s.ell = j.at("ell").get<double>();
      s.rho = j.at("rho").get<double>();
      s.penalty = j.at("penalty").get<double>();
      s.alpha = j.at("alpha").get<double>();
      result.samples.push_back(std::move(s));
    }
  }
  return result;
}

}  // namespace argex
