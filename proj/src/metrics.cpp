#include "metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "nn/tokenizer.hpp"

namespace argex {

namespace {

using ordered_json = nlohmann::ordered_json;

struct SpanItem {
  std::string role;
  int start;
  int end;
  bool matched = false;
};

std::vector<SpanItem> expand_items(const EventInstance& inst) {
  std::vector<SpanItem> items;
  for (const auto& [role, fillers] : inst.arguments)
    for (const auto& f : fillers) items.push_back({role, f.start, f.end});
  // Document order keeps the greedy matching deterministic.
  std::stable_sort(items.begin(), items.end(), [](const SpanItem& a, const SpanItem& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end < b.end;
    return a.role < b.role;
  });
  return items;
}

void finish_slice(SliceScore& s) {
  s.precision = s.predicted > 0 ? static_cast<double>(s.matched) / s.predicted : 0.0;
  s.recall = s.gold > 0 ? static_cast<double>(s.matched) / s.gold : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  int inter = 0;
  for (const auto& x : a) inter += b.count(x) ? 1 : 0;
  const int uni = static_cast<int>(a.size() + b.size()) - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 1.0;
}

std::set<std::string> distinct_ngrams(const std::vector<std::string>& tokens, int n) {
  std::set<std::string> grams;
  if (static_cast<int>(tokens.size()) < n) return grams;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g;
    for (int j = 0; j < n; ++j) {
      if (j) g += " ";
      g += tokens[i + j];
    }
    grams.insert(g);
  }
  return grams;
}

class HashingEncoder : public TextEncoder {
 public:
  Eigen::VectorXd embed(const std::vector<std::string>& tokens) const override {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(64);
    for (const auto& t : tokens) v(static_cast<int>(fnv1a64(t) % 64)) += 1.0;
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
  }
};

// Approximate logical profile: agreement of the role-argument structure plus
// the trigger. Stands in for entailment-based scoring behind the interface.
class StructureProfiler : public LogicalProfiler {
 public:
  double similarity(const EventInstance& a, const EventInstance& b) const override {
    return jaccard(profile(a), profile(b));
  }

 private:
  static std::set<std::string> profile(const EventInstance& inst) {
    std::set<std::string> p;
    p.insert("trigger=" + lower_copy(inst.trigger.text));
    for (const auto& [role, fillers] : inst.arguments) {
      if (fillers.empty()) continue;
      for (const auto& f : fillers) p.insert(role + "=" + lower_copy(f.text));
    }
    return p;
  }
};

double lexical_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return 0.5 * (jaccard(distinct_ngrams(a, 1), distinct_ngrams(b, 1)) +
                jaccard(distinct_ngrams(a, 2), distinct_ngrams(b, 2)));
}

bool is_in(const char* const* list, size_t n, const std::string& w) {
  for (size_t i = 0; i < n; ++i) {
    if (w == list[i]) return true;
  }
  return false;
}

}  // namespace

F1Report span_f1(const std::vector<EventInstance>& predicted,
                 const std::vector<EventInstance>& gold, const OntologySplit& split) {
  if (predicted.size() != gold.size())
    fail(Error::Kind::invalid_argument, "span_f1: predicted and gold lists must align");
  F1Report report;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i].document.doc_id != gold[i].document.doc_id ||
        predicted[i].event_type_id != gold[i].event_type_id)
      fail(Error::Kind::invalid_argument,
           "span_f1: unaligned instance at position " + std::to_string(i) + " (doc " +
               predicted[i].document.doc_id + " vs " + gold[i].document.doc_id + ")");

    std::vector<SpanItem> pred_items = expand_items(predicted[i]);
    std::vector<SpanItem> gold_items = expand_items(gold[i]);

    auto slice_of = [&](const std::string& role) -> SliceScore& {
      return classify_role(role, split) == RoleClass::seen ? report.seen_roles
                                                           : report.unseen_roles;
    };
    for (const auto& g : gold_items) {
      ++slice_of(g.role).gold;
      ++report.overall.gold;
    }
    for (auto& p : pred_items) {
      ++slice_of(p.role).predicted;
      ++report.overall.predicted;
      for (auto& g : gold_items) {
        if (!g.matched && g.role == p.role && g.start == p.start && g.end == p.end) {
          g.matched = true;
          p.matched = true;
          ++slice_of(p.role).matched;
          ++report.overall.matched;
          break;
        }
      }
    }
  }
  finish_slice(report.seen_roles);
  finish_slice(report.unseen_roles);
  finish_slice(report.overall);
  return report;
}

std::vector<EventInstance> perturb(const std::vector<EventInstance>& dataset, PerturbMode mode,
                                   double fraction, uint64_t seed, PerturbOutcome* outcome) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    fail(Error::Kind::invalid_argument, "perturb: fraction must lie in (0, 1]");
  PerturbOutcome local;
  PerturbOutcome& out = outcome ? *outcome : local;

  std::vector<EventInstance> result = dataset;
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  for (auto& inst : result) {
    if (mode == PerturbMode::empty) {
      bool touched = false;
      for (auto it = inst.arguments.begin(); it != inst.arguments.end();) {
        std::vector<ArgumentSpan> kept;
        for (const auto& f : it->second) {
          if (coin(rng) < fraction) {
            ++out.removed_arguments;
            touched = true;
          } else {
            kept.push_back(f);
          }
        }
        if (kept.empty()) {
          it = inst.arguments.erase(it);
        } else {
          it->second = std::move(kept);
          ++it;
        }
      }
      if (touched) ++out.perturbed_instances;
    } else {
      std::vector<std::string> filled;
      for (const auto& [role, fillers] : inst.arguments) {
        if (!fillers.empty()) filled.push_back(role);
      }
      if (filled.size() < 2) {
        ++out.skipped_small;
        continue;
      }
      // Random derangement via rejection; size 2 always swaps.
      std::vector<int> perm(filled.size());
      while (true) {
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
        std::shuffle(perm.begin(), perm.end(), rng);
        bool fixed_point = false;
        for (size_t i = 0; i < perm.size(); ++i) fixed_point = fixed_point || perm[i] == static_cast<int>(i);
        if (!fixed_point) break;
      }
      std::map<std::string, std::vector<ArgumentSpan>> reassigned = inst.arguments;
      for (size_t i = 0; i < filled.size(); ++i)
        reassigned[filled[i]] = inst.arguments.at(filled[perm[i]]);
      inst.arguments = std::move(reassigned);
      ++out.perturbed_instances;
    }
  }
  return result;
}

double sign_test_p_value(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0.0;
  const double log_half_n = n * std::log(0.5);
  for (int k = wins; k <= n; ++k) {
    const double log_choose =
        std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    p += std::exp(log_choose + log_half_n);
  }
  return std::min(p, 1.0);
}

PerturbationReport sensitivity_probe(const ExtractorModel& model,
                                     const std::vector<EventInstance>& dataset,
                                     const std::vector<EventSchema>& schemas, double fraction,
                                     uint64_t seed) {
  if (!model.trained())
    fail(Error::Kind::missing_prerequisite, "sensitivity_probe: the extractor is not trained");
  const auto empty_ds = perturb(dataset, PerturbMode::empty, fraction,
                                derive_seed(seed, "probe/empty"));
  const auto mismatch_ds = perturb(dataset, PerturbMode::mismatch, 1.0,
                                   derive_seed(seed, "probe/mismatch"));

  PerturbationReport report;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const EventSchema& schema = schema_by_type(schemas, dataset[i].event_type_id);
    report.normal.push_back(score_sample(model, schema, dataset[i]));
    report.empty.push_back(score_sample(model, schema, empty_ds[i]));
    report.mismatch.push_back(score_sample(model, schema, mismatch_ds[i]));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  report.mean_normal = mean(report.normal);
  report.mean_empty = mean(report.empty);
  report.mean_mismatch = mean(report.mismatch);

  auto paired_p = [&](const std::vector<double>& variant) {
    int wins = 0, losses = 0;
    for (size_t i = 0; i < report.normal.size(); ++i) {
      if (report.normal[i] > variant[i])
        ++wins;
      else if (report.normal[i] < variant[i])
        ++losses;
    }
    return sign_test_p_value(wins, losses);
  };
  report.sign_test_p_empty = paired_p(report.empty);
  report.sign_test_p_mismatch = paired_p(report.mismatch);
  return report;
}

std::vector<std::string> rough_pos_tags(const std::vector<std::string>& tokens) {
  static const char* kDet[] = {"the", "a", "an", "this", "that", "these", "those"};
  static const char* kPrep[] = {"in", "on", "at",   "from",  "to",   "of",    "by",
                                "with", "for", "near", "under", "over", "aboard", "during"};
  static const char* kConj[] = {"and", "or", "but", "while", "as"};
  static const char* kPron[] = {"he", "she", "it", "they", "we", "i", "you", "who"};
  static const char* kAux[] = {"is", "are", "was", "were", "be", "been", "has", "have",
                               "had", "did", "do", "does", "will", "would", "remained"};

  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  for (const auto& tok : tokens) {
    const std::string w = lower_copy(tok);
    if (tok.size() == 1 && std::ispunct(static_cast<unsigned char>(tok[0]))) {
      tags.push_back("PUNCT");
    } else if (std::isdigit(static_cast<unsigned char>(tok[0]))) {
      tags.push_back("NUM");
    } else if (is_in(kDet, std::size(kDet), w)) {
      tags.push_back("DET");
    } else if (is_in(kPrep, std::size(kPrep), w)) {
      tags.push_back("ADP");
    } else if (is_in(kConj, std::size(kConj), w)) {
      tags.push_back("CONJ");
    } else if (is_in(kPron, std::size(kPron), w)) {
      tags.push_back("PRON");
    } else if (is_in(kAux, std::size(kAux), w)) {
      tags.push_back("AUX");
    } else if (std::isupper(static_cast<unsigned char>(tok[0]))) {
      tags.push_back("PROPN");
    } else if (w.size() > 3 && (w.ends_with("ed") || w.ends_with("ing"))) {
      tags.push_back("VERB");
    } else if (w.size() > 3 && w.ends_with("ly")) {
      tags.push_back("ADV");
    } else {
      tags.push_back("NOUN");
    }
  }
  return tags;
}

DiversityReport diversity(const std::map<int, SyntheticDataset>& datasets_by_round,
                          const TextEncoder* encoder, const LogicalProfiler* profiler) {
  static const HashingEncoder kDefaultEncoder;
  static const StructureProfiler kDefaultProfiler;
  if (!encoder) encoder = &kDefaultEncoder;
  if (!profiler) profiler = &kDefaultProfiler;

  DiversityReport report;
  for (const auto& [round, dataset] : datasets_by_round) {
    if (dataset.samples.empty())
      fail(Error::Kind::invalid_argument,
           "diversity: round " + std::to_string(round) + " has no samples");

    const auto groups = dataset.groups();
    std::vector<Eigen::VectorXd> embeddings;
    std::vector<std::vector<std::string>> token_lists;
    std::vector<std::vector<std::string>> tag_lists;
    for (const auto& s : dataset.samples) {
      token_lists.push_back(s.instance.document.tokens);
      tag_lists.push_back(rough_pos_tags(s.instance.document.tokens));
      embeddings.push_back(encoder->embed(s.instance.document.tokens));
    }

    auto pair_similarity = [&](const std::string& dim, int i, int j) {
      if (dim == "lexical") return lexical_similarity(token_lists[i], token_lists[j]);
      if (dim == "syntactic") return lexical_similarity(tag_lists[i], tag_lists[j]);
      if (dim == "semantic") {
        const double c = embeddings[i].dot(embeddings[j]);
        return std::clamp(c, 0.0, 1.0);
      }
      return profiler->similarity(dataset.samples[i].instance, dataset.samples[j].instance);
    };

    for (const std::string dim : {"lexical", "semantic", "logical", "syntactic"}) {
      // per-input: pairs within one prompt's sample group
      double within_sum = 0.0;
      int within_groups = 0;
      for (const auto& [type, members] : groups) {
        if (members.size() < 2) {
          if (dim == std::string("lexical"))
            report.notes.push_back("round " + std::to_string(round) + ": prompt " + type +
                                   " has a single sample; per-input diversity skipped");
          continue;
        }
        double s = 0.0;
        int pairs = 0;
        for (size_t a = 0; a < members.size(); ++a)
          for (size_t b = a + 1; b < members.size(); ++b) {
            s += pair_similarity(dim, members[a], members[b]);
            ++pairs;
          }
        within_sum += 1.0 - s / pairs;
        ++within_groups;
      }
      if (within_groups > 0)
        report.rows.push_back({round, dim, "per_input", within_sum / within_groups});

      // across-input: pairs drawn from different prompts
      double across_sum = 0.0;
      int across_pairs = 0;
      std::vector<std::pair<std::string, int>> flat;
      for (const auto& [type, members] : groups)
        for (int m : members) flat.emplace_back(type, m);
      for (size_t a = 0; a < flat.size(); ++a)
        for (size_t b = a + 1; b < flat.size(); ++b) {
          if (flat[a].first == flat[b].first) continue;
          across_sum += 1.0 - pair_similarity(dim, flat[a].second, flat[b].second);
          ++across_pairs;
        }
      if (across_pairs > 0)
        report.rows.push_back({round, dim, "across_input", across_sum / across_pairs});
      else if (dim == std::string("lexical"))
        report.notes.push_back("round " + std::to_string(round) +
                               ": single prompt group; across-input diversity skipped");
    }
  }
  return report;
}

void save_f1_report(const F1Report& report, const std::filesystem::path& path) {
  auto slice_json = [](const SliceScore& s) {
    ordered_json j;
    j["precision"] = s.precision;
    j["recall"] = s.recall;
    j["f1"] = s.f1;
    j["gold"] = s.gold;
    j["predicted"] = s.predicted;
    j["matched"] = s.matched;
    return j;
  };
  ordered_json j;
  j["seen_roles"] = slice_json(report.seen_roles);
  j["unseen_roles"] = slice_json(report.unseen_roles);
  j["overall"] = slice_json(report.overall);
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write F1 report: " + path.string());
  out << j.dump(2) << "\n";
}

void save_perturbation_report(const PerturbationReport& report,
                              const std::filesystem::path& path) {
  ordered_json j;
  j["mean_normal"] = report.mean_normal;
  j["mean_empty"] = report.mean_empty;
  j["mean_mismatch"] = report.mean_mismatch;
  j["sign_test_p_empty"] = report.sign_test_p_empty;
  j["sign_test_p_mismatch"] = report.sign_test_p_mismatch;
  j["samples"] = report.normal.size();
  j["normal"] = report.normal;
  j["empty"] = report.empty;
  j["mismatch"] = report.mismatch;
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write perturbation report: " + path.string());
  out << j.dump(2) << "\n";
}

void save_diversity_report(const DiversityReport& report, const std::filesystem::path& json_path,
                           const std::filesystem::path& series_csv_path) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json j;
    j["round"] = r.round;
    j["dimension"] = r.dimension;
    j["scope"] = r.scope;
    j["value"] = r.value;
    rows.push_back(j);
  }
  ordered_json j;
  j["rows"] = rows;
  j["notes"] = report.notes;
  std::ofstream out(json_path);
  if (!out) fail(Error::Kind::io, "cannot write diversity report: " + json_path.string());
  out << j.dump(2) << "\n";

  std::ofstream csv(series_csv_path);
  if (!csv) fail(Error::Kind::io, "cannot write diversity series: " + series_csv_path.string());
  csv << "round,dimension,scope,value\n";
  for (const auto& r : report.rows)
    csv << r.round << "," << r.dimension << "," << r.scope << "," << r.value << "\n";
}

}  // namespace argex
