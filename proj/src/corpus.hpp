#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ontology.hpp"

namespace argex {

struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;

  std::string text() const { return join_tokens(tokens, " "); }
};

// Half-open token span [start, end) with the redundant surface string.
struct ArgumentSpan {
  int start = 0;
  int end = 0;
  std::string text;

  bool operator==(const ArgumentSpan& other) const = default;
};

enum class Provenance { gold, synthetic, predicted };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct EventInstance {
  Document document;
  std::string event_type_id;
  ArgumentSpan trigger;
  // role (canonical) -> fillers. Roles absent from the map are empty.
  std::map<std::string, std::vector<ArgumentSpan>> arguments;
  Provenance provenance = Provenance::gold;

  bool role_filled(const std::string& role) const;
  // Structural checks: span bounds and surface redundancy.
  void validate() const;
  // Additionally checks that every role key belongs to the schema.
  void validate_against_schema(const EventSchema& schema) const;
};

struct SyntheticSample {
  std::string sample_id;
  EventInstance instance;
  std::string input_text;   // generation prompt
  std::string output_text;  // raw sampled sequence, kept verbatim for the revise step
  std::optional<double> reward;
};

struct SyntheticDataset {
  int round_index = 0;
  std::vector<SyntheticSample> samples;

  // Per-event-type grouping; the union of groups is the full sample list.
  std::map<std::string, std::vector<int>> groups() const;
};

enum class CorpusFormat { canonical, rams_like, wikievents_like };
CorpusFormat corpus_format_from_name(const std::string& name);

struct IngestReport {
  int records_read = 0;
  int instances_kept = 0;
  int rejected_out_of_bounds = 0;
  int rejected_surface_mismatch = 0;
  std::vector<std::string> notes;
};

// Malformed lines raise with the line number; records with out-of-range spans
// or surface mismatches are dropped and counted in the report.
std::vector<EventInstance> ingest(const std::filesystem::path& path, CorpusFormat format,
                                  IngestReport* report = nullptr);

void write_canonical(const std::vector<EventInstance>& instances,
                     const std::filesystem::path& path);

// One canonical record as a JSON line; the building blocks of the corpus files.
std::string instance_to_json_line(const EventInstance& instance);
EventInstance instance_from_json_line(const std::string& line);

// Writes canonical records for all samples with reward >= min_reward (ties
// included); every sample must carry a reward. Returns the count written.
int export_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& path,
                     std::optional<double> min_reward);

// (roles with no filler) / N_roles, counting a role empty iff its list is empty.
double empty_argument_ratio(const EventInstance& instance, const EventSchema& schema);

}  // namespace argex
