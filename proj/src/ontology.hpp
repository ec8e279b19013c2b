#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"

namespace argex {

// One event type: identifier, ordered role set, and a template sentence with
// one numbered placeholder (<arg1>.. <argN>) bound to roles by position.
struct EventSchema {
  std::string event_type_id;
  std::string name;
  std::vector<std::string> roles;
  std::string template_text;

  int role_count() const { return static_cast<int>(roles.size()); }
  // Index of a role under canonical identity, or -1.
  int role_index(const std::string& role) const;
  const std::string& role_for_placeholder(int number) const;  // <argN> -> roles[N-1]
  void validate() const;
};

// Placeholder numbers in order of appearance in the template.
std::vector<int> template_placeholder_numbers(const std::string& template_text);

struct OntologySplit {
  std::set<std::string> seen_types;
  std::set<std::string> unseen_types;
  // Derived role bookkeeping, canonical role strings.
  std::set<std::string> seen_roles;
  std::set<std::string> unseen_roles;
  std::set<std::string> shared_roles;
  std::set<std::string> unseen_only_roles;

  void validate() const;
};

enum class RoleClass { seen, unseen };

// Uniform random partition of event types into seen/unseen. Deterministic for
// a fixed seed; role-overlap sets derived from the partition.
OntologySplit build_split(const std::vector<EventSchema>& schemas, double unseen_fraction,
                          uint64_t seed);

// Seen = all source types; unseen = target types minus any type also present
// in the source. Raises if the removal empties the unseen set.
OntologySplit cross_corpus_split(const std::vector<EventSchema>& source_schemas,
                                 const std::vector<EventSchema>& target_schemas);

// "seen" iff the role appears in at least one seen schema.
RoleClass classify_role(const std::string& role, const OntologySplit& split);

const EventSchema& schema_by_type(const std::vector<EventSchema>& schemas,
                                  const std::string& event_type_id);

// Line-delimited schema records.
std::vector<EventSchema> load_ontology(const std::filesystem::path& path);
void save_ontology(const std::vector<EventSchema>& schemas, const std::filesystem::path& path);

OntologySplit load_split(const std::filesystem::path& path);
void save_split(const OntologySplit& split, const std::filesystem::path& path);

}  // namespace argex
