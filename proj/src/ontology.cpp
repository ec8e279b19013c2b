#include "ontology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>

#include <json.hpp>

namespace argex {

namespace {

using ordered_json = nlohmann::ordered_json;

std::set<std::string> roles_over(const std::vector<EventSchema>& schemas,
                                 const std::set<std::string>& types) {
  std::set<std::string> out;
  for (const auto& s : schemas) {
    if (!types.count(s.event_type_id)) continue;
    for (const auto& r : s.roles) out.insert(canonical_role(r));
  }
  return out;
}

void derive_role_sets(OntologySplit& split, const std::vector<EventSchema>& schemas) {
  split.seen_roles = roles_over(schemas, split.seen_types);
  split.unseen_roles = roles_over(schemas, split.unseen_types);
  split.shared_roles.clear();
  split.unseen_only_roles.clear();
  for (const auto& r : split.unseen_roles) {
    if (split.seen_roles.count(r))
      split.shared_roles.insert(r);
    else
      split.unseen_only_roles.insert(r);
  }
}

}  // namespace

int EventSchema::role_index(const std::string& role) const {
  const std::string key = canonical_role(role);
  for (size_t i = 0; i < roles.size(); ++i) {
    if (canonical_role(roles[i]) == key) return static_cast<int>(i);
  }
  return -1;
}

const std::string& EventSchema::role_for_placeholder(int number) const {
  if (number < 1 || number > role_count())
    fail(Error::Kind::invalid_argument,
         "schema " + event_type_id + ": placeholder <arg" + std::to_string(number) +
             "> has no bound role");
  return roles[number - 1];
}

std::vector<int> template_placeholder_numbers(const std::string& template_text) {
  static const std::regex kPlaceholder("<arg([0-9]+)>");
  std::vector<int> numbers;
  auto begin = std::sregex_iterator(template_text.begin(), template_text.end(), kPlaceholder);
  for (auto it = begin; it != std::sregex_iterator(); ++it)
    numbers.push_back(std::stoi((*it)[1].str()));
  return numbers;
}

void EventSchema::validate() const {
  if (event_type_id.empty())
    fail(Error::Kind::invalid_argument, "schema with empty event_type_id");
  if (roles.empty())
    fail(Error::Kind::invalid_argument, "schema " + event_type_id + ": role set is empty");
  std::set<std::string> seen;
  for (const auto& r : roles) {
    if (!seen.insert(canonical_role(r)).second)
      fail(Error::Kind::invalid_argument,
           "schema " + event_type_id + ": duplicate role '" + r + "'");
  }
  const auto numbers = template_placeholder_numbers(template_text);
  if (static_cast<int>(numbers.size()) != role_count())
    fail(Error::Kind::invalid_argument,
         "schema " + event_type_id + ": template has " + std::to_string(numbers.size()) +
             " placeholders for " + std::to_string(role_count()) + " roles");
  std::set<int> unique_numbers(numbers.begin(), numbers.end());
  if (static_cast<int>(unique_numbers.size()) != role_count() || *unique_numbers.begin() != 1 ||
      *unique_numbers.rbegin() != role_count())
    fail(Error::Kind::invalid_argument,
         "schema " + event_type_id + ": placeholders must be <arg1>..<arg" +
             std::to_string(role_count()) + ">, each exactly once");
}

void OntologySplit::validate() const {
  for (const auto& t : unseen_types) {
    if (seen_types.count(t))
      fail(Error::Kind::invalid_argument, "split: event type '" + t + "' is in both partitions");
  }
  std::set<std::string> reunion;
  for (const auto& r : shared_roles) {
    if (unseen_only_roles.count(r))
      fail(Error::Kind::invalid_argument, "split: role '" + r + "' both shared and unseen-only");
    reunion.insert(r);
  }
  for (const auto& r : unseen_only_roles) reunion.insert(r);
  if (reunion != unseen_roles)
    fail(Error::Kind::invalid_argument, "split: role sets do not cover the unseen roles");
}

OntologySplit build_split(const std::vector<EventSchema>& schemas, double unseen_fraction,
                          uint64_t seed) {
  if (schemas.size() < 2)
    fail(Error::Kind::invalid_argument, "build_split: need at least 2 schemas to partition");
  if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0))
    fail(Error::Kind::invalid_argument, "build_split: unseen_fraction must be in (0, 1)");
  for (const auto& s : schemas) s.validate();

  std::vector<std::string> ids;
  ids.reserve(schemas.size());
  for (const auto& s : schemas) ids.push_back(s.event_type_id);
  std::sort(ids.begin(), ids.end());
  auto rng = make_rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const int n = static_cast<int>(ids.size());
  int n_unseen = static_cast<int>(std::llround(unseen_fraction * n));
  n_unseen = std::clamp(n_unseen, 1, n - 1);

  OntologySplit split;
  for (int i = 0; i < n; ++i) {
    if (i < n_unseen)
      split.unseen_types.insert(ids[i]);
    else
      split.seen_types.insert(ids[i]);
  }
  derive_role_sets(split, schemas);
  split.validate();
  return split;
}

OntologySplit cross_corpus_split(const std::vector<EventSchema>& source_schemas,
                                 const std::vector<EventSchema>& target_schemas) {
  if (source_schemas.empty() || target_schemas.empty())
    fail(Error::Kind::invalid_argument, "cross_corpus_split: both schema lists must be non-empty");

  OntologySplit split;
  for (const auto& s : source_schemas) split.seen_types.insert(s.event_type_id);
  for (const auto& s : target_schemas) {
    if (!split.seen_types.count(s.event_type_id)) split.unseen_types.insert(s.event_type_id);
  }
  if (split.unseen_types.empty())
    fail(Error::Kind::invalid_argument,
         "cross_corpus_split: removing overlapping types emptied the unseen set");

  // Role sets come from whichever list defines each retained type.
  std::vector<EventSchema> all = source_schemas;
  for (const auto& s : target_schemas) {
    if (split.unseen_types.count(s.event_type_id)) all.push_back(s);
  }
  derive_role_sets(split, all);
  split.validate();
  return split;
}

RoleClass classify_role(const std::string& role, const OntologySplit& split) {
  return split.seen_roles.count(canonical_role(role)) ? RoleClass::seen : RoleClass::unseen;
}

const EventSchema& schema_by_type(const std::vector<EventSchema>& schemas,
                                  const std::string& event_type_id) {
  for (const auto& s : schemas) {
    if (s.event_type_id == event_type_id) return s;
  }
  fail(Error::Kind::invalid_argument, "no schema for event type '" + event_type_id + "'");
}

std::vector<EventSchema> load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::io, "cannot open ontology file: " + path.string());
  std::vector<EventSchema> schemas;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail(Error::Kind::io,
           path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    EventSchema s;
    s.event_type_id = j.value("event_type_id", "");
    s.name = j.value("name", s.event_type_id);
    for (const auto& r : j.value("roles", ordered_json::array()))
      s.roles.push_back(r.get<std::string>());
    s.template_text = j.value("template", "");
    try {
      s.validate();
    } catch (const Error& e) {
      fail(Error::Kind::io, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    schemas.push_back(std::move(s));
  }
  if (schemas.empty()) fail(Error::Kind::io, "ontology file is empty: " + path.string());
  return schemas;
}

void save_ontology(const std::vector<EventSchema>& schemas, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write ontology file: " + path.string());
  for (const auto& s : schemas) {
    ordered_json j;
    j["event_type_id"] = s.event_type_id;
    j["name"] = s.name;
    j["roles"] = s.roles;
    j["template"] = s.template_text;
    out << j.dump() << "\n";
  }
}

OntologySplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::io, "cannot open split file: " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(Error::Kind::io, path.string() + ": malformed split file: " + std::string(e.what()));
  }
  OntologySplit split;
  auto read_set = [&](const char* key, std::set<std::string>& dst) {
    for (const auto& v : j.value(key, ordered_json::array())) dst.insert(v.get<std::string>());
  };
  read_set("seen_types", split.seen_types);
  read_set("unseen_types", split.unseen_types);
  read_set("seen_roles", split.seen_roles);
  read_set("unseen_roles", split.unseen_roles);
  read_set("shared_roles", split.shared_roles);
  read_set("unseen_only_roles", split.unseen_only_roles);
  split.validate();
  return split;
}

void save_split(const OntologySplit& split, const std::filesystem::path& path) {
  ordered_json j;
  auto as_list = [](const std::set<std::string>& s) {
    return std::vector<std::string>(s.begin(), s.end());
  };
  j["seen_types"] = as_list(split.seen_types);
  j["unseen_types"] = as_list(split.unseen_types);
  j["seen_roles"] = as_list(split.seen_roles);
  j["unseen_roles"] = as_list(split.unseen_roles);
  j["shared_roles"] = as_list(split.shared_roles);
  j["unseen_only_roles"] = as_list(split.unseen_only_roles);
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write split file: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace argex
