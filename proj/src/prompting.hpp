#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "corpus.hpp"
#include "ontology.hpp"

namespace argex {

// The literal marker for roles without an argument in generation outputs.
inline constexpr const char* kEmptyMarker = "None";
// Delimiter joining multiple fillers of one role.
inline constexpr const char* kFillerDelimiter = " and ";

struct PromptPair {
  std::string input_text;
  std::string output_text;
};

struct SlotFill {
  int placeholder_number = 0;
  std::string role;
  std::string value;  // equals the placeholder itself when the role is empty
  bool filled = false;
};

struct FilledTemplate {
  std::string template_text;
  std::string filled_text;
  std::vector<SlotFill> slots;
};

enum class ParseRejection { missing_section, missing_trigger, empty_context };
const char* parse_rejection_name(ParseRejection r);

struct ParseReport {
  int unanchorable_arguments = 0;
  int unknown_roles = 0;
  int duplicate_roles = 0;
  int malformed_pairs = 0;
};

// "Given the event type: {e} and the following roles: {r1, r2, ...}, please
// generate a coherent context that includes the event trigger and the
// role-argument pairs."
std::string build_generation_prompt(const EventSchema& schema);

// "Context: {d} Trigger: {t} Role-Arguments: role: value; role: None" with
// every schema role serialized in order and empty roles marked "None".
std::string serialize_output(const EventSchema& schema, const EventInstance& instance);

// Tolerant parser for model output. Never throws on malformed text; returns a
// rejection reason instead. Argument strings are anchored to their first
// occurrence in the context; unanchorable ones are dropped to empty.
std::variant<EventInstance, ParseRejection> parse_output(const std::string& text,
                                                         const EventSchema& schema,
                                                         ParseReport* report = nullptr,
                                                         const std::string& doc_id = "synthetic");

// Replaces <argN> with the role's filler text (multi-fillers joined by
// " and "); empty roles keep the placeholder marker itself.
FilledTemplate fill_template(const EventSchema& schema, const EventInstance& instance);

// Reverse of fill_template given the slot record; used by the reversibility check.
std::string unfill_template(const FilledTemplate& filled);

// "<s> template <s> </s> d </s>" with literal boundary markers.
std::string build_extractor_input(const EventSchema& schema, const Document& document);

// Template registry: event_type_id -> template text + placeholder->role binding.
struct TemplateRegistryEntry {
  std::string event_type_id;
  std::string template_text;
  std::map<std::string, std::string> binding;  // "<arg1>" -> role
};

std::vector<TemplateRegistryEntry> load_template_registry(const std::filesystem::path& path);
void save_template_registry(const std::vector<TemplateRegistryEntry>& entries,
                            const std::filesystem::path& path);
// Builds the registry implied by the schemas' own templates and role order.
std::vector<TemplateRegistryEntry> registry_from_schemas(const std::vector<EventSchema>& schemas);
// Overrides schema templates from the registry; raises on binding mismatch.
void apply_template_registry(const std::vector<TemplateRegistryEntry>& entries,
                             std::vector<EventSchema>& schemas);

}  // namespace argex
