#include "prompting.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include <json.hpp>

namespace argex {

namespace {

using ordered_json = nlohmann::ordered_json;

// Locates "<label> :"-style section headers case-insensitively with optional
// whitespace before the colon. Returns {label_start, content_start} or npos.
struct LabelHit {
  size_t label_pos = std::string::npos;
  size_t content_pos = std::string::npos;
};

LabelHit find_label(const std::string& text, const std::string& label, size_t from) {
  const std::string haystack = lower_copy(text);
  const std::string needle = lower_copy(label);
  size_t pos = from;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    size_t after = pos + needle.size();
    size_t colon = after;
    while (colon < text.size() && (text[colon] == ' ' || text[colon] == '\t')) ++colon;
    const bool boundary_ok =
        pos == 0 || !std::isalnum(static_cast<unsigned char>(haystack[pos - 1]));
    if (boundary_ok && colon < text.size() && text[colon] == ':') {
      return {pos, colon + 1};
    }
    pos = after;
  }
  return {};
}

// Maps a character range of the space-joined token text back to the covering
// token span. Used when a trigger matches as a substring but is not aligned
// to token boundaries.
ArgumentSpan covering_token_span(const std::vector<std::string>& tokens, size_t char_begin,
                                 size_t char_end) {
  ArgumentSpan span;
  size_t offset = 0;
  int first = -1, last = -1;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const size_t tok_begin = offset;
    const size_t tok_end = offset + tokens[i].size();
    if (tok_end > char_begin && tok_begin < char_end) {
      if (first < 0) first = static_cast<int>(i);
      last = static_cast<int>(i);
    }
    offset = tok_end + 1;  // single joining space
  }
  span.start = first;
  span.end = last + 1;
  std::vector<std::string> piece(tokens.begin() + span.start, tokens.begin() + span.end);
  span.text = join_tokens(piece, " ");
  return span;
}

std::optional<ArgumentSpan> anchor_first_occurrence(const std::vector<std::string>& tokens,
                                                    const std::string& phrase) {
  const std::vector<std::string> needle = split_whitespace(phrase);
  if (needle.empty()) return std::nullopt;
  const int at = find_token_subsequence(tokens, needle);
  if (at < 0) return std::nullopt;
  ArgumentSpan span;
  span.start = at;
  span.end = at + static_cast<int>(needle.size());
  span.text = join_tokens(needle, " ");
  return span;
}

}  // namespace

const char* parse_rejection_name(ParseRejection r) {
  switch (r) {
    case ParseRejection::missing_section: return "missing-section";
    case ParseRejection::missing_trigger: return "missing-trigger";
    case ParseRejection::empty_context: return "empty-context";
  }
  return "missing-section";
}

std::string build_generation_prompt(const EventSchema& schema) {
  schema.validate();
  std::string roles = join_tokens(schema.roles, ", ");
  const std::string& type_name = schema.name.empty() ? schema.event_type_id : schema.name;
  return "Given the event type: " + type_name + " and the following roles: " + roles +
         ", please generate a coherent context that includes the event trigger and the "
         "role-argument pairs.";
}

std::string serialize_output(const EventSchema& schema, const EventInstance& instance) {
  instance.validate_against_schema(schema);
  std::string out = "Context: " + instance.document.text() + " Trigger: " + instance.trigger.text +
                    " Role-Arguments: ";
  for (int i = 0; i < schema.role_count(); ++i) {
    const std::string role = canonical_role(schema.roles[i]);
    if (i) out += "; ";
    out += schema.roles[i] + ": ";
    auto it = instance.arguments.find(role);
    if (it == instance.arguments.end() || it->second.empty()) {
      out += kEmptyMarker;
    } else {
      std::vector<std::string> values;
      for (const auto& f : it->second) values.push_back(f.text);
      out += join_tokens(values, kFillerDelimiter);
    }
  }
  return out;
}

std::variant<EventInstance, ParseRejection> parse_output(const std::string& text,
                                                         const EventSchema& schema,
                                                         ParseReport* report,
                                                         const std::string& doc_id) {
  ParseReport local;
  ParseReport& rep = report ? *report : local;

  const LabelHit ctx = find_label(text, "context", 0);
  if (ctx.content_pos == std::string::npos) return ParseRejection::missing_section;
  const LabelHit trg = find_label(text, "trigger", ctx.content_pos);
  if (trg.content_pos == std::string::npos) return ParseRejection::missing_section;
  const LabelHit args = find_label(text, "role-arguments", trg.content_pos);
  if (args.content_pos == std::string::npos) return ParseRejection::missing_section;

  std::string context = trim_copy(text.substr(ctx.content_pos, trg.label_pos - ctx.content_pos));
  // Strip a trailing comma left over from "Context: ..., Trigger:" phrasings.
  while (!context.empty() && (context.back() == ',' || context.back() == '\n'))
    context = trim_copy(context.substr(0, context.size() - 1));
  if (context.empty()) return ParseRejection::empty_context;

  std::string trigger_str =
      trim_copy(text.substr(trg.content_pos, args.label_pos - trg.content_pos));
  while (!trigger_str.empty() && (trigger_str.back() == ',' || trigger_str.back() == '.'))
    trigger_str = trim_copy(trigger_str.substr(0, trigger_str.size() - 1));
  if (trigger_str.empty()) return ParseRejection::missing_trigger;

  // Discard rule: the trigger must appear verbatim in the generated context.
  // Substring matching over the detokenized context.
  const size_t trig_at = context.find(trigger_str);
  if (trig_at == std::string::npos) return ParseRejection::missing_trigger;

  EventInstance inst;
  inst.document.doc_id = doc_id;
  inst.document.tokens = split_whitespace(context);
  inst.event_type_id = schema.event_type_id;
  inst.provenance = Provenance::synthetic;

  if (auto span = anchor_first_occurrence(inst.document.tokens, trigger_str)) {
    inst.trigger = *span;
  } else {
    inst.trigger = covering_token_span(inst.document.tokens, trig_at, trig_at + trigger_str.size());
  }

  const std::string args_text = trim_copy(text.substr(args.content_pos));
  for (const std::string& piece : split_on(args_text, ";")) {
    const std::string pair = trim_copy(piece);
    if (pair.empty()) continue;
    const size_t colon = pair.find(':');
    if (colon == std::string::npos) {
      ++rep.malformed_pairs;
      continue;
    }
    const std::string role = canonical_role(pair.substr(0, colon));
    std::string value = trim_copy(pair.substr(colon + 1));
    while (!value.empty() && value.back() == '.') value = trim_copy(value.substr(0, value.size() - 1));
    if (schema.role_index(role) < 0) {
      ++rep.unknown_roles;
      continue;
    }
    if (inst.arguments.count(role)) {
      ++rep.duplicate_roles;  // first occurrence wins
      continue;
    }
    if (value.empty() || lower_copy(value) == lower_copy(kEmptyMarker)) {
      inst.arguments[role];  // present but empty
      continue;
    }
    std::vector<ArgumentSpan> fillers;
    for (const std::string& raw : split_on(value, kFillerDelimiter)) {
      const std::string filler = trim_copy(raw);
      if (filler.empty()) continue;
      if (auto span = anchor_first_occurrence(inst.document.tokens, filler)) {
        fillers.push_back(*span);
      } else {
        ++rep.unanchorable_arguments;
      }
    }
    inst.arguments[role] = std::move(fillers);
  }

  inst.validate_against_schema(schema);
  return inst;
}

FilledTemplate fill_template(const EventSchema& schema, const EventInstance& instance) {
  instance.validate_against_schema(schema);
  static const std::regex kPlaceholder("<arg([0-9]+)>");

  FilledTemplate result;
  result.template_text = schema.template_text;

  std::string out;
  auto begin = std::sregex_iterator(schema.template_text.begin(), schema.template_text.end(),
                                    kPlaceholder);
  size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out += schema.template_text.substr(last, m.position() - last);
    SlotFill slot;
    slot.placeholder_number = std::stoi(m[1].str());
    slot.role = canonical_role(schema.role_for_placeholder(slot.placeholder_number));
    auto arg_it = instance.arguments.find(slot.role);
    if (arg_it != instance.arguments.end() && !arg_it->second.empty()) {
      std::vector<std::string> values;
      for (const auto& f : arg_it->second) values.push_back(f.text);
      slot.value = join_tokens(values, kFillerDelimiter);
      slot.filled = true;
    } else {
      slot.value = m.str();  // keep the placeholder marker itself
      slot.filled = false;
    }
    out += slot.value;
    result.slots.push_back(std::move(slot));
    last = m.position() + m.length();
  }
  out += schema.template_text.substr(last);
  result.filled_text = std::move(out);
  return result;
}

std::string unfill_template(const FilledTemplate& filled) {
  std::string out = filled.filled_text;
  // Substitutions are restored right-to-left so earlier offsets stay valid.
  std::vector<std::pair<size_t, const SlotFill*>> found;
  size_t from = 0;
  for (const auto& slot : filled.slots) {
    const size_t at = out.find(slot.value, from);
    if (at == std::string::npos)
      fail(Error::Kind::internal, "unfill_template: slot value not found in filled text");
    found.emplace_back(at, &slot);
    from = at + slot.value.size();
  }
  for (auto it = found.rbegin(); it != found.rend(); ++it) {
    const std::string marker = "<arg" + std::to_string(it->second->placeholder_number) + ">";
    out.replace(it->first, it->second->value.size(), marker);
  }
  return out;
}

std::string build_extractor_input(const EventSchema& schema, const Document& document) {
  return "<s> " + schema.template_text + " <s> </s> " + document.text() + " </s>";
}

std::vector<TemplateRegistryEntry> load_template_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::io, "cannot open template registry: " + path.string());
  std::vector<TemplateRegistryEntry> entries;
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
    TemplateRegistryEntry e;
    e.event_type_id = j.at("event_type_id").get<std::string>();
    e.template_text = j.at("template").get<std::string>();
    const ordered_json binding = j.value("binding", ordered_json::object());
    for (const auto& [k, v] : binding.items()) e.binding[k] = v.get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_template_registry(const std::vector<TemplateRegistryEntry>& entries,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write template registry: " + path.string());
  for (const auto& e : entries) {
    ordered_json j;
    j["event_type_id"] = e.event_type_id;
    j["template"] = e.template_text;
    ordered_json binding = ordered_json::object();
    for (const auto& [k, v] : e.binding) binding[k] = v;
    j["binding"] = binding;
    out << j.dump() << "\n";
  }
}

std::vector<TemplateRegistryEntry> registry_from_schemas(const std::vector<EventSchema>& schemas) {
  std::vector<TemplateRegistryEntry> entries;
  for (const auto& s : schemas) {
    s.validate();
    TemplateRegistryEntry e;
    e.event_type_id = s.event_type_id;
    e.template_text = s.template_text;
    for (int i = 1; i <= s.role_count(); ++i)
      e.binding["<arg" + std::to_string(i) + ">"] = s.roles[i - 1];
    entries.push_back(std::move(e));
  }
  return entries;
}

void apply_template_registry(const std::vector<TemplateRegistryEntry>& entries,
                             std::vector<EventSchema>& schemas) {
  for (const auto& e : entries) {
    bool found = false;
    for (auto& s : schemas) {
      if (s.event_type_id != e.event_type_id) continue;
      found = true;
      for (const auto& [marker, role] : e.binding) {
        const auto numbers = template_placeholder_numbers(marker);
        if (numbers.size() != 1)
          fail(Error::Kind::invalid_argument,
               "template registry: bad placeholder key '" + marker + "'");
        if (canonical_role(s.role_for_placeholder(numbers[0])) != canonical_role(role))
          fail(Error::Kind::invalid_argument,
               "template registry: binding for " + e.event_type_id + " maps " + marker +
                   " to '" + role + "' but the schema role order expects '" +
                   s.role_for_placeholder(numbers[0]) + "'");
      }
      s.template_text = e.template_text;
      s.validate();
    }
    if (!found)
      fail(Error::Kind::invalid_argument,
           "template registry: no schema for event type '" + e.event_type_id + "'");
  }
}

}  // namespace argex
