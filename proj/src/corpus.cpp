#include "corpus.hpp"

#include <fstream>
#include <regex>

#include <json.hpp>

namespace argex {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string span_surface(const std::vector<std::string>& tokens, int start, int end) {
  std::vector<std::string> piece(tokens.begin() + start, tokens.begin() + end);
  return join_tokens(piece, " ");
}

enum class Integrity { ok, out_of_bounds, surface_mismatch };

Integrity integrity_of(const EventInstance& inst) {
  const int n = static_cast<int>(inst.document.tokens.size());
  if (n == 0) return Integrity::out_of_bounds;
  auto span_ok = [&](const ArgumentSpan& s) { return 0 <= s.start && s.start < s.end && s.end <= n; };
  if (!span_ok(inst.trigger)) return Integrity::out_of_bounds;
  for (const auto& [role, fillers] : inst.arguments) {
    (void)role;
    for (const auto& f : fillers)
      if (!span_ok(f)) return Integrity::out_of_bounds;
  }
  if (inst.trigger.text != span_surface(inst.document.tokens, inst.trigger.start, inst.trigger.end))
    return Integrity::surface_mismatch;
  for (const auto& [role, fillers] : inst.arguments) {
    (void)role;
    for (const auto& f : fillers)
      if (f.text != span_surface(inst.document.tokens, f.start, f.end))
        return Integrity::surface_mismatch;
  }
  return Integrity::ok;
}

void check_span(const ArgumentSpan& span, int token_count, const std::string& what,
                const std::string& doc_id) {
  if (!(0 <= span.start && span.start < span.end && span.end <= token_count))
    fail(Error::Kind::invalid_argument,
         "doc " + doc_id + ": " + what + " span [" + std::to_string(span.start) + "," +
             std::to_string(span.end) + ") out of bounds for " + std::to_string(token_count) +
             " tokens");
}

ordered_json span_json(const ArgumentSpan& s) {
  ordered_json j;
  j["start"] = s.start;
  j["end"] = s.end;
  j["text"] = s.text;
  return j;
}

ArgumentSpan span_from_json(const ordered_json& j) {
  ArgumentSpan s;
  s.start = j.at("start").get<int>();
  s.end = j.at("end").get<int>();
  s.text = j.value("text", "");
  return s;
}

ordered_json instance_json(const EventInstance& inst) {
  ordered_json j;
  j["doc_id"] = inst.document.doc_id;
  j["tokens"] = inst.document.tokens;
  j["event_type_id"] = inst.event_type_id;
  j["trigger"] = span_json(inst.trigger);
  ordered_json args = ordered_json::array();
  for (const auto& [role, fillers] : inst.arguments) {
    for (const auto& f : fillers) {
      ordered_json a = span_json(f);
      ordered_json entry;
      entry["role"] = role;
      entry["start"] = a["start"];
      entry["end"] = a["end"];
      entry["text"] = a["text"];
      args.push_back(entry);
    }
  }
  j["arguments"] = args;
  j["provenance"] = provenance_name(inst.provenance);
  return j;
}

EventInstance instance_from_json(const ordered_json& j) {
  EventInstance inst;
  inst.document.doc_id = j.at("doc_id").get<std::string>();
  for (const auto& t : j.at("tokens")) inst.document.tokens.push_back(t.get<std::string>());
  inst.event_type_id = j.at("event_type_id").get<std::string>();
  inst.trigger = span_from_json(j.at("trigger"));
  for (const auto& a : j.value("arguments", ordered_json::array())) {
    ArgumentSpan s = span_from_json(a);
    inst.arguments[canonical_role(a.at("role").get<std::string>())].push_back(s);
  }
  inst.provenance = provenance_from_name(j.value("provenance", "gold"));
  return inst;
}

// RAMS-style role labels look like "evt089arg01victim"; strip the prefix.
std::string strip_rams_role(const std::string& label) {
  static const std::regex kPrefixed("^evt[0-9]+arg[0-9]+(.+)$");
  std::smatch m;
  if (std::regex_match(label, m, kPrefixed)) return m[1].str();
  return label;
}

std::vector<EventInstance> parse_rams_line(const ordered_json& j) {
  EventInstance inst;
  inst.document.doc_id = j.value("doc_key", "rams-doc");
  for (const auto& sent : j.at("sentences"))
    for (const auto& tok : sent) inst.document.tokens.push_back(tok.get<std::string>());
  const int n = static_cast<int>(inst.document.tokens.size());

  const auto& triggers = j.at("evt_triggers");
  if (triggers.empty()) return {};
  const auto& trig = triggers.at(0);
  // RAMS spans are inclusive document-token offsets.
  inst.trigger.start = trig.at(0).get<int>();
  inst.trigger.end = trig.at(1).get<int>() + 1;
  inst.event_type_id = trig.at(2).at(0).at(0).get<std::string>();
  check_span(inst.trigger, n, "trigger", inst.document.doc_id);
  inst.trigger.text = span_surface(inst.document.tokens, inst.trigger.start, inst.trigger.end);

  for (const auto& ent : j.value("ent_spans", ordered_json::array())) {
    ArgumentSpan s;
    s.start = ent.at(0).get<int>();
    s.end = ent.at(1).get<int>() + 1;
    check_span(s, n, "argument", inst.document.doc_id);
    s.text = span_surface(inst.document.tokens, s.start, s.end);
    const std::string role = canonical_role(strip_rams_role(ent.at(2).at(0).at(0).get<std::string>()));
    inst.arguments[role].push_back(s);
  }
  inst.provenance = Provenance::gold;
  return {inst};
}

std::vector<EventInstance> parse_wikievents_line(const ordered_json& j) {
  Document doc;
  doc.doc_id = j.value("doc_id", "wiki-doc");
  for (const auto& t : j.at("tokens")) doc.tokens.push_back(t.get<std::string>());
  const int n = static_cast<int>(doc.tokens.size());

  std::vector<EventInstance> out;
  for (const auto& mention : j.value("event_mentions", ordered_json::array())) {
    EventInstance inst;
    inst.document = doc;
    inst.event_type_id = mention.at("event_type").get<std::string>();
    const auto& trig = mention.at("trigger");
    inst.trigger.start = trig.at("start").get<int>();
    inst.trigger.end = trig.at("end").get<int>();
    check_span(inst.trigger, n, "trigger", doc.doc_id);
    inst.trigger.text = trig.value("text", span_surface(doc.tokens, inst.trigger.start,
                                                        inst.trigger.end));
    for (const auto& a : mention.value("arguments", ordered_json::array())) {
      ArgumentSpan s;
      s.start = a.at("start").get<int>();
      s.end = a.at("end").get<int>();
      check_span(s, n, "argument", doc.doc_id);
      s.text = a.value("text", span_surface(doc.tokens, s.start, s.end));
      inst.arguments[canonical_role(a.at("role").get<std::string>())].push_back(s);
    }
    inst.provenance = Provenance::gold;
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::gold: return "gold";
    case Provenance::synthetic: return "synthetic";
    case Provenance::predicted: return "predicted";
  }
  return "gold";
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "gold") return Provenance::gold;
  if (name == "synthetic") return Provenance::synthetic;
  if (name == "predicted") return Provenance::predicted;
  fail(Error::Kind::invalid_argument, "unknown provenance '" + name + "'");
}

bool EventInstance::role_filled(const std::string& role) const {
  auto it = arguments.find(canonical_role(role));
  return it != arguments.end() && !it->second.empty();
}

void EventInstance::validate() const {
  if (document.tokens.empty())
    fail(Error::Kind::invalid_argument, "doc " + document.doc_id + ": empty token list");
  const int n = static_cast<int>(document.tokens.size());
  check_span(trigger, n, "trigger", document.doc_id);
  if (trigger.text != span_surface(document.tokens, trigger.start, trigger.end))
    fail(Error::Kind::invalid_argument,
         "doc " + document.doc_id + ": trigger surface '" + trigger.text +
             "' does not match its span");
  for (const auto& [role, fillers] : arguments) {
    for (const auto& f : fillers) {
      check_span(f, n, "argument[" + role + "]", document.doc_id);
      if (f.text != span_surface(document.tokens, f.start, f.end))
        fail(Error::Kind::invalid_argument,
             "doc " + document.doc_id + ": argument surface '" + f.text +
                 "' does not match its span for role " + role);
    }
  }
}

void EventInstance::validate_against_schema(const EventSchema& schema) const {
  validate();
  if (event_type_id != schema.event_type_id)
    fail(Error::Kind::invalid_argument,
         "instance of type " + event_type_id + " checked against schema " + schema.event_type_id);
  for (const auto& [role, fillers] : arguments) {
    (void)fillers;
    if (schema.role_index(role) < 0)
      fail(Error::Kind::invalid_argument,
           "doc " + document.doc_id + ": role '" + role + "' not in schema " +
               schema.event_type_id);
  }
}

std::map<std::string, std::vector<int>> SyntheticDataset::groups() const {
  std::map<std::string, std::vector<int>> g;
  for (size_t i = 0; i < samples.size(); ++i)
    g[samples[i].instance.event_type_id].push_back(static_cast<int>(i));
  return g;
}

CorpusFormat corpus_format_from_name(const std::string& name) {
  if (name == "canonical") return CorpusFormat::canonical;
  if (name == "rams-like") return CorpusFormat::rams_like;
  if (name == "wikievents-like") return CorpusFormat::wikievents_like;
  fail(Error::Kind::invalid_argument, "unknown corpus format '" + name + "'");
}

std::vector<EventInstance> ingest(const std::filesystem::path& path, CorpusFormat format,
                                  IngestReport* report) {
  std::ifstream in(path);
  if (!in) fail(Error::Kind::io, "cannot open corpus file: " + path.string());
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  std::vector<EventInstance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    ++rep.records_read;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail(Error::Kind::io,
           path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    std::vector<EventInstance> parsed;
    try {
      switch (format) {
        case CorpusFormat::canonical: parsed = {instance_from_json(j)}; break;
        case CorpusFormat::rams_like: parsed = parse_rams_line(j); break;
        case CorpusFormat::wikievents_like: parsed = parse_wikievents_line(j); break;
      }
    } catch (const ordered_json::exception& e) {
      fail(Error::Kind::io,
           path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const Error&) {
      ++rep.rejected_out_of_bounds;
      rep.notes.push_back("line " + std::to_string(line_no) + ": span out of bounds, rejected");
      continue;
    }
    for (auto& inst : parsed) {
      switch (integrity_of(inst)) {
        case Integrity::out_of_bounds:
          ++rep.rejected_out_of_bounds;
          rep.notes.push_back("line " + std::to_string(line_no) + ": span out of bounds, rejected");
          continue;
        case Integrity::surface_mismatch:
          ++rep.rejected_surface_mismatch;
          rep.notes.push_back("line " + std::to_string(line_no) +
                              ": surface/span integrity check failed, rejected");
          continue;
        case Integrity::ok:
          break;
      }
      ++rep.instances_kept;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

void write_canonical(const std::vector<EventInstance>& instances,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write corpus file: " + path.string());
  for (const auto& inst : instances) out << instance_json(inst).dump() << "\n";
}

std::string instance_to_json_line(const EventInstance& instance) {
  return instance_json(instance).dump();
}

EventInstance instance_from_json_line(const std::string& line) {
  return instance_from_json(ordered_json::parse(line));
}

int export_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& path,
                     std::optional<double> min_reward) {
  for (const auto& s : dataset.samples) {
    if (!s.reward.has_value())
      fail(Error::Kind::invalid_argument,
           "export_synthetic: sample " + s.sample_id + " has no reward; score the dataset first");
  }
  std::ofstream out(path);
  if (!out) fail(Error::Kind::io, "cannot write export file: " + path.string());
  int written = 0;
  for (const auto& s : dataset.samples) {
    if (min_reward && *s.reward < *min_reward) continue;
    out << instance_json(s.instance).dump() << "\n";
    ++written;
  }
  return written;
}

double empty_argument_ratio(const EventInstance& instance, const EventSchema& schema) {
  if (instance.event_type_id != schema.event_type_id)
    fail(Error::Kind::invalid_argument,
         "empty_argument_ratio: instance type " + instance.event_type_id +
             " does not match schema " + schema.event_type_id);
  int empty = 0;
  for (const auto& role : schema.roles) {
    if (!instance.role_filled(role)) ++empty;
  }
  return static_cast<double>(empty) / schema.role_count();
}

}  // namespace argex
