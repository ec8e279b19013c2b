#include "microworld.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <random>

namespace argex {

namespace {

struct TypeSpec {
  const char* type_id;
  std::vector<const char*> roles;
  const char* template_text;
  const char* canonical_verb;
  std::vector<const char*> triggers;
};

// Event types come in sibling pairs sharing a role set, mirroring how
// corpus ontologies reuse roles across related types; a zero-shot split then
// leaves most unseen roles covered by some seen schema.
const std::vector<TypeSpec>& type_catalog() {
  static const std::vector<TypeSpec> kTypes = {
      {"conflict.attack",
       {"attacker", "target", "place", "instrument"},
       "<arg1> attacked <arg2> in <arg3> using <arg4>",
       "attacked",
       {"attacked", "bombed", "shelled"}},
      {"conflict.raid",
       {"attacker", "target", "place", "instrument"},
       "<arg1> raided <arg2> in <arg3> using <arg4>",
       "raided",
       {"raided", "stormed", "ambushed"}},
      {"movement.transport",
       {"passenger", "origin", "destination", "vehicle"},
       "<arg1> traveled from <arg2> to <arg3> aboard <arg4>",
       "traveled",
       {"traveled", "departed", "sailed"}},
      {"movement.evacuate",
       {"passenger", "origin", "destination", "vehicle"},
       "<arg1> evacuated from <arg2> to <arg3> aboard <arg4>",
       "evacuated",
       {"evacuated", "fled", "withdrew"}},
      {"business.hire",
       {"employee", "organization", "place"},
       "<arg2> hired <arg1> in <arg3>",
       "hired",
       {"hired", "recruited", "appointed"}},
      {"business.promote",
       {"employee", "organization", "place"},
       "<arg2> promoted <arg1> in <arg3>",
       "promoted",
       {"promoted", "elevated", "reassigned"}},
      {"commerce.purchase",
       {"buyer", "seller", "artifact", "money"},
       "<arg1> bought <arg3> from <arg2> for <arg4>",
       "bought",
       {"bought", "purchased", "acquired"}},
      {"commerce.sell",
       {"buyer", "seller", "artifact", "money"},
       "<arg2> sold <arg3> to <arg1> for <arg4>",
       "sold",
       {"sold", "auctioned", "offloaded"}},
      {"justice.arrest",
       {"detainee", "authority", "place"},
       "<arg2> detained <arg1> in <arg3>",
       "detained",
       {"detained", "arrested", "seized"}},
      {"justice.release",
       {"detainee", "authority", "place"},
       "<arg2> released <arg1> in <arg3>",
       "released",
       {"released", "freed", "discharged"}},
      {"inspection.audit",
       {"inspector", "inspectee", "place"},
       "<arg1> inspected <arg2> in <arg3>",
       "inspected",
       {"inspected", "audited", "examined"}},
      {"disaster.flood",
       {"place", "victim"},
       "flooding stranded <arg2> in <arg1>",
       "stranded",
       {"stranded", "flooded", "submerged"}},
  };
  return kTypes;
}

const std::map<std::string, std::vector<const char*>>& role_lexicons() {
  static const std::map<std::string, std::vector<const char*>> kLexicons = {
      {"attacker", {"the rebels", "the gunmen", "militia forces", "armed raiders", "the insurgents"}},
      {"target", {"the convoy", "a checkpoint", "the outpost", "a supply depot", "the patrol"}},
      {"place",
       {"Berlin", "Westport", "Avalon", "Karlsbad", "the harbor district", "the northern valley"}},
      {"instrument", {"mortars", "rifles", "a drone", "improvised charges", "grenades"}},
      {"passenger", {"Ana Reyes", "Mr Cole", "the mayor", "two engineers", "a nurse", "Tomas Vane"}},
      {"origin", {"Dunmore", "the coast", "Eastfield", "the capital"}},
      {"destination", {"Meridian", "the island", "Northgate", "the mainland"}},
      {"vehicle", {"a ferry", "freight trucks", "a chartered plane", "the night train"}},
      {"employee", {"Ana Reyes", "Mr Cole", "Tomas Vane", "a veteran pilot", "the archivist"}},
      {"organization",
       {"the city council", "Orion Logistics", "the harbor authority", "the ministry",
        "Calder Group"}},
      {"buyer", {"the city council", "Orion Logistics", "a private collector", "Calder Group"}},
      {"seller", {"a local dealer", "the cooperative", "Harlan Brothers", "the estate"}},
      {"artifact",
       {"grain shipments", "spare parts", "medical supplies", "a generator", "rare manuscripts"}},
      {"money",
       {"two million euros", "a modest sum", "undisclosed fees", "forty thousand dollars"}},
      {"detainee", {"Ana Reyes", "Mr Cole", "Tomas Vane", "two smugglers", "the suspect"}},
      {"authority", {"the police", "border guards", "the task force"}},
      {"victim", {"several residents", "a fisherman", "the crew", "dozens of families"}},
      {"inspector", {"federal auditors", "the safety board", "an independent panel"}},
      {"inspectee", {"the city council", "Orion Logistics", "the harbor authority", "Calder Group"}},
  };
  return kLexicons;
}

const std::vector<const char*>& opener_pool() {
  static const std::vector<const char*> kOpeners = {
      "Witnesses described a tense morning .",
      "Local media carried the story within hours .",
      "Officials confirmed the reports on Tuesday .",
      "Residents recalled the confusion days later .",
  };
  return kOpeners;
}

const std::vector<const char*>& distractor_pool() {
  static const std::vector<const char*> kDistractors = {
      "Traffic along the coastal road slowed for hours .",
      "Officials promised a full review before the weekend .",
      "The weather stayed calm through the evening .",
      "Phones rang unanswered at the press office .",
      "A separate statement is expected on Friday .",
      "Power returned to most neighborhoods by night .",
      "Crews worked quietly despite the heavy rain .",
      "The council meeting adjourned without comment .",
  };
  return kDistractors;
}

const std::vector<const char*>& followup_patterns() {
  static const std::vector<const char*> kFollowups = {
      "Later reports mentioned {} .",
      "Witnesses repeatedly pointed to {} .",
      "Early accounts also named {} .",
  };
  return kFollowups;
}

bool is_elidable_function_word(const std::string& w) {
  return w == "in" || w == "from" || w == "to" || w == "aboard" || w == "using" || w == "for" ||
         w == "against" || w == "at";
}

struct DocBuilder {
  std::vector<std::string> tokens;

  int append(const std::vector<std::string>& sentence) {
    const int at = static_cast<int>(tokens.size());
    tokens.insert(tokens.end(), sentence.begin(), sentence.end());
    return at;
  }
};

template <typename Rng>
const char* pick(const std::vector<const char*>& pool, Rng& rng) {
  std::uniform_int_distribution<size_t> dist(0, pool.size() - 1);
  return pool[dist(rng)];
}

template <typename Rng>
double coin(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

EventInstance synthesize_instance(const EventSchema& schema, const TypeSpec& spec,
                                  const std::string& doc_id, double empty_rate,
                                  std::mt19937_64& rng) {
  const auto& lexicons = role_lexicons();

  // Choose fillers: the first two roles of every schema are always filled so
  // mismatch perturbation has material to work with.
  std::map<std::string, std::vector<std::string>> fillers;  // role -> tokens
  for (size_t i = 0; i < schema.roles.size(); ++i) {
    const std::string role = canonical_role(schema.roles[i]);
    if (i >= 2 && coin(rng) < empty_rate) continue;
    fillers[role] = split_whitespace(pick(lexicons.at(role), rng));
  }

  // Deferred role: realized in a follow-up sentence instead of the main one.
  std::string deferred;
  if (coin(rng) < 0.5) {
    std::vector<std::string> candidates;
    for (size_t i = 1; i < schema.roles.size(); ++i) {
      const std::string role = canonical_role(schema.roles[i]);
      if (fillers.count(role)) candidates.push_back(role);
    }
    if (!candidates.empty()) {
      std::uniform_int_distribution<size_t> dist(0, candidates.size() - 1);
      deferred = candidates[dist(rng)];
    }
  }

  const std::string trigger_word = pick(spec.triggers, rng);

  // Realize the main sentence from the template: placeholders substituted or
  // elided together with a preceding function word, canonical verb swapped
  // for the sampled trigger.
  std::vector<std::string> main_sentence;
  int trigger_offset_in_main = -1;
  std::map<std::string, int> role_offset_in_main;
  for (const std::string& tok : split_whitespace(schema.template_text)) {
    const auto numbers = template_placeholder_numbers(tok);
    if (numbers.size() == 1 && tok == "<arg" + std::to_string(numbers[0]) + ">") {
      const std::string role = canonical_role(schema.role_for_placeholder(numbers[0]));
      const bool realized = fillers.count(role) && role != deferred;
      if (!realized) {
        if (!main_sentence.empty() && is_elidable_function_word(main_sentence.back()) &&
            static_cast<int>(main_sentence.size()) - 1 != trigger_offset_in_main)
          main_sentence.pop_back();
        continue;
      }
      role_offset_in_main[role] = static_cast<int>(main_sentence.size());
      for (const auto& w : fillers.at(role)) main_sentence.push_back(w);
    } else if (tok == spec.canonical_verb) {
      trigger_offset_in_main = static_cast<int>(main_sentence.size());
      main_sentence.push_back(trigger_word);
    } else {
      main_sentence.push_back(tok);
    }
  }
  main_sentence.push_back(".");
  if (!main_sentence.empty() && std::islower(static_cast<unsigned char>(main_sentence[0][0])))
    main_sentence[0][0] = static_cast<char>(std::toupper(main_sentence[0][0]));

  DocBuilder doc;
  if (coin(rng) < 0.7) doc.append(split_whitespace(pick(opener_pool(), rng)));
  if (coin(rng) < 0.4) doc.append(split_whitespace(pick(distractor_pool(), rng)));
  const int main_at = doc.append(main_sentence);

  int deferred_at = -1;
  int deferred_offset = -1;
  if (!deferred.empty() && fillers.count(deferred)) {
    const std::string pattern = pick(followup_patterns(), rng);
    const size_t slot = pattern.find("{}");
    std::vector<std::string> sentence = split_whitespace(pattern.substr(0, slot));
    deferred_offset = static_cast<int>(sentence.size());
    for (const auto& w : fillers.at(deferred)) sentence.push_back(w);
    for (const auto& w : split_whitespace(pattern.substr(slot + 2))) sentence.push_back(w);
    deferred_at = doc.append(sentence);
  }
  if (coin(rng) < 0.6) doc.append(split_whitespace(pick(distractor_pool(), rng)));

  EventInstance inst;
  inst.document.doc_id = doc_id;
  inst.document.tokens = doc.tokens;
  inst.event_type_id = schema.event_type_id;
  inst.provenance = Provenance::gold;

  auto make_span = [&](int at, int len) {
    ArgumentSpan span;
    span.start = at;
    span.end = at + len;
    std::vector<std::string> piece(doc.tokens.begin() + at, doc.tokens.begin() + span.end);
    span.text = join_tokens(piece, " ");
    return span;
  };
  inst.trigger = make_span(main_at + trigger_offset_in_main, 1);
  for (const auto& [role, words] : fillers) {
    if (role == deferred && deferred_at >= 0) {
      inst.arguments[role].push_back(
          make_span(deferred_at + deferred_offset, static_cast<int>(words.size())));
    } else if (role_offset_in_main.count(role)) {
      inst.arguments[role].push_back(
          make_span(main_at + role_offset_in_main.at(role), static_cast<int>(words.size())));
    }
  }
  inst.validate();
  return inst;
}

}  // namespace

MicroWorld make_micro_world(const MicroWorldOptions& options) {
  MicroWorld world;
  for (const auto& spec : type_catalog()) {
    EventSchema schema;
    schema.event_type_id = spec.type_id;
    schema.name = spec.type_id;
    for (const char* r : spec.roles) schema.roles.push_back(r);
    schema.template_text = spec.template_text;
    schema.validate();
    world.schemas.push_back(schema);
  }

  for (size_t t = 0; t < type_catalog().size(); ++t) {
    const auto& spec = type_catalog()[t];
    const auto& schema = world.schemas[t];
    auto rng = make_rng(derive_seed(options.seed, std::string("micro/") + spec.type_id));
    for (int i = 0; i < options.docs_per_type; ++i) {
      world.corpus.push_back(synthesize_instance(
          schema, spec, "micro-" + std::string(spec.type_id) + "-train-" + std::to_string(i),
          options.empty_rate, rng));
    }
    for (int i = 0; i < options.heldout_per_type; ++i) {
      world.heldout.push_back(synthesize_instance(
          schema, spec, "micro-" + std::string(spec.type_id) + "-held-" + std::to_string(i),
          options.empty_rate, rng));
    }
  }
  return world;
}

void write_micro_world(const MicroWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_ontology(world.schemas, dir / "ontology.jsonl");
  write_canonical(world.corpus, dir / "corpus.jsonl");
  write_canonical(world.heldout, dir / "heldout.jsonl");
}

}  // namespace argex
