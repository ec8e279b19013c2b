#pragma once

#include <filesystem>
#include <vector>

#include "corpus.hpp"
#include "ontology.hpp"

namespace argex {

// Deterministic synthetic ontology + corpus for desk-scale runs: ten event
// types over a shared role pool, multi-sentence documents with dispersed and
// occasionally cross-sentence arguments.
struct MicroWorldOptions {
  int docs_per_type = 80;
  int heldout_per_type = 30;
  double empty_rate = 0.15;  // chance that a non-core role stays unfilled
  uint64_t seed = 1;
};

struct MicroWorld {
  std::vector<EventSchema> schemas;
  std::vector<EventInstance> corpus;   // training pool, all event types
  std::vector<EventInstance> heldout;  // evaluation pool, all event types
};

MicroWorld make_micro_world(const MicroWorldOptions& options);

// Writes ontology.jsonl, corpus.jsonl and heldout.jsonl into the directory.
void write_micro_world(const MicroWorld& world, const std::filesystem::path& dir);

}  // namespace argex
