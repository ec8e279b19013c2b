#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "corpus.hpp"
#include "test_util.hpp"

using namespace argex;
using namespace argex::testing;

namespace {

// Randomized canonical instances for round-trip property checks.
EventInstance random_instance(std::mt19937_64& rng, int index) {
  static const char* kWords[] = {"alpha", "bravo", "civic", "delta", "echo",
                                 "fora",  "gulf",  "hotel", "index", "julia"};
  std::uniform_int_distribution<int> len(6, 18);
  std::uniform_int_distribution<int> word(0, 9);
  EventInstance inst;
  inst.document.doc_id = "doc-" + std::to_string(index);
  const int n = len(rng);
  for (int i = 0; i < n; ++i) inst.document.tokens.push_back(kWords[word(rng)]);
  inst.event_type_id = "type." + std::to_string(index % 3);
  std::uniform_int_distribution<int> pos(0, n - 1);
  const int t = pos(rng);
  inst.trigger = span_at(inst.document, t, t + 1);
  std::uniform_int_distribution<int> n_args(0, 4);
  const int k = n_args(rng);
  for (int a = 0; a < k; ++a) {
    const int s = pos(rng);
    std::uniform_int_distribution<int> width(1, std::min(3, n - s));
    inst.arguments["role" + std::to_string(a % 3)].push_back(
        span_at(inst.document, s, s + width(rng)));
  }
  std::uniform_int_distribution<int> prov(0, 2);
  inst.provenance = static_cast<Provenance>(prov(rng));
  inst.validate();
  return inst;
}

bool same_instance(const EventInstance& a, const EventInstance& b) {
  return a.document.doc_id == b.document.doc_id && a.document.tokens == b.document.tokens &&
         a.event_type_id == b.event_type_id && a.trigger == b.trigger &&
         a.arguments == b.arguments && a.provenance == b.provenance;
}

}  // namespace

TEST_CASE("canonical ingest/export round-trip is the identity") {
  TempDir dir("corpus_roundtrip");
  auto rng = make_rng(11);
  std::vector<EventInstance> instances;
  for (int i = 0; i < 60; ++i) instances.push_back(random_instance(rng, i));

  write_canonical(instances, dir.path / "a.jsonl");
  IngestReport report;
  const auto once = ingest(dir.path / "a.jsonl", CorpusFormat::canonical, &report);
  REQUIRE(once.size() == instances.size());
  CHECK(report.rejected_out_of_bounds == 0);
  write_canonical(once, dir.path / "b.jsonl");
  const auto twice = ingest(dir.path / "b.jsonl", CorpusFormat::canonical);
  REQUIRE(twice.size() == instances.size());
  for (size_t i = 0; i < instances.size(); ++i) CHECK(same_instance(instances[i], twice[i]));
}

TEST_CASE("out-of-bounds spans are rejected and counted") {
  TempDir dir("corpus_bounds");
  std::ofstream out(dir.path / "bad.jsonl");
  out << R"({"doc_id":"d1","tokens":["a","b","c"],"event_type_id":"t",)"
      << R"("trigger":{"start":0,"end":1,"text":"a"},)"
      << R"("arguments":[{"role":"place","start":19,"end":25,"text":"x"}],"provenance":"gold"})"
      << "\n";
  out << R"({"doc_id":"d2","tokens":["a","b"],"event_type_id":"t",)"
      << R"("trigger":{"start":0,"end":1,"text":"a"},"arguments":[],"provenance":"gold"})" << "\n";
  out.close();
  IngestReport report;
  const auto kept = ingest(dir.path / "bad.jsonl", CorpusFormat::canonical, &report);
  CHECK(kept.size() == 1);
  CHECK(report.rejected_out_of_bounds == 1);
  CHECK(report.instances_kept == 1);
}

TEST_CASE("surface text mismatching its span is rejected") {
  TempDir dir("corpus_surface");
  std::ofstream out(dir.path / "bad.jsonl");
  out << R"({"doc_id":"d1","tokens":["a","b","c"],"event_type_id":"t",)"
      << R"("trigger":{"start":0,"end":1,"text":"WRONG"},"arguments":[],"provenance":"gold"})"
      << "\n";
  out.close();
  IngestReport report;
  const auto kept = ingest(dir.path / "bad.jsonl", CorpusFormat::canonical, &report);
  CHECK(kept.empty());
  CHECK(report.rejected_surface_mismatch == 1);
}

TEST_CASE("malformed records raise with the line number") {
  TempDir dir("corpus_malformed");
  std::ofstream out(dir.path / "bad.jsonl");
  out << R"({"doc_id":"ok","tokens":["a"],"event_type_id":"t",)"
      << R"("trigger":{"start":0,"end":1,"text":"a"},"arguments":[],"provenance":"gold"})" << "\n";
  out << "{not json\n";
  out.close();
  try {
    ingest(dir.path / "bad.jsonl", CorpusFormat::canonical);
    FAIL("expected an ingest error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("rams-like records parse with inclusive span conversion") {
  TempDir dir("corpus_rams");
  std::ofstream out(dir.path / "rams.jsonl");
  out << R"({"doc_key":"r1","sentences":[["The","rebels","attacked"],["in","Berlin","today"]],)"
      << R"("evt_triggers":[[2,2,[["conflict.attack",1.0]]]],)"
      << R"("ent_spans":[[1,1,[["evt001arg01attacker",1.0]]],[4,4,[["evt001arg02place",1.0]]]]})"
      << "\n";
  out.close();
  const auto instances = ingest(dir.path / "rams.jsonl", CorpusFormat::rams_like);
  REQUIRE(instances.size() == 1);
  const auto& inst = instances[0];
  CHECK(inst.document.tokens.size() == 6);
  CHECK(inst.trigger.text == "attacked");
  CHECK(inst.event_type_id == "conflict.attack");
  REQUIRE(inst.arguments.count("attacker") == 1);
  CHECK(inst.arguments.at("attacker")[0].text == "rebels");
  CHECK(inst.arguments.at("place")[0].text == "Berlin");
}

TEST_CASE("wikievents-like records parse one instance per mention") {
  TempDir dir("corpus_wiki");
  std::ofstream out(dir.path / "wiki.jsonl");
  out << R"({"doc_id":"w1","tokens":["Ana","was","hired","by","Acme"],)"
      << R"("event_mentions":[{"event_type":"business.hire",)"
      << R"("trigger":{"start":2,"end":3,"text":"hired"},)"
      << R"("arguments":[{"role":"Employee","start":0,"end":1,"text":"Ana"},)"
      << R"({"role":"employee","start":0,"end":1,"text":"Ana"}]}]})" << "\n";
  out.close();
  const auto instances = ingest(dir.path / "wiki.jsonl", CorpusFormat::wikievents_like);
  REQUIRE(instances.size() == 1);
  // Role identity is canonical: both fillers land under one key.
  CHECK(instances[0].arguments.at("employee").size() == 2);
}

TEST_CASE("empty_argument_ratio counts unfilled roles") {
  const EventSchema schema = make_schema(
      "t", {"r1", "r2", "r3", "r4", "r5"}, "<arg1> a <arg2> b <arg3> c <arg4> d <arg5>");
  Document doc = make_doc("d", "alpha beta gamma delta");
  EventInstance inst;
  inst.document = doc;
  inst.event_type_id = "t";
  inst.trigger = span_at(doc, 0, 1);
  inst.arguments["r1"].push_back(span_at(doc, 1, 2));
  inst.arguments["r2"].push_back(span_at(doc, 2, 3));
  inst.arguments["r3"].push_back(span_at(doc, 3, 4));
  CHECK(empty_argument_ratio(inst, schema) == doctest::Approx(0.4));

  inst.arguments["r4"].push_back(span_at(doc, 0, 1));
  inst.arguments["r5"].push_back(span_at(doc, 1, 2));
  CHECK(empty_argument_ratio(inst, schema) == 0.0);

  inst.arguments.clear();
  CHECK(empty_argument_ratio(inst, schema) == 1.0);

  EventInstance wrong = inst;
  wrong.event_type_id = "other";
  CHECK_THROWS_AS(empty_argument_ratio(wrong, schema), Error);
}

TEST_CASE("empty_argument_ratio does not depend on role order") {
  Document doc = make_doc("d", "alpha beta gamma");
  EventInstance inst;
  inst.document = doc;
  inst.event_type_id = "t";
  inst.trigger = span_at(doc, 0, 1);
  inst.arguments["north"].push_back(span_at(doc, 1, 2));
  const EventSchema fwd = make_schema("t", {"north", "south", "east"});
  const EventSchema rev = make_schema("t", {"east", "south", "north"});
  CHECK(empty_argument_ratio(inst, fwd) == empty_argument_ratio(inst, rev));
}

TEST_CASE("export_synthetic filters by reward with ties included") {
  TempDir dir("corpus_export");
  auto rng = make_rng(5);
  SyntheticDataset dataset;
  std::vector<double> rewards;
  for (int i = 0; i < 100; ++i) {
    SyntheticSample s;
    s.sample_id = "s" + std::to_string(i);
    s.instance = random_instance(rng, i);
    s.reward = (i % 10) * 0.1;  // repeated values exercise the tie rule
    rewards.push_back(*s.reward);
    dataset.samples.push_back(std::move(s));
  }
  std::sort(rewards.begin(), rewards.end());
  const double threshold = rewards[rewards.size() / 2];
  int expected = 0;
  for (double r : rewards) expected += r >= threshold ? 1 : 0;

  const int written = export_synthetic(dataset, dir.path / "out.jsonl", threshold);
  CHECK(written == expected);
  CHECK(ingest(dir.path / "out.jsonl", CorpusFormat::canonical).size() ==
        static_cast<size_t>(expected));

  CHECK(export_synthetic(dataset, dir.path / "all.jsonl",
                         -std::numeric_limits<double>::infinity()) == 100);

  SyntheticDataset empty;
  CHECK(export_synthetic(empty, dir.path / "empty.jsonl", std::nullopt) == 0);
  CHECK(ingest(dir.path / "empty.jsonl", CorpusFormat::canonical).empty());

  SyntheticDataset unscored;
  SyntheticSample s;
  s.sample_id = "x";
  s.instance = random_instance(rng, 0);
  unscored.samples.push_back(s);
  CHECK_THROWS_AS(export_synthetic(unscored, dir.path / "raw.jsonl", std::nullopt), Error);
}

TEST_CASE("synthetic dataset groups partition the samples") {
  auto rng = make_rng(17);
  SyntheticDataset dataset;
  for (int i = 0; i < 30; ++i) {
    SyntheticSample s;
    s.sample_id = "s" + std::to_string(i);
    s.instance = random_instance(rng, i);
    dataset.samples.push_back(std::move(s));
  }
  size_t total = 0;
  for (const auto& [type, members] : dataset.groups()) {
    total += members.size();
    for (int m : members) CHECK(dataset.samples[m].instance.event_type_id == type);
  }
  CHECK(total == dataset.samples.size());
}
