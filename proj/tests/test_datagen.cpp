#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tsp/common.hpp"
#include "tsp/datagen.hpp"
#include "tsp/kg.hpp"
#include "tsp/rng.hpp"
#include "util.hpp"

using namespace tsp;

namespace {

using PairSet = std::set<std::pair<EntityId, EntityId>>;

std::vector<PairSet> pairs_by_relation(const KnowledgeGraph& kg) {
  std::vector<PairSet> out(kg.num_relations());
  for (const Triple& t : kg.triples()) out[t.rel].insert({t.head, t.tail});
  return out;
}

PairSet oriented(const PairSet& pairs, bool inverse) {
  if (!inverse) return pairs;
  PairSet out;
  for (const auto& [x, y] : pairs) out.insert({y, x});
  return out;
}

// One derivation step of a path rule, written independently of the library:
// everything it produces (minus self-loops) must already be present when the
// graph is closed.
PairSet derive_once(const std::vector<PairSet>& rel_pairs, const Rule& rule) {
  PairSet out;
  if (rule.body.size() == 1) {
    for (const auto& [x, y] :
         oriented(rel_pairs[rule.body[0].rel], rule.body[0].inverse))
      if (x != y) out.insert({x, y});
    return out;
  }
  const PairSet first = oriented(rel_pairs[rule.body[0].rel],
                                 rule.body[0].inverse);
  const PairSet second = oriented(rel_pairs[rule.body[1].rel],
                                  rule.body[1].inverse);
  std::map<EntityId, std::vector<EntityId>> by_mid;
  for (const auto& [m, z] : second) by_mid[m].push_back(z);
  for (const auto& [x, m] : first) {
    auto it = by_mid.find(m);
    if (it == by_mid.end()) continue;
    for (EntityId z : it->second)
      if (x != z) out.insert({x, z});
  }
  return out;
}

std::set<EntityId> heads_of(const std::vector<PairSet>& rel_pairs,
                            const KnowledgeGraph& kg,
                            const std::vector<const char*>& names) {
  std::set<EntityId> out;
  for (const char* name : names)
    for (const auto& [h, t] : rel_pairs[kg.relation_id(name)]) out.insert(h);
  return out;
}

// A dense synthetic graph with exactly n triples where every entity and
// relation shows up several times, so split repairs can always swap.
KnowledgeGraph dense_kg(std::size_t n_entities, std::size_t n_relations,
                        std::size_t n_triples, std::uint64_t seed) {
  KnowledgeGraph kg;
  for (std::size_t e = 0; e < n_entities; ++e)
    kg.intern_entity(concat("e", e));
  for (std::size_t r = 0; r < n_relations; ++r)
    kg.intern_relation(concat("r", r));
  std::mt19937_64 rng = make_rng(seed, "datagen-dense");
  std::uniform_int_distribution<EntityId> ent(
      0, static_cast<EntityId>(n_entities - 1));
  // Guarantee coverage first, then fill with random distinct triples.
  for (std::size_t e = 0; e < n_entities; ++e)
    kg.add_triple({static_cast<EntityId>(e),
                   static_cast<RelationId>(e % n_relations),
                   static_cast<EntityId>((e + 1) % n_entities)});
  while (kg.num_triples() < n_triples) {
    Triple t{ent(rng), static_cast<RelationId>(rng() % n_relations), ent(rng)};
    if (t.head == t.tail) continue;
    kg.add_triple(t);
  }
  return kg;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("the kinship schema lists twelve relations and path rules") {
  const FamilySchema& s = family_schema();
  CHECK(s.relations.size() == 12);
  CHECK(s.relations.front() == "fatherOf");
  CHECK(s.relations.back() == "auntOf");
  CHECK_FALSE(s.closure_rules.empty());
  for (const Rule& r : s.closure_rules) {
    CHECK(r.head < 12);
    CHECK(r.body.size() >= 1);
    CHECK(r.body.size() <= 2);
  }
}

TEST_CASE("generated graphs are closed under every path rule") {
  std::mt19937_64 rng = make_rng(70, "datagen-closed");
  KnowledgeGraph kg = generate_family_kg(300, 5, rng);
  const auto rel_pairs = pairs_by_relation(kg);
  for (const Rule& rule : family_schema().closure_rules) {
    const PairSet derived = derive_once(rel_pairs, rule);
    for (const auto& p : derived) CHECK(rel_pairs[rule.head].count(p) == 1);
  }
}

TEST_CASE("generated facts carry no self-loops") {
  std::mt19937_64 rng = make_rng(71, "datagen-self");
  KnowledgeGraph kg = generate_family_kg(200, 4, rng);
  for (const Triple& t : kg.triples()) CHECK(t.head != t.tail);
}

TEST_CASE("gendered relation heads never overlap") {
  std::mt19937_64 rng = make_rng(72, "datagen-gender");
  KnowledgeGraph kg = generate_family_kg(400, 6, rng);
  const auto rel_pairs = pairs_by_relation(kg);
  const std::set<EntityId> male = heads_of(
      rel_pairs, kg,
      {"fatherOf", "husbandOf", "sonOf", "brotherOf", "grandfatherOf",
       "uncleOf"});
  const std::set<EntityId> female = heads_of(
      rel_pairs, kg,
      {"motherOf", "wifeOf", "daughterOf", "sisterOf", "grandmotherOf",
       "auntOf"});
  for (EntityId e : male) CHECK(female.count(e) == 0);
}

TEST_CASE("marriages appear in both directions") {
  std::mt19937_64 rng = make_rng(73, "datagen-marriage");
  KnowledgeGraph kg = generate_family_kg(150, 3, rng);
  const auto rel_pairs = pairs_by_relation(kg);
  const PairSet& husband = rel_pairs[kg.relation_id("husbandOf")];
  const PairSet& wife = rel_pairs[kg.relation_id("wifeOf")];
  CHECK(husband.size() == wife.size());
  for (const auto& [h, w] : husband) CHECK(wife.count({w, h}) == 1);
}

TEST_CASE("families form separate connected components") {
  std::mt19937_64 rng = make_rng(74, "datagen-components");
  KnowledgeGraph kg = generate_family_kg(120, 2, rng);
  const auto comps = oracle::components_bfs(kg.num_entities(), kg.triples());
  CHECK(comps.size() == 2);
}

TEST_CASE("default sizing lands in the expected bracket") {
  std::mt19937_64 rng = make_rng(75, "datagen-defaults");
  KnowledgeGraph kg = generate_family_kg(2300, 36, rng);
  CHECK(kg.num_relations() == 12);
  CHECK(kg.num_entities() >= 1800);
  CHECK(kg.num_entities() <= 2300);
  CHECK(kg.num_triples() >= 20000);
  CHECK(kg.num_triples() <= 25000);
}

TEST_CASE("an all-train ratio keeps every triple in train") {
  KnowledgeGraph kg = dense_kg(20, 3, 80, 76);
  std::mt19937_64 rng = make_rng(76, "datagen-alltrain");
  SplitRatios ratios{1.0, 0.0, 0.0};
  DatasetSplit split = split_dataset(kg, ratios, rng);
  CHECK(split.train.size() == kg.num_triples());
  CHECK(split.valid.empty());
  CHECK(split.test.empty());
}

TEST_CASE("a hundred triples split 72 / 8 / 20") {
  KnowledgeGraph kg = dense_kg(25, 4, 100, 77);
  std::mt19937_64 rng = make_rng(77, "datagen-hundred");
  DatasetSplit split = split_dataset(kg, SplitRatios{}, rng);
  CHECK(split.train.size() == 72);
  CHECK(split.valid.size() == 8);
  CHECK(split.test.size() == 20);
}

TEST_CASE("splits partition the triples and keep train covering") {
  for (std::uint64_t seed : {80u, 81u, 82u}) {
    KnowledgeGraph kg = dense_kg(30, 5, 150, seed);
    std::mt19937_64 rng = make_rng(seed, "datagen-part");
    DatasetSplit split = split_dataset(kg, SplitRatios{}, rng);

    std::multiset<Triple> combined;
    for (const auto* part : {&split.train, &split.valid, &split.test})
      for (const Triple& t : *part) combined.insert(t);
    const auto& all = kg.triples();
    CHECK(combined == std::multiset<Triple>(all.begin(), all.end()));

    std::set<EntityId> ents;
    std::set<RelationId> rels;
    for (const Triple& t : split.train) {
      ents.insert(t.head);
      ents.insert(t.tail);
      rels.insert(t.rel);
    }
    CHECK(ents.size() == kg.num_entities());
    CHECK(rels.size() == kg.num_relations());
  }
}

TEST_CASE("splitting is deterministic for a fixed seed") {
  KnowledgeGraph kg = dense_kg(20, 3, 90, 83);
  std::mt19937_64 rng_a = make_rng(83, "datagen-det");
  std::mt19937_64 rng_b = make_rng(83, "datagen-det");
  DatasetSplit a = split_dataset(kg, SplitRatios{}, rng_a);
  DatasetSplit b = split_dataset(kg, SplitRatios{}, rng_b);
  CHECK(a.train == b.train);
  CHECK(a.valid == b.valid);
  CHECK(a.test == b.test);
}

TEST_CASE("invalid ratios are rejected") {
  KnowledgeGraph kg = dense_kg(10, 2, 30, 84);
  std::mt19937_64 rng = make_rng(84, "datagen-bad");
  CHECK_THROWS_AS(split_dataset(kg, SplitRatios{0.5, 0.2, 0.2}, rng), Error);
  CHECK_THROWS_AS(split_dataset(kg, SplitRatios{1.2, -0.4, 0.2}, rng), Error);
}

TEST_CASE("tiny or empty family requests are rejected") {
  std::mt19937_64 rng = make_rng(85, "datagen-tiny");
  CHECK_THROWS_AS(generate_family_kg(3, 1, rng), Error);
  CHECK_THROWS_AS(generate_family_kg(100, 0, rng), Error);
}

TEST_CASE("saved datasets land in three readable files") {
  KnowledgeGraph kg = dense_kg(15, 2, 60, 86);
  std::mt19937_64 rng = make_rng(86, "datagen-save");
  DatasetSplit split = split_dataset(kg, SplitRatios{}, rng);
  testutil::TempDir dir("datagen_save");
  save_dataset(split, dir.file("out"));
  for (const auto& [name, part] :
       std::vector<std::pair<std::string, const std::vector<Triple>*>>{
           {"train.txt", &split.train},
           {"valid.txt", &split.valid},
           {"test.txt", &split.test}}) {
    const std::string text = testutil::read_file(dir.file("out/" + name));
    const std::size_t lines =
        static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    CHECK(lines == part->size());
  }
}

}  // TEST_SUITE
