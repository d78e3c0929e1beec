#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "doctest.h"
#include "oracles.hpp"
#include "tsp/common.hpp"
#include "tsp/htem.hpp"
#include "tsp/kge.hpp"
#include "tsp/metrics.hpp"
#include "tsp/partition.hpp"
#include "tsp/pipeline.hpp"
#include "tsp/rng.hpp"
#include "util.hpp"

using namespace tsp;

namespace {

KgeModel random_kge(std::size_t n_ent, std::size_t n_rel, std::uint64_t seed) {
  KgeModel m(KgeKind::kHake, 6, n_ent, n_rel, 0.5, 1.0);
  std::mt19937_64 rng = make_rng(seed, "pipe-kge");
  m.init_random(rng);
  return m;
}

HtemModel random_htem(std::size_t n_ent, std::size_t n_rel,
                      std::uint64_t seed) {
  HtemConfig c;
  c.kind = KgeKind::kHake;
  c.dim = 6;
  c.bases = 2;
  c.layers = 1;
  c.mlp_layers = 2;
  c.mlp_hidden = 8;
  HtemModel m(c, n_ent, n_rel);
  std::mt19937_64 rng = make_rng(seed, "pipe-htem");
  m.init_random(rng);
  return m;
}

// Two disjoint chain subgraphs over entities 0..11 with two relations.
PartitionResult disjoint_partition() {
  PartitionResult part;
  part.groups = {{0, 1, 2, 3, 4, 5}, {6, 7, 8, 9, 10, 11}};
  part.subgraph_triples = {
      {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}, {4, 0, 5}},
      {{6, 0, 7}, {7, 1, 8}, {8, 0, 9}, {9, 1, 10}, {10, 0, 11}}};
  part.n_relations = 2;
  part.full_space = 12ull * 12ull * 2ull;
  part.candidate_space = 2ull * 6ull * 6ull * 2ull;
  return part;
}

// Overlapping groups sharing entities 4..7.
PartitionResult overlapping_partition() {
  PartitionResult part;
  part.groups = {{0, 1, 2, 3, 4, 5, 6, 7}, {4, 5, 6, 7, 8, 9, 10, 11}};
  part.subgraph_triples = {
      {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}, {4, 0, 5}, {5, 1, 6},
       {6, 0, 7}},
      {{4, 0, 5}, {5, 1, 6}, {6, 0, 7}, {7, 1, 8}, {8, 0, 9}, {9, 1, 10},
       {10, 0, 11}}};
  part.n_relations = 2;
  part.full_space = 12ull * 12ull * 2ull;
  part.candidate_space = 2ull * 8ull * 8ull * 2ull;
  return part;
}

bool entries_sorted(const std::vector<ScoredTriple>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i - 1].score > v[i].score) continue;
    if (v[i - 1].score < v[i].score) return false;
    if (!(v[i - 1].triple < v[i].triple)) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("per-pair relation scores are a softmax of embedding scores") {
  KgeModel kge = random_kge(10, 5, 1);
  std::mt19937_64 rng = make_rng(2, "pipe-pairs");
  std::uniform_int_distribution<EntityId> pick(0, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const EntityId h = pick(rng);
    const EntityId t = pick(rng);
    std::vector<double> raw(5);
    for (RelationId r = 0; r < 5; ++r) raw[r] = kge.score(h, r, t);
    const std::vector<double> p = oracle::softmax(raw);

    const auto kept = score_pair_relations(kge, h, t, 0.7);
    const double cutoff = 0.7 / 5.0;
    std::size_t want = 0;
    for (double x : p)
      if (x > cutoff) ++want;
    CHECK(kept.size() == want);
    for (const ScoredTriple& e : kept) {
      CHECK(e.triple.head == h);
      CHECK(e.triple.tail == t);
      CHECK(e.score == doctest::Approx(p[e.triple.rel]).epsilon(1e-12));
      CHECK(e.score > cutoff);
    }
  }
}

TEST_CASE("a single-relation vocabulary keeps or drops on the threshold") {
  KgeModel kge = random_kge(4, 1, 3);
  auto kept = score_pair_relations(kge, 0, 2, 0.99);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 1.0);
  CHECK(score_pair_relations(kge, 0, 2, 1.0).empty());
}

TEST_CASE("identical relation rows spread probability uniformly") {
  KgeModel kge = random_kge(6, 2, 4);
  std::copy(kge.relation(0), kge.relation(0) + kge.relation_width(),
            kge.relation(1));
  auto kept = score_pair_relations(kge, 1, 4, 0.999);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kept[1].score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(score_pair_relations(kge, 1, 4, 1.0).empty());
}

TEST_CASE("a likelihood threshold of one yields nothing") {
  PartitionResult part = disjoint_partition();
  HtemModel htem = random_htem(12, 2, 5);
  KgeModel kge = random_kge(12, 2, 5);
  GphtParams params;
  params.theta_ht = 1.0;
  GphtPrediction pred = gpht_predict(part, htem, kge, params);
  CHECK(pred.pairs.empty());
  CHECK(pred.entries.empty());
  CHECK(pred.stages.post_pairs == 0);
  CHECK(pred.stages.final_count == 0);
  CHECK(pred.stages.full_space == part.full_space);
  CHECK(pred.stages.post_partition == part.candidate_space);
}

TEST_CASE("overlapping subgraphs deduplicate pairs by best likelihood") {
  PartitionResult part = overlapping_partition();
  HtemModel htem = random_htem(12, 2, 6);
  KgeModel kge = random_kge(12, 2, 6);
  GphtParams params;
  params.theta_ht = 0.2;
  GphtPrediction pred = gpht_predict(part, htem, kge, params);

  // Sorted strictly by (head, tail): implies uniqueness.
  for (std::size_t i = 1; i < pred.pairs.size(); ++i) {
    const CandidatePair& a = pred.pairs[i - 1];
    const CandidatePair& b = pred.pairs[i];
    CHECK((a.head < b.head || (a.head == b.head && a.tail < b.tail)));
  }

  // The recorded likelihood is the best over the producing subgraphs.
  std::map<std::pair<EntityId, EntityId>, double> best;
  for (std::size_t g = 0; g < part.groups.size(); ++g) {
    const auto pairs = predict_pairs(htem, part.groups[g],
                                     part.subgraph_triples[g], 0.2);
    for (const ScoredPair& p : pairs) {
      auto key = std::make_pair(p.head, p.tail);
      auto it = best.find(key);
      if (it == best.end() || p.y > it->second) best[key] = p.y;
    }
  }
  REQUIRE(pred.pairs.size() == best.size());
  for (const CandidatePair& p : pred.pairs) {
    auto it = best.find({p.head, p.tail});
    REQUIRE(it != best.end());
    CHECK(p.y == it->second);
    CHECK(p.subgraph < part.groups.size());
  }
}

TEST_CASE("predicted triples never repeat subgraph connections") {
  PartitionResult part = disjoint_partition();
  HtemModel htem = random_htem(12, 2, 7);
  KgeModel kge = random_kge(12, 2, 7);
  GphtParams params;
  params.theta_ht = 0.0;
  params.theta_hrt = 0.0;
  GphtPrediction pred = gpht_predict(part, htem, kge, params);
  REQUIRE_FALSE(pred.entries.empty());
  std::unordered_set<std::uint64_t> connected;
  for (const auto& triples : part.subgraph_triples)
    for (const Triple& t : triples) connected.insert(pack_pair(t.head, t.tail));
  for (const ScoredTriple& e : pred.entries) {
    CHECK(e.triple.head != e.triple.tail);
    CHECK_FALSE(connected.count(pack_pair(e.triple.head, e.triple.tail)));
  }
  CHECK(entries_sorted(pred.entries));
}

TEST_CASE("stage bookkeeping is exact") {
  PartitionResult part = disjoint_partition();
  HtemModel htem = random_htem(12, 2, 8);
  KgeModel kge = random_kge(12, 2, 8);
  GphtParams params;
  params.theta_ht = 0.3;
  params.theta_hrt = 0.8;
  GphtPrediction pred = gpht_predict(part, htem, kge, params);
  CHECK(pred.stages.full_space == part.full_space);
  CHECK(pred.stages.post_partition == part.candidate_space);
  CHECK(pred.stages.post_pairs == pred.pairs.size() * 2);
  CHECK(pred.stages.final_count == pred.entries.size());
  CHECK(pred.stages.final_count <= pred.stages.post_pairs);
  CHECK(pred.params.theta_ht == 0.3);
  CHECK(pred.params.theta_hrt == 0.8);
}

TEST_CASE("raising the relation threshold only removes entries") {
  PartitionResult part = overlapping_partition();
  HtemModel htem = random_htem(12, 2, 9);
  KgeModel kge = random_kge(12, 2, 9);
  const std::vector<double> thetas{0.0, 0.3, 0.6, 1.0, 1.5};
  const auto multi = gpht_predict_multi(part, htem, kge, 0.2, thetas);
  REQUIRE(multi.size() == thetas.size());
  REQUIRE_FALSE(multi[0].entries.empty());

  for (std::size_t k = 1; k < multi.size(); ++k)
    CHECK(multi[k].entries.size() <= multi[k - 1].entries.size());

  // Each stricter result is a subset of the loosest one.
  std::set<Triple> loose;
  for (const ScoredTriple& e : multi[0].entries) loose.insert(e.triple);
  for (std::size_t k = 1; k < multi.size(); ++k)
    for (const ScoredTriple& e : multi[k].entries)
      CHECK(loose.count(e.triple) == 1);

  // The batched form matches one-threshold runs exactly.
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    GphtParams params;
    params.theta_ht = 0.2;
    params.theta_hrt = thetas[k];
    GphtPrediction single = gpht_predict(part, htem, kge, params);
    REQUIRE(single.entries.size() == multi[k].entries.size());
    for (std::size_t i = 0; i < single.entries.size(); ++i) {
      CHECK(single.entries[i].triple == multi[k].entries[i].triple);
      CHECK(single.entries[i].score == multi[k].entries[i].score);
    }
  }
}

TEST_CASE("softmax mass is per pair by default and global in comparison mode") {
  PartitionResult part = disjoint_partition();
  HtemModel htem = random_htem(12, 2, 10);
  KgeModel kge = random_kge(12, 2, 10);

  GphtParams params;
  params.theta_ht = 0.0;
  params.theta_hrt = 0.0;
  GphtPrediction per_pair = gpht_predict(part, htem, kge, params);
  REQUIRE_FALSE(per_pair.pairs.empty());
  std::map<std::pair<EntityId, EntityId>, double> mass;
  for (const ScoredTriple& e : per_pair.entries)
    mass[{e.triple.head, e.triple.tail}] += e.score;
  CHECK(mass.size() == per_pair.pairs.size());
  for (const auto& [pair, sum] : mass)
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  params.global_softmax = true;
  GphtPrediction global = gpht_predict(part, htem, kge, params);
  double total = 0.0;
  for (const ScoredTriple& e : global.entries) total += e.score;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(global.entries.size() == per_pair.entries.size());
  CHECK(global.params.global_softmax);
}

TEST_CASE("prediction files round trip names and scores") {
  KnowledgeGraph kg;
  for (const char* e : {"ada", "bob", "cid", "dot"}) kg.intern_entity(e);
  for (const char* r : {"knows", "likes"}) kg.intern_relation(r);

  std::vector<ScoredTriple> entries{
      {{0, 0, 1}, 0.123456789},
      {{2, 1, 3}, 1.0 / 3.0},
      {{3, 0, 0}, 4.2e-7},
  };
  testutil::TempDir dir("pipe_io");
  const std::string path = dir.file("preds.txt");
  save_predictions(kg, entries, path);

  const std::string text = testutil::read_file(path);
  CHECK(text.find("ada\tknows\tbob\t0.123456789") != std::string::npos);
  CHECK(text.find("cid\tlikes\tdot\t") != std::string::npos);

  auto back = load_predictions(kg, path);
  REQUIRE(back.size() == entries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].triple == entries[i].triple);
    CHECK(back[i].score ==
          doctest::Approx(entries[i].score).epsilon(1e-9));
  }
}

TEST_CASE("plain triple files load with unit scores") {
  KnowledgeGraph kg;
  kg.intern_entity("a");
  kg.intern_entity("b");
  kg.intern_relation("r");
  testutil::TempDir dir("pipe_plain");
  const std::string path = dir.file("plain.txt");
  testutil::write_file(path, "a\tr\tb\r\n\nb\tr\ta\n");
  auto back = load_predictions(kg, path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].triple == Triple{0, 0, 1});
  CHECK(back[0].score == 1.0);
  CHECK(back[1].triple == Triple{1, 0, 0});
  CHECK(back[1].score == 1.0);
}

TEST_CASE("malformed prediction files are rejected") {
  KnowledgeGraph kg;
  kg.intern_entity("a");
  kg.intern_entity("b");
  kg.intern_relation("r");
  testutil::TempDir dir("pipe_bad");
  testutil::write_file(dir.file("short.txt"), "a r\n");
  CHECK_THROWS_AS(load_predictions(kg, dir.file("short.txt")), Error);
  testutil::write_file(dir.file("name.txt"), "a r zebra\n");
  CHECK_THROWS_AS(load_predictions(kg, dir.file("name.txt")), Error);
  CHECK_THROWS_AS(load_predictions(kg, dir.file("absent.txt")), Error);
}

}  // TEST_SUITE
