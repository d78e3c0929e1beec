#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tsp/common.hpp"
#include "tsp/kge.hpp"
#include "tsp/kge_tsp.hpp"
#include "tsp/rng.hpp"

using namespace tsp;

namespace {

KgeModel random_model(std::size_t n_ent, std::size_t n_rel, std::uint64_t seed,
                      double scale = 1.0) {
  KgeModel m(KgeKind::kHake, 6, n_ent, n_rel, 0.5, 1.0);
  std::mt19937_64 rng = make_rng(seed, "kge-tsp");
  m.init_random(rng);
  if (scale != 1.0) {
    for (EntityId e = 0; e < n_ent; ++e)
      for (std::size_t k = 0; k < m.entity_width(); ++k)
        m.entity(e)[k] *= scale;
  }
  return m;
}

// Direct reference: score the whole space, softmax once, filter.
std::vector<ScoredTriple> direct_predict(const KgeModel& m,
                                         const std::vector<Triple>& train,
                                         double theta) {
  const std::size_t n_e = m.n_entities();
  const std::size_t n_r = m.n_relations();
  std::vector<double> raw;
  std::vector<Triple> cands;
  for (EntityId h = 0; h < n_e; ++h)
    for (RelationId r = 0; r < n_r; ++r)
      for (EntityId t = 0; t < n_e; ++t) {
        cands.push_back({h, r, t});
        raw.push_back(m.score(h, r, t));
      }
  const std::vector<double> p = oracle::softmax(raw);
  std::unordered_set<std::uint64_t> known;
  for (const Triple& t : train) known.insert(pack_triple(t));
  const double cutoff = theta / static_cast<double>(raw.size());
  std::vector<ScoredTriple> out;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (p[i] > cutoff && !known.count(pack_triple(cands[i])))
      out.push_back({cands[i], p[i]});
  sort_by_score(out);
  return out;
}

}  // namespace

TEST_SUITE("kge_tsp") {

TEST_CASE("streamed scores match a direct softmax over the space") {
  for (double scale : {1.0, 30.0}) {
    KgeModel m = random_model(5, 3, 11, scale);
    std::vector<Triple> train{{0, 0, 1}, {2, 1, 3}, {4, 2, 0}};
    const double theta = 0.5;
    auto got = kge_tsp_predict(m, train, theta);
    auto want = direct_predict(m, train, theta);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].triple == want[i].triple);
      CHECK(got[i].score ==
            doctest::Approx(want[i].score).epsilon(1e-9));
    }
  }
}

TEST_CASE("a two-entity world is countable by hand") {
  KgeModel m = random_model(2, 1, 12);
  const std::vector<Triple> train{{0, 0, 1}};
  auto got = kge_tsp_predict(m, train, 0.0);

  // Space is (h, t) in {0,1}^2 with one relation; one triple is known.
  REQUIRE(got.size() == 3);
  double train_p = 0.0;
  {
    std::vector<double> raw;
    for (EntityId h = 0; h < 2; ++h)
      for (EntityId t = 0; t < 2; ++t) raw.push_back(m.score(h, 0, t));
    // Normalizer includes the training triple even though it is not emitted.
    train_p = oracle::softmax(raw)[1];
  }
  double sum = 0.0;
  for (const ScoredTriple& st : got) {
    CHECK_FALSE(st.triple == train[0]);
    sum += st.score;
  }
  CHECK(sum == doctest::Approx(1.0 - train_p).epsilon(1e-9));
}

TEST_CASE("threshold at the space size empties the output") {
  KgeModel m = random_model(4, 2, 13);
  const double space = 4.0 * 4.0 * 2.0;
  CHECK(kge_tsp_predict(m, {}, space).empty());
}

TEST_CASE("emitted scores form a strict sub-distribution") {
  KgeModel m = random_model(6, 2, 14);
  std::vector<Triple> train{{0, 0, 1}, {1, 1, 2}};
  auto got = kge_tsp_predict(m, train, 0.0);
  REQUIRE_FALSE(got.empty());
  double sum = 0.0;
  for (const ScoredTriple& st : got) {
    CHECK(st.score > 0.0);
    CHECK(st.score < 1.0);
    sum += st.score;
  }
  CHECK(sum < 1.0);
  CHECK(sum > 0.0);
}

TEST_CASE("raising the threshold only removes candidates") {
  KgeModel m = random_model(5, 2, 15);
  std::vector<Triple> train{{0, 0, 1}};
  const std::vector<double> thetas{0.0, 0.5, 1.0, 2.0, 5.0};
  auto multi = kge_tsp_predict_multi(m, train, thetas);
  REQUIRE(multi.size() == thetas.size());
  for (std::size_t k = 1; k < multi.size(); ++k)
    CHECK(multi[k].size() <= multi[k - 1].size());

  std::unordered_set<std::uint64_t> loose;
  for (const ScoredTriple& st : multi[0]) loose.insert(pack_triple(st.triple));
  for (std::size_t k = 1; k < multi.size(); ++k)
    for (const ScoredTriple& st : multi[k])
      CHECK(loose.count(pack_triple(st.triple)) == 1);

  // Batched thresholds agree with one-shot runs.
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    auto single = kge_tsp_predict(m, train, thetas[k]);
    REQUIRE(single.size() == multi[k].size());
    for (std::size_t i = 0; i < single.size(); ++i) {
      CHECK(single[i].triple == multi[k][i].triple);
      CHECK(single[i].score == multi[k][i].score);
    }
  }
}

TEST_CASE("training triples are never emitted") {
  KgeModel m = random_model(6, 3, 16);
  std::vector<Triple> train;
  std::mt19937_64 rng = make_rng(16, "kge-tsp-train");
  std::uniform_int_distribution<EntityId> ent(0, 5);
  std::uniform_int_distribution<RelationId> rel(0, 2);
  for (int i = 0; i < 30; ++i) train.push_back({ent(rng), rel(rng), ent(rng)});
  std::unordered_set<std::uint64_t> known;
  for (const Triple& t : train) known.insert(pack_triple(t));

  auto got = kge_tsp_predict(m, train, 0.0);
  CHECK(got.size() == 6 * 6 * 3 - known.size());
  for (const ScoredTriple& st : got)
    CHECK_FALSE(known.count(pack_triple(st.triple)));
}

TEST_CASE("thread count does not change the prediction set") {
  KgeModel m = random_model(7, 2, 17);
  std::vector<Triple> train{{0, 0, 1}, {3, 1, 5}};
  auto one = kge_tsp_predict(m, train, 0.5, 1);
  for (std::size_t threads : {2u, 3u, 8u}) {
    auto many = kge_tsp_predict(m, train, 0.5, threads);
    REQUIRE(many.size() == one.size());
    std::map<Triple, double> a, b;
    for (const ScoredTriple& st : one) a[st.triple] = st.score;
    for (const ScoredTriple& st : many) b[st.triple] = st.score;
    REQUIRE(a.size() == b.size());
    for (const auto& [t, s] : a) {
      auto it = b.find(t);
      REQUIRE(it != b.end());
      CHECK(it->second == doctest::Approx(s).epsilon(1e-12));
    }
    // Same thread count twice is bit-identical.
    auto again = kge_tsp_predict(m, train, 0.5, threads);
    REQUIRE(again.size() == many.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].triple == many[i].triple);
      CHECK(again[i].score == many[i].score);
    }
  }
}

}  // TEST_SUITE
