#include "tsp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "tsp/log.hpp"

namespace tsp {
namespace {

// Stable softmax of raw scores in place.
void softmax_inplace(std::vector<double>* v) {
  double mx = -1e300;
  for (double x : *v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : *v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : *v) x /= sum;
}

}  // namespace

std::vector<ScoredTriple> score_pair_relations(const KgeModel& kge, EntityId h,
                                               EntityId t, double theta_hrt) {
  const std::size_t n_r = kge.n_relations();
  std::vector<double> s(n_r);
  for (std::size_t r = 0; r < n_r; ++r)
    s[r] = kge.score(h, static_cast<RelationId>(r), t);
  softmax_inplace(&s);
  const double cutoff = theta_hrt / static_cast<double>(n_r);
  std::vector<ScoredTriple> out;
  for (std::size_t r = 0; r < n_r; ++r)
    if (s[r] > cutoff) out.push_back({{h, static_cast<RelationId>(r), t}, s[r]});
  return out;
}

std::vector<GphtPrediction> gpht_predict_multi(
    const PartitionResult& partition, const HtemModel& htem,
    const KgeModel& kge, double theta_ht,
    const std::vector<double>& theta_hrts, bool global_softmax) {
  const std::size_t n_r = kge.n_relations();

  // Stage 1: pair selection per subgraph, deduplicated by best likelihood.
  std::unordered_map<std::uint64_t, CandidatePair> best;
  for (std::size_t i = 0; i < partition.groups.size(); ++i) {
    const auto pairs = predict_pairs(htem, partition.groups[i],
                                     partition.subgraph_triples[i], theta_ht);
    for (const ScoredPair& p : pairs) {
      const std::uint64_t key = pack_pair(p.head, p.tail);
      auto it = best.find(key);
      if (it == best.end()) {
        best.emplace(key,
                     CandidatePair{p.head, p.tail, p.y,
                                   static_cast<std::uint32_t>(i)});
      } else if (p.y > it->second.y) {
        it->second.y = p.y;
        it->second.subgraph = static_cast<std::uint32_t>(i);
      }
    }
  }
  std::vector<CandidatePair> pairs;
  pairs.reserve(best.size());
  for (const auto& [key, p] : best) pairs.push_back(p);
  std::sort(pairs.begin(), pairs.end(),
            [](const CandidatePair& a, const CandidatePair& b) {
              return a.head != b.head ? a.head < b.head : a.tail < b.tail;
            });
  if (pairs.empty())
    log_warn("no entity pair passed the likelihood threshold ", theta_ht);

  // Stage 2: relation scores for every surviving pair.
  std::vector<std::vector<double>> raw(pairs.size(),
                                       std::vector<double>(n_r));
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (std::size_t r = 0; r < n_r; ++r)
      raw[i][r] =
          kge.score(pairs[i].head, static_cast<RelationId>(r), pairs[i].tail);

  std::size_t n_candidates = n_r;  // per-pair candidate set size
  if (global_softmax) {
    // One softmax across every candidate triple of every pair.
    double mx = -1e300;
    for (const auto& row : raw)
      for (double x : row) mx = std::max(mx, x);
    double sum = 0.0;
    for (auto& row : raw)
      for (double& x : row) {
        x = std::exp(x - mx);
        sum += x;
      }
    for (auto& row : raw)
      for (double& x : row) x /= sum;
    n_candidates = pairs.size() * n_r;
  } else {
    for (auto& row : raw) softmax_inplace(&row);
  }

  std::vector<GphtPrediction> results(theta_hrts.size());
  for (std::size_t k = 0; k < theta_hrts.size(); ++k) {
    GphtPrediction& pred = results[k];
    pred.params.theta_ht = theta_ht;
    pred.params.theta_hrt = theta_hrts[k];
    pred.params.global_softmax = global_softmax;
    pred.pairs = pairs;
    const double cutoff =
        n_candidates ? theta_hrts[k] / static_cast<double>(n_candidates) : 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      for (std::size_t r = 0; r < n_r; ++r)
        if (raw[i][r] > cutoff)
          pred.entries.push_back(
              {{pairs[i].head, static_cast<RelationId>(r), pairs[i].tail},
               raw[i][r]});
    sort_by_score(pred.entries);
    pred.stages.full_space = partition.full_space;
    pred.stages.post_partition = partition.candidate_space;
    pred.stages.post_pairs =
        static_cast<std::uint64_t>(pairs.size()) * static_cast<std::uint64_t>(n_r);
    pred.stages.final_count = pred.entries.size();
  }
  return results;
}

GphtPrediction gpht_predict(const PartitionResult& partition,
                            const HtemModel& htem, const KgeModel& kge,
                            const GphtParams& params) {
  return gpht_predict_multi(partition, htem, kge, params.theta_ht,
                            {params.theta_hrt}, params.global_softmax)[0];
}

void save_predictions(const KnowledgeGraph& kg,
                      const std::vector<ScoredTriple>& entries,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open ", path, " for writing");
  char buf[48];
  for (const ScoredTriple& e : entries) {
    std::snprintf(buf, sizeof(buf), "%.9g", e.score);
    out << kg.entity_name(e.triple.head) << '\t'
        << kg.relation_name(e.triple.rel) << '\t'
        << kg.entity_name(e.triple.tail) << '\t' << buf << '\n';
  }
  if (!out) fail("failed writing predictions to ", path);
}

std::vector<ScoredTriple> load_predictions(const KnowledgeGraph& kg,
                                           const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ", path);
  std::vector<ScoredTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string h, r, t;
    if (!(ss >> h >> r >> t))
      fail(path, ":", line_no, ": expected head, relation, tail [, score]");
    double score = 1.0;  // plain triple files evaluate as unit scores
    ss >> score;
    out.push_back({{kg.entity_id(h), kg.relation_id(r), kg.entity_id(t)},
                   score});
  }
  return out;
}

}  // namespace tsp
