#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsp/htem.hpp"
#include "tsp/kge.hpp"
#include "tsp/metrics.hpp"
#include "tsp/partition.hpp"

namespace tsp {

// Per-pair relation scoring: softmax over {(h, r, t) | r in R} of the
// embedding score, keeping triples with probability above theta_hrt / n_r.
std::vector<ScoredTriple> score_pair_relations(const KgeModel& kge, EntityId h,
                                               EntityId t, double theta_hrt);

struct GphtParams {
  double theta_ht = 0.3;
  double theta_hrt = 1.0;
  // Normalize the relation softmax over all candidate triples of all pairs
  // instead of per pair (comparison mode; the per-pair form is the default).
  bool global_softmax = false;
};

struct StageCounts {
  std::uint64_t full_space = 0;       // n_e^2 * n_r
  std::uint64_t post_partition = 0;   // sum of n_i^2 * n_r
  std::uint64_t post_pairs = 0;       // |selected pairs| * n_r
  std::uint64_t final_count = 0;      // emitted predictions
};

// Candidate pair with the subgraph that produced its best likelihood.
struct CandidatePair {
  EntityId head = 0;
  EntityId tail = 0;
  double y = 0.0;
  std::uint32_t subgraph = 0;
};

struct GphtPrediction {
  std::vector<ScoredTriple> entries;  // sorted descending, ties by triple
  std::vector<CandidatePair> pairs;   // deduplicated, sorted by (head, tail)
  StageCounts stages;
  GphtParams params;
};

// Full prediction stack: pair selection per subgraph with the likelihood
// model, pair deduplication across overlapping subgraphs (max score wins),
// then relation scoring of each surviving pair. Output never contains a
// training triple because selected pairs are unconnected in their subgraphs.
GphtPrediction gpht_predict(const PartitionResult& partition,
                            const HtemModel& htem, const KgeModel& kge,
                            const GphtParams& params);

// Shares pair selection and softmax evaluation across several relation
// thresholds; result i corresponds to theta_hrts[i]. theta_ht is fixed.
std::vector<GphtPrediction> gpht_predict_multi(
    const PartitionResult& partition, const HtemModel& htem,
    const KgeModel& kge, double theta_ht,
    const std::vector<double>& theta_hrts, bool global_softmax = false);

// Prediction file: head TAB relation TAB tail TAB score (9 significant
// digits), one line per entry, in the entry order given.
void save_predictions(const KnowledgeGraph& kg,
                      const std::vector<ScoredTriple>& entries,
                      const std::string& path);
std::vector<ScoredTriple> load_predictions(const KnowledgeGraph& kg,
                                           const std::string& path);

}  // namespace tsp
