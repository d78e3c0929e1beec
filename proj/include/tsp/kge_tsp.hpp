#pragma once

#include <cstddef>
#include <vector>

#include "tsp/kge.hpp"
#include "tsp/metrics.hpp"

namespace tsp {

// Exhaustive candidate scoring baseline: every (h,r,t) over the full
// vocabulary is scored, scores are normalized by a single softmax over the
// whole candidate space, and candidates outside the training set whose
// probability exceeds theta / |space| are emitted.
//
// The space is streamed twice instead of materialized: pass 1 accumulates the
// softmax normalizer with running-max rescaling, pass 2 emits qualifying
// candidates. With threads > 1 the head-entity range is chunked and partial
// normalizers are merged with the same rescaling rule; output order is
// deterministic for a fixed thread count.
std::vector<ScoredTriple> kge_tsp_predict(const KgeModel& model,
                                          const std::vector<Triple>& train,
                                          double theta_kge,
                                          std::size_t threads = 1);

// Shares both passes across several thresholds; result i corresponds to
// thetas[i]. Each result is sorted descending by score.
std::vector<std::vector<ScoredTriple>> kge_tsp_predict_multi(
    const KgeModel& model, const std::vector<Triple>& train,
    const std::vector<double>& thetas, std::size_t threads = 1);

}  // namespace tsp
