#include "tsp/kge_tsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <unordered_set>

#include "tsp/common.hpp"

namespace tsp {
namespace {

// Streaming log-sum-exp accumulator: tracks the running maximum and the sum
// of exp(f - max), rescaling the sum whenever the maximum moves.
struct StreamStat {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;

  void add(double f) {
    if (f > max) {
      sum = sum * std::exp(max - f) + 1.0;
      max = f;
    } else {
      sum += std::exp(f - max);
    }
  }

  void merge(const StreamStat& other) {
    if (other.sum == 0.0) return;
    if (sum == 0.0) {
      *this = other;
      return;
    }
    if (other.max > max) {
      sum = sum * std::exp(max - other.max) + other.sum;
      max = other.max;
    } else {
      sum += other.sum * std::exp(other.max - max);
    }
  }
};

std::vector<std::pair<std::size_t, std::size_t>> head_chunks(std::size_t n,
                                                             std::size_t parts) {
  parts = std::max<std::size_t>(1, std::min(parts, n ? n : 1));
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  const std::size_t base = n / parts;
  const std::size_t extra = n % parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    chunks.emplace_back(start, start + len);
    start += len;
  }
  return chunks;
}

}  // namespace

std::vector<std::vector<ScoredTriple>> kge_tsp_predict_multi(
    const KgeModel& model, const std::vector<Triple>& train,
    const std::vector<double>& thetas, std::size_t threads) {
  const std::size_t n_e = model.n_entities();
  const std::size_t n_r = model.n_relations();
  const double space = static_cast<double>(n_e) * static_cast<double>(n_e) *
                       static_cast<double>(n_r);
  std::vector<double> cutoffs(thetas.size());
  for (std::size_t i = 0; i < thetas.size(); ++i)
    cutoffs[i] = thetas[i] / space;
  const double min_cutoff =
      cutoffs.empty() ? std::numeric_limits<double>::infinity()
                      : *std::min_element(cutoffs.begin(), cutoffs.end());

  std::unordered_set<std::uint64_t> known;
  known.reserve(train.size() * 2);
  for (const Triple& t : train) known.insert(pack_triple(t));

  const auto chunks = head_chunks(n_e, threads);

  // Pass 1: normalizer.
  std::vector<StreamStat> stats(chunks.size());
  auto pass1 = [&](std::size_t c) {
    StreamStat st;
    for (std::size_t h = chunks[c].first; h < chunks[c].second; ++h)
      for (std::size_t r = 0; r < n_r; ++r)
        for (std::size_t t = 0; t < n_e; ++t)
          st.add(model.score(static_cast<EntityId>(h),
                             static_cast<RelationId>(r),
                             static_cast<EntityId>(t)));
    stats[c] = st;
  };
  if (chunks.size() == 1) {
    pass1(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t c = 0; c < chunks.size(); ++c)
      pool.emplace_back(pass1, c);
    for (auto& th : pool) th.join();
  }
  StreamStat total;
  for (const StreamStat& st : stats) total.merge(st);

  // Pass 2: emit candidates above the smallest cutoff, then split per theta.
  std::vector<std::vector<ScoredTriple>> buffers(chunks.size());
  auto pass2 = [&](std::size_t c) {
    auto& out = buffers[c];
    for (std::size_t h = chunks[c].first; h < chunks[c].second; ++h) {
      for (std::size_t r = 0; r < n_r; ++r) {
        for (std::size_t t = 0; t < n_e; ++t) {
          const double f = model.score(static_cast<EntityId>(h),
                                       static_cast<RelationId>(r),
                                       static_cast<EntityId>(t));
          const double s = std::exp(f - total.max) / total.sum;
          if (s <= min_cutoff) continue;
          const Triple cand{static_cast<EntityId>(h),
                            static_cast<RelationId>(r),
                            static_cast<EntityId>(t)};
          if (known.count(pack_triple(cand))) continue;
          out.push_back({cand, s});
        }
      }
    }
  };
  if (chunks.size() == 1) {
    pass2(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t c = 0; c < chunks.size(); ++c)
      pool.emplace_back(pass2, c);
    for (auto& th : pool) th.join();
  }

  std::vector<ScoredTriple> merged;
  for (auto& b : buffers) {
    merged.insert(merged.end(), b.begin(), b.end());
    b.clear();
  }

  std::vector<std::vector<ScoredTriple>> results(thetas.size());
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    for (const ScoredTriple& st : merged)
      if (st.score > cutoffs[i]) results[i].push_back(st);
    sort_by_score(results[i]);
  }
  return results;
}

std::vector<ScoredTriple> kge_tsp_predict(const KgeModel& model,
                                          const std::vector<Triple>& train,
                                          double theta_kge,
                                          std::size_t threads) {
  return kge_tsp_predict_multi(model, train, {theta_kge}, threads)[0];
}

}  // namespace tsp
