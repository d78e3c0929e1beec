#pragma once

// Independent straight-line reference implementations used as test oracles.
// Everything here is deliberately naive: direct formula transcription, path
// enumeration, dense scans. Production code must agree with these.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "tsp/kg.hpp"
#include "tsp/rules.hpp"

namespace oracle {

// -‖|h_m| ∘ r_m − |t_m|‖2 − λ‖sin((h_p + r_p − t_p)/2)‖1 with entity rows
// [modulus | phase] (q each) and relation rows [phase | modulus | bias].
inline double hake_score(const std::vector<double>& ent_h,
                         const std::vector<double>& rel,
                         const std::vector<double>& ent_t, std::size_t q,
                         double lambda, bool abs_modulus) {
  double m2 = 0.0, p1 = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    const double hm = abs_modulus ? std::fabs(ent_h[j]) : ent_h[j];
    const double tm = abs_modulus ? std::fabs(ent_t[j]) : ent_t[j];
    const double diff = hm * rel[q + j] - tm;
    m2 += diff * diff;
    const double phase = ent_h[q + j] + rel[j] - ent_t[q + j];
    p1 += std::fabs(std::sin(phase / 2.0));
  }
  return -std::sqrt(m2) - lambda * p1;
}

// -‖h ∘ r_head − t ∘ r_tail‖ with relation rows [r_head | r_tail].
inline double pairre_score(const std::vector<double>& ent_h,
                           const std::vector<double>& rel,
                           const std::vector<double>& ent_t, std::size_t half,
                           int norm_order) {
  double acc = 0.0;
  for (std::size_t j = 0; j < half; ++j) {
    const double u = ent_h[j] * rel[j] - ent_t[j] * rel[half + j];
    acc += norm_order == 2 ? u * u : std::fabs(u);
  }
  return norm_order == 2 ? -std::sqrt(acc) : -acc;
}

// Plain stabilized softmax.
inline std::vector<double> softmax(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

// Central finite difference of a scalar function of one flat parameter
// vector, evaluated at params.
inline std::vector<double> central_fd(
    std::vector<double> params,
    const std::function<double(const std::vector<double>&)>& f, double step) {
  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + step;
    const double up = f(params);
    params[i] = keep - step;
    const double down = f(params);
    params[i] = keep;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Largest relative error between an analytic gradient and its FD estimate,
// with an absolute floor so near-zero components do not blow up the ratio.
inline double max_rel_err(const std::vector<double>& analytic,
                          const std::vector<double>& fd, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::fabs(analytic[i]), std::fabs(fd[i]), floor});
    worst = std::max(worst, std::fabs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

// Brute-force grounding of a chain rule by path enumeration: walks every
// body instantiation over the triple list and counts distinct (start, end)
// pairs, those also carrying the head relation, and head pairs.
struct RuleCounts {
  std::uint64_t support = 0;
  std::uint64_t body = 0;
  std::uint64_t head = 0;
};

inline RuleCounts ground_rule(const tsp::Rule& rule, std::size_t n_entities,
                              const std::vector<tsp::Triple>& triples) {
  using tsp::EntityId;
  std::vector<std::vector<std::pair<EntityId, EntityId>>> edges;  // per atom
  for (const tsp::RuleAtom& atom : rule.body) {
    std::vector<std::pair<EntityId, EntityId>> list;
    for (const tsp::Triple& t : triples) {
      if (t.rel != atom.rel) continue;
      if (atom.inverse) list.emplace_back(t.tail, t.head);
      else list.emplace_back(t.head, t.tail);
    }
    edges.push_back(std::move(list));
  }

  std::set<std::pair<EntityId, EntityId>> head_pairs;
  for (const tsp::Triple& t : triples)
    if (t.rel == rule.head) head_pairs.emplace(t.head, t.tail);

  std::set<std::pair<EntityId, EntityId>> body_pairs;
  std::vector<char> reach(n_entities, 0), next(n_entities, 0);
  for (std::size_t start = 0; start < n_entities; ++start) {
    std::fill(reach.begin(), reach.end(), 0);
    reach[start] = 1;
    for (const auto& atom_edges : edges) {
      std::fill(next.begin(), next.end(), 0);
      for (const auto& [src, dst] : atom_edges)
        if (reach[src]) next[dst] = 1;
      reach.swap(next);
    }
    for (std::size_t end = 0; end < n_entities; ++end)
      if (reach[end])
        body_pairs.emplace(static_cast<EntityId>(start),
                           static_cast<EntityId>(end));
  }

  RuleCounts counts;
  counts.body = body_pairs.size();
  counts.head = head_pairs.size();
  for (const auto& pair : body_pairs)
    if (head_pairs.count(pair)) ++counts.support;
  return counts;
}

// Connected components by repeated breadth-first search over an adjacency
// list (independent of the union-find in production code). Sorted the same
// way: ascending size, ties by smallest member; members ascending.
inline std::vector<std::vector<tsp::EntityId>> components_bfs(
    std::size_t n_entities, const std::vector<tsp::Triple>& triples) {
  using tsp::EntityId;
  std::vector<std::vector<EntityId>> adj(n_entities);
  for (const tsp::Triple& t : triples) {
    adj[t.head].push_back(t.tail);
    adj[t.tail].push_back(t.head);
  }
  std::vector<char> seen(n_entities, 0);
  std::vector<std::vector<EntityId>> comps;
  for (std::size_t s = 0; s < n_entities; ++s) {
    if (seen[s]) continue;
    std::vector<EntityId> comp;
    std::vector<EntityId> queue{static_cast<EntityId>(s)};
    seen[s] = 1;
    while (!queue.empty()) {
      const EntityId e = queue.back();
      queue.pop_back();
      comp.push_back(e);
      for (EntityId nb : adj[e]) {
        if (!seen[nb]) {
          seen[nb] = 1;
          queue.push_back(nb);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  std::sort(comps.begin(), comps.end(),
            [](const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
              if (a.size() != b.size()) return a.size() < b.size();
              return a.front() < b.front();
            });
  return comps;
}

// Random KG helper: n_entities named e0.., n_relations named r0.., and about
// n_triples distinct uniform triples.
inline tsp::KnowledgeGraph random_kg(std::size_t n_entities,
                                     std::size_t n_relations,
                                     std::size_t n_triples,
                                     std::mt19937_64& rng) {
  tsp::KnowledgeGraph kg;
  for (std::size_t e = 0; e < n_entities; ++e)
    kg.intern_entity("e" + std::to_string(e));
  for (std::size_t r = 0; r < n_relations; ++r)
    kg.intern_relation("r" + std::to_string(r));
  std::uniform_int_distribution<tsp::EntityId> pe(
      0, static_cast<tsp::EntityId>(n_entities - 1));
  std::uniform_int_distribution<tsp::RelationId> pr(
      0, static_cast<tsp::RelationId>(n_relations - 1));
  for (std::size_t i = 0; i < n_triples; ++i)
    kg.add_triple({pe(rng), pr(rng), pe(rng)});
  return kg;
}

}  // namespace oracle
