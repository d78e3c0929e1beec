#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tsp/kg.hpp"

namespace tsp {

struct PartitionParams {
  std::size_t hops = 2;               // neighborhood depth L
  std::size_t n_min = 50;             // group size lower bound (strict)
  std::size_t n_max = 500;            // cap for merges and draw trimming
  std::size_t candidates_per_draw = 20;
  std::uint64_t seed = 0;
  // Test hook: when in [0,1], overrides every hop inclusion probability.
  double p_override = -1.0;
};

// One sampled neighborhood around a center entity. hop_sets[i] holds the
// (i+1)-hop entities, each sorted ascending; probs[i] is the inclusion
// probability used at that hop.
struct NeighborhoodDraw {
  EntityId center = 0;
  std::vector<std::vector<EntityId>> hop_sets;
  std::vector<double> probs;
  double d_avg = 0.0;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& h : hop_sets) n += h.size();
    return n;
  }
};

struct PartitionResult {
  std::vector<std::vector<EntityId>> groups;        // sorted entity sets
  std::vector<std::vector<Triple>> subgraph_triples;
  std::size_t n_relations = 0;
  std::uint64_t candidate_space = 0;  // sum over groups of n_i^2 * n_r
  std::uint64_t full_space = 0;       // n_e^2 * n_r
  PartitionParams params;
};

// Expands hop by hop from the center. Hop 1 uses probability 1; hop i uses
// sqrt(d_avg / (2 * |previous hop|)) clamped to [0,1]. Each frontier entity
// contributes its whole 1-hop neighborhood with that probability (one coin
// per frontier entity, drawn in ascending entity order). Only entities in
// `ungrouped` may enter, and an entity appears in at most one hop set.
NeighborhoodDraw sample_neighborhood(const KnowledgeGraph& kg, EntityId center,
                                     const std::vector<char>& ungrouped,
                                     const PartitionParams& params,
                                     std::mt19937_64& rng);

// First grouping stage. Small connected components (below n_min) are merged
// through a pending list and emitted once the merge exceeds n_min while
// staying under n_max; leftovers in the pending list are flushed as groups at
// the end. Remaining entities are visited in random order as draw centers;
// a draw larger than n_min becomes a group, whose center and inner hops
// leave the ungrouped set while last-hop boundary entities stay available
// for other groups. Each center takes candidates_per_draw draws and keeps
// the one closest in size to (n_min + n_max) / 2. Returns the groups and the
// still-ungrouped entity mask.
std::pair<std::vector<std::vector<EntityId>>, std::vector<char>>
primary_entity_grouping(const KnowledgeGraph& kg, const PartitionParams& params,
                        std::mt19937_64& rng);

// Second stage: empties the ungrouped set. Picks random ungrouped entities;
// an entity found in some group (smallest first) pulls its 1-hop neighbors
// into that group. An entity in no group joins the smallest group holding
// one of its neighbors, or founds a new group with its neighborhood.
void entity_group_finetune(const KnowledgeGraph& kg,
                           std::vector<std::vector<EntityId>>& groups,
                           std::vector<char>& ungrouped, std::mt19937_64& rng);

// Materializes induced subgraphs (all triples with both endpoints in the
// group). Groups whose induced graph is disconnected are repaired first:
// entities outside a group's main component move to the smallest other group
// containing one of their neighbors, and any remainder is split into its own
// connected groups.
PartitionResult construct_subgraphs(const KnowledgeGraph& kg,
                                    std::vector<std::vector<EntityId>> groups);

// Full partition pipeline driven by params.seed.
PartitionResult partition_best_of(const KnowledgeGraph& kg,
                                  const PartitionParams& params);

// Directory layout: manifest.json (params, stats, group membership by entity
// name) plus one triple file per subgraph.
void save_partition(const KnowledgeGraph& kg, const PartitionResult& result,
                    const std::string& dir);
PartitionResult load_partition(const KnowledgeGraph& kg,
                               const std::string& dir);

}  // namespace tsp
