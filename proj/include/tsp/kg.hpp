#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tsp/common.hpp"

namespace tsp {

// A knowledge graph with interned entity and relation names. Triples refer
// to vocabulary by id; indices are built lazily on demand and invalidated by
// any mutation of the triple list.
class KnowledgeGraph {
 public:
  EntityId intern_entity(const std::string& name);
  RelationId intern_relation(const std::string& name);

  // Returns the id or throws if the name is unknown.
  EntityId entity_id(const std::string& name) const;
  RelationId relation_id(const std::string& name) const;
  bool has_entity(const std::string& name) const;
  bool has_relation(const std::string& name) const;

  const std::string& entity_name(EntityId id) const;
  const std::string& relation_name(RelationId id) const;

  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_relations() const { return relation_names_.size(); }
  std::size_t num_triples() const { return triples_.size(); }

  const std::vector<Triple>& triples() const { return triples_; }

  // Appends a triple. Returns false (and skips) if it is already present.
  bool add_triple(const Triple& t);
  bool contains(const Triple& t) const;

  // Out-edges (t, r) for a head entity and in-edges (h, r) for a tail entity.
  const std::vector<std::pair<EntityId, RelationId>>& out_edges(EntityId h) const;
  const std::vector<std::pair<EntityId, RelationId>>& in_edges(EntityId t) const;

  // All relations observed between an ordered entity pair.
  const std::vector<RelationId>& relations_between(EntityId h, EntityId t) const;

  // Distinct undirected neighbors of an entity, in first-seen order.
  const std::vector<EntityId>& neighbors(EntityId e) const;

  std::uint64_t degree(EntityId e) const;

  // Mean degree 2 * |triples| / |entities|.
  double average_degree() const;

 private:
  void ensure_indices() const;

  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::string, RelationId> relation_ids_;
  std::vector<Triple> triples_;
  std::unordered_set<std::uint64_t> triple_keys_;

  mutable bool indices_built_ = false;
  mutable std::vector<std::vector<std::pair<EntityId, RelationId>>> out_edges_;
  mutable std::vector<std::vector<std::pair<EntityId, RelationId>>> in_edges_;
  mutable std::unordered_map<std::uint64_t, std::vector<RelationId>> pair_relations_;
  mutable std::vector<std::vector<EntityId>> neighbors_;
  mutable std::vector<std::uint64_t> degrees_;
};

// Train, valid and test triples over one shared vocabulary.
struct DatasetSplit {
  KnowledgeGraph* kg = nullptr;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
};

// Names used when a graph is augmented for message passing.
inline constexpr const char* kInverseSuffix = "^-1";
inline constexpr const char* kSelfLoopRelation = "[selfloop]";

// Result of augmenting a triple list with inverse edges and self loops:
// for each (h, r, t) adds (t, r^-1, h), and for each entity e adds
// (e, [selfloop], e). New relation names are interned into the vocabulary.
struct AugmentedKG {
  std::vector<Triple> triples;
  std::size_t num_base_relations = 0;   // relations before augmentation
  RelationId selfloop_rel = 0;
  // inverse_of[r] maps an augmented relation id back to its base id; base
  // relations map to themselves.
  std::vector<RelationId> base_of;
  std::vector<bool> is_inverse;
};

// Throws if the vocabulary already contains augmentation relation names,
// which would mean the graph was augmented twice.
AugmentedKG add_inverse_and_selfloop(KnowledgeGraph& kg,
                                     const std::vector<Triple>& triples);

// Loads whitespace-delimited head<TAB>relation<TAB>tail rows. Lines that are
// empty are skipped. Malformed lines raise an error naming the line number.
// Duplicate triples are dropped with a warning.
std::vector<Triple> load_triples(KnowledgeGraph& kg, const std::string& path);

void save_triples(const KnowledgeGraph& kg, const std::vector<Triple>& triples,
                  const std::string& path);

// Loads train.txt / valid.txt / test.txt from a dataset directory into one
// shared vocabulary. valid.txt and test.txt are optional.
DatasetSplit load_dataset(KnowledgeGraph& kg, const std::string& dir);

// Undirected connected components of the triple graph over the full entity
// vocabulary; entities touched by no triple form singleton components. The
// result partitions the vocabulary. Components are sorted by ascending size,
// ties by smallest member id, and members are sorted.
std::vector<std::vector<EntityId>> connected_components(
    const KnowledgeGraph& kg, const std::vector<Triple>& triples);

}  // namespace tsp
