#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tsp/kge.hpp"
#include "tsp/kg.hpp"
#include "tsp/partition.hpp"

namespace tsp {

struct HtemConfig {
  KgeKind kind = KgeKind::kHake;
  std::size_t dim = 48;        // encoder width; relation slices derive from it
  std::size_t bases = 8;       // relation basis vectors
  std::size_t layers = 1;      // graph encoder depth
  std::size_t mlp_layers = 2;  // decoder depth including the final scalar map
  std::size_t mlp_hidden = 64;
  double lambda = 0.5;         // phase weight of the truth-value term
  bool entity_attn = true;
  bool relation_attn = true;
  double dropout = 0.1;
  double leaky_slope = 0.01;
  double kge_weight = 1.0;     // weight of the truth-value term
  double query_fraction = 0.2;
  double negatives_per_positive = 1.0;
  double lr = 3e-5;
  std::size_t passes = 60;      // full sweeps over the subgraph list
  std::size_t eval_every = 10;  // passes between validation checks
  std::uint64_t seed = 0;
};

// Pair-likelihood model: a relational graph encoder with per-direction
// weights and basis-mixed relation embeddings, followed by an entity/relation
// attention decoder. All parameters live in one flat vector so optimizer and
// finite-difference tooling can treat the model uniformly.
class HtemModel {
 public:
  struct Tensor {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
  };

  HtemModel(const HtemConfig& config, std::size_t n_entities,
            std::size_t n_base_relations);

  const HtemConfig& config() const { return config_; }
  std::size_t n_entities() const { return n_entities_; }
  std::size_t n_relations() const { return n_relations_; }
  std::size_t n_aug_relations() const { return 2 * n_relations_ + 1; }
  std::size_t dim() const { return config_.dim; }

  // Width of the entity vector handed to the relation-attention scorer.
  std::size_t kge_entity_width() const;
  std::size_t decoder_input_width() const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  // Tensor views into the flat parameter vector (and into any equally sized
  // gradient vector via the offset). Direction index: 0 forward, 1 inverse,
  // 2 self-loop.
  double* ent_embed() { return at("ent_embed"); }
  double* basis() { return at("basis"); }
  double* basis_mix() { return at("basis_mix"); }
  double* w_dir(std::size_t layer, int dir);
  double* w_rel(std::size_t layer);
  double* w_query() { return at("w_query"); }
  double* w_key() { return at("w_key"); }
  double* w_elem() { return at("w_elem"); }
  double* mlp(std::size_t layer);
  const double* ent_embed() const { return at("ent_embed"); }
  const double* basis() const { return at("basis"); }
  const double* basis_mix() const { return at("basis_mix"); }
  const double* w_dir(std::size_t layer, int dir) const;
  const double* w_rel(std::size_t layer) const;
  const double* w_query() const { return at("w_query"); }
  const double* w_key() const { return at("w_key"); }
  const double* w_elem() const { return at("w_elem"); }
  const double* mlp(std::size_t layer) const;

  std::size_t offset_of(const std::string& name) const;
  std::size_t mlp_in(std::size_t layer) const;
  std::size_t mlp_out(std::size_t layer) const;

  void init_random(std::mt19937_64& rng);

  friend bool operator==(const HtemModel& a, const HtemModel& b);

 private:
  double* at(const std::string& name);
  const double* at(const std::string& name) const;

  HtemConfig config_;
  std::size_t n_entities_ = 0;
  std::size_t n_relations_ = 0;
  std::vector<Tensor> tensors_;
  std::vector<double> params_;
};

// One training sample: a subgraph with its triples split into an encoding
// (support) part and a scoring (query) part, plus sampled unconnected pairs.
struct SubgraphEpisode {
  std::vector<EntityId> entities;  // sorted global ids
  std::vector<Triple> support;
  std::vector<Triple> query;
  std::vector<std::pair<EntityId, EntityId>> negatives;
};

// Splits subgraph triples into support and query uniformly at random and
// samples ratio * |query| unconnected ordered pairs as negatives.
SubgraphEpisode make_episode(const std::vector<EntityId>& entities,
                             const std::vector<Triple>& triples,
                             double query_fraction, double neg_ratio,
                             std::mt19937_64& rng);

// Encoder pass over an entity set given support triples (augmented
// internally with inverse and self-loop edges). Exposed mainly for tests;
// returns final-layer entity rows in the order of `entities` followed by the
// augmented relation rows.
struct EncoderOutput {
  std::vector<double> entity_reps;    // n_local x dim
  std::vector<double> relation_reps;  // n_aug x dim
};
EncoderOutput compgcn_forward(const HtemModel& model,
                              const std::vector<EntityId>& entities,
                              const std::vector<Triple>& support);

struct HtemLoss {
  double total = 0.0;
  double positive_term = 0.0;
  double negative_term = 0.0;
  double kge_term = 0.0;
};

// Full episode loss with exact gradients accumulated into `grads` (sized
// like model.params()). Dropout draws from `rng` when training is set;
// evaluation passes are dropout-free and deterministic.
HtemLoss htem_loss(const HtemModel& model, const SubgraphEpisode& episode,
                   std::vector<double>* grads, std::mt19937_64* rng,
                   bool training);

// Read-only pair scorer over one subgraph: runs the encoder on the full
// subgraph triple set once, then serves y scores and attention values for
// arbitrary in-subgraph pairs with dropout off.
class HtemScorer {
 public:
  HtemScorer(const HtemModel& model, const std::vector<EntityId>& entities,
             const std::vector<Triple>& triples);

  // Global ids; both must belong to the subgraph.
  double score(EntityId h, EntityId t) const;
  double entity_attention(EntityId h, EntityId t) const;
  std::vector<double> relation_attention(EntityId h, EntityId t) const;

  const std::vector<EntityId>& entities() const { return entities_; }

 private:
  std::size_t local(EntityId e) const;

  const HtemModel& model_;
  std::vector<EntityId> entities_;
  std::vector<double> ent_reps_;   // n x d final layer
  std::vector<double> rel_reps_;   // n_aug x d final layer
  std::vector<double> kge_ent_;    // n x kge width (w_elem applied)
  std::vector<double> keys_;       // n x d
  std::vector<double> queries_;    // n x d
  std::vector<double> mm_cache_;   // modulus ratio rows, n_rel x q
  mutable std::vector<double> att_denom_;  // per head: softmax denominator
  mutable std::vector<double> att_max_;    // per head: row max for stability
  mutable std::vector<char> att_ready_;
};

// Ordered entity pairs of one subgraph with no triple between them (head to
// tail direction), scored above the threshold.
struct ScoredPair {
  EntityId head = 0;
  EntityId tail = 0;
  double y = 0.0;
};
std::vector<ScoredPair> predict_pairs(const HtemModel& model,
                                      const std::vector<EntityId>& entities,
                                      const std::vector<Triple>& triples,
                                      double theta_ht);

// Episodic trainer over all partition subgraphs. Validation triples (pairs
// that exist but are held out) drive best-checkpoint selection when present.
HtemModel train_htem(const PartitionResult& partition,
                     const std::vector<Triple>& valid, std::size_t n_entities,
                     std::size_t n_base_relations, const HtemConfig& config);

void save_htem(const HtemModel& model, const std::string& path);
HtemModel load_htem(const std::string& path);

}  // namespace tsp
