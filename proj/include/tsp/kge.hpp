#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "tsp/kg.hpp"

namespace tsp {

enum class KgeKind { kHake, kPairRE };

const char* kge_kind_name(KgeKind kind);

// Raw scoring over parameter slices, shared with the pair-decoder code that
// derives the same slices from graph-encoder outputs.
//
// Layouts (q parts each): entity [modulus | phase], relation
// [phase | modulus | bias]. Modulus inputs here are used as-is; absolute
// value mapping is the caller's concern.
double hake_score_parts(const double* ent_h, const double* rel,
                        const double* ent_t, std::size_t q, double lambda);
// PairRE: entity vectors of width `half`, relation [r_head | r_tail].
// norm_order selects the distance norm (1 or 2).
double pairre_score_parts(const double* ent_h, const double* rel,
                          const double* ent_t, std::size_t half,
                          int norm_order);

struct KgeConfig {
  KgeKind kind = KgeKind::kHake;
  std::size_t dim = 48;  // relation row width; entities derive from it
  double lambda = 0.5;
  double alpha = 1.0;          // self-adversarial temperature
  int pairre_norm = 1;
  double lr = 0.001;
  std::size_t epochs = 200;
  std::size_t batch_size = 512;
  std::size_t negatives = 16;
  std::size_t eval_every = 5;      // epochs between validation passes
  std::size_t decay_patience = 5;  // non-improving evals before lr decay
  double decay_factor = 0.8;
  bool adversarial_weight_grads = false;  // backprop through softmax weights
  bool use_sgd = false;                   // plain SGD instead of Adam (debug)
  std::uint64_t seed = 0;
};

// Embedding tables for either model family. dim is the relation row width;
// entity rows are 2*dim/3 wide for the modulus/phase model and dim/2 for the
// paired-projection model. Stored entity moduli may be negative; scoring
// maps them through absolute value so inferred relation divisions stay
// defined.
class KgeModel {
 public:
  KgeModel(KgeKind kind, std::size_t dim, std::size_t n_entities,
           std::size_t n_relations, double lambda, double alpha,
           int pairre_norm = 1);

  KgeKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t n_entities() const { return n_entities_; }
  std::size_t n_relations() const { return n_relations_; }
  double lambda() const { return lambda_; }
  double alpha() const { return alpha_; }
  int pairre_norm() const { return pairre_norm_; }

  std::size_t entity_width() const;
  std::size_t relation_width() const { return dim_; }

  double* entity(EntityId e) { return ents_.data() + e * entity_width(); }
  const double* entity(EntityId e) const {
    return ents_.data() + e * entity_width();
  }
  double* relation(RelationId r) { return rels_.data() + r * relation_width(); }
  const double* relation(RelationId r) const {
    return rels_.data() + r * relation_width();
  }

  std::vector<double>& entity_table() { return ents_; }
  std::vector<double>& relation_table() { return rels_; }
  const std::vector<double>& entity_table() const { return ents_; }
  const std::vector<double>& relation_table() const { return rels_; }

  double score(EntityId h, RelationId r, EntityId t) const;

  // Accumulates g * d(score)/d(parameter) into the two gradient tables,
  // which must match the parameter table sizes.
  void score_grad(EntityId h, RelationId r, EntityId t, double g,
                  std::vector<double>& grad_ents,
                  std::vector<double>& grad_rels) const;

  void init_random(std::mt19937_64& rng);
  void renormalize_entities();  // paired-projection model: unit L2 rows

  friend bool operator==(const KgeModel& a, const KgeModel& b);

 private:
  KgeKind kind_;
  std::size_t dim_;
  std::size_t n_entities_;
  std::size_t n_relations_;
  double lambda_;
  double alpha_;
  int pairre_norm_;
  std::vector<double> ents_;
  std::vector<double> rels_;
};

// Inferred relation between two embedded entities: for the modulus/phase
// model returns [modulus ratio | phase difference] (2q values); for the
// paired-projection model returns [h | t] unchanged (the attention form
// consumes them directly).
std::vector<double> infer_relation(const KgeModel& model, EntityId h,
                                   EntityId t);

// Per-relation attention scores for an entity pair, length n_relations.
std::vector<double> relation_attention_vector(const KgeModel& model,
                                              EntityId h, EntityId t);

struct TrainBatch {
  std::vector<Triple> positives;
  // negatives.size() == positives.size(); inner lists usually hold k
  // corruptions but may be shorter if sampling saturated.
  std::vector<std::vector<Triple>> negatives;
};

// Corrupts head or tail (fair coin) with uniform entities until the result
// leaves the known set; gives up on a corruption after bounded retries.
std::vector<Triple> negative_sample(
    const std::unordered_set<std::uint64_t>& known_keys, const Triple& triple,
    std::size_t k, std::size_t n_entities, std::mt19937_64& rng);

// Mean self-adversarial loss over the batch positives:
//   per positive, -log sigmoid(f_pos) - sum_i p_i log sigmoid(-f_neg_i)
// with p the alpha-tempered softmax over that positive's negative scores.
// The weights are treated as constants unless weight_grads is set.
// Accumulates exact gradients of the returned value into the tables.
double self_adversarial_loss(const KgeModel& model, const TrainBatch& batch,
                             std::vector<double>& grad_ents,
                             std::vector<double>& grad_rels,
                             bool weight_grads = false);

// Loss only (no gradients); used by finite-difference checks.
double self_adversarial_loss_value(const KgeModel& model,
                                   const TrainBatch& batch,
                                   bool weight_grads = false);

KgeModel train_kge(const KnowledgeGraph& kg, const DatasetSplit& split,
                   const KgeConfig& config);

void save_kge(const KgeModel& model, const std::string& path);
KgeModel load_kge(const std::string& path);

}  // namespace tsp
