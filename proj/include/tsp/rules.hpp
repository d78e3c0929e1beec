#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsp/kg.hpp"
#include "tsp/metrics.hpp"
#include "tsp/sparse_bool.hpp"

namespace tsp {

// One body atom of a chain rule. When inverse is set the atom matches edges
// in the reverse direction.
struct RuleAtom {
  RelationId rel = 0;
  bool inverse = false;

  friend auto operator<=>(const RuleAtom&, const RuleAtom&) = default;
};

// Chain rule head(x, z) <- body_1(x, y_1) ∧ ... ∧ body_k(y_{k-1}, z).
// The head is always a forward relation.
struct Rule {
  RelationId head = 0;
  std::vector<RuleAtom> body;

  std::uint64_t n_support = 0;  // pairs matching both body and head
  std::uint64_t n_body = 0;     // pairs matching the body chain
  std::uint64_t n_head = 0;     // pairs carrying the head relation
  double confidence = 0.0;      // n_support / n_body
  double head_coverage = 0.0;   // n_support / n_head

  bool same_shape(const Rule& o) const {
    return head == o.head && body == o.body;
  }
};

// Per-relation adjacency matrices over a fixed entity count, with transposes
// for inverse atoms.
class RelationMatrices {
 public:
  RelationMatrices(std::size_t n_entities, std::size_t n_relations,
                   const std::vector<Triple>& triples);

  const SparseBool& forward(RelationId r) const { return forward_[r]; }
  const SparseBool& atom(const RuleAtom& a) const {
    return a.inverse ? backward_[a.rel] : forward_[a.rel];
  }

  // Boolean product over the whole body chain.
  SparseBool body_product(const Rule& rule) const;

  std::size_t n_entities() const { return n_; }

 private:
  std::size_t n_ = 0;
  std::vector<SparseBool> forward_;
  std::vector<SparseBool> backward_;
};

// Samples candidate chain rules by closing random walks over the graph and
// its inverse edges. Each walk starts at a uniform entity e0 and takes up to
// max_len steps; a step first picks one of the relations leaving the current
// entity (either direction) uniformly, then a uniform tail under it. After
// every step ending at e, each triple (e0, r, e) yields the rule
// "r <- walked atoms" and each (e, r, e0) yields the reversed rule with every
// atom inverted. Bodies identical to their head atom are skipped, walks from
// dead-end entities are abandoned, and results are de-duplicated by ordered
// body. Quality fields are not filled in.
std::vector<Rule> sample_rules(const KnowledgeGraph& kg,
                               const std::vector<Triple>& triples,
                               std::size_t n_walks, std::size_t max_len,
                               std::mt19937_64& rng);

// Fills n_support / n_body / n_head / confidence / head_coverage for each
// rule by exact matrix computation over the given triples.
void score_rules(std::vector<Rule>& rules, const KnowledgeGraph& kg,
                 const std::vector<Triple>& triples);

// Keeps rules with confidence > theta_conf and head_coverage > theta_hc,
// sorted by descending confidence (ties by more support, then rule shape).
std::vector<Rule> filter_rules(const std::vector<Rule>& rules,
                               double theta_conf, double theta_hc);

struct RuleInferenceResult {
  std::vector<ScoredTriple> predictions;  // sorted by descending score
  std::vector<std::size_t> new_per_round;
  std::size_t rounds = 0;
};

// Applies rules to a closed set of triples until the newly derived count
// drops below stop_ratio times the previous round, nothing new appears, or
// max_rounds is hit. A triple derivable by several rules takes the highest
// confidence as its score. Derived triples join the working set, so later
// rounds can chain on earlier conclusions. Predictions exclude the input
// triples.
RuleInferenceResult rule_inference(const KnowledgeGraph& kg,
                                   const std::vector<Triple>& triples,
                                   const std::vector<Rule>& rules,
                                   double stop_ratio, std::size_t max_rounds);

// Text round trip: head<TAB>comma-joined body<TAB>support<TAB>confidence
// <TAB>head_coverage. Inverse atoms carry the standard inverse suffix.
void save_rules(const KnowledgeGraph& kg, const std::vector<Rule>& rules,
                const std::string& path);
std::vector<Rule> load_rules(const KnowledgeGraph& kg, const std::string& path);

}  // namespace tsp
