#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tsp/kg.hpp"

namespace tsp {

struct ScoredTriple {
  Triple triple;
  double score = 0.0;
};

// Sorts by descending score; ties broken by ascending head, relation, tail
// ids so output order is reproducible.
void sort_by_score(std::vector<ScoredTriple>& preds);

enum class Assumption { kCwa, kRsPowa };
enum class Label { kPositive, kNegative, kUnknown };

const char* assumption_name(Assumption a);

// Pairwise relation similarity from shared entity-pair sets. For relations
// r and r' with pair sets P_r and P_r', similarity is the larger of
// |P_r ∩ P_r'| / |P_r| and |P_r ∩ P_r'| / |P_r'|. Relations with empty pair
// sets have similarity 0 to everything (and to themselves).
std::vector<std::vector<double>> relation_similarity(
    std::size_t num_relations, const std::vector<Triple>& triples);

// Labels each prediction. Under the closed-world assumption a prediction is
// positive iff it appears in the test set, otherwise negative. Under the
// relation-similarity partial-open-world assumption a prediction absent from
// the test set is negative when the same entity pair carries some relation
// r' in train or test with similarity(r, r') below theta_sim; otherwise
// (no known relation on the pair, or only similar ones) its truth value is
// unknown. Labels are returned in prediction order.
std::vector<Label> label_predictions(const std::vector<Triple>& predictions,
                                     const std::vector<Triple>& train,
                                     const std::vector<Triple>& test,
                                     std::size_t num_relations,
                                     Assumption assumption, double theta_sim);

// Balanced precision: the average of |WA+| / |WA| and |WA+| / |predictions|,
// where WA is the set of labeled (non-unknown) predictions and WA+ its
// positive subset. Zero when either denominator is zero.
double jprecision(std::size_t n_wa_pos, std::size_t n_wa, std::size_t n_predict);

// Square-root recall sqrt(|WA+| / |test|). Throws when the test set is
// empty: recall against nothing is undefined.
double strecall(std::size_t n_wa_pos, std::size_t n_test);

// Harmonic mean of the two scores above; zero when both are zero.
double f_tsp(double jp, double sr);

// Rank-sensitive score of a label sequence ordered best-first: position i
// (1-based) contributes +1/i for a positive, -1/i for a negative, and 0 for
// an unknown. Unknowns still occupy their rank.
double rs_tsp(const std::vector<Label>& ranked_labels);

struct EvaluationReport {
  std::size_t n_predict = 0;
  std::size_t n_wa = 0;
  std::size_t n_wa_pos = 0;
  double jprecision = 0.0;
  double strecall = 0.0;
  double f_tsp = 0.0;
  double rs_tsp = 0.0;
  std::string assumption;
  double theta = 0.0;
};

// Full evaluation of a scored prediction set against a dataset split.
// Predictions are re-sorted internally, so input order does not matter.
EvaluationReport evaluate(const std::vector<ScoredTriple>& predictions,
                          const DatasetSplit& split, std::size_t num_relations,
                          Assumption assumption, double theta_sim);

std::string report_to_json(const EvaluationReport& report);
void save_report(const EvaluationReport& report, const std::string& path);

}  // namespace tsp
