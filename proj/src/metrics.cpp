#include "tsp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace tsp {

void sort_by_score(std::vector<ScoredTriple>& preds) {
  std::sort(preds.begin(), preds.end(),
            [](const ScoredTriple& a, const ScoredTriple& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.triple < b.triple;
            });
}

const char* assumption_name(Assumption a) {
  return a == Assumption::kCwa ? "cwa" : "rs-powa";
}

std::vector<std::vector<double>> relation_similarity(
    std::size_t num_relations, const std::vector<Triple>& triples) {
  std::vector<std::unordered_set<std::uint64_t>> pairs(num_relations);
  for (const Triple& t : triples) {
    if (t.rel < num_relations) pairs[t.rel].insert(pack_pair(t.head, t.tail));
  }
  std::vector<std::vector<double>> sim(num_relations,
                                       std::vector<double>(num_relations, 0.0));
  for (std::size_t a = 0; a < num_relations; ++a) {
    if (pairs[a].empty()) continue;
    sim[a][a] = 1.0;
    for (std::size_t b = a + 1; b < num_relations; ++b) {
      if (pairs[b].empty()) continue;
      const auto& small = pairs[a].size() <= pairs[b].size() ? pairs[a] : pairs[b];
      const auto& big = pairs[a].size() <= pairs[b].size() ? pairs[b] : pairs[a];
      std::size_t inter = 0;
      for (std::uint64_t key : small) inter += big.count(key);
      const double s = std::max(
          static_cast<double>(inter) / static_cast<double>(pairs[a].size()),
          static_cast<double>(inter) / static_cast<double>(pairs[b].size()));
      sim[a][b] = s;
      sim[b][a] = s;
    }
  }
  return sim;
}

std::vector<Label> label_predictions(const std::vector<Triple>& predictions,
                                     const std::vector<Triple>& train,
                                     const std::vector<Triple>& test,
                                     std::size_t num_relations,
                                     Assumption assumption, double theta_sim) {
  std::unordered_set<std::uint64_t> test_keys;
  test_keys.reserve(test.size() * 2);
  for (const Triple& t : test) test_keys.insert(pack_triple(t));

  std::vector<Label> labels;
  labels.reserve(predictions.size());

  if (assumption == Assumption::kCwa) {
    for (const Triple& p : predictions) {
      labels.push_back(test_keys.count(pack_triple(p)) ? Label::kPositive
                                                       : Label::kNegative);
    }
    return labels;
  }

  std::vector<Triple> known;
  known.reserve(train.size() + test.size());
  known.insert(known.end(), train.begin(), train.end());
  known.insert(known.end(), test.begin(), test.end());
  const auto sim = relation_similarity(num_relations, known);

  std::unordered_map<std::uint64_t, std::vector<RelationId>> pair_rels;
  for (const Triple& t : known) {
    auto& rels = pair_rels[pack_pair(t.head, t.tail)];
    if (std::find(rels.begin(), rels.end(), t.rel) == rels.end())
      rels.push_back(t.rel);
  }

  for (const Triple& p : predictions) {
    if (test_keys.count(pack_triple(p))) {
      labels.push_back(Label::kPositive);
      continue;
    }
    // A non-test prediction is recognizably false only when the entity pair
    // already carries some relation that is dissimilar to the predicted one.
    // Pairs with no known relation, or only similar ones, stay unknown.
    bool negative = false;
    auto it = pair_rels.find(pack_pair(p.head, p.tail));
    if (it != pair_rels.end() && p.rel < num_relations) {
      for (RelationId r : it->second) {
        if (sim[p.rel][r] < theta_sim) {
          negative = true;
          break;
        }
      }
    }
    labels.push_back(negative ? Label::kNegative : Label::kUnknown);
  }
  return labels;
}

double jprecision(std::size_t n_wa_pos, std::size_t n_wa, std::size_t n_predict) {
  if (n_wa == 0 || n_predict == 0) return 0.0;
  const double a = static_cast<double>(n_wa_pos) / static_cast<double>(n_wa);
  const double b = static_cast<double>(n_wa_pos) / static_cast<double>(n_predict);
  return 0.5 * (a + b);
}

double strecall(std::size_t n_wa_pos, std::size_t n_test) {
  if (n_test == 0) fail("strecall needs a non-empty test set");
  return std::sqrt(static_cast<double>(n_wa_pos) / static_cast<double>(n_test));
}

double f_tsp(double jp, double sr) {
  const double denom = jp + sr;
  if (denom <= 0.0) return 0.0;
  return 2.0 * jp * sr / denom;
}

double rs_tsp(const std::vector<Label>& ranked_labels) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ranked_labels.size(); ++i) {
    const double w = 1.0 / static_cast<double>(i + 1);
    if (ranked_labels[i] == Label::kPositive) acc += w;
    else if (ranked_labels[i] == Label::kNegative) acc -= w;
  }
  return acc;
}

EvaluationReport evaluate(const std::vector<ScoredTriple>& predictions,
                          const DatasetSplit& split, std::size_t num_relations,
                          Assumption assumption, double theta_sim) {
  std::vector<ScoredTriple> ranked = predictions;
  sort_by_score(ranked);
  std::vector<Triple> triples;
  triples.reserve(ranked.size());
  for (const ScoredTriple& s : ranked) triples.push_back(s.triple);

  const auto labels = label_predictions(triples, split.train, split.test,
                                        num_relations, assumption, theta_sim);

  EvaluationReport rep;
  rep.n_predict = triples.size();
  for (Label l : labels) {
    if (l != Label::kUnknown) ++rep.n_wa;
    if (l == Label::kPositive) ++rep.n_wa_pos;
  }
  rep.jprecision = jprecision(rep.n_wa_pos, rep.n_wa, rep.n_predict);
  rep.strecall = strecall(rep.n_wa_pos, split.test.size());
  rep.f_tsp = f_tsp(rep.jprecision, rep.strecall);
  rep.rs_tsp = rs_tsp(labels);
  rep.assumption = assumption_name(assumption);
  rep.theta = theta_sim;
  return rep;
}

std::string report_to_json(const EvaluationReport& report) {
  nlohmann::ordered_json j;
  j["n_predict"] = report.n_predict;
  j["n_wa"] = report.n_wa;
  j["n_wa_pos"] = report.n_wa_pos;
  j["jprecision"] = report.jprecision;
  j["strecall"] = report.strecall;
  j["f_tsp"] = report.f_tsp;
  j["rs_tsp"] = report.rs_tsp;
  j["assumption"] = report.assumption;
  j["theta"] = report.theta;
  return j.dump(2);
}

void save_report(const EvaluationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write ", path);
  out << report_to_json(report) << '\n';
  if (!out) fail("error writing ", path);
}

}  // namespace tsp
