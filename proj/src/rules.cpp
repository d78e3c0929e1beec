#include "tsp/rules.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tsp/log.hpp"

namespace tsp {

RelationMatrices::RelationMatrices(std::size_t n_entities,
                                   std::size_t n_relations,
                                   const std::vector<Triple>& triples)
    : n_(n_entities) {
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> pairs(
      n_relations);
  for (const Triple& t : triples) pairs[t.rel].emplace_back(t.head, t.tail);
  forward_.reserve(n_relations);
  backward_.reserve(n_relations);
  for (std::size_t r = 0; r < n_relations; ++r) {
    forward_.push_back(SparseBool::from_pairs(n_, pairs[r]));
    backward_.push_back(forward_.back().transpose());
  }
}

SparseBool RelationMatrices::body_product(const Rule& rule) const {
  SparseBool acc = atom(rule.body.front());
  for (std::size_t i = 1; i < rule.body.size(); ++i) {
    acc = multiply(acc, atom(rule.body[i]));
  }
  return acc;
}

namespace {

struct RuleKey {
  RelationId head;
  std::vector<RuleAtom> body;
  bool operator<(const RuleKey& o) const {
    if (head != o.head) return head < o.head;
    return body < o.body;
  }
};

// Outgoing steps of the walk graph: forward and inverse views of each
// triple, grouped per entity by (relation, direction) so a step can pick the
// relation first and the tail second.
struct WalkGraph {
  std::vector<std::vector<std::pair<RuleAtom, std::vector<EntityId>>>> edges;
  explicit WalkGraph(std::size_t n_entities, const std::vector<Triple>& triples)
      : edges(n_entities) {
    std::vector<std::map<RuleAtom, std::vector<EntityId>>> grouped(n_entities);
    for (const Triple& t : triples) {
      grouped[t.head][{t.rel, false}].push_back(t.tail);
      grouped[t.tail][{t.rel, true}].push_back(t.head);
    }
    for (std::size_t e = 0; e < n_entities; ++e)
      edges[e].assign(grouped[e].begin(), grouped[e].end());
  }
};

std::vector<RuleAtom> reversed_inverted(const std::vector<RuleAtom>& body) {
  std::vector<RuleAtom> out;
  out.reserve(body.size());
  for (auto it = body.rbegin(); it != body.rend(); ++it)
    out.push_back({it->rel, !it->inverse});
  return out;
}

}  // namespace

std::vector<Rule> sample_rules(const KnowledgeGraph& kg,
                               const std::vector<Triple>& triples,
                               std::size_t n_walks, std::size_t max_len,
                               std::mt19937_64& rng) {
  std::vector<Rule> rules;
  if (triples.empty() || max_len == 0 || kg.num_entities() == 0) return rules;

  WalkGraph graph(kg.num_entities(), triples);
  std::unordered_map<std::uint64_t, std::vector<RelationId>> pair_rels;
  for (const Triple& t : triples)
    pair_rels[pack_pair(t.head, t.tail)].push_back(t.rel);

  std::uniform_int_distribution<EntityId> pick_start(
      0, static_cast<EntityId>(kg.num_entities() - 1));
  std::set<RuleKey> seen;

  auto emit = [&](RelationId head, const std::vector<RuleAtom>& body) {
    if (body.size() == 1 && !body[0].inverse && body[0].rel == head) return;
    if (!seen.insert({head, body}).second) return;
    Rule r;
    r.head = head;
    r.body = body;
    rules.push_back(std::move(r));
  };

  for (std::size_t walk = 0; walk < n_walks; ++walk) {
    const EntityId start = pick_start(rng);
    EntityId pos = start;
    std::vector<RuleAtom> body;
    for (std::size_t step = 0; step < max_len; ++step) {
      const auto& out = graph.edges[pos];
      if (out.empty()) break;
      std::uniform_int_distribution<std::size_t> pick_rel(0, out.size() - 1);
      const auto& [atom, tails] = out[pick_rel(rng)];
      std::uniform_int_distribution<std::size_t> pick_tail(0, tails.size() - 1);
      pos = tails[pick_tail(rng)];
      body.push_back(atom);

      if (auto it = pair_rels.find(pack_pair(start, pos));
          it != pair_rels.end()) {
        for (RelationId r : it->second) emit(r, body);
      }
      if (auto it = pair_rels.find(pack_pair(pos, start));
          it != pair_rels.end()) {
        const auto flipped = reversed_inverted(body);
        for (RelationId r : it->second) emit(r, flipped);
      }
    }
  }
  return rules;
}

void score_rules(std::vector<Rule>& rules, const KnowledgeGraph& kg,
                 const std::vector<Triple>& triples) {
  RelationMatrices mats(kg.num_entities(), kg.num_relations(), triples);
  for (Rule& rule : rules) {
    const SparseBool body = mats.body_product(rule);
    const SparseBool& head = mats.forward(rule.head);
    rule.n_body = body.nnz();
    rule.n_head = head.nnz();
    rule.n_support = intersect_count(body, head);
    rule.confidence =
        rule.n_body == 0 ? 0.0
                         : static_cast<double>(rule.n_support) /
                               static_cast<double>(rule.n_body);
    rule.head_coverage =
        rule.n_head == 0 ? 0.0
                         : static_cast<double>(rule.n_support) /
                               static_cast<double>(rule.n_head);
  }
}

std::vector<Rule> filter_rules(const std::vector<Rule>& rules,
                               double theta_conf, double theta_hc) {
  std::vector<Rule> kept;
  for (const Rule& r : rules) {
    if (r.n_body == 0) continue;  // body never fires: confidence undefined
    if (r.confidence > theta_conf && r.head_coverage > theta_hc)
      kept.push_back(r);
  }
  std::sort(kept.begin(), kept.end(), [](const Rule& a, const Rule& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.n_support != b.n_support) return a.n_support > b.n_support;
    if (a.head != b.head) return a.head < b.head;
    return a.body < b.body;
  });
  return kept;
}

RuleInferenceResult rule_inference(const KnowledgeGraph& kg,
                                   const std::vector<Triple>& triples,
                                   const std::vector<Rule>& rules,
                                   double stop_ratio, std::size_t max_rounds) {
  RuleInferenceResult result;

  std::unordered_set<std::uint64_t> known;
  known.reserve(triples.size() * 4);
  for (const Triple& t : triples) known.insert(pack_triple(t));

  std::vector<Triple> working = triples;
  std::unordered_map<std::uint64_t, double> scores;
  std::size_t prev_new = 0;

  for (std::size_t round = 0; round < max_rounds; ++round) {
    RelationMatrices mats(kg.num_entities(), kg.num_relations(), working);
    std::unordered_map<std::uint64_t, double> round_new;
    for (const Rule& rule : rules) {
      if (rule.body.empty()) continue;
      const SparseBool body = mats.body_product(rule);
      body.for_each([&](std::uint32_t h, std::uint32_t t) {
        const Triple cand{h, rule.head, t};
        const std::uint64_t key = pack_triple(cand);
        if (known.count(key)) return;
        auto [it, inserted] = round_new.emplace(key, rule.confidence);
        if (!inserted && rule.confidence > it->second)
          it->second = rule.confidence;
      });
    }

    const std::size_t n_new = round_new.size();
    result.new_per_round.push_back(n_new);
    ++result.rounds;
    if (n_new == 0) break;

    for (const auto& [key, conf] : round_new) {
      known.insert(key);
      const Triple t{static_cast<EntityId>(key >> 40),
                     static_cast<RelationId>((key >> 24) & 0xffffu),
                     static_cast<EntityId>(key & 0xffffffu)};
      working.push_back(t);
      scores.emplace(key, conf);
    }

    if (round > 0 && static_cast<double>(n_new) <
                         stop_ratio * static_cast<double>(prev_new))
      break;
    prev_new = n_new;
  }

  result.predictions.reserve(scores.size());
  for (const auto& [key, score] : scores) {
    const Triple t{static_cast<EntityId>(key >> 40),
                   static_cast<RelationId>((key >> 24) & 0xffffu),
                   static_cast<EntityId>(key & 0xffffffu)};
    result.predictions.push_back({t, score});
  }
  sort_by_score(result.predictions);
  return result;
}

namespace {
std::string atom_to_string(const KnowledgeGraph& kg, const RuleAtom& a) {
  std::string s = kg.relation_name(a.rel);
  if (a.inverse) s += kInverseSuffix;
  return s;
}

RuleAtom atom_from_string(const KnowledgeGraph& kg, const std::string& s,
                          const std::string& path, std::size_t line_no) {
  const std::string suffix = kInverseSuffix;
  if (s.size() > suffix.size() &&
      s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
    const std::string base = s.substr(0, s.size() - suffix.size());
    if (kg.has_relation(base)) return {kg.relation_id(base), true};
  }
  if (!kg.has_relation(s))
    fail(path, ":", line_no, ": unknown relation '", s, "'");
  return {kg.relation_id(s), false};
}
}  // namespace

void save_rules(const KnowledgeGraph& kg, const std::vector<Rule>& rules,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write ", path);
  char buf[64];
  for (const Rule& r : rules) {
    out << kg.relation_name(r.head) << '\t';
    for (std::size_t i = 0; i < r.body.size(); ++i) {
      if (i > 0) out << ',';
      out << atom_to_string(kg, r.body[i]);
    }
    std::snprintf(buf, sizeof(buf), "%llu\t%.9g\t%.9g",
                  static_cast<unsigned long long>(r.n_support), r.confidence,
                  r.head_coverage);
    out << '\t' << buf << '\n';
  }
  if (!out) fail("error writing ", path);
}

std::vector<Rule> load_rules(const KnowledgeGraph& kg,
                             const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ", path);
  std::vector<Rule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string head, body, support, conf, hc;
    if (!std::getline(ls, head, '\t') || !std::getline(ls, body, '\t') ||
        !std::getline(ls, support, '\t') || !std::getline(ls, conf, '\t') ||
        !std::getline(ls, hc, '\t'))
      fail(path, ":", line_no, ": expected 5 tab-separated fields");
    Rule r;
    if (!kg.has_relation(head))
      fail(path, ":", line_no, ": unknown relation '", head, "'");
    r.head = kg.relation_id(head);
    std::istringstream bs(body);
    std::string atom;
    while (std::getline(bs, atom, ',')) {
      if (atom.empty()) fail(path, ":", line_no, ": empty body atom");
      r.body.push_back(atom_from_string(kg, atom, path, line_no));
    }
    if (r.body.empty()) fail(path, ":", line_no, ": rule has no body");
    try {
      r.n_support = std::stoull(support);
      r.confidence = std::stod(conf);
      r.head_coverage = std::stod(hc);
    } catch (const std::exception&) {
      fail(path, ":", line_no, ": malformed numeric field");
    }
    rules.push_back(std::move(r));
  }
  return rules;
}

}  // namespace tsp
