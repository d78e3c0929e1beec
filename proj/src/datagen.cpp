#include "tsp/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "tsp/log.hpp"

namespace tsp {
namespace {

enum Rel : RelationId {
  kFatherOf = 0,
  kMotherOf,
  kHusbandOf,
  kWifeOf,
  kSonOf,
  kDaughterOf,
  kBrotherOf,
  kSisterOf,
  kGrandfatherOf,
  kGrandmotherOf,
  kUncleOf,
  kAuntOf,
  kNumFamilyRels
};

Rule path_rule(RelationId head, std::vector<RuleAtom> body) {
  Rule r;
  r.head = head;
  r.body = std::move(body);
  return r;
}

FamilySchema build_schema() {
  FamilySchema s;
  s.relations = {"fatherOf",      "motherOf",      "husbandOf", "wifeOf",
                 "sonOf",         "daughterOf",    "brotherOf", "sisterOf",
                 "grandfatherOf", "grandmotherOf", "uncleOf",   "auntOf"};
  auto fwd = [](RelationId r) { return RuleAtom{r, false}; };
  auto inv = [](RelationId r) { return RuleAtom{r, true}; };
  auto& rules = s.closure_rules;
  rules.push_back(path_rule(kWifeOf, {inv(kHusbandOf)}));
  rules.push_back(path_rule(kHusbandOf, {inv(kWifeOf)}));
  rules.push_back(path_rule(kFatherOf, {fwd(kHusbandOf), fwd(kMotherOf)}));
  rules.push_back(path_rule(kMotherOf, {fwd(kWifeOf), fwd(kFatherOf)}));
  rules.push_back(path_rule(kBrotherOf, {fwd(kSonOf), fwd(kFatherOf)}));
  rules.push_back(path_rule(kBrotherOf, {fwd(kSonOf), fwd(kMotherOf)}));
  rules.push_back(path_rule(kSisterOf, {fwd(kDaughterOf), fwd(kFatherOf)}));
  rules.push_back(path_rule(kSisterOf, {fwd(kDaughterOf), fwd(kMotherOf)}));
  rules.push_back(
      path_rule(kGrandfatherOf, {fwd(kFatherOf), fwd(kFatherOf)}));
  rules.push_back(
      path_rule(kGrandfatherOf, {fwd(kFatherOf), fwd(kMotherOf)}));
  rules.push_back(
      path_rule(kGrandmotherOf, {fwd(kMotherOf), fwd(kFatherOf)}));
  rules.push_back(
      path_rule(kGrandmotherOf, {fwd(kMotherOf), fwd(kMotherOf)}));
  rules.push_back(path_rule(kUncleOf, {fwd(kBrotherOf), fwd(kFatherOf)}));
  rules.push_back(path_rule(kUncleOf, {fwd(kBrotherOf), fwd(kMotherOf)}));
  rules.push_back(path_rule(kAuntOf, {fwd(kSisterOf), fwd(kFatherOf)}));
  rules.push_back(path_rule(kAuntOf, {fwd(kSisterOf), fwd(kMotherOf)}));
  rules.push_back(path_rule(kUncleOf, {fwd(kHusbandOf), fwd(kAuntOf)}));
  rules.push_back(path_rule(kAuntOf, {fwd(kWifeOf), fwd(kUncleOf)}));
  rules.push_back(path_rule(kSonOf, {fwd(kBrotherOf), fwd(kSonOf)}));
  rules.push_back(path_rule(kSonOf, {fwd(kBrotherOf), fwd(kDaughterOf)}));
  rules.push_back(path_rule(kDaughterOf, {fwd(kSisterOf), fwd(kSonOf)}));
  rules.push_back(path_rule(kDaughterOf, {fwd(kSisterOf), fwd(kDaughterOf)}));
  return s;
}

// Fact store with per-relation adjacency, supporting delta-driven closure.
class ClosureEngine {
 public:
  explicit ClosureEngine(std::size_t n_rel)
      : present_(n_rel), fwd_(n_rel), rev_(n_rel), delta_(n_rel) {}

  bool add(RelationId r, EntityId x, EntityId y) {
    if (x == y) return false;
    if (!present_[r].insert(pack_pair(x, y)).second) return false;
    fwd_[r][x].push_back(y);
    rev_[r][y].push_back(x);
    delta_[r].emplace_back(x, y);
    return true;
  }

  // Runs every rule to a fixpoint using the pending delta lists.
  void close(const std::vector<Rule>& rules) {
    std::vector<std::vector<std::pair<EntityId, EntityId>>> delta =
        std::move(delta_);
    delta_.assign(present_.size(), {});
    while (true) {
      std::vector<std::tuple<RelationId, EntityId, EntityId>> derived;
      for (const Rule& rule : rules) {
        if (rule.body.size() == 1) {
          const RuleAtom& a = rule.body[0];
          for (const auto& [x, y] : delta[a.rel]) {
            if (a.inverse)
              derived.emplace_back(rule.head, y, x);
            else
              derived.emplace_back(rule.head, x, y);
          }
        } else if (rule.body.size() == 2) {
          const RuleAtom& a = rule.body[0];
          const RuleAtom& b = rule.body[1];
          // New facts in the first atom joined against everything in the
          // second, and vice versa.
          for (const auto& p : delta[a.rel]) {
            const auto [x, mid] = a.inverse ? std::make_pair(p.second, p.first)
                                            : p;
            for (EntityId z : atom_from(b, mid))
              derived.emplace_back(rule.head, x, z);
          }
          for (const auto& p : delta[b.rel]) {
            const auto [mid, z] = b.inverse ? std::make_pair(p.second, p.first)
                                            : p;
            for (EntityId x : atom_to(a, mid))
              derived.emplace_back(rule.head, x, z);
          }
        } else {
          fail("closure rules must have one or two body atoms");
        }
      }
      std::vector<std::vector<std::pair<EntityId, EntityId>>> next(
          present_.size());
      bool any = false;
      for (const auto& [r, x, y] : derived) {
        if (x == y) continue;
        if (!present_[r].insert(pack_pair(x, y)).second) continue;
        fwd_[r][x].push_back(y);
        rev_[r][y].push_back(x);
        next[r].emplace_back(x, y);
        any = true;
      }
      if (!any) break;
      delta = std::move(next);
    }
  }

  std::vector<Triple> all_facts() const {
    std::vector<Triple> out;
    for (RelationId r = 0; r < present_.size(); ++r) {
      for (std::uint64_t key : present_[r]) {
        out.push_back({static_cast<EntityId>(key >> 32), r,
                       static_cast<EntityId>(key & 0xffffffffu)});
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static const std::vector<EntityId>& empty_list() {
    static const std::vector<EntityId> kEmpty;
    return kEmpty;
  }

  // Successors of `from` under the atom (atom pairs (from, z)).
  const std::vector<EntityId>& atom_from(const RuleAtom& a,
                                         EntityId from) const {
    const auto& adj = a.inverse ? rev_[a.rel] : fwd_[a.rel];
    auto it = adj.find(from);
    return it == adj.end() ? empty_list() : it->second;
  }

  // Predecessors of `to` under the atom (atom pairs (x, to)).
  const std::vector<EntityId>& atom_to(const RuleAtom& a, EntityId to) const {
    const auto& adj = a.inverse ? fwd_[a.rel] : rev_[a.rel];
    auto it = adj.find(to);
    return it == adj.end() ? empty_list() : it->second;
  }

  std::vector<std::unordered_set<std::uint64_t>> present_;
  std::vector<std::unordered_map<EntityId, std::vector<EntityId>>> fwd_, rev_;
  std::vector<std::vector<std::pair<EntityId, EntityId>>> delta_;
};

}  // namespace

const FamilySchema& family_schema() {
  static const FamilySchema schema = build_schema();
  return schema;
}

KnowledgeGraph generate_family_kg(std::size_t n_people, std::size_t n_families,
                                  std::mt19937_64& rng) {
  if (n_people < 4) fail("family generation needs at least 4 people");
  if (n_families == 0) fail("family generation needs at least one family");
  const FamilySchema& schema = family_schema();

  KnowledgeGraph kg;
  for (const std::string& name : schema.relations) kg.intern_relation(name);

  std::size_t next_person = 0;
  auto new_person = [&]() {
    return kg.intern_entity(concat("p", next_person++));
  };

  ClosureEngine facts(schema.relations.size());
  const std::size_t budget_per_family =
      std::max<std::size_t>(4, n_people / n_families);
  constexpr std::size_t kMaxGenerations = 3;
  std::uniform_int_distribution<int> children_dist(3, 5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (std::size_t fam = 0; fam < n_families; ++fam) {
    std::size_t fam_people = 0;
    struct Couple {
      EntityId husband, wife;
      std::size_t generation;
    };
    std::vector<Couple> fertile;
    const EntityId h0 = new_person();
    const EntityId w0 = new_person();
    facts.add(kHusbandOf, h0, w0);
    fertile.push_back({h0, w0, 0});
    fam_people += 2;

    std::size_t front = 0;
    while (front < fertile.size() && fam_people < budget_per_family) {
      const Couple c = fertile[front++];
      const int n_children = children_dist(rng);
      for (int k = 0; k < n_children; ++k) {
        const bool male = unif(rng) < 0.5;
        const EntityId child = new_person();
        ++fam_people;
        facts.add(kFatherOf, c.husband, child);
        facts.add(kMotherOf, c.wife, child);
        facts.add(male ? kSonOf : kDaughterOf, child, c.husband);
        facts.add(male ? kSonOf : kDaughterOf, child, c.wife);
        if (c.generation + 1 < kMaxGenerations && unif(rng) < 0.75) {
          const EntityId spouse = new_person();
          ++fam_people;
          if (male)
            facts.add(kHusbandOf, child, spouse);
          else
            facts.add(kHusbandOf, spouse, child);
          fertile.push_back({male ? child : spouse, male ? spouse : child,
                             c.generation + 1});
        }
      }
    }
  }

  facts.close(schema.closure_rules);
  for (const Triple& t : facts.all_facts()) kg.add_triple(t);
  log_info("generated ", kg.num_entities(), " people and ", kg.num_triples(),
           " facts across ", n_families, " families");
  return kg;
}

DatasetSplit split_dataset(KnowledgeGraph& kg, const SplitRatios& ratios,
                           std::mt19937_64& rng) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      ratios.train > 1 || ratios.valid > 1 || ratios.test > 1 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    fail("split ratios must lie in [0,1] and sum to 1");

  std::vector<Triple> shuffled = kg.triples();
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t n = shuffled.size();
  const std::size_t n_valid =
      static_cast<std::size_t>(ratios.valid * static_cast<double>(n));
  const std::size_t n_test =
      static_cast<std::size_t>(ratios.test * static_cast<double>(n));
  const std::size_t n_train = n - n_valid - n_test;

  DatasetSplit split;
  split.kg = &kg;
  split.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  split.valid.assign(shuffled.begin() + n_train,
                     shuffled.begin() + n_train + n_valid);
  split.test.assign(shuffled.begin() + n_train + n_valid, shuffled.end());

  // Coverage repair: every entity and relation must occur in train.
  std::vector<long> ent_count(kg.num_entities(), 0);
  std::vector<long> rel_count(kg.num_relations(), 0);
  auto bump = [&](const Triple& t, long delta) {
    ent_count[t.head] += delta;
    ent_count[t.tail] += delta;
    rel_count[t.rel] += delta;
  };
  for (const Triple& t : split.train) bump(t, 1);

  // A train triple may leave train only if everything it mentions stays
  // covered afterwards (self-loops count their entity twice).
  auto removable = [&](const Triple& t) {
    return rel_count[t.rel] > 1 && ent_count[t.head] > 1 &&
           ent_count[t.tail] > 1 &&
           (t.head != t.tail || ent_count[t.head] > 2);
  };

  // Moves one held-out triple matching `pred` into train, swapping out a
  // redundant train triple when possible so the split sizes hold.
  auto fix_item = [&](auto pred, const std::string& label) {
    for (auto* held : {&split.valid, &split.test}) {
      for (std::size_t i = 0; i < held->size(); ++i) {
        if (!pred((*held)[i])) continue;
        const Triple cand = (*held)[i];
        for (std::size_t j = 0; j < split.train.size(); ++j) {
          if (!removable(split.train[j])) continue;
          const Triple out = split.train[j];
          bump(out, -1);
          bump(cand, 1);
          split.train[j] = cand;
          (*held)[i] = out;
          return;
        }
        bump(cand, 1);
        split.train.push_back(cand);
        held->erase(held->begin() + i);
        log_warn("pinned a held-out triple to train to cover ", label,
                 "; split sizes shifted by one");
        return;
      }
    }
    log_warn("no triple mentions ", label, "; train coverage is impossible");
  };

  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    if (ent_count[e] > 0) continue;
    fix_item([&](const Triple& t) { return t.head == e || t.tail == e; },
             concat("entity ", kg.entity_name(e)));
  }
  for (RelationId r = 0; r < kg.num_relations(); ++r) {
    if (rel_count[r] > 0) continue;
    fix_item([&](const Triple& t) { return t.rel == r; },
             concat("relation ", kg.relation_name(r)));
  }
  return split;
}

void save_dataset(const DatasetSplit& split, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_triples(*split.kg, split.train, dir + "/train.txt");
  save_triples(*split.kg, split.valid, dir + "/valid.txt");
  save_triples(*split.kg, split.test, dir + "/test.txt");
}

}  // namespace tsp
