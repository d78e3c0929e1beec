#include "tsp/kg.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tsp/log.hpp"

namespace tsp {

EntityId KnowledgeGraph::intern_entity(const std::string& name) {
  auto it = entity_ids_.find(name);
  if (it != entity_ids_.end()) return it->second;
  const auto id = static_cast<EntityId>(entity_names_.size());
  entity_names_.push_back(name);
  entity_ids_.emplace(name, id);
  indices_built_ = false;
  return id;
}

RelationId KnowledgeGraph::intern_relation(const std::string& name) {
  auto it = relation_ids_.find(name);
  if (it != relation_ids_.end()) return it->second;
  const auto id = static_cast<RelationId>(relation_names_.size());
  relation_names_.push_back(name);
  relation_ids_.emplace(name, id);
  return id;
}

EntityId KnowledgeGraph::entity_id(const std::string& name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) fail("unknown entity: ", name);
  return it->second;
}

RelationId KnowledgeGraph::relation_id(const std::string& name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) fail("unknown relation: ", name);
  return it->second;
}

bool KnowledgeGraph::has_entity(const std::string& name) const {
  return entity_ids_.count(name) != 0;
}

bool KnowledgeGraph::has_relation(const std::string& name) const {
  return relation_ids_.count(name) != 0;
}

const std::string& KnowledgeGraph::entity_name(EntityId id) const {
  if (id >= entity_names_.size()) fail("entity id out of range: ", id);
  return entity_names_[id];
}

const std::string& KnowledgeGraph::relation_name(RelationId id) const {
  if (id >= relation_names_.size()) fail("relation id out of range: ", id);
  return relation_names_[id];
}

bool KnowledgeGraph::add_triple(const Triple& t) {
  if (t.head >= entity_names_.size() || t.tail >= entity_names_.size())
    fail("triple references entity id outside vocabulary");
  if (t.rel >= relation_names_.size())
    fail("triple references relation id outside vocabulary");
  if (!triple_keys_.insert(pack_triple(t)).second) return false;
  triples_.push_back(t);
  indices_built_ = false;
  return true;
}

bool KnowledgeGraph::contains(const Triple& t) const {
  return triple_keys_.count(pack_triple(t)) != 0;
}

void KnowledgeGraph::ensure_indices() const {
  if (indices_built_) return;
  const std::size_t n = entity_names_.size();
  out_edges_.assign(n, {});
  in_edges_.assign(n, {});
  pair_relations_.clear();
  neighbors_.assign(n, {});
  degrees_.assign(n, 0);
  std::vector<std::unordered_set<EntityId>> seen(n);
  for (const Triple& t : triples_) {
    out_edges_[t.head].emplace_back(t.tail, t.rel);
    in_edges_[t.tail].emplace_back(t.head, t.rel);
    pair_relations_[pack_pair(t.head, t.tail)].push_back(t.rel);
    ++degrees_[t.head];
    ++degrees_[t.tail];
    if (seen[t.head].insert(t.tail).second && t.head != t.tail)
      neighbors_[t.head].push_back(t.tail);
    if (seen[t.tail].insert(t.head).second && t.head != t.tail)
      neighbors_[t.tail].push_back(t.head);
  }
  indices_built_ = true;
}

const std::vector<std::pair<EntityId, RelationId>>& KnowledgeGraph::out_edges(
    EntityId h) const {
  ensure_indices();
  if (h >= out_edges_.size()) fail("entity id out of range: ", h);
  return out_edges_[h];
}

const std::vector<std::pair<EntityId, RelationId>>& KnowledgeGraph::in_edges(
    EntityId t) const {
  ensure_indices();
  if (t >= in_edges_.size()) fail("entity id out of range: ", t);
  return in_edges_[t];
}

const std::vector<RelationId>& KnowledgeGraph::relations_between(
    EntityId h, EntityId t) const {
  ensure_indices();
  static const std::vector<RelationId> kEmpty;
  auto it = pair_relations_.find(pack_pair(h, t));
  return it == pair_relations_.end() ? kEmpty : it->second;
}

const std::vector<EntityId>& KnowledgeGraph::neighbors(EntityId e) const {
  ensure_indices();
  if (e >= neighbors_.size()) fail("entity id out of range: ", e);
  return neighbors_[e];
}

std::uint64_t KnowledgeGraph::degree(EntityId e) const {
  ensure_indices();
  if (e >= degrees_.size()) fail("entity id out of range: ", e);
  return degrees_[e];
}

double KnowledgeGraph::average_degree() const {
  if (entity_names_.empty()) return 0.0;
  return 2.0 * static_cast<double>(triples_.size()) /
         static_cast<double>(entity_names_.size());
}

AugmentedKG add_inverse_and_selfloop(KnowledgeGraph& kg,
                                     const std::vector<Triple>& triples) {
  for (std::size_t r = 0; r < kg.num_relations(); ++r) {
    const std::string& name = kg.relation_name(static_cast<RelationId>(r));
    if (name == kSelfLoopRelation || name.ends_with(kInverseSuffix))
      fail("graph already contains augmentation relation '", name,
           "'; refusing to augment twice");
  }

  AugmentedKG out;
  out.num_base_relations = kg.num_relations();
  const std::size_t nb = out.num_base_relations;

  std::vector<RelationId> inv_ids(nb);
  for (std::size_t r = 0; r < nb; ++r) {
    inv_ids[r] = kg.intern_relation(
        kg.relation_name(static_cast<RelationId>(r)) + kInverseSuffix);
  }
  out.selfloop_rel = kg.intern_relation(kSelfLoopRelation);

  out.base_of.resize(kg.num_relations());
  out.is_inverse.assign(kg.num_relations(), false);
  for (std::size_t r = 0; r < nb; ++r) {
    out.base_of[r] = static_cast<RelationId>(r);
    out.base_of[inv_ids[r]] = static_cast<RelationId>(r);
    out.is_inverse[inv_ids[r]] = true;
  }
  out.base_of[out.selfloop_rel] = out.selfloop_rel;

  out.triples.reserve(triples.size() * 2 + kg.num_entities());
  for (const Triple& t : triples) out.triples.push_back(t);
  for (const Triple& t : triples)
    out.triples.push_back({t.tail, inv_ids[t.rel], t.head});
  for (std::size_t e = 0; e < kg.num_entities(); ++e) {
    const auto id = static_cast<EntityId>(e);
    out.triples.push_back({id, out.selfloop_rel, id});
  }
  return out;
}

std::vector<Triple> load_triples(KnowledgeGraph& kg, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ", path);
  std::vector<Triple> triples;
  std::unordered_set<std::uint64_t> seen;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dups = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string h, r, t, extra;
    if (!(ls >> h >> r >> t)) fail(path, ":", line_no, ": expected 3 fields");
    if (ls >> extra) fail(path, ":", line_no, ": expected 3 fields, got more");
    Triple triple{kg.intern_entity(h), kg.intern_relation(r), kg.intern_entity(t)};
    if (!seen.insert(pack_triple(triple)).second) {
      ++dups;
      continue;
    }
    triples.push_back(triple);
  }
  if (dups > 0) log_warn(path, ": dropped ", dups, " duplicate triple(s)");
  return triples;
}

void save_triples(const KnowledgeGraph& kg, const std::vector<Triple>& triples,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write ", path);
  for (const Triple& t : triples) {
    out << kg.entity_name(t.head) << '\t' << kg.relation_name(t.rel) << '\t'
        << kg.entity_name(t.tail) << '\n';
  }
  if (!out) fail("error writing ", path);
}

DatasetSplit load_dataset(KnowledgeGraph& kg, const std::string& dir) {
  DatasetSplit split;
  split.kg = &kg;
  split.train = load_triples(kg, dir + "/train.txt");
  std::ifstream v(dir + "/valid.txt");
  if (v.good()) {
    v.close();
    split.valid = load_triples(kg, dir + "/valid.txt");
  }
  std::ifstream t(dir + "/test.txt");
  if (t.good()) {
    t.close();
    split.test = load_triples(kg, dir + "/test.txt");
  }
  return split;
}

namespace {
struct UnionFind {
  std::vector<EntityId> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  EntityId find(EntityId x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(EntityId a, EntityId b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[b] = a;
  }
};
}  // namespace

std::vector<std::vector<EntityId>> connected_components(
    const KnowledgeGraph& kg, const std::vector<Triple>& triples) {
  UnionFind uf(kg.num_entities());
  for (const Triple& t : triples) uf.unite(t.head, t.tail);
  std::unordered_map<EntityId, std::size_t> root_index;
  std::vector<std::vector<EntityId>> comps;
  for (std::size_t e = 0; e < kg.num_entities(); ++e) {
    const EntityId root = uf.find(static_cast<EntityId>(e));
    auto [it, inserted] = root_index.emplace(root, comps.size());
    if (inserted) comps.emplace_back();
    comps[it->second].push_back(static_cast<EntityId>(e));
  }
  for (auto& c : comps) std::sort(c.begin(), c.end());
  std::sort(comps.begin(), comps.end(),
            [](const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
              if (a.size() != b.size()) return a.size() < b.size();
              return a.front() < b.front();
            });
  return comps;
}

}  // namespace tsp
