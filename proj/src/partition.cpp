#include "tsp/partition.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "tsp/log.hpp"
#include "tsp/rng.hpp"

namespace tsp {

NeighborhoodDraw sample_neighborhood(const KnowledgeGraph& kg, EntityId center,
                                     const std::vector<char>& ungrouped,
                                     const PartitionParams& params,
                                     std::mt19937_64& rng) {
  NeighborhoodDraw draw;
  draw.center = center;
  draw.d_avg = kg.average_degree();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::unordered_set<EntityId> taken{center};
  std::vector<EntityId> frontier{center};
  for (std::size_t hop = 1; hop <= params.hops; ++hop) {
    double p = 1.0;
    if (hop > 1) {
      const double prev = static_cast<double>(frontier.size());
      p = prev > 0.0 ? std::sqrt(draw.d_avg / (2.0 * prev)) : 1.0;
      p = std::clamp(p, 0.0, 1.0);
    }
    if (params.p_override >= 0.0) p = params.p_override;
    draw.probs.push_back(p);

    std::vector<EntityId> next;
    for (EntityId e : frontier) {
      if (unit(rng) > p) continue;
      for (EntityId nb : kg.neighbors(e)) {
        if (!ungrouped[nb]) continue;
        if (taken.insert(nb).second) next.push_back(nb);
      }
    }
    std::sort(next.begin(), next.end());
    draw.hop_sets.push_back(next);
    frontier = std::move(next);
  }
  return draw;
}

namespace {

std::vector<EntityId> sorted_union(const std::vector<EntityId>& a,
                                   const std::vector<EntityId>& b) {
  std::vector<EntityId> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

std::vector<EntityId> draw_entities(const NeighborhoodDraw& draw,
                                    std::size_t upto_hops) {
  std::vector<EntityId> out{draw.center};
  for (std::size_t i = 0; i < upto_hops && i < draw.hop_sets.size(); ++i)
    out.insert(out.end(), draw.hop_sets[i].begin(), draw.hop_sets[i].end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::pair<std::vector<std::vector<EntityId>>, std::vector<char>>
primary_entity_grouping(const KnowledgeGraph& kg, const PartitionParams& params,
                        std::mt19937_64& rng) {
  if (params.n_min >= params.n_max)
    fail("partition needs n_min < n_max (got ", params.n_min, " vs ",
         params.n_max, ")");

  const std::size_t n = kg.num_entities();
  std::vector<char> ungrouped(n, 1);
  std::vector<std::vector<EntityId>> groups;

  auto components = connected_components(kg, kg.triples());

  std::vector<std::vector<EntityId>> small_list;
  auto emit_group = [&](std::vector<EntityId> members) {
    for (EntityId e : members) ungrouped[e] = 0;
    groups.push_back(std::move(members));
  };
  for (const auto& comp : components) {
    if (comp.size() >= params.n_min) continue;
    if (small_list.empty()) {
      small_list.push_back(comp);
      continue;
    }
    if (comp.size() + small_list.back().size() < params.n_max) {
      small_list.back() = sorted_union(small_list.back(), comp);
      if (small_list.back().size() > params.n_min) {
        emit_group(std::move(small_list.back()));
        small_list.pop_back();
      }
    } else {
      small_list.push_back(comp);
    }
  }

  // Remaining entities become draw centers in random order.
  std::vector<EntityId> centers;
  centers.reserve(n);
  for (std::size_t e = 0; e < n; ++e)
    if (ungrouped[e]) centers.push_back(static_cast<EntityId>(e));

  const double target =
      0.5 * static_cast<double>(params.n_min + params.n_max);
  while (!centers.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
    const std::size_t idx = pick(rng);
    const EntityId center = centers[idx];
    centers[idx] = centers.back();
    centers.pop_back();
    if (!ungrouped[center]) continue;  // grouped meanwhile as another draw's core

    NeighborhoodDraw best;
    bool have_best = false;
    for (std::size_t c = 0; c < params.candidates_per_draw; ++c) {
      NeighborhoodDraw draw =
          sample_neighborhood(kg, center, ungrouped, params, rng);
      if (!have_best ||
          std::abs(static_cast<double>(draw.size()) - target) <
              std::abs(static_cast<double>(best.size()) - target)) {
        best = std::move(draw);
        have_best = true;
      }
    }

    std::vector<EntityId> full = draw_entities(best, params.hops);
    if (full.size() <= params.n_min) continue;  // center stays for fine-tuning

    if (full.size() > params.n_max && !best.hop_sets.empty()) {
      // Trim boundary entities (highest ids first) to respect the size cap;
      // inner hops are never dropped so the draw stays connected.
      auto& last = best.hop_sets.back();
      std::unordered_set<EntityId> inner_set;
      for (EntityId e : draw_entities(best, params.hops - 1))
        inner_set.insert(e);
      while (full.size() > params.n_max && !last.empty()) {
        const EntityId victim = last.back();
        last.pop_back();
        if (inner_set.count(victim)) continue;
        full.erase(std::lower_bound(full.begin(), full.end(), victim));
      }
    }

    groups.push_back(full);
    for (EntityId e : draw_entities(best, params.hops - 1)) ungrouped[e] = 0;
  }

  for (auto& pending : small_list) emit_group(std::move(pending));
  return {std::move(groups), std::move(ungrouped)};
}

namespace {

struct Membership {
  std::vector<std::vector<int>> of_entity;
  explicit Membership(std::size_t n) : of_entity(n) {}
  void build(const std::vector<std::vector<EntityId>>& groups) {
    for (auto& v : of_entity) v.clear();
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (EntityId e : groups[g]) of_entity[e].push_back(static_cast<int>(g));
  }
  void add(EntityId e, int g) {
    auto& v = of_entity[e];
    if (std::find(v.begin(), v.end(), g) == v.end()) v.push_back(g);
  }
  void remove(EntityId e, int g) {
    auto& v = of_entity[e];
    v.erase(std::remove(v.begin(), v.end(), g), v.end());
  }
};

// Smallest group by (size, index); -1 when the candidate list is empty.
int smallest_group(const std::vector<int>& candidates,
                   const std::vector<std::vector<EntityId>>& groups,
                   int exclude = -1) {
  int best = -1;
  for (int g : candidates) {
    if (g == exclude) continue;
    if (best == -1 || groups[g].size() < groups[best].size() ||
        (groups[g].size() == groups[best].size() && g < best))
      best = g;
  }
  return best;
}

void insert_sorted(std::vector<EntityId>& group, EntityId e) {
  auto it = std::lower_bound(group.begin(), group.end(), e);
  if (it == group.end() || *it != e) group.insert(it, e);
}

}  // namespace

void entity_group_finetune(const KnowledgeGraph& kg,
                           std::vector<std::vector<EntityId>>& groups,
                           std::vector<char>& ungrouped,
                           std::mt19937_64& rng) {
  const std::size_t n = kg.num_entities();
  Membership member(n);
  member.build(groups);

  std::vector<EntityId> pending;
  for (std::size_t e = 0; e < n; ++e)
    if (ungrouped[e]) pending.push_back(static_cast<EntityId>(e));

  while (!pending.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, pending.size() - 1);
    const std::size_t idx = pick(rng);
    const EntityId e = pending[idx];
    pending[idx] = pending.back();
    pending.pop_back();

    int g = smallest_group(member.of_entity[e], groups);
    if (g >= 0) {
      for (EntityId nb : kg.neighbors(e)) {
        insert_sorted(groups[g], nb);
        member.add(nb, g);
      }
      ungrouped[e] = 0;
      continue;
    }

    // e was never reached by any draw: attach it (with its neighborhood) to
    // the smallest group around it, or start a new group.
    std::vector<int> nearby;
    for (EntityId nb : kg.neighbors(e))
      for (int og : member.of_entity[nb]) nearby.push_back(og);
    g = smallest_group(nearby, groups);
    if (g >= 0) {
      insert_sorted(groups[g], e);
      member.add(e, g);
      for (EntityId nb : kg.neighbors(e)) {
        insert_sorted(groups[g], nb);
        member.add(nb, g);
      }
    } else {
      std::vector<EntityId> fresh{e};
      for (EntityId nb : kg.neighbors(e)) fresh.push_back(nb);
      std::sort(fresh.begin(), fresh.end());
      fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
      const int ng = static_cast<int>(groups.size());
      groups.push_back(fresh);
      for (EntityId x : groups.back()) member.add(x, ng);
    }
    ungrouped[e] = 0;
  }
}

namespace {

// Connected components of the group's induced undirected graph, sorted so
// the largest (ties: containing the smallest entity) comes first.
std::vector<std::vector<EntityId>> induced_components(
    const KnowledgeGraph& kg, const std::vector<EntityId>& group) {
  std::unordered_set<EntityId> in_group(group.begin(), group.end());
  std::unordered_map<EntityId, int> comp_of;
  std::vector<std::vector<EntityId>> comps;
  for (EntityId root : group) {
    if (comp_of.count(root)) continue;
    const int id = static_cast<int>(comps.size());
    comps.emplace_back();
    std::vector<EntityId> stack{root};
    comp_of[root] = id;
    while (!stack.empty()) {
      const EntityId e = stack.back();
      stack.pop_back();
      comps[id].push_back(e);
      for (EntityId nb : kg.neighbors(e)) {
        if (!in_group.count(nb) || comp_of.count(nb)) continue;
        comp_of[nb] = id;
        stack.push_back(nb);
      }
    }
  }
  for (auto& c : comps) std::sort(c.begin(), c.end());
  std::sort(comps.begin(), comps.end(),
            [](const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
              if (a.size() != b.size()) return a.size() > b.size();
              return a.front() < b.front();
            });
  return comps;
}

}  // namespace

PartitionResult construct_subgraphs(const KnowledgeGraph& kg,
                                    std::vector<std::vector<EntityId>> groups) {
  Membership member(kg.num_entities());
  member.build(groups);

  // Reassign entities stranded outside their group's main component to a
  // neighboring group; a few passes settle almost all cases.
  for (int pass = 0; pass < 8; ++pass) {
    bool changed = false;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      auto comps = induced_components(kg, groups[gi]);
      if (comps.size() <= 1) continue;
      for (std::size_t ci = 1; ci < comps.size(); ++ci) {
        for (EntityId e : comps[ci]) {
          std::vector<int> nearby;
          for (EntityId nb : kg.neighbors(e))
            for (int og : member.of_entity[nb]) nearby.push_back(og);
          const int target =
              smallest_group(nearby, groups, static_cast<int>(gi));
          if (target < 0) continue;
          groups[gi].erase(std::lower_bound(groups[gi].begin(),
                                            groups[gi].end(), e));
          member.remove(e, static_cast<int>(gi));
          insert_sorted(groups[target], e);
          member.add(e, target);
          changed = true;
        }
      }
    }
    if (!changed) break;
  }

  // Whatever is still disconnected becomes separate component groups.
  std::vector<std::vector<EntityId>> final_groups;
  for (auto& group : groups) {
    if (group.empty()) continue;
    auto comps = induced_components(kg, group);
    for (auto& comp : comps) final_groups.push_back(std::move(comp));
  }

  PartitionResult result;
  result.n_relations = kg.num_relations();
  result.groups = std::move(final_groups);
  result.subgraph_triples.reserve(result.groups.size());
  for (const auto& group : result.groups) {
    std::unordered_set<EntityId> in_group(group.begin(), group.end());
    std::vector<Triple> triples;
    for (EntityId h : group) {
      for (const auto& [t, r] : kg.out_edges(h)) {
        if (in_group.count(t)) triples.push_back({h, r, t});
      }
    }
    std::sort(triples.begin(), triples.end());
    result.subgraph_triples.push_back(std::move(triples));
  }

  const auto nr = static_cast<std::uint64_t>(kg.num_relations());
  const auto ne = static_cast<std::uint64_t>(kg.num_entities());
  result.full_space = ne * ne * nr;
  for (const auto& group : result.groups) {
    const auto s = static_cast<std::uint64_t>(group.size());
    result.candidate_space += s * s * nr;
  }
  return result;
}

PartitionResult partition_best_of(const KnowledgeGraph& kg,
                                  const PartitionParams& params) {
  std::mt19937_64 rng = make_rng(params.seed, "partition");
  auto [groups, ungrouped] = primary_entity_grouping(kg, params, rng);
  entity_group_finetune(kg, groups, ungrouped, rng);
  PartitionResult result = construct_subgraphs(kg, std::move(groups));
  result.params = params;
  log_info("partition: ", result.groups.size(), " subgraphs, candidate space ",
           result.candidate_space, " / ", result.full_space);
  return result;
}

void save_partition(const KnowledgeGraph& kg, const PartitionResult& result,
                    const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["seed"] = result.params.seed;
  manifest["hops"] = result.params.hops;
  manifest["n_min"] = result.params.n_min;
  manifest["n_max"] = result.params.n_max;
  manifest["candidates_per_draw"] = result.params.candidates_per_draw;
  manifest["n_relations"] = result.n_relations;
  manifest["full_space"] = result.full_space;
  manifest["candidate_space"] = result.candidate_space;
  nlohmann::ordered_json groups_json = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < result.groups.size(); ++g) {
    nlohmann::ordered_json gj;
    gj["file"] = concat("subgraph_", g, ".txt");
    gj["n_entities"] = result.groups[g].size();
    gj["n_triples"] = result.subgraph_triples[g].size();
    nlohmann::ordered_json names = nlohmann::ordered_json::array();
    for (EntityId e : result.groups[g]) names.push_back(kg.entity_name(e));
    gj["entities"] = std::move(names);
    groups_json.push_back(std::move(gj));
  }
  manifest["groups"] = std::move(groups_json);

  std::ofstream mf(dir + "/manifest.json");
  if (!mf) fail("cannot write ", dir, "/manifest.json");
  mf << manifest.dump(2) << '\n';
  for (std::size_t g = 0; g < result.groups.size(); ++g)
    save_triples(kg, result.subgraph_triples[g],
                 dir + "/" + concat("subgraph_", g, ".txt"));
}

PartitionResult load_partition(const KnowledgeGraph& kg,
                               const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) fail("cannot open ", dir, "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(mf);

  PartitionResult result;
  result.params.seed = manifest.at("seed").get<std::uint64_t>();
  result.params.hops = manifest.at("hops").get<std::size_t>();
  result.params.n_min = manifest.at("n_min").get<std::size_t>();
  result.params.n_max = manifest.at("n_max").get<std::size_t>();
  result.params.candidates_per_draw =
      manifest.at("candidates_per_draw").get<std::size_t>();
  result.n_relations = manifest.at("n_relations").get<std::size_t>();
  result.full_space = manifest.at("full_space").get<std::uint64_t>();
  result.candidate_space = manifest.at("candidate_space").get<std::uint64_t>();

  KnowledgeGraph scratch = kg;  // names already interned; ids stay stable
  for (const auto& gj : manifest.at("groups")) {
    std::vector<EntityId> group;
    for (const auto& name : gj.at("entities"))
      group.push_back(kg.entity_id(name.get<std::string>()));
    std::sort(group.begin(), group.end());
    result.groups.push_back(std::move(group));
    auto triples = load_triples(
        scratch, dir + "/" + gj.at("file").get<std::string>());
    std::sort(triples.begin(), triples.end());
    result.subgraph_triples.push_back(std::move(triples));
  }
  return result;
}

}  // namespace tsp
