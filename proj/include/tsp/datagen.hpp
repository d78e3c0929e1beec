#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsp/kg.hpp"
#include "tsp/rules.hpp"

namespace tsp {

// Kinship vocabulary and the path rules used to close a generated family
// graph. Rule statistics fields are unused here; only head and body matter.
struct FamilySchema {
  std::vector<std::string> relations;
  std::vector<Rule> closure_rules;
};

const FamilySchema& family_schema();

struct SplitRatios {
  double train = 0.72;
  double valid = 0.08;
  double test = 0.20;
};

// Samples family trees (founder couples, marriages, gendered children over a
// few generations), asserts parentage, marriage and child triples, then
// applies every closure rule to a fixpoint. Derived self-loops are dropped.
// The result is closed: re-running the rules adds nothing.
KnowledgeGraph generate_family_kg(std::size_t n_people, std::size_t n_families,
                                  std::mt19937_64& rng);

// Uniform random split at the given ratios (floored sizes, remainder to
// train), repaired so every entity and relation occurs in at least one train
// triple. Repair swaps a violating held-out triple with a train triple whose
// removal keeps coverage; when no such partner exists the triple is moved to
// train with a warning.
DatasetSplit split_dataset(KnowledgeGraph& kg, const SplitRatios& ratios,
                           std::mt19937_64& rng);

// Writes train.txt / valid.txt / test.txt into the directory.
void save_dataset(const DatasetSplit& split, const std::string& dir);

}  // namespace tsp
