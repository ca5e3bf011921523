#pragma once

// Synthetic knowledge graphs with nested splits and sampled benchmark
// queries whose answers come from the exact oracle.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "flex/kg.hpp"
#include "flex/query.hpp"

namespace flex {

class GenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenSpec {
  std::size_t entities = 200;
  // Base relations; each also gets an inverse, so the KG has 2x this many.
  std::size_t relations = 10;
  // Triples added by each split, inverses included (must be even).
  std::size_t train_edges = 2000;
  std::size_t valid_edges = 200;
  std::size_t test_edges = 200;
  // Queries per structure and split.
  std::size_t train_queries = 500;
  std::size_t valid_queries = 50;
  std::size_t test_queries = 50;
  // Training volume of negation structures relative to train_queries.
  double negation_ratio = 0.1;
  // Training volume of 2u / up records (for the trainable-union mode).
  std::size_t union_train_queries = 0;
  // Empty means all 14 structures.
  std::vector<std::string> structures;
  std::size_t answer_cap = 100;
  // Latent groups of entities; every relation maps a group to a group.
  // 0 picks entities / 20 (at least 2).
  std::size_t clusters = 0;
  // Fraction of edges whose tail ignores the group map.
  double noise = 0.1;
  // Sampling attempts allowed per requested query.
  std::size_t attempts_per_query = 2000;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<std::string> requested_structures() const;
};

nlohmann::ordered_json spec_to_json(const GenSpec& s);
// Missing keys keep their defaults; unknown keys are rejected.
GenSpec spec_from_json(const nlohmann::json& j, GenSpec base = GenSpec{});

bool is_training_structure(std::string_view tag);
bool is_negation_structure(std::string_view tag);

GraphSplits generate_kg(const GenSpec& spec);

struct QuerySets {
  std::vector<QueryRecord> train;
  std::vector<QueryRecord> valid;
  std::vector<QueryRecord> test;
};

// Training records hold the train-graph answers as hard answers. Valid and
// test records split answers into those already reachable on the previous
// split (easy) and new ones (hard, never empty).
QuerySets generate_queries(const GraphSplits& splits, const GenSpec& spec);

// train.txt, valid.txt, test.txt, *-queries.jsonl and spec.json.
void write_dataset(const std::filesystem::path& dir, const GraphSplits& splits,
                   const QuerySets& queries, const GenSpec& spec);

struct Dataset {
  GraphSplits splits;
  QuerySets queries;
};
// Query files that are absent load as empty.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace flex
