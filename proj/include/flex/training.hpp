#pragma once

// Distances between entities and query embeddings, the negative-sampling
// objective, Adam, and the training loop.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flex/embeddings.hpp"
#include "flex/operators.hpp"
#include "flex/query.hpp"

namespace flex {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sum over feature parts of the L1 feature distance, plus the query's logic
// part reduced by config.logic_reduction.
Var conjunctive_distance(Tape& tape, const ModelConfig& config,
                         const Embedding& entity, const Embedding& query);
double conjunctive_distance(const ModelConfig& config,
                            const EmbeddingValue& entity,
                            const EmbeddingValue& query);

// Combines per-disjunct distances: vector-or folds a + b - ab left to right,
// min takes the smallest.
Var disjunctive_distance(Tape& tape, std::span<const Var> distances,
                         DnfAggregator aggregator);
double disjunctive_distance(std::span<const double> distances,
                            DnfAggregator aggregator);

// -log σ(γ - d⁺) - (1/k) Σ log σ(d⁻ᵢ - γ)
Var negative_sampling_loss(Tape& tape, Var positive,
                           std::span<const Var> negatives, double gamma);
double negative_sampling_loss(double positive,
                              std::span<const double> negatives, double gamma);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
};

// One bias-corrected Adam update from the gradients stored in each Param.
// Moments live in the Params; gradients are left untouched.
void adam_step(std::span<Param* const> params, AdamState& state, double lr);

// Embeds q (or each of its DNF disjuncts) and returns the tape distance
// from `entity` to it.
struct QueryEmbedding {
  std::vector<Embedding> disjuncts;
};
QueryEmbedding embed_for_distance(Tape& tape, Model& model, const QueryNode& q);
Var query_distance(Tape& tape, Model& model, const QueryEmbedding& q,
                   EntityId entity);

struct TrainStep {
  std::size_t step = 0;
  double loss = 0.0;
  // "tag:count" pairs joined by ';' in structure order.
  std::string structure_mix;
};

struct TrainOptions {
  // Writes config.json, loss.csv, checkpoints/step-N and final when set.
  std::optional<std::filesystem::path> out_dir;
  // Vocabularies stored in checkpoints; required with out_dir.
  const Vocabulary* entities = nullptr;
  const Vocabulary* relations = nullptr;
  // Continue from this checkpoint instead of a fresh initialization.
  std::optional<std::filesystem::path> resume_from;
  // Stop early after this many steps of the current call (0 = run to
  // config.steps); lets tests interrupt and resume.
  std::size_t max_steps = 0;
};

struct TrainResult {
  Model model;
  AdamState adam;
  std::vector<TrainStep> trace;
};

// Records used for training after the structure filter; throws when the
// filter leaves nothing.
std::vector<const QueryRecord*> select_training_records(
    std::span<const QueryRecord> records, const ModelConfig& config);

TrainResult train(std::span<const QueryRecord> records,
                  const ModelConfig& config, std::size_t n_entities,
                  std::size_t n_relations, const TrainOptions& options = {});

// Sum of squared gradient entries over the Params whose name starts with
// `prefix`; handy for checking which nets a batch reaches.
double grad_norm_sq(Model& model, std::string_view prefix);

// Accumulates the gradient of one batch without stepping (loss returned).
double accumulate_batch_gradient(Model& model,
                                 std::span<const QueryRecord* const> batch,
                                 std::uint64_t seed, std::size_t step);

}  // namespace flex
