#pragma once

// Filtered ranking, MRR / Hits@K aggregation, multi-seed summaries and
// per-node answer tracing.

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "flex/embeddings.hpp"
#include "flex/query.hpp"
#include "flex/training.hpp"

namespace flex {

// Distance from every entity (by id) to the query. Disjunctions go through
// DNF unless the model owns a trainable union operator.
std::vector<double> score_distances(Model& model, const QueryNode& q);

struct AnswerRank {
  EntityId answer = 0;
  std::size_t rank = 0;
};

// rank(v) = 1 + |{u not in `answers` : d(u) <= d(v)}| for each v in `hard`.
// Ties count against the answer.
std::vector<AnswerRank> filtered_ranks(std::span<const double> distances,
                                       const EntitySet& hard,
                                       const EntitySet& answers);
std::vector<AnswerRank> rank_answers(Model& model, const QueryRecord& record);

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t queries = 0;
  std::size_t answers = 0;
};

// Metrics of one query: each value averaged over its answers.
Metrics query_metrics(std::span<const AnswerRank> ranks);

struct QueryRanks {
  std::string tag;
  std::vector<AnswerRank> ranks;
};

struct RankingReport {
  // Keyed by structure tag; iterate with ordered_tags() for display order.
  std::map<std::string, Metrics> per_structure;
  // Unweighted mean over structures.
  Metrics average;
  std::vector<QueryRanks> queries;
  std::size_t skipped = 0;

  std::vector<std::string> ordered_tags() const;
};

// Per-query metrics averaged within each structure, then across structures.
RankingReport aggregate(std::span<const QueryRanks> queries,
                        std::size_t skipped = 0);

struct EvalOptions {
  std::size_t threads = 1;
  // When set, the model's vocabulary hashes must match.
  const Vocabulary* entities = nullptr;
  const Vocabulary* relations = nullptr;
};

// Ranks the hard answers of every record; records without hard answers are
// skipped and counted. Parameters are only read.
RankingReport evaluate_split(Model& model, std::span<const QueryRecord> records,
                             const EvalOptions& options = {});

nlohmann::ordered_json report_to_json(const RankingReport& report);
// `structure,metric,value` rows.
std::string report_to_csv(const RankingReport& report);

// Expected MRR of uniformly random scores: an answer facing C candidates has
// E[1/rank] = H(C+1)/(C+1). Averaged as aggregate() does; empty tag = AVG.
double uniform_random_mrr(std::span<const QueryRecord> records,
                          std::size_t n_entities, const std::string& tag = "");

struct TraceNode {
  std::string path;
  NodeKind kind = NodeKind::kAnchor;
  // (entity, score) with score = -distance, best first; ties by id.
  std::vector<std::pair<EntityId, double>> top;
};

// Pre-order list covering every node of q.
std::vector<TraceNode> trace_intermediate(Model& model, const QueryNode& q,
                                          std::size_t top_k);
nlohmann::ordered_json trace_to_json(std::span<const TraceNode> trace,
                                     const Vocabulary& entities);

// Ranked answers of a query: the `top` closest entities.
std::vector<std::pair<EntityId, double>> answer_query(Model& model,
                                                      const QueryNode& q,
                                                      std::size_t top);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

struct SeedSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<RankingReport> runs;
  // structure (plus "AVG") -> metric name -> summary
  std::map<std::string, std::map<std::string, MetricSummary>> summary;
};

// Trains and evaluates once per seed (config.seed replaced), then
// summarizes every metric.
SeedSummary multi_seed_summary(std::span<const QueryRecord> train_records,
                               std::span<const QueryRecord> eval_records,
                               const ModelConfig& config,
                               std::size_t n_entities, std::size_t n_relations,
                               std::span<const std::uint64_t> seeds,
                               std::size_t threads = 1);
SeedSummary summarize_runs(std::vector<std::uint64_t> seeds,
                           std::vector<RankingReport> runs);
nlohmann::ordered_json summary_to_json(const SeedSummary& s);

}  // namespace flex
