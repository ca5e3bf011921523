#include "flex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

namespace flex {

std::vector<double> score_distances(Model& model, const QueryNode& q) {
  Tape tape;
  const QueryEmbedding emb = embed_for_distance(tape, model, q);
  std::vector<EmbeddingValue> disjuncts;
  for (const Embedding& e : emb.disjuncts) {
    disjuncts.push_back(read_embedding(tape, e));
  }
  const ModelConfig& c = model.config();
  const std::size_t n = model.num_entities();
  std::vector<double> out(n);
  EmbeddingValue entity;
  entity.features.resize(c.feature_parts);
  std::vector<double> per(disjuncts.size());
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t j = 0; j < c.feature_parts; ++j) {
      const auto row = model.entity_features(j).value.row_span(e);
      entity.features[j].assign(row.begin(), row.end());
    }
    for (std::size_t k = 0; k < disjuncts.size(); ++k) {
      per[k] = conjunctive_distance(c, entity, disjuncts[k]);
    }
    out[e] = per.size() == 1 ? per[0]
                             : disjunctive_distance(per, c.dnf_aggregator);
  }
  return out;
}

std::vector<AnswerRank> filtered_ranks(std::span<const double> distances,
                                       const EntitySet& hard,
                                       const EntitySet& answers) {
  // Sorted non-answer distances; rank is found by upper_bound.
  std::vector<double> pool;
  pool.reserve(distances.size());
  for (std::size_t e = 0; e < distances.size(); ++e) {
    if (!std::binary_search(answers.begin(), answers.end(),
                            static_cast<EntityId>(e))) {
      pool.push_back(distances[e]);
    }
  }
  std::sort(pool.begin(), pool.end());
  std::vector<AnswerRank> out;
  for (EntityId v : hard) {
    if (v < 0 || static_cast<std::size_t>(v) >= distances.size()) {
      throw std::out_of_range("answer id " + std::to_string(v) + " out of range");
    }
    const double dv = distances[static_cast<std::size_t>(v)];
    const auto le = std::upper_bound(pool.begin(), pool.end(), dv) - pool.begin();
    out.push_back({v, 1 + static_cast<std::size_t>(le)});
  }
  return out;
}

std::vector<AnswerRank> rank_answers(Model& model, const QueryRecord& record) {
  if (record.answers_hard.empty()) return {};
  const std::vector<double> d = score_distances(model, record.query);
  return filtered_ranks(d, record.answers_hard, record.all_answers());
}

Metrics query_metrics(std::span<const AnswerRank> ranks) {
  Metrics m;
  if (ranks.empty()) return m;
  for (const AnswerRank& r : ranks) {
    m.mrr += 1.0 / static_cast<double>(r.rank);
    m.hits1 += r.rank <= 1;
    m.hits3 += r.rank <= 3;
    m.hits10 += r.rank <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  m.queries = 1;
  m.answers = ranks.size();
  return m;
}

namespace {

void accumulate(Metrics& into, const Metrics& m) {
  into.mrr += m.mrr;
  into.hits1 += m.hits1;
  into.hits3 += m.hits3;
  into.hits10 += m.hits10;
  into.queries += m.queries;
  into.answers += m.answers;
}

void divide(Metrics& m, double n) {
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
}

std::size_t structure_rank(const std::string& tag) {
  const auto& all = all_structures();
  return static_cast<std::size_t>(std::find(all.begin(), all.end(), tag) -
                                  all.begin());
}

}  // namespace

std::vector<std::string> RankingReport::ordered_tags() const {
  std::vector<std::string> tags;
  for (const auto& [tag, m] : per_structure) tags.push_back(tag);
  std::stable_sort(tags.begin(), tags.end(), [](const auto& a, const auto& b) {
    return structure_rank(a) < structure_rank(b);
  });
  return tags;
}

RankingReport aggregate(std::span<const QueryRanks> queries,
                        std::size_t skipped) {
  RankingReport report;
  report.skipped = skipped;
  report.queries.assign(queries.begin(), queries.end());
  for (const QueryRanks& q : queries) {
    if (q.ranks.empty()) continue;
    accumulate(report.per_structure[q.tag], query_metrics(q.ranks));
  }
  if (report.per_structure.empty()) {
    throw std::invalid_argument("nothing to aggregate: no ranked answers");
  }
  for (auto& [tag, m] : report.per_structure) {
    divide(m, static_cast<double>(m.queries));
    accumulate(report.average, m);
  }
  divide(report.average, static_cast<double>(report.per_structure.size()));
  return report;
}

RankingReport evaluate_split(Model& model, std::span<const QueryRecord> records,
                             const EvalOptions& options) {
  if (options.entities &&
      (options.entities->hash() != model.entity_vocab_hash ||
       options.entities->size() != model.num_entities())) {
    throw ConfigError("model and dataset entity vocabularies differ");
  }
  if (options.relations &&
      (options.relations->hash() != model.relation_vocab_hash ||
       options.relations->size() != model.num_relations())) {
    throw ConfigError("model and dataset relation vocabularies differ");
  }
  std::vector<QueryRanks> ranks(records.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < records.size(); i += stride) {
      ranks[i] = {records[i].tag, rank_answers(model, records[i])};
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<QueryRanks> kept;
  std::size_t skipped = 0;
  for (auto& r : ranks) {
    if (r.ranks.empty()) {
      ++skipped;
    } else {
      kept.push_back(std::move(r));
    }
  }
  return aggregate(kept, skipped);
}

namespace {

nlohmann::ordered_json metrics_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["MRR"] = m.mrr;
  j["Hits@1"] = m.hits1;
  j["Hits@3"] = m.hits3;
  j["Hits@10"] = m.hits10;
  j["queries"] = m.queries;
  j["answers"] = m.answers;
  return j;
}

}  // namespace

nlohmann::ordered_json report_to_json(const RankingReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& tag : report.ordered_tags()) {
    per[tag] = metrics_json(report.per_structure.at(tag));
  }
  j["structures"] = std::move(per);
  j["AVG"] = metrics_json(report.average);
  j["skipped"] = report.skipped;
  return j;
}

std::string report_to_csv(const RankingReport& report) {
  std::ostringstream out;
  out << "structure,metric,value\n";
  auto rows = [&out](const std::string& tag, const Metrics& m) {
    char buf[64];
    const std::pair<const char*, double> values[] = {
        {"MRR", m.mrr}, {"Hits@1", m.hits1}, {"Hits@3", m.hits3},
        {"Hits@10", m.hits10}};
    for (const auto& [name, v] : values) {
      std::snprintf(buf, sizeof buf, "%.10f", v);
      out << tag << ',' << name << ',' << buf << '\n';
    }
  };
  for (const auto& tag : report.ordered_tags()) {
    rows(tag, report.per_structure.at(tag));
  }
  rows("AVG", report.average);
  return out.str();
}

double uniform_random_mrr(std::span<const QueryRecord> records,
                          std::size_t n_entities, const std::string& tag) {
  std::map<std::string, std::pair<double, std::size_t>> per;
  for (const QueryRecord& r : records) {
    if (r.answers_hard.empty()) continue;
    if (!tag.empty() && r.tag != tag) continue;
    const std::size_t c = n_entities - r.all_answers().size();
    double harmonic = 0.0;
    for (std::size_t k = 1; k <= c + 1; ++k) harmonic += 1.0 / static_cast<double>(k);
    auto& slot = per[r.tag];
    slot.first += harmonic / static_cast<double>(c + 1);
    ++slot.second;
  }
  if (per.empty()) throw std::invalid_argument("no records for random baseline");
  double total = 0.0;
  for (const auto& [t, v] : per) total += v.first / static_cast<double>(v.second);
  return total / static_cast<double>(per.size());
}

namespace {

std::vector<std::pair<EntityId, double>> top_by_score(
    std::span<const double> distances, std::size_t k) {
  std::vector<EntityId> ids(distances.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<EntityId>(i);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k),
                    ids.end(), [&](EntityId a, EntityId b) {
                      const double da = distances[static_cast<std::size_t>(a)];
                      const double db = distances[static_cast<std::size_t>(b)];
                      return da < db || (da == db && a < b);
                    });
  std::vector<std::pair<EntityId, double>> out;
  for (std::size_t i = 0; i < k; ++i) {
    out.emplace_back(ids[i], -distances[static_cast<std::size_t>(ids[i])]);
  }
  return out;
}

void trace_node(Model& model, const QueryNode& q, const std::string& path,
                std::size_t top_k, std::vector<TraceNode>& out) {
  TraceNode node;
  node.path = path;
  node.kind = q.kind;
  // A negated subtree alone is a valid embedding even though it is not a
  // valid standalone query, so it is embedded directly.
  node.top = top_by_score(score_distances(model, q), top_k);
  out.push_back(std::move(node));
  for (std::size_t i = 0; i < q.children.size(); ++i) {
    trace_node(model, q.children[i], path + "." + std::to_string(i), top_k, out);
  }
}

}  // namespace

std::vector<TraceNode> trace_intermediate(Model& model, const QueryNode& q,
                                          std::size_t top_k) {
  std::vector<TraceNode> out;
  trace_node(model, q, "root", top_k, out);
  return out;
}

nlohmann::ordered_json trace_to_json(std::span<const TraceNode> trace,
                                     const Vocabulary& entities) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const TraceNode& n : trace) {
    nlohmann::ordered_json node;
    node["path"] = n.path;
    node["operator"] = std::string(kind_name(n.kind));
    nlohmann::ordered_json top = nlohmann::ordered_json::array();
    for (const auto& [e, score] : n.top) {
      top.push_back({{"entity", entities.name(e)}, {"score", score}});
    }
    node["top"] = std::move(top);
    j.push_back(std::move(node));
  }
  return j;
}

std::vector<std::pair<EntityId, double>> answer_query(Model& model,
                                                      const QueryNode& q,
                                                      std::size_t top) {
  return top_by_score(score_distances(model, q), top);
}

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

}  // namespace

SeedSummary summarize_runs(std::vector<std::uint64_t> seeds,
                           std::vector<RankingReport> runs) {
  if (runs.size() < 2) throw std::invalid_argument("summary needs at least two seeds");
  SeedSummary s;
  s.seeds = std::move(seeds);
  s.runs = std::move(runs);
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  auto add = [&values](const std::string& tag, const Metrics& m) {
    values[tag]["MRR"].push_back(m.mrr);
    values[tag]["Hits@1"].push_back(m.hits1);
    values[tag]["Hits@3"].push_back(m.hits3);
    values[tag]["Hits@10"].push_back(m.hits10);
  };
  for (const RankingReport& r : s.runs) {
    for (const auto& [tag, m] : r.per_structure) add(tag, m);
    add("AVG", r.average);
  }
  for (const auto& [tag, metrics] : values) {
    for (const auto& [name, xs] : metrics) s.summary[tag][name] = summarize(xs);
  }
  return s;
}

SeedSummary multi_seed_summary(std::span<const QueryRecord> train_records,
                               std::span<const QueryRecord> eval_records,
                               const ModelConfig& config,
                               std::size_t n_entities, std::size_t n_relations,
                               std::span<const std::uint64_t> seeds,
                               std::size_t threads) {
  if (seeds.size() < 2) throw std::invalid_argument("summary needs at least two seeds");
  std::vector<RankingReport> runs;
  for (std::uint64_t seed : seeds) {
    ModelConfig c = config;
    c.seed = seed;
    TrainResult trained = train(train_records, c, n_entities, n_relations);
    EvalOptions opt;
    opt.threads = threads;
    runs.push_back(evaluate_split(trained.model, eval_records, opt));
  }
  return summarize_runs({seeds.begin(), seeds.end()}, std::move(runs));
}

nlohmann::ordered_json summary_to_json(const SeedSummary& s) {
  nlohmann::ordered_json j;
  j["seeds"] = s.seeds;
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const RankingReport& r : s.runs) runs.push_back(report_to_json(r));
  j["runs"] = std::move(runs);
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::vector<std::string> tags;
  for (const auto& [tag, m] : s.summary) {
    if (tag != "AVG") tags.push_back(tag);
  }
  std::stable_sort(tags.begin(), tags.end(), [](const auto& a, const auto& b) {
    return structure_rank(a) < structure_rank(b);
  });
  tags.push_back("AVG");
  for (const auto& tag : tags) {
    nlohmann::ordered_json row;
    for (const auto& [name, ms] : s.summary.at(tag)) {
      row[name] = {{"mean", ms.mean}, {"std", ms.stddev}};
    }
    summary[tag] = std::move(row);
  }
  j["summary"] = std::move(summary);
  return j;
}

}  // namespace flex
