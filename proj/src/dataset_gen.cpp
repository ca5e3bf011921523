#include "flex/dataset_gen.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <unordered_set>

namespace flex {

namespace {

const std::vector<std::string> kTrainingStructures = {
    "1p", "2p", "3p", "2i", "3i", "2in", "3in", "inp", "pin", "pni"};
const std::vector<std::string> kNegationStructures = {"2in", "3in", "inp",
                                                      "pin", "pni"};

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t below(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(rng, i)]);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t a, std::uint32_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), a, b};
  return std::mt19937_64(seq);
}

// Draws an index with probability proportional to its weight.
class WeightedPicker {
 public:
  explicit WeightedPicker(const std::vector<double>& weights) {
    double acc = 0.0;
    for (double w : weights) cumulative_.push_back(acc += w);
  }
  std::size_t operator()(std::mt19937_64& rng) const {
    const double u = unit(rng) * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                 cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

}  // namespace

bool is_training_structure(std::string_view tag) {
  return std::find(kTrainingStructures.begin(), kTrainingStructures.end(), tag) !=
         kTrainingStructures.end();
}

bool is_negation_structure(std::string_view tag) {
  return std::find(kNegationStructures.begin(), kNegationStructures.end(), tag) !=
         kNegationStructures.end();
}

void GenSpec::validate() const {
  if (entities < 2) throw GenError("need at least 2 entities");
  if (relations == 0) throw GenError("need at least 1 relation");
  for (std::size_t e : {train_edges, valid_edges, test_edges}) {
    if (e == 0) throw GenError("every split needs at least one edge");
    if (e % 2 != 0) {
      throw GenError("edge counts include inverse edges and must be even, got " +
                     std::to_string(e));
    }
  }
  const double possible = static_cast<double>(entities) *
                          static_cast<double>(entities - 1) *
                          static_cast<double>(relations);
  const double wanted = static_cast<double>(train_edges + valid_edges + test_edges) / 2;
  if (wanted > possible) {
    throw GenError("infeasible graph: " + std::to_string(static_cast<long long>(wanted)) +
                   " distinct edges requested but only " +
                   std::to_string(static_cast<long long>(possible)) + " exist");
  }
  if (negation_ratio < 0 || noise < 0 || noise > 1) {
    throw GenError("negation_ratio and noise must be non-negative (noise <= 1)");
  }
  if (answer_cap == 0) throw GenError("answer_cap must be positive");
  for (const auto& s : structures) {
    if (!is_structure(s)) throw GenError("unknown structure '" + s + "'");
  }
}

std::vector<std::string> GenSpec::requested_structures() const {
  if (structures.empty()) return all_structures();
  std::vector<std::string> out;
  for (const auto& s : all_structures()) {
    if (std::find(structures.begin(), structures.end(), s) != structures.end()) {
      out.push_back(s);
    }
  }
  return out;
}

nlohmann::ordered_json spec_to_json(const GenSpec& s) {
  nlohmann::ordered_json j;
  j["entities"] = s.entities;
  j["relations"] = s.relations;
  j["train_edges"] = s.train_edges;
  j["valid_edges"] = s.valid_edges;
  j["test_edges"] = s.test_edges;
  j["train_queries"] = s.train_queries;
  j["valid_queries"] = s.valid_queries;
  j["test_queries"] = s.test_queries;
  j["negation_ratio"] = s.negation_ratio;
  j["union_train_queries"] = s.union_train_queries;
  j["structures"] = s.structures;
  j["answer_cap"] = s.answer_cap;
  j["clusters"] = s.clusters;
  j["noise"] = s.noise;
  j["attempts_per_query"] = s.attempts_per_query;
  j["seed"] = s.seed;
  return j;
}

GenSpec spec_from_json(const nlohmann::json& j, GenSpec s) {
  if (!j.is_object()) throw GenError("dataset spec must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "entities") s.entities = v.get<std::size_t>();
      else if (key == "relations") s.relations = v.get<std::size_t>();
      else if (key == "train_edges") s.train_edges = v.get<std::size_t>();
      else if (key == "valid_edges") s.valid_edges = v.get<std::size_t>();
      else if (key == "test_edges") s.test_edges = v.get<std::size_t>();
      else if (key == "train_queries") s.train_queries = v.get<std::size_t>();
      else if (key == "valid_queries") s.valid_queries = v.get<std::size_t>();
      else if (key == "test_queries") s.test_queries = v.get<std::size_t>();
      else if (key == "negation_ratio") s.negation_ratio = v.get<double>();
      else if (key == "union_train_queries") s.union_train_queries = v.get<std::size_t>();
      else if (key == "structures") s.structures = v.get<std::vector<std::string>>();
      else if (key == "answer_cap") s.answer_cap = v.get<std::size_t>();
      else if (key == "clusters") s.clusters = v.get<std::size_t>();
      else if (key == "noise") s.noise = v.get<double>();
      else if (key == "attempts_per_query") s.attempts_per_query = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else throw GenError("unknown dataset spec key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw GenError(std::string("dataset spec: ") + ex.what());
  }
  s.validate();
  return s;
}

GraphSplits generate_kg(const GenSpec& spec) {
  spec.validate();
  std::mt19937_64 rng = make_rng(spec.seed, 0x6b67u, 0);
  const std::size_t n = spec.entities;
  const std::size_t m = spec.relations;
  const std::size_t k =
      spec.clusters ? std::min(spec.clusters, n) : std::max<std::size_t>(2, n / 20);

  // Latent groups and a skewed popularity (rank-based, Zipf-like).
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<std::size_t> group(n);
  std::vector<double> popularity(n);
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t pos = 0; pos < n; ++pos) {
    group[order[pos]] = pos % k;
    members[pos % k].push_back(order[pos]);
  }
  shuffle(order, rng);
  for (std::size_t pos = 0; pos < n; ++pos) {
    popularity[order[pos]] = 1.0 / std::pow(1.0 + static_cast<double>(pos), 0.8);
  }
  const WeightedPicker any_entity(popularity);
  std::vector<WeightedPicker> in_group;
  for (const auto& g : members) {
    std::vector<double> w;
    for (std::size_t e : g) w.push_back(popularity[e]);
    in_group.emplace_back(w);
  }
  std::vector<std::vector<std::size_t>> group_map(m, std::vector<std::size_t>(k));
  for (auto& row : group_map) {
    for (auto& target : row) target = below(rng, k);
  }

  struct Edge {
    std::size_t h, r, t;
  };
  auto draw_tail = [&](std::size_t h, std::size_t r) {
    if (unit(rng) < spec.noise) return any_entity(rng);
    const std::size_t g = group_map[r][group[h]];
    return members[g][in_group[g](rng)];
  };

  const std::size_t base_total =
      (spec.train_edges + spec.valid_edges + spec.test_edges) / 2;
  const std::size_t base_train = spec.train_edges / 2;
  std::vector<Edge> coverage, rest;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  auto try_add = [&](std::vector<Edge>& into, std::size_t h, std::size_t r,
                     std::size_t t) {
    if (h == t || !seen.insert({h, r, t}).second) return false;
    into.push_back({h, r, t});
    return true;
  };

  // Every entity heads at least one training edge when the budget allows.
  std::vector<std::size_t> heads(n);
  for (std::size_t i = 0; i < n; ++i) heads[i] = i;
  shuffle(heads, rng);
  for (std::size_t i = 0; i < std::min(n, base_train); ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const std::size_t r = below(rng, m);
      if (try_add(coverage, heads[i], r, draw_tail(heads[i], r))) break;
    }
  }
  const std::size_t budget = 200 * base_total + 1000;
  for (std::size_t attempt = 0;
       coverage.size() + rest.size() < base_total && attempt < budget; ++attempt) {
    const std::size_t h = any_entity(rng);
    const std::size_t r = below(rng, m);
    try_add(rest, h, r, draw_tail(h, r));
  }
  // Sparse draws failed to fill the quota; fall back to uniform edges.
  for (std::size_t attempt = 0;
       coverage.size() + rest.size() < base_total && attempt < 50 * budget;
       ++attempt) {
    try_add(rest, below(rng, n), below(rng, m), below(rng, n));
  }
  if (coverage.size() + rest.size() < base_total) {
    throw GenError("could not draw " + std::to_string(base_total) +
                   " distinct edges");
  }
  shuffle(rest, rng);

  std::vector<Edge> all = coverage;
  all.insert(all.end(), rest.begin(), rest.end());
  auto raw = [](std::size_t begin, std::size_t end, const std::vector<Edge>& edges) {
    std::vector<RawTriple> out;
    for (std::size_t i = begin; i < end; ++i) {
      const Edge& e = edges[i];
      const std::string h = "e" + std::to_string(e.h);
      const std::string t = "e" + std::to_string(e.t);
      out.push_back({h, "+r" + std::to_string(e.r), t});
      out.push_back({t, "-r" + std::to_string(e.r), h});
    }
    return out;
  };
  const std::size_t base_valid = spec.valid_edges / 2;
  const auto train = raw(0, base_train, all);
  const auto valid = raw(base_train, base_train + base_valid, all);
  const auto test = raw(base_train + base_valid, base_total, all);
  return build_splits(train, valid, test);
}

namespace {

struct SplitContext {
  const KnowledgeGraph* current;
  const KnowledgeGraph* previous;  // null for the training split
  std::vector<EntityId> targets;   // entities with an incoming edge
};

bool ground(QueryNode& node, EntityId target, const SplitContext& ctx,
            std::mt19937_64& rng) {
  switch (node.kind) {
    case NodeKind::kAnchor:
      node.id = target;
      return true;
    case NodeKind::kProjection: {
      const auto edges = ctx.current->in_edges(target);
      if (edges.empty()) return false;
      const auto& [r, h] = edges[below(rng, edges.size())];
      node.id = r;
      return ground(node.children[0], h, ctx, rng);
    }
    case NodeKind::kAnd:
    case NodeKind::kOr:
      for (QueryNode& child : node.children) {
        if (child.kind == NodeKind::kNot) {
          const EntityId other = ctx.targets[below(rng, ctx.targets.size())];
          if (!ground(child.children[0], other, ctx, rng)) return false;
        } else if (!ground(child, target, ctx, rng)) {
          return false;
        }
      }
      return true;
    case NodeKind::kNot:
      return ground(node.children[0], target, ctx, rng);
  }
  return false;
}

bool distinct_siblings(const QueryNode& q) {
  for (std::size_t i = 0; i < q.children.size(); ++i) {
    for (std::size_t j = i + 1; j < q.children.size(); ++j) {
      if (q.children[i] == q.children[j]) return false;
    }
    if (!distinct_siblings(q.children[i])) return false;
  }
  return true;
}

// Every negated branch must be a proper, non-empty subset of V and must
// remove at least one entity from its conjunction.
bool negation_constrains(const KnowledgeGraph& kg, const QueryNode& q) {
  if (q.kind == NodeKind::kAnd) {
    std::vector<QueryNode> positive;
    std::vector<const QueryNode*> negated;
    for (const QueryNode& c : q.children) {
      if (c.kind == NodeKind::kNot) {
        negated.push_back(&c.children[0]);
      } else {
        positive.push_back(c);
      }
    }
    if (!negated.empty()) {
      const EntitySet pos = positive.size() == 1
                                ? oracle_answer(kg, positive[0])
                                : oracle_answer(kg, QueryNode::conjunction(positive));
      for (const QueryNode* n : negated) {
        const EntitySet neg = oracle_answer(kg, *n);
        if (neg.empty() || neg.size() >= kg.num_entities()) return false;
        EntitySet overlap;
        std::set_intersection(pos.begin(), pos.end(), neg.begin(), neg.end(),
                              std::back_inserter(overlap));
        if (overlap.empty()) return false;
      }
    }
  }
  for (const QueryNode& c : q.children) {
    if (!negation_constrains(kg, c)) return false;
  }
  return true;
}

std::vector<EntityId> entities_with_in_edges(const KnowledgeGraph& kg) {
  std::vector<EntityId> out;
  for (std::size_t e = 0; e < kg.num_entities(); ++e) {
    if (!kg.in_edges(static_cast<EntityId>(e)).empty()) {
      out.push_back(static_cast<EntityId>(e));
    }
  }
  return out;
}

std::vector<QueryRecord> sample_structure(const SplitContext& ctx,
                                          const std::string& tag,
                                          std::size_t count, const GenSpec& spec,
                                          std::mt19937_64& rng,
                                          const char* split_name) {
  std::vector<QueryRecord> out;
  if (count == 0) return out;
  if (ctx.targets.empty()) {
    throw GenError(std::string(split_name) + " graph has no edges to sample from");
  }
  const QueryNode shape = structure_template(tag);
  std::set<std::string> seen;
  const std::size_t budget = spec.attempts_per_query * count;
  for (std::size_t attempt = 0; out.size() < count && attempt < budget; ++attempt) {
    QueryNode q = shape;
    const EntityId target = ctx.targets[below(rng, ctx.targets.size())];
    if (!ground(q, target, ctx, rng)) continue;
    if (!distinct_siblings(q)) continue;
    const EntitySet answers = oracle_answer(*ctx.current, q);
    if (answers.empty() || answers.size() > spec.answer_cap) continue;
    if (has_negation(q) && !negation_constrains(*ctx.current, q)) continue;

    QueryRecord r;
    r.tag = tag;
    if (ctx.previous) {
      const EntitySet before = oracle_answer(*ctx.previous, q);
      std::set_intersection(answers.begin(), answers.end(), before.begin(),
                            before.end(), std::back_inserter(r.answers_easy));
      std::set_difference(answers.begin(), answers.end(), before.begin(),
                          before.end(), std::back_inserter(r.answers_hard));
      if (r.answers_hard.empty()) continue;
    } else {
      r.answers_hard = answers;
    }
    // Structural key: the tree with its ids, independent of vocabulary.
    std::string key;
    std::function<void(const QueryNode&)> encode = [&](const QueryNode& node) {
      key += std::to_string(static_cast<int>(node.kind)) + ":" +
             std::to_string(node.id) + "(";
      for (const auto& c : node.children) encode(c);
      key += ")";
    };
    encode(q);
    if (!seen.insert(key).second) continue;
    r.query = std::move(q);
    out.push_back(std::move(r));
  }
  if (out.size() < count) {
    throw GenError("sampling budget exhausted for structure " + tag + " on the " +
                   split_name + " split (" + std::to_string(out.size()) + " of " +
                   std::to_string(count) + " queries)");
  }
  return out;
}

}  // namespace

QuerySets generate_queries(const GraphSplits& splits, const GenSpec& spec) {
  spec.validate();
  const auto structures = spec.requested_structures();
  const SplitContext contexts[] = {
      {&splits.train, nullptr, entities_with_in_edges(splits.train)},
      {&splits.valid, &splits.train, entities_with_in_edges(splits.valid)},
      {&splits.test, &splits.valid, entities_with_in_edges(splits.test)},
  };
  const char* names[] = {"train", "valid", "test"};
  QuerySets sets;
  std::vector<QueryRecord>* outputs[] = {&sets.train, &sets.valid, &sets.test};
  for (std::uint32_t s = 0; s < 3; ++s) {
    for (std::uint32_t t = 0; t < structures.size(); ++t) {
      const std::string& tag = structures[t];
      std::size_t count = 0;
      if (s == 0) {
        if (is_negation_structure(tag)) {
          count = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::llround(
                     static_cast<double>(spec.train_queries) * spec.negation_ratio)));
          if (spec.negation_ratio == 0.0) count = 0;
        } else if (is_training_structure(tag)) {
          count = spec.train_queries;
        } else if (tag == "2u" || tag == "up") {
          count = spec.union_train_queries;
        }
      } else {
        count = s == 1 ? spec.valid_queries : spec.test_queries;
      }
      // Index the stream by structure name so adding a structure does not
      // perturb the others.
      const auto structure_index = static_cast<std::uint32_t>(
          std::find(all_structures().begin(), all_structures().end(), tag) -
          all_structures().begin());
      std::mt19937_64 rng = make_rng(spec.seed, 1 + s, structure_index);
      auto records = sample_structure(contexts[s], tag, count, spec, rng, names[s]);
      spdlog::debug("{}: {} x {}", names[s], records.size(), tag);
      outputs[s]->insert(outputs[s]->end(), std::make_move_iterator(records.begin()),
                         std::make_move_iterator(records.end()));
    }
  }
  return sets;
}

void write_dataset(const std::filesystem::path& dir, const GraphSplits& splits,
                   const QuerySets& queries, const GenSpec& spec) {
  std::filesystem::create_directories(dir);
  save_triples(splits.train, dir / "train.txt");
  const auto valid_new = new_triples(splits.train, splits.valid);
  save_triples(splits.valid, valid_new, dir / "valid.txt");
  const auto test_new = new_triples(splits.valid, splits.test);
  save_triples(splits.test, test_new, dir / "test.txt");
  const Vocabulary& ents = splits.entities();
  const Vocabulary& rels = splits.relations();
  write_records(dir / "train-queries.jsonl", queries.train, ents, rels);
  write_records(dir / "valid-queries.jsonl", queries.valid, ents, rels);
  write_records(dir / "test-queries.jsonl", queries.test, ents, rels);
  std::ofstream(dir / "spec.json") << spec_to_json(spec).dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.splits = load_splits(dir);
  const Vocabulary& ents = d.splits.entities();
  const Vocabulary& rels = d.splits.relations();
  auto read = [&](const char* name) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) return std::vector<QueryRecord>{};
    return read_records(path, ents, rels);
  };
  d.queries.train = read("train-queries.jsonl");
  d.queries.valid = read("valid-queries.jsonl");
  d.queries.test = read("test-queries.jsonl");
  return d;
}

}  // namespace flex
