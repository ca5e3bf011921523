#include "flex/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

namespace flex {

Var conjunctive_distance(Tape& tape, const ModelConfig& config,
                         const Embedding& entity, const Embedding& query) {
  if (entity.features.size() != query.features.size()) {
    throw ShapeError("distance: feature part count mismatch");
  }
  Var total = tape.sum(tape.abs(tape.sub(entity.features[0], query.features[0])));
  for (std::size_t j = 1; j < query.features.size(); ++j) {
    total = tape.add(
        total, tape.sum(tape.abs(tape.sub(entity.features[j], query.features[j]))));
  }
  if (query.logic.valid()) {
    Var logic = tape.sum(query.logic);
    if (config.logic_reduction == LogicReduction::kMean) {
      logic = tape.scale(logic, 1.0 / static_cast<double>(config.dim));
    }
    total = tape.add(total, logic);
  }
  return total;
}

double conjunctive_distance(const ModelConfig& config,
                            const EmbeddingValue& entity,
                            const EmbeddingValue& query) {
  if (entity.features.size() != query.features.size()) {
    throw ShapeError("distance: feature part count mismatch");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < query.features.size(); ++j) {
    const auto& a = entity.features[j];
    const auto& b = query.features[j];
    if (a.size() != b.size()) throw ShapeError("distance: dimension mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  }
  double logic = 0.0;
  for (double x : query.logic) logic += x;
  if (config.logic_reduction == LogicReduction::kMean && !query.logic.empty()) {
    logic /= static_cast<double>(query.logic.size());
  }
  return total + logic;
}

Var disjunctive_distance(Tape& tape, std::span<const Var> distances,
                         DnfAggregator aggregator) {
  if (distances.empty()) throw ShapeError("disjunctive distance of no disjuncts");
  Var acc = distances[0];
  for (std::size_t i = 1; i < distances.size(); ++i) {
    const Var b = distances[i];
    acc = aggregator == DnfAggregator::kMin
              ? tape.min(acc, b)
              : tape.sub(tape.add(acc, b), tape.mul(acc, b));
  }
  return acc;
}

double disjunctive_distance(std::span<const double> distances,
                            DnfAggregator aggregator) {
  if (distances.empty()) throw ShapeError("disjunctive distance of no disjuncts");
  double acc = distances[0];
  for (std::size_t i = 1; i < distances.size(); ++i) {
    const double b = distances[i];
    acc = aggregator == DnfAggregator::kMin ? std::min(acc, b) : acc + b - acc * b;
  }
  return acc;
}

Var negative_sampling_loss(Tape& tape, Var positive,
                           std::span<const Var> negatives, double gamma) {
  if (negatives.empty()) throw ShapeError("loss needs at least one negative");
  const Var g = tape.constant(Tensor::scalar(gamma));
  Var loss = tape.scale(tape.log_sigmoid(tape.sub(g, positive)), -1.0);
  Var neg = tape.log_sigmoid(tape.sub(negatives[0], g));
  for (std::size_t i = 1; i < negatives.size(); ++i) {
    neg = tape.add(neg, tape.log_sigmoid(tape.sub(negatives[i], g)));
  }
  return tape.sub(loss, tape.scale(neg, 1.0 / static_cast<double>(negatives.size())));
}

namespace {

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

double negative_sampling_loss(double positive, std::span<const double> negatives,
                              double gamma) {
  if (negatives.empty()) throw ShapeError("loss needs at least one negative");
  double neg = 0.0;
  for (double d : negatives) neg += log_sigmoid(d - gamma);
  return -log_sigmoid(gamma - positive) -
         neg / static_cast<double>(negatives.size());
}

void adam_step(std::span<Param* const> params, AdamState& state, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (Param* p : params) {
    auto value = p->value.data();
    auto grad = p->grad.data();
    auto m = p->adam_m.data();
    auto v = p->adam_v.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

QueryEmbedding embed_for_distance(Tape& tape, Model& model,
                                  const QueryNode& q) {
  QueryEmbedding out;
  if (has_disjunction(q) && !model.config().trainable_union) {
    for (const QueryNode& d : to_dnf(q)) {
      out.disjuncts.push_back(embed_query(tape, model, d));
    }
  } else {
    out.disjuncts.push_back(embed_query(tape, model, q));
  }
  return out;
}

Var query_distance(Tape& tape, Model& model, const QueryEmbedding& q,
                   EntityId entity) {
  const Embedding v = lookup_entity(tape, model, entity);
  std::vector<Var> ds;
  for (const Embedding& e : q.disjuncts) {
    ds.push_back(conjunctive_distance(tape, model.config(), v, e));
  }
  if (ds.size() == 1) return ds[0];
  return disjunctive_distance(tape, ds, model.config().dnf_aggregator);
}

std::vector<const QueryRecord*> select_training_records(
    std::span<const QueryRecord> records, const ModelConfig& config) {
  std::vector<const QueryRecord*> out;
  for (const QueryRecord& r : records) {
    if (!config.train_structures.empty() &&
        std::find(config.train_structures.begin(),
                  config.train_structures.end(),
                  r.tag) == config.train_structures.end()) {
      continue;
    }
    if (r.all_answers().empty()) continue;
    out.push_back(&r);
  }
  if (out.empty()) {
    std::string list;
    for (const auto& s : config.train_structures) list += (list.empty() ? "" : ",") + s;
    throw TrainError("no training records match the structure filter [" +
                     list + "]");
  }
  return out;
}

namespace {

std::mt19937_64 step_rng(std::uint64_t seed, std::size_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch,
                                     std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 7u};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with a fixed reduction so the order does not depend on the
  // standard library's distribution implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

EntityId sample_from(std::mt19937_64& rng, const EntitySet& set) {
  return set[static_cast<std::size_t>(rng() % set.size())];
}

EntityId sample_negative(std::mt19937_64& rng, const EntitySet& answers,
                         std::size_t n_entities) {
  if (answers.size() >= n_entities) {
    throw TrainError("query answers every entity; no negatives exist");
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    const auto e = static_cast<EntityId>(rng() % n_entities);
    if (!std::binary_search(answers.begin(), answers.end(), e)) return e;
  }
  // Dense answer sets: draw directly from the complement.
  std::vector<EntityId> pool;
  for (std::size_t e = 0; e < n_entities; ++e) {
    const auto id = static_cast<EntityId>(e);
    if (!std::binary_search(answers.begin(), answers.end(), id)) pool.push_back(id);
  }
  return pool[static_cast<std::size_t>(rng() % pool.size())];
}

std::size_t structure_rank(const std::string& tag) {
  const auto& all = all_structures();
  const auto it = std::find(all.begin(), all.end(), tag);
  return static_cast<std::size_t>(it - all.begin());
}

std::string format_mix(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(),
                                                         counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return structure_rank(a.first) < structure_rank(b.first);
  });
  std::string out;
  for (const auto& [tag, n] : items) {
    if (!out.empty()) out += ';';
    out += tag + ":" + std::to_string(n);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

void clamp_entities(Model& model) {
  const ModelConfig& c = model.config();
  if (c.unbounded) return;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    for (double& x : model.entity_features(j).value.data()) {
      x = std::clamp(x, -c.boundary, c.boundary);
    }
  }
}

// Records of one step: consecutive positions of the epoch-shuffled stream,
// then grouped by structure (stable) so equal shapes run back to back.
std::vector<const QueryRecord*> batch_for_step(
    std::span<const QueryRecord* const> pool, std::uint64_t seed,
    std::size_t step, std::size_t batch) {
  const std::size_t n = pool.size();
  std::vector<const QueryRecord*> out;
  std::size_t pos = step * batch;
  std::size_t epoch = pos / n;
  std::vector<std::size_t> order = epoch_order(seed, epoch, n);
  for (std::size_t i = 0; i < batch; ++i, ++pos) {
    if (pos / n != epoch) {
      epoch = pos / n;
      order = epoch_order(seed, epoch, n);
    }
    out.push_back(pool[order[pos % n]]);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    return structure_rank(a->tag) < structure_rank(b->tag);
  });
  return out;
}

}  // namespace

double accumulate_batch_gradient(Model& model,
                                 std::span<const QueryRecord* const> batch,
                                 std::uint64_t seed, std::size_t step) {
  const ModelConfig& c = model.config();
  std::mt19937_64 rng = step_rng(seed, step);
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const QueryRecord* r : batch) {
    const EntitySet answers = r->all_answers();
    const EntityId positive = sample_from(rng, answers);
    std::vector<EntityId> negatives;
    for (std::size_t i = 0; i < c.negatives; ++i) {
      negatives.push_back(sample_negative(rng, answers, model.num_entities()));
    }
    Tape tape;
    const QueryEmbedding q = embed_for_distance(tape, model, r->query);
    const Var d_pos = query_distance(tape, model, q, positive);
    std::vector<Var> d_neg;
    for (EntityId e : negatives) d_neg.push_back(query_distance(tape, model, q, e));
    const Var loss =
        tape.scale(negative_sampling_loss(tape, d_pos, d_neg, c.gamma), weight);
    tape.backward(loss);
    total += tape.scalar(loss);
  }
  return total;
}

double grad_norm_sq(Model& model, std::string_view prefix) {
  double s = 0.0;
  for (Param* p : model.params()) {
    if (!p->name.starts_with(prefix)) continue;
    for (double g : p->grad.data()) s += g * g;
  }
  return s;
}

TrainResult train(std::span<const QueryRecord> records,
                  const ModelConfig& config, std::size_t n_entities,
                  std::size_t n_relations, const TrainOptions& options) {
  config.validate();
  if (records.empty()) throw TrainError("training set is empty");
  if (options.out_dir && (!options.entities || !options.relations)) {
    throw TrainError("writing checkpoints needs the vocabularies");
  }
  const std::vector<const QueryRecord*> pool =
      select_training_records(records, config);
  for (const QueryRecord* r : pool) {
    if (has_negation(r->query) && !config.negation) {
      throw TrainError("record " + r->tag +
                       " uses negation but the negation operator is disabled");
    }
  }

  TrainResult result;
  std::size_t start = 0;
  if (options.resume_from) {
    Checkpoint ck = options.entities
                        ? load_checkpoint(*options.resume_from, *options.entities,
                                          *options.relations)
                        : load_checkpoint(*options.resume_from);
    result.model = std::move(ck.model);
    result.adam.step = ck.adam_step;
    start = ck.step;
    spdlog::info("resuming from {} at step {}", options.resume_from->string(),
                 start);
  } else {
    result.model = options.entities
                       ? init_model(config, *options.entities, *options.relations)
                       : init_model(config, n_entities, n_relations);
  }
  Model& model = result.model;
  if (model.num_entities() != n_entities || model.num_relations() != n_relations) {
    throw TrainError("model size does not match the dataset vocabulary");
  }
  const std::vector<Param*> params = model.params();

  std::ofstream csv;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir / "checkpoints");
    std::ofstream(*options.out_dir / "config.json")
        << config_to_json(config).dump(2) << '\n';
    const auto csv_path = *options.out_dir / "loss.csv";
    const bool fresh = !options.resume_from;
    csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw TrainError("cannot write " + csv_path.string());
    if (fresh) csv << "step,loss,structure_mix\n";
  }

  const std::size_t end =
      options.max_steps ? std::min(config.steps, start + options.max_steps)
                        : config.steps;
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;
  std::map<std::string, std::size_t> interval_mix;
  for (std::size_t step = start; step < end; ++step) {
    const auto batch = batch_for_step(pool, config.seed, step, config.batch);
    for (Param* p : params) p->zero_grad();
    const double loss = accumulate_batch_gradient(model, batch, config.seed, step);
    adam_step(params, result.adam, config.learning_rate);
    clamp_entities(model);

    std::map<std::string, std::size_t> mix;
    for (const auto* r : batch) ++mix[r->tag];
    result.trace.push_back({step + 1, loss, format_mix(mix)});
    interval_loss += loss;
    ++interval_steps;
    for (const auto& [tag, n] : mix) interval_mix[tag] += n;

    if ((step + 1) % config.log_every == 0 || step + 1 == end) {
      const double mean = interval_loss / static_cast<double>(interval_steps);
      spdlog::debug("step {} loss {:.6f}", step + 1, mean);
      if (csv.is_open()) {
        csv << step + 1 << ',' << format_double(mean) << ','
            << format_mix(interval_mix) << '\n';
      }
      interval_loss = 0.0;
      interval_steps = 0;
      interval_mix.clear();
    }
    if (options.out_dir && (step + 1) % config.checkpoint_every == 0) {
      save_checkpoint(*options.out_dir / "checkpoints" /
                          ("step-" + std::to_string(step + 1)),
                      model, *options.entities, *options.relations, step + 1,
                      result.adam.step);
    }
  }
  for (Param* p : params) p->zero_grad();
  if (options.out_dir && end == config.steps) {
    save_checkpoint(*options.out_dir / "final", model, *options.entities,
                    *options.relations, end, result.adam.step);
  }
  spdlog::info("trained {} steps over {} records", end - start, pool.size());
  return result;
}

}  // namespace flex
