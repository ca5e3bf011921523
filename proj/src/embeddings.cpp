#include "flex/embeddings.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace flex {

std::string_view dyadic_name(DyadicKind k) {
  switch (k) {
    case DyadicKind::kIntersection: return "intersection";
    case DyadicKind::kUnion: return "union";
    case DyadicKind::kImplication: return "implication";
    case DyadicKind::kXor: return "xor";
  }
  return "unknown";
}

bool ModelConfig::has_attention(DyadicKind k) const {
  switch (k) {
    case DyadicKind::kIntersection: return true;
    case DyadicKind::kUnion: return trainable_union;
    case DyadicKind::kImplication:
    case DyadicKind::kXor: return extra_connectives;
  }
  return false;
}

void ModelConfig::validate() const {
  if (dim < 2) throw ConfigError("dim must be >= 2");
  if (feature_parts < 1) throw ConfigError("feature_parts must be >= 1");
  if (hidden_dim() < 1) throw ConfigError("hidden must be >= 1");
  if (!unbounded && !(boundary > 0)) throw ConfigError("boundary must be > 0");
  if (!(gamma > 0)) throw ConfigError("gamma must be > 0");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (negatives < 1) throw ConfigError("negatives must be >= 1");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
}

namespace {

template <typename E>
struct EnumNames {
  std::vector<std::pair<E, const char*>> names;

  const char* to(E e) const {
    for (const auto& [v, n] : names) {
      if (v == e) return n;
    }
    return "?";
  }
  E from(const std::string& key, const std::string& s) const {
    for (const auto& [v, n] : names) {
      if (s == n) return v;
    }
    std::string allowed;
    for (const auto& [v, n] : names) allowed += std::string(allowed.empty() ? "" : "|") + n;
    throw ConfigError(key + ": '" + s + "' is not one of " + allowed);
  }
};

const EnumNames<IntersectionVariant> kIntersectionNames{
    {{IntersectionVariant::kProduct, "product"},
     {IntersectionVariant::kMin, "min"}}};
const EnumNames<UnionVariant> kUnionNames{
    {{UnionVariant::kInclusionExclusion, "incl-excl"},
     {UnionVariant::kMax, "max"}}};
const EnumNames<DnfAggregator> kAggregatorNames{
    {{DnfAggregator::kVectorOr, "vector-or"}, {DnfAggregator::kMin, "min"}}};
const EnumNames<LogicReduction> kReductionNames{
    {{LogicReduction::kSum, "sum"}, {LogicReduction::kMean, "mean"}}};
const EnumNames<AttentionMode> kAttentionNames{
    {{AttentionMode::kDimension, "dimension"},
     {AttentionMode::kScalar, "scalar"}}};

}  // namespace

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["dim"] = c.dim;
  j["feature_parts"] = c.feature_parts;
  j["boundary"] = c.boundary;
  j["unbounded"] = c.unbounded;
  j["hidden"] = c.hidden_dim();
  j["intersection"] = kIntersectionNames.to(c.intersection);
  j["union"] = kUnionNames.to(c.union_variant);
  j["dnf_aggregator"] = kAggregatorNames.to(c.dnf_aggregator);
  j["logic_reduction"] = kReductionNames.to(c.logic_reduction);
  j["attention"] = kAttentionNames.to(c.attention);
  j["ablate_logic"] = c.ablate_logic;
  j["negation"] = c.negation;
  j["trainable_union"] = c.trainable_union;
  j["extra_connectives"] = c.extra_connectives;
  j["gamma"] = c.gamma;
  j["learning_rate"] = c.learning_rate;
  j["batch"] = c.batch;
  j["negatives"] = c.negatives;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["log_every"] = c.log_every;
  j["train_structures"] = c.train_structures;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "dim") c.dim = v.get<std::size_t>();
      else if (key == "feature_parts") c.feature_parts = v.get<std::size_t>();
      else if (key == "boundary") c.boundary = v.get<double>();
      else if (key == "unbounded") c.unbounded = v.get<bool>();
      else if (key == "hidden") c.hidden = v.get<std::size_t>();
      else if (key == "intersection") c.intersection = kIntersectionNames.from(key, v.get<std::string>());
      else if (key == "union") c.union_variant = kUnionNames.from(key, v.get<std::string>());
      else if (key == "dnf_aggregator") c.dnf_aggregator = kAggregatorNames.from(key, v.get<std::string>());
      else if (key == "logic_reduction") c.logic_reduction = kReductionNames.from(key, v.get<std::string>());
      else if (key == "attention") c.attention = kAttentionNames.from(key, v.get<std::string>());
      else if (key == "ablate_logic") c.ablate_logic = v.get<bool>();
      else if (key == "negation") c.negation = v.get<bool>();
      else if (key == "trainable_union") c.trainable_union = v.get<bool>();
      else if (key == "extra_connectives") c.extra_connectives = v.get<bool>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch") c.batch = v.get<std::size_t>();
      else if (key == "negatives") c.negatives = v.get<std::size_t>();
      else if (key == "steps") c.steps = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::size_t>();
      else if (key == "log_every") c.log_every = v.get<std::size_t>();
      else if (key == "train_structures") c.train_structures = v.get<std::vector<std::string>>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("model config: ") + ex.what());
  }
  c.validate();
  return c;
}

Mlp::Mlp(const std::string& name, std::size_t in, std::size_t hidden,
         std::size_t out)
    : w1(name + ".w1", {in, hidden}),
      b1(name + ".b1", {1, hidden}),
      w2(name + ".w2", {hidden, out}),
      b2(name + ".b2", {1, out}) {}

Model::Model(const ModelConfig& config, std::size_t n_entities,
             std::size_t n_relations)
    : config_(config), n_entities_(n_entities), n_relations_(n_relations) {
  config_.validate();
  const std::size_t d = config.dim;
  const std::size_t f = config.feature_parts;
  const std::size_t lw = config.logic_width();
  for (std::size_t j = 0; j < f; ++j) {
    entity_features_.emplace_back("entity.feature" + std::to_string(j),
                                  Shape{n_entities, d});
  }
  for (std::size_t j = 0; j < f; ++j) {
    relation_features_.emplace_back("relation.feature" + std::to_string(j),
                                    Shape{n_relations, d});
  }
  if (lw > 0) relation_logic_ = Param("relation.logic", {n_relations, lw});
  projection_ = Mlp("projection", f * d + lw, config.hidden_dim(), f * d + lw);
  if (config.negation) {
    negation_ = Mlp("negation", f * d + lw, d, f * d);
    has_negation_ = true;
  }
  for (std::size_t k = 0; k < kDyadicKinds; ++k) {
    const auto kind = static_cast<DyadicKind>(k);
    if (!config.has_attention(kind)) continue;
    for (std::size_t j = 0; j < f; ++j) {
      attention_[k].emplace_back("attention." + std::string(dyadic_name(kind)) +
                                     std::to_string(j),
                                 d + lw, d, d);
    }
  }
}

Mlp& Model::negation() {
  if (!has_negation_) {
    throw ConfigError("model was built without a negation operator");
  }
  return negation_;
}

Mlp& Model::attention(DyadicKind kind, std::size_t j) {
  auto& nets = attention_[static_cast<std::size_t>(kind)];
  if (nets.empty()) {
    throw ConfigError("model was built without a " +
                      std::string(dyadic_name(kind)) + " operator");
  }
  return nets.at(j);
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (Param& p : entity_features_) out.push_back(&p);
  for (Param& p : relation_features_) out.push_back(&p);
  if (config_.logic_width() > 0) out.push_back(&relation_logic_);
  auto add_mlp = [&out](Mlp& m) {
    out.push_back(&m.w1);
    out.push_back(&m.b1);
    out.push_back(&m.w2);
    out.push_back(&m.b2);
  };
  add_mlp(projection_);
  if (has_negation_) add_mlp(negation_);
  for (auto& nets : attention_) {
    for (Mlp& m : nets) add_mlp(m);
  }
  return out;
}

std::vector<Mlp*> Model::mlps() {
  std::vector<Mlp*> out{&projection_};
  if (has_negation_) out.push_back(&negation_);
  for (auto& nets : attention_) {
    for (Mlp& m : nets) out.push_back(&m);
  }
  return out;
}

std::vector<const Param*> Model::params() const {
  auto mutable_params = const_cast<Model*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t Model::allocated_values() const {
  std::size_t n = 0;
  for (const Param* p : params()) n += p->value.size();
  return n;
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Param* p : params()) {
    for (double v : p->value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

Model init_model(const ModelConfig& config, std::size_t n_entities,
                 std::size_t n_relations) {
  if (n_entities == 0 || n_relations == 0) {
    throw ConfigError("cannot initialize a model over an empty vocabulary");
  }
  Model model(config, n_entities, n_relations);
  std::mt19937_64 rng(config.seed);
  auto uniform = [&rng](Tensor& t, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data()) v = dist(rng);
  };
  const double half =
      config.unbounded ? 0.5 : config.boundary / 2.0;
  for (std::size_t j = 0; j < config.feature_parts; ++j) {
    uniform(model.entity_features(j).value, -half, half);
  }
  for (std::size_t j = 0; j < config.feature_parts; ++j) {
    uniform(model.relation_features(j).value, -half, half);
  }
  if (config.logic_width() > 0) uniform(model.relation_logic().value, -0.5, 0.5);

  for (Mlp* m : model.mlps()) {
    for (Tensor* w : {&m->w1.value, &m->w2.value}) {
      const double s =
          std::sqrt(6.0 / static_cast<double>(w->rows() + w->cols()));
      uniform(*w, -s, s);
    }
  }
  return model;
}

Model init_model(const ModelConfig& config, const Vocabulary& entities,
                 const Vocabulary& relations) {
  Model m = init_model(config, entities.size(), relations.size());
  m.entity_vocab_hash = entities.hash();
  m.relation_vocab_hash = relations.hash();
  return m;
}

std::size_t ParamReport::weights() const {
  std::size_t n = 0;
  for (const auto& i : items) n += i.weights;
  return n;
}

std::size_t ParamReport::biases() const {
  std::size_t n = 0;
  for (const auto& i : items) n += i.biases;
  return n;
}

ParamReport count_params(const ModelConfig& config, std::size_t n_entities,
                         std::size_t n_relations) {
  config.validate();
  const std::size_t d = config.dim;
  const std::size_t f = config.feature_parts;
  const std::size_t h = config.hidden_dim();
  const std::size_t lw = config.logic_width();
  const std::size_t width = f * d + lw;

  ParamReport r;
  r.items.push_back({"entity features", n_entities * f * d, 0});
  r.items.push_back({"relation features", n_relations * f * d, 0});
  if (lw > 0) r.items.push_back({"relation logic", n_relations * lw, 0});
  r.items.push_back({"projection", width * h + h * width, h + width});
  if (config.negation) {
    r.items.push_back({"negation", width * d + d * f * d, d + f * d});
  }
  for (std::size_t k = 0; k < kDyadicKinds; ++k) {
    const auto kind = static_cast<DyadicKind>(k);
    if (!config.has_attention(kind)) continue;
    r.items.push_back({"attention " + std::string(dyadic_name(kind)),
                       f * ((d + lw) * d + d * d), f * 2 * d});
  }
  return r;
}

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Vocabulary& entities, const Vocabulary& relations,
                     std::size_t step, std::size_t adam_step) {
  nlohmann::ordered_json j;
  j["format"] = "flex-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(model.config());
  j["entity_vocab_hash"] = hex(entities.hash());
  j["relation_vocab_hash"] = hex(relations.hash());
  j["entities"] = entities.names();
  j["relations"] = relations.names();
  j["step"] = step;
  j["adam_step"] = adam_step;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const Param* p : model.params()) {
    nlohmann::ordered_json pj;
    pj["name"] = p->name;
    pj["rows"] = p->value.rows();
    pj["cols"] = p->value.cols();
    pj["value"] = p->value.values();
    pj["adam_m"] = p->adam_m.values();
    pj["adam_v"] = p->adam_v.values();
    params.push_back(std::move(pj));
  }
  j["params"] = std::move(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("checkpoint " + path.string() + ": " + ex.what());
  }
  try {
    if (j.at("format") != "flex-checkpoint") {
      throw ConfigError("not a checkpoint file: " + path.string());
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version " +
                        std::to_string(version));
    }
    Checkpoint ck;
    for (const auto& n : j.at("entities")) ck.entities.intern(n.get<std::string>());
    for (const auto& n : j.at("relations")) ck.relations.intern(n.get<std::string>());
    if (hex(ck.entities.hash()) != j.at("entity_vocab_hash").get<std::string>() ||
        hex(ck.relations.hash()) != j.at("relation_vocab_hash").get<std::string>()) {
      throw ConfigError("checkpoint vocabulary hash mismatch");
    }
    const ModelConfig config = config_from_json(j.at("config"));
    ck.model = Model(config, ck.entities.size(), ck.relations.size());
    ck.model.entity_vocab_hash = ck.entities.hash();
    ck.model.relation_vocab_hash = ck.relations.hash();
    const auto& params = j.at("params");
    auto targets = ck.model.params();
    if (params.size() != targets.size()) {
      throw ConfigError("checkpoint has " + std::to_string(params.size()) +
                        " tensors, model expects " +
                        std::to_string(targets.size()));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      Param& p = *targets[i];
      const auto& pj = params[i];
      if (pj.at("name").get<std::string>() != p.name ||
          pj.at("rows").get<std::size_t>() != p.value.rows() ||
          pj.at("cols").get<std::size_t>() != p.value.cols()) {
        throw ConfigError("checkpoint tensor " + std::to_string(i) +
                          " does not match parameter " + p.name);
      }
      auto fill = [&](const char* key, Tensor& t) {
        auto v = pj.at(key).get<std::vector<double>>();
        t = Tensor(t.shape(), std::move(v));
      };
      fill("value", p.value);
      fill("adam_m", p.adam_m);
      fill("adam_v", p.adam_v);
    }
    ck.step = j.at("step").get<std::size_t>();
    ck.adam_step = j.at("adam_step").get<std::size_t>();
    return ck;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("checkpoint " + path.string() + ": " + ex.what());
  } catch (const ShapeError& ex) {
    throw ConfigError("checkpoint " + path.string() + ": " + ex.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const Vocabulary& entities,
                           const Vocabulary& relations) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.entities.hash() != entities.hash() ||
      ck.relations.hash() != relations.hash()) {
    throw ConfigError("checkpoint " + path.string() +
                      " was trained on a different vocabulary");
  }
  return ck;
}

}  // namespace flex
