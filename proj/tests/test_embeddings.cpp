#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "flex/embeddings.hpp"
#include "flex/operators.hpp"
#include "flex/training.hpp"
#include "support.hpp"

namespace flex {
namespace {

Vocabulary names(const std::string& prefix, std::size_t n) {
  Vocabulary v;
  for (std::size_t i = 0; i < n; ++i) v.intern(prefix + std::to_string(i));
  return v;
}

TEST(Config, DefaultsAndValidation) {
  ModelConfig c;
  EXPECT_EQ(c.dim, 32u);
  EXPECT_EQ(c.feature_parts, 1u);
  EXPECT_EQ(c.boundary, 1.0);
  EXPECT_EQ(c.hidden_dim(), 64u);
  EXPECT_EQ(c.gamma, 3.0);
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.batch, 64u);
  EXPECT_EQ(c.negatives, 16u);
  EXPECT_NO_THROW(c.validate());
  auto bad = [](auto mutate) {
    ModelConfig m;
    mutate(m);
    return m;
  };
  EXPECT_THROW(bad([](ModelConfig& m) { m.dim = 1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](ModelConfig& m) { m.feature_parts = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](ModelConfig& m) { m.gamma = 0.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](ModelConfig& m) { m.checkpoint_every = 0; }).validate(), ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ModelConfig c = testing::full_config(8, 5);
  c.feature_parts = 2;
  c.intersection = IntersectionVariant::kMin;
  c.union_variant = UnionVariant::kMax;
  c.dnf_aggregator = DnfAggregator::kMin;
  c.train_structures = {"1p", "2i"};
  const ModelConfig back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
  EXPECT_THROW(config_from_json(nlohmann::json{{"dimension", 4}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"intersection", "median"}}), ConfigError);
  EXPECT_EQ(config_from_json(nlohmann::json{{"dim", 4}}).gamma, 3.0);
}

TEST(Init, SameSeedIsBitIdentical) {
  const ModelConfig c = testing::full_config(6, 42);
  Model a = init_model(c, 10, 3), b = init_model(c, 10, 3);
  EXPECT_EQ(a.checksum(), b.checksum());
  auto pa = a.params(), pb = b.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  ModelConfig other = c;
  other.seed = 43;
  EXPECT_NE(init_model(other, 10, 3).checksum(), a.checksum());
}

TEST(Init, Ranges) {
  ModelConfig c;
  c.dim = 8;
  c.boundary = 2.0;
  Model m = init_model(c, 50, 4);
  for (double x : m.entity_features(0).value.data()) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
  for (double x : m.relation_logic().value.data()) EXPECT_LE(std::abs(x), 0.5);
  const double s = std::sqrt(6.0 / (16 + 16));
  for (double x : m.projection().w1.value.data()) EXPECT_LE(std::abs(x), s);
  for (double x : m.projection().b1.value.data()) EXPECT_EQ(x, 0.0);
  c.unbounded = true;
  Model u = init_model(c, 50, 4);
  for (double x : u.entity_features(0).value.data()) EXPECT_LE(std::abs(x), 0.5);
}

TEST(Lookup, EntityLogicIsZeroAndGradientsAreSparse) {
  ModelConfig c;
  c.dim = 4;
  Model m = init_model(c, 6, 2);
  Tape t;
  const Embedding e0 = lookup_entity(t, m, 0);
  for (double x : t.value(e0.logic).data()) EXPECT_EQ(x, 0.0);
  const Embedding e3 = lookup_entity(t, m, 3);
  t.backward(t.sum(e3.features[0]));
  const Tensor& g = m.entity_features(0).grad;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(g.at(3, i), 1.0);
    EXPECT_EQ(g.at(4, i), 0.0);
  }
  EXPECT_THROW(lookup_entity(t, m, 6), ShapeError);
  EXPECT_THROW(lookup_relation(t, m, -1), ShapeError);
}

TEST(Lookup, AdamStepLeavesUntouchedRowsAlone) {
  ModelConfig c;
  c.dim = 4;
  Model m = init_model(c, 6, 2);
  const Tensor before = m.entity_features(0).value;
  for (Param* p : m.params()) p->zero_grad();
  Tape t;
  t.backward(t.sum(t.abs(lookup_entity(t, m, 3).features[0])));
  AdamState adam;
  auto ps = m.params();
  adam_step(ps, adam, 0.1);
  const Tensor& after = m.entity_features(0).value;
  bool row3_moved = false;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(after.at(4, i), before.at(4, i));
    row3_moved |= after.at(3, i) != before.at(3, i);
  }
  EXPECT_TRUE(row3_moved);
}

// F=1, d=2, h=2, n=3 entities, m=1 relation, default operator set:
//   entity table 3*2 = 6, relation table 1*2 = 2, relation logic 1*2 = 2
//   projection (4x2 + 2x4) weights, (2 + 4) biases
//   negation (4x2 + 2x2) weights, (2 + 2) biases
//   intersection attention (4x2 + 2x2) weights, (2 + 2) biases
TEST(CountParams, HandCountedToyNet) {
  ModelConfig c;
  c.dim = 2;
  c.hidden = 2;
  const std::size_t weights = 6 + 2 + 2 + (8 + 8) + (8 + 4) + (8 + 4);
  const std::size_t biases = 6 + 4 + 4;
  const ParamReport r = count_params(c, 3, 1);
  EXPECT_EQ(r.weights(), weights);
  EXPECT_EQ(r.biases(), biases);
  EXPECT_EQ(r.total(), 64u);
  EXPECT_EQ(init_model(c, 3, 1).allocated_values(), 64u);
}

TEST(CountParams, MatchesAllocationAcrossConfigs) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    ModelConfig c;
    c.dim = 2 + rng() % 6;
    c.feature_parts = 1 + rng() % 3;
    c.hidden = rng() % 2 ? 0 : 1 + rng() % 9;
    c.negation = rng() % 2;
    c.trainable_union = rng() % 2;
    c.extra_connectives = rng() % 2;
    c.ablate_logic = rng() % 4 == 0;
    const std::size_t n = 1 + rng() % 20, m = 1 + rng() % 5;
    EXPECT_EQ(count_params(c, n, m).total(), init_model(c, n, m).allocated_values());
  }
}

TEST(CountParams, ExtraFeaturePartDelta) {
  ModelConfig c;
  c.dim = 5;
  c.hidden = 7;
  c.negation = false;
  const std::size_t n = 11, m = 3, d = 5, h = 7;
  const std::size_t w1 = count_params(c, n, m).weights();
  c.feature_parts = 2;
  const std::size_t w2 = count_params(c, n, m).weights();
  EXPECT_EQ(w2 - w1, (n + m) * d + 2 * h * d + 3 * d * d);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  testing::TempDir dir;
  const ModelConfig c = testing::full_config(4, 3);
  const Vocabulary ents = names("e", 7), rels = names("r", 2);
  Model m = init_model(c, ents, rels);
  save_checkpoint(dir / "ck.json", m, ents, rels, 17, 12);
  const Checkpoint back = load_checkpoint(dir / "ck.json", ents, rels);
  EXPECT_EQ(back.step, 17u);
  EXPECT_EQ(back.adam_step, 12u);
  EXPECT_EQ(back.model.checksum(), m.checksum());
  EXPECT_EQ(config_to_json(back.model.config()).dump(), config_to_json(c).dump());
  EXPECT_EQ(back.entities, ents);
  auto pa = m.params();
  auto pb = const_cast<Model&>(back.model).params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    EXPECT_EQ(pa[i]->adam_m, pb[i]->adam_m);
  }
}

TEST(Checkpoint, RejectsMismatchedVocabularyAndBadFiles) {
  testing::TempDir dir;
  const Vocabulary ents = names("e", 5), rels = names("r", 2);
  Model m = init_model(ModelConfig{}, ents, rels);
  save_checkpoint(dir / "ck.json", m, ents, rels, 0, 0);
  EXPECT_THROW(load_checkpoint(dir / "ck.json", names("x", 5), rels), ConfigError);
  EXPECT_THROW(load_checkpoint(dir / "nope.json"), ConfigError);
  std::ofstream(dir / "junk.json") << "{\"format\": \"other\"}";
  EXPECT_THROW(load_checkpoint(dir / "junk.json"), ConfigError);
  std::ofstream(dir / "v9.json") << "{\"format\": \"flex-checkpoint\", \"version\": 9}";
  EXPECT_THROW(load_checkpoint(dir / "v9.json"), ConfigError);
}

}  // namespace
}  // namespace flex
