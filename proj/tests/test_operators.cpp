#include <gtest/gtest.h>

#include <random>

#include "flex/operators.hpp"
#include "properties.hpp"
#include "support.hpp"

namespace flex {
namespace {

using testing::full_config;
using testing::random_embedding;

Embedding constant_embedding(Tape& t, std::vector<std::vector<double>> f,
                             std::vector<double> l) {
  Embedding e;
  for (auto& v : f) e.features.push_back(t.constant(Tensor::row(std::move(v))));
  e.logic = t.constant(Tensor::row(std::move(l)));
  return e;
}

TEST(Project, ZeroNetGivesZeroFeaturesAndHalfLogic) {
  ModelConfig c = full_config(3);
  c.boundary = 2.0;
  Model m = init_model(c, 4, 2);
  Mlp& p = m.projection();
  for (Param* x : {&p.w1, &p.b1, &p.w2, &p.b2}) x->value.fill(0.0);
  Tape t;
  const EmbeddingValue v = read_embedding(t, project(t, m, lookup_entity(t, m, 1), 0));
  EXPECT_EQ(v.features[0], (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(v.logic, (std::vector<double>{0.5, 0.5, 0.5}));
}

TEST(Project, UnboundedModeSkipsTanh) {
  ModelConfig c = full_config(3);
  c.unbounded = true;
  Model m = init_model(c, 4, 2);
  Mlp& p = m.projection();
  for (Param* x : {&p.w1, &p.w2}) x->value.fill(0.0);
  p.b2.value = Tensor::row({5.0, -7.0, 0.25, 0, 0, 0});
  Tape t;
  const EmbeddingValue v = read_embedding(t, project(t, m, lookup_entity(t, m, 0), 1));
  EXPECT_EQ(v.features[0], (std::vector<double>{5.0, -7.0, 0.25}));
}

TEST(Negate, LogicIsComplementAndInvolutive) {
  std::mt19937_64 rng(1);
  Model m = init_model(full_config(5), 4, 2);
  for (int trial = 0; trial < 200; ++trial) {
    Tape t;
    const Embedding x = random_embedding(t, m.config(), rng);
    const Embedding nx = negate(t, m, x);
    const auto xl = t.value(x.logic).values();
    const auto nl = t.value(nx.logic).values();
    const auto nnl = t.value(negate(t, m, nx).logic).values();
    for (std::size_t i = 0; i < xl.size(); ++i) {
      EXPECT_EQ(nl[i], 1.0 - xl[i]);
      EXPECT_NEAR(nnl[i], xl[i], 1e-12);
    }
  }
}

TEST(Negate, MissingNetIsAnError) {
  ModelConfig c;
  c.dim = 3;
  c.negation = false;
  Model m = init_model(c, 2, 1);
  Tape t;
  EXPECT_THROW(negate(t, m, lookup_entity(t, m, 0)), ConfigError);
}

TEST(Intersect, LogicIsElementwiseProduct) {
  Model m = init_model(full_config(2), 4, 2);
  Tape t;
  const Embedding a = constant_embedding(t, {{0.1, -0.2}}, {0.5, 0.9});
  const Embedding b = constant_embedding(t, {{0.3, 0.4}}, {0.5, 0.2});
  const Embedding in[] = {a, b};
  const EmbeddingValue prod = read_embedding(t, intersect(t, m, in, IntersectionVariant::kProduct));
  EXPECT_EQ(prod.logic, (std::vector<double>{0.25, 0.9 * 0.2}));
  const EmbeddingValue mn = read_embedding(t, intersect(t, m, in, IntersectionVariant::kMin));
  EXPECT_EQ(mn.logic, (std::vector<double>{0.5, 0.2}));
  EXPECT_THROW(intersect(t, m, std::span<const Embedding>(in, 1)), ShapeError);
}

TEST(Intersect, FeaturesAreConvexCombination) {
  std::mt19937_64 rng(2);
  Model m = testing::random_operator_model(rng);
  for (int trial = 0; trial < 200; ++trial) {
    Tape t;
    std::vector<Embedding> in;
    for (int i = 0; i < 3; ++i) in.push_back(random_embedding(t, m.config(), rng));
    const EmbeddingValue out = read_embedding(t, intersect(t, m, in));
    for (std::size_t j = 0; j < out.features.size(); ++j) {
      for (std::size_t k = 0; k < out.features[j].size(); ++k) {
        double lo = 1e300, hi = -1e300;
        for (const Embedding& e : in) {
          lo = std::min(lo, t.value(e.features[j])[k]);
          hi = std::max(hi, t.value(e.features[j])[k]);
        }
        EXPECT_GE(out.features[j][k], lo - 1e-12);
        EXPECT_LE(out.features[j][k], hi + 1e-12);
      }
    }
  }
}

TEST(Unite, LogicExamples) {
  Model m = init_model(full_config(2), 4, 2);
  Tape t;
  const Embedding a = constant_embedding(t, {{0.1, -0.2}}, {0.5, 0.2});
  const Embedding b = constant_embedding(t, {{0.3, 0.4}}, {0.5, 0.7});
  const Embedding in[] = {a, b};
  const EmbeddingValue u = read_embedding(t, unite(t, m, in, UnionVariant::kInclusionExclusion));
  EXPECT_EQ(u.logic[0], 0.75);
  EXPECT_NEAR(u.logic[1], 0.2 + 0.7 - 0.14, 1e-15);
  const EmbeddingValue u2 = read_embedding(t, unite(t, m, in, UnionVariant::kMax));
  EXPECT_EQ(u2.logic, (std::vector<double>{0.5, 0.7}));
}

TEST(Unite, MaxVariantIsIdempotent) {
  std::mt19937_64 rng(3);
  Model m = testing::random_operator_model(rng);
  for (std::size_t n : {2u, 3u, 5u}) {
    Tape t;
    const Embedding x = random_embedding(t, m.config(), rng);
    const std::vector<Embedding> in(n, x);
    EXPECT_LT(testing::max_abs_diff(read_embedding(t, unite(t, m, in, UnionVariant::kMax)),
                                    read_embedding(t, x)),
              1e-12);
  }
}

TEST(Dyadic, ImplicationAndXorLogic) {
  Model m = init_model(full_config(2), 4, 2);
  Tape t;
  const Embedding a = constant_embedding(t, {{0.1, -0.2}}, {1.0, 0.0});
  const Embedding b = constant_embedding(t, {{0.3, 0.4}}, {0.0, 0.6});
  EXPECT_EQ(read_embedding(t, dyadic_logic(t, m, a, b, Connective::kImplication)).logic,
            (std::vector<double>{0.0, 1.0}));
  const Embedding h = constant_embedding(t, {{0.0, 0.0}}, {0.5, 0.5});
  EXPECT_EQ(read_embedding(t, dyadic_logic(t, m, h, h, Connective::kXor)).logic,
            (std::vector<double>{0.5, 0.5}));
}

TEST(Dyadic, ExtraNetsMustBeAllocated) {
  ModelConfig c;
  c.dim = 2;
  Model m = init_model(c, 2, 1);
  Tape t;
  const Embedding a = lookup_entity(t, m, 0), b = lookup_entity(t, m, 1);
  EXPECT_THROW(dyadic_logic(t, m, a, b, Connective::kXor), ConfigError);
  const Embedding in[] = {a, b};
  EXPECT_THROW(unite(t, m, in), ConfigError);
}

TEST(Ablation, NoLogicPartMeansPureAttention) {
  ModelConfig c = full_config(4);
  c.ablate_logic = true;
  Model m = init_model(c, 5, 2);
  Tape t;
  const Embedding a = project(t, m, lookup_entity(t, m, 0), 1);
  EXPECT_FALSE(a.logic.valid());
  const Embedding in[] = {a, lookup_entity(t, m, 3)};
  const Embedding out = intersect(t, m, in);
  EXPECT_FALSE(out.logic.valid());
  EXPECT_EQ(out.features.size(), 1u);
}

TEST(Properties, Closure) {
  for (const auto& [op, r] : testing::closure_fuzz(1000, 11)) {
    EXPECT_EQ(r.violations, 0u) << op;
    EXPECT_EQ(r.trials, 1000u);
  }
}

TEST(Properties, Commutativity) {
  for (std::size_t n : {2u, 3u, 5u}) {
    for (const auto& [op, err] : testing::commutativity_error(n, 100, 12 + n)) {
      EXPECT_LT(err, 1e-9) << op << " n=" << n;
    }
  }
}

TEST(Properties, Idempotence) {
  for (const auto& [op, err] : testing::idempotence_error(150, 13)) EXPECT_LT(err, 1e-9) << op;
}

TEST(Properties, LogicDependsOnLogicOnly) {
  for (const auto& [op, fails] : testing::logic_dependence_failures(200, 14)) {
    EXPECT_EQ(fails, 0u) << op;
  }
}

TEST(Properties, GradientsMatchFiniteDifferences) {
  for (const auto& g : testing::gradient_errors(4, 15)) {
    EXPECT_LT(g.error, 1e-5) << g.name;
  }
}

TEST(EmbedQuery, OneHopIsProjectionOfAnchor) {
  Model m = init_model(full_config(4), 6, 3);
  Tape t;
  const QueryNode q = QueryNode::projection(2, QueryNode::anchor(4));
  const EmbeddingValue a = read_embedding(t, embed_query(t, m, q));
  const EmbeddingValue b = read_embedding(t, project(t, m, lookup_entity(t, m, 4), 2));
  EXPECT_EQ(testing::max_abs_diff(a, b), 0.0);
}

TEST(EmbedQuery, ChildOrderAndIntermediateClosure) {
  std::mt19937_64 rng(5);
  Model m = testing::random_operator_model(rng);
  for (const std::string& tag : all_structures()) {
    for (int trial = 0; trial < 10; ++trial) {
      QueryNode q = testing::fill_template(structure_template(tag), 4, 2, rng);
      Tape t;
      std::size_t nodes = 0;
      const Embedding e = embed_query(t, m, q, [&](const NodeVisit& v) {
        ++nodes;
        EXPECT_TRUE(testing::within_closure(m.config(), read_embedding(t, v.embedding)))
            << tag << " " << v.path;
      });
      EXPECT_GT(nodes, 1u);
      std::reverse(q.children.begin(), q.children.end());
      if (q.kind == NodeKind::kAnd || q.kind == NodeKind::kOr) {
        const Embedding r = embed_query(t, m, q);
        EXPECT_LT(testing::max_abs_diff(read_embedding(t, e), read_embedding(t, r)), 1e-9);
      }
    }
  }
}

TEST(EmbedQuery, VisitorPathsArePostOrder) {
  Model m = init_model(full_config(3), 4, 2);
  const QueryNode q = QueryNode::conjunction(
      {QueryNode::projection(0, QueryNode::anchor(1)),
       QueryNode::negation(QueryNode::projection(1, QueryNode::anchor(2)))});
  std::vector<std::string> paths;
  Tape t;
  embed_query(t, m, q, [&](const NodeVisit& v) { paths.push_back(v.path); });
  EXPECT_EQ(paths, (std::vector<std::string>{"root.0.0", "root.0", "root.1.0.0", "root.1.0",
                                             "root.1", "root"}));
}

TEST(EmbedQuery, OrNeedsTrainableUnion) {
  ModelConfig c;
  c.dim = 3;
  Model m = init_model(c, 4, 2);
  std::mt19937_64 rng(1);
  const QueryNode q = testing::fill_template(structure_template("2u"), 4, 2, rng);
  Tape t;
  EXPECT_THROW(embed_query(t, m, q), QueryError);
}

}  // namespace
}  // namespace flex
