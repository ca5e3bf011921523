#include "flex/operators.hpp"

namespace flex {

namespace {

Var mlp_forward(Tape& tape, Mlp& m, Var x) {
  const Var hidden = tape.relu(
      tape.add(tape.matmul(x, tape.param(m.w1)), tape.param(m.b1)));
  return tape.add(tape.matmul(hidden, tape.param(m.w2)), tape.param(m.b2));
}

Var squash_features(Tape& tape, const ModelConfig& c, Var x) {
  if (c.unbounded) return x;
  return tape.scale(tape.tanh(x), c.boundary);
}

void require_compatible(const Model& model, std::span<const Embedding> in,
                        std::size_t min_n, const char* op) {
  if (in.size() < min_n) {
    throw ShapeError(std::string(op) + ": needs at least " +
                     std::to_string(min_n) + " inputs, got " +
                     std::to_string(in.size()));
  }
  for (const Embedding& e : in) {
    if (e.features.size() != model.config().feature_parts) {
      throw ShapeError(std::string(op) + ": embedding has " +
                       std::to_string(e.features.size()) +
                       " feature parts, model expects " +
                       std::to_string(model.config().feature_parts));
    }
  }
}

// Attention-weighted combination of the inputs' feature parts; weights are
// a softmax across inputs taken independently per dimension.
std::vector<Var> attend(Tape& tape, Model& model, DyadicKind kind,
                        std::span<const Embedding> in) {
  const ModelConfig& c = model.config();
  std::vector<Var> out;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    Mlp& net = model.attention(kind, j);
    std::vector<Var> logits, feats;
    for (const Embedding& e : in) {
      Var x = e.features[j];
      if (e.logic.valid()) {
        const Var parts[] = {e.features[j], e.logic};
        x = tape.concat(parts);
      }
      Var logit = mlp_forward(tape, net, x);
      if (c.attention == AttentionMode::kScalar) {
        // one weight per input, replicated over dimensions
        logit = tape.matmul(logit, tape.constant(Tensor({c.dim, c.dim}, 1.0)));
      }
      logits.push_back(logit);
      feats.push_back(e.features[j]);
    }
    const Var weights = tape.softmax_group(tape.stack(logits));
    Var mixed = tape.sum_rows(tape.mul(weights, tape.stack(feats)));
    // a convex combination can overshoot the box by an ulp
    if (!c.unbounded) mixed = tape.clamp(mixed, -c.boundary, c.boundary);
    out.push_back(mixed);
  }
  return out;
}

template <typename Fold>
Var fold_logic(std::span<const Embedding> in, Fold f) {
  Var acc = in[0].logic;
  for (std::size_t i = 1; i < in.size(); ++i) acc = f(acc, in[i].logic);
  return acc;
}

Var or_logic(Tape& tape, Var a, Var b) {
  return tape.sub(tape.add(a, b), tape.mul(a, b));
}

}  // namespace

EmbeddingValue read_embedding(const Tape& tape, const Embedding& e) {
  EmbeddingValue v;
  for (Var f : e.features) v.features.push_back(tape.value(f).values());
  if (e.logic.valid()) v.logic = tape.value(e.logic).values();
  return v;
}

Embedding lookup_entity(Tape& tape, Model& model, EntityId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= model.num_entities()) {
    throw ShapeError("entity id " + std::to_string(id) + " out of range");
  }
  const ModelConfig& c = model.config();
  Embedding e;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    e.features.push_back(tape.param_row(model.entity_features(j), id));
  }
  if (c.logic_width() > 0) e.logic = tape.constant(Tensor({1, c.dim}, 0.0));
  return e;
}

Embedding lookup_relation(Tape& tape, Model& model, RelationId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= model.num_relations()) {
    throw ShapeError("relation id " + std::to_string(id) + " out of range");
  }
  const ModelConfig& c = model.config();
  Embedding r;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    r.features.push_back(tape.param_row(model.relation_features(j), id));
  }
  if (c.logic_width() > 0) r.logic = tape.param_row(model.relation_logic(), id);
  return r;
}

Embedding project(Tape& tape, Model& model, const Embedding& q,
                  RelationId r) {
  const ModelConfig& c = model.config();
  require_compatible(model, {&q, 1}, 1, "project");
  const Embedding rel = lookup_relation(tape, model, r);
  std::vector<Var> parts;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    parts.push_back(tape.add(q.features[j], rel.features[j]));
  }
  if (q.logic.valid()) parts.push_back(tape.add(q.logic, rel.logic));
  const Var y = mlp_forward(tape, model.projection(), tape.concat(parts));

  Embedding out;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    out.features.push_back(
        squash_features(tape, c, tape.slice(y, j * c.dim, c.dim)));
  }
  if (q.logic.valid()) {
    out.logic = tape.sigmoid(tape.slice(y, c.feature_parts * c.dim, c.dim));
  }
  return out;
}

Embedding negate(Tape& tape, Model& model, const Embedding& q) {
  const ModelConfig& c = model.config();
  require_compatible(model, {&q, 1}, 1, "negate");
  std::vector<Var> parts = q.features;
  if (q.logic.valid()) parts.push_back(q.logic);
  const Var y = mlp_forward(tape, model.negation(), tape.concat(parts));

  Embedding out;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    out.features.push_back(
        squash_features(tape, c, tape.slice(y, j * c.dim, c.dim)));
  }
  if (q.logic.valid()) {
    out.logic = tape.sub(tape.constant(Tensor({1, c.dim}, 1.0)), q.logic);
  }
  return out;
}

Embedding intersect(Tape& tape, Model& model, std::span<const Embedding> in,
                    IntersectionVariant variant) {
  require_compatible(model, in, 2, "intersect");
  Embedding out;
  out.features = attend(tape, model, DyadicKind::kIntersection, in);
  if (in[0].logic.valid()) {
    out.logic = variant == IntersectionVariant::kProduct
                    ? fold_logic(in, [&](Var a, Var b) { return tape.mul(a, b); })
                    : fold_logic(in, [&](Var a, Var b) { return tape.min(a, b); });
    out.logic = tape.clamp(out.logic, 0.0, 1.0);
  }
  return out;
}

Embedding intersect(Tape& tape, Model& model, std::span<const Embedding> in) {
  return intersect(tape, model, in, model.config().intersection);
}

Embedding unite(Tape& tape, Model& model, std::span<const Embedding> in,
                UnionVariant variant) {
  require_compatible(model, in, 2, "unite");
  Embedding out;
  out.features = attend(tape, model, DyadicKind::kUnion, in);
  if (in[0].logic.valid()) {
    out.logic =
        variant == UnionVariant::kInclusionExclusion
            ? fold_logic(in, [&](Var a, Var b) { return or_logic(tape, a, b); })
            : fold_logic(in, [&](Var a, Var b) { return tape.max(a, b); });
    out.logic = tape.clamp(out.logic, 0.0, 1.0);
  }
  return out;
}

Embedding unite(Tape& tape, Model& model, std::span<const Embedding> in) {
  return unite(tape, model, in, model.config().union_variant);
}

Embedding dyadic_logic(Tape& tape, Model& model, const Embedding& a,
                       const Embedding& b, Connective c) {
  const Embedding in[] = {a, b};
  require_compatible(model, in, 2, "dyadic_logic");
  const DyadicKind kind = c == Connective::kImplication
                              ? DyadicKind::kImplication
                              : DyadicKind::kXor;
  Embedding out;
  out.features = attend(tape, model, kind, in);
  if (a.logic.valid()) {
    const Var ab = tape.mul(a.logic, b.logic);
    if (c == Connective::kImplication) {
      // 1 - a(1 - b) = 1 - a + ab
      const Var one = tape.constant(Tensor(tape.value(a.logic).shape(), 1.0));
      out.logic = tape.add(tape.sub(one, a.logic), ab);
    } else {
      out.logic = tape.sub(tape.add(a.logic, b.logic), tape.scale(ab, 2.0));
    }
    out.logic = tape.clamp(out.logic, 0.0, 1.0);
  }
  return out;
}

namespace {

Embedding embed_node(Tape& tape, Model& model, const QueryNode& q,
                     const std::string& path, const NodeVisitor& visit) {
  std::vector<Embedding> kids;
  for (std::size_t i = 0; i < q.children.size(); ++i) {
    kids.push_back(embed_node(tape, model, q.children[i],
                              path + "." + std::to_string(i), visit));
  }
  Embedding out;
  switch (q.kind) {
    case NodeKind::kAnchor:
      out = lookup_entity(tape, model, q.id);
      break;
    case NodeKind::kProjection:
      out = project(tape, model, kids.at(0), q.id);
      break;
    case NodeKind::kNot:
      out = negate(tape, model, kids.at(0));
      break;
    case NodeKind::kAnd:
      out = intersect(tape, model, kids);
      break;
    case NodeKind::kOr:
      if (!model.config().trainable_union) {
        throw QueryError(
            "disjunction needs the trainable union operator; rewrite to DNF");
      }
      out = unite(tape, model, kids);
      break;
  }
  if (visit) visit(NodeVisit{path, &q, out});
  return out;
}

}  // namespace

Embedding embed_query(Tape& tape, Model& model, const QueryNode& q,
                      const NodeVisitor& visit) {
  return embed_node(tape, model, q, "root", visit);
}

}  // namespace flex
