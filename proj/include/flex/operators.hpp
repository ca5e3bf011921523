#pragma once

// Neural logical operators on feature-logic embeddings. Every operator maps
// embeddings with features in [-L, L] and logic in [0, 1] to embeddings of
// the same kind; the logic output depends on the input logic parts only.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flex/embeddings.hpp"
#include "flex/query.hpp"
#include "flex/tensor.hpp"

namespace flex {

// Tape handles of one embedding: F feature vectors and a logic vector (the
// logic handle is invalid when logic parts are ablated).
struct Embedding {
  std::vector<Var> features;
  Var logic;
};

// Plain values of an embedding, detached from any tape.
struct EmbeddingValue {
  std::vector<std::vector<double>> features;
  std::vector<double> logic;
};

EmbeddingValue read_embedding(const Tape& tape, const Embedding& e);

enum class Connective { kImplication, kXor };

Embedding lookup_entity(Tape& tape, Model& model, EntityId id);
// Feature rows plus the raw relation logic row.
Embedding lookup_relation(Tape& tape, Model& model, RelationId id);

Embedding project(Tape& tape, Model& model, const Embedding& q, RelationId r);
Embedding negate(Tape& tape, Model& model, const Embedding& q);
Embedding intersect(Tape& tape, Model& model, std::span<const Embedding> in,
                    IntersectionVariant variant);
Embedding intersect(Tape& tape, Model& model, std::span<const Embedding> in);
Embedding unite(Tape& tape, Model& model, std::span<const Embedding> in,
                UnionVariant variant);
Embedding unite(Tape& tape, Model& model, std::span<const Embedding> in);
Embedding dyadic_logic(Tape& tape, Model& model, const Embedding& a,
                       const Embedding& b, Connective c);

// Called for every node of a query after its embedding is built; `path` is
// "root" extended by ".<child index>" per level.
struct NodeVisit {
  std::string path;
  const QueryNode* node;
  Embedding embedding;
};
using NodeVisitor = std::function<void(const NodeVisit&)>;

// Bottom-up evaluation of the computation graph. Disjunctions are embedded
// with the union operator, which needs config.trainable_union; otherwise
// callers go through to_dnf first.
Embedding embed_query(Tape& tape, Model& model, const QueryNode& q,
                      const NodeVisitor& visit = {});

}  // namespace flex
