#pragma once

// First-order queries over a knowledge graph: AST, text DSL, DNF rewriting,
// structure classification and the exact set-semantics oracle.

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "flex/kg.hpp"

namespace flex {

class QueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public QueryError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : QueryError(what + " at byte " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

enum class NodeKind { kAnchor, kProjection, kAnd, kOr, kNot };

// A query tree. `id` is the entity of an anchor or the relation of a
// projection; children hold the operands.
struct QueryNode {
  NodeKind kind = NodeKind::kAnchor;
  std::int32_t id = -1;
  std::vector<QueryNode> children;

  static QueryNode anchor(EntityId e) { return {NodeKind::kAnchor, e, {}}; }
  static QueryNode projection(RelationId r, QueryNode child) {
    return {NodeKind::kProjection, r, {std::move(child)}};
  }
  static QueryNode conjunction(std::vector<QueryNode> children) {
    return {NodeKind::kAnd, -1, std::move(children)};
  }
  static QueryNode disjunction(std::vector<QueryNode> children) {
    return {NodeKind::kOr, -1, std::move(children)};
  }
  static QueryNode negation(QueryNode child) {
    return {NodeKind::kNot, -1, {std::move(child)}};
  }

  bool operator==(const QueryNode&) const = default;
};

std::string_view kind_name(NodeKind kind);

// Grammar:
//   node   := "e:" NAME | "P(" "r:" NAME "," node ")"
//           | "AND(" node ("," node)+ ")" | "OR(" node ("," node)+ ")"
//           | "NOT(" node ")"
//   NAME   := [^,() ]+
// Whitespace between tokens is ignored. The result is validated.
QueryNode parse_query(std::string_view text, const Vocabulary& entities,
                      const Vocabulary& relations);

// Canonical text form, e.g. `AND(P(r:a, e:x), NOT(P(r:b, e:y)))`.
std::string print_query(const QueryNode& q, const Vocabulary& entities,
                        const Vocabulary& relations);

// Enforces arity (And/Or >= 2), negation only as a conjunct, and no
// disjunction beneath a negation.
void validate(const QueryNode& q);

bool has_disjunction(const QueryNode& q);
bool has_negation(const QueryNode& q);

inline constexpr std::size_t kMaxDisjuncts = 64;

// Lifts every Or to the top: the result is a list of Or-free queries whose
// answer sets union to the answer set of q.
std::vector<QueryNode> to_dnf(const QueryNode& q,
                              std::size_t max_disjuncts = kMaxDisjuncts);

EntitySet oracle_answer(const KnowledgeGraph& kg, const QueryNode& q);

// The 14 benchmark shapes, training structures first.
const std::vector<std::string>& all_structures();
bool is_structure(std::string_view tag);
// Shape of a structure with every id set to -1.
QueryNode structure_template(std::string_view tag);
// One of all_structures(), or "other". Child order under And/Or is ignored.
std::string classify_structure(const QueryNode& q);

struct QueryRecord {
  std::string tag;
  QueryNode query;
  EntitySet answers_easy;
  EntitySet answers_hard;

  // easy ∪ hard
  EntitySet all_answers() const;
};

// JSON-lines: {"tag":..,"query":"<DSL>","answers_easy":[..],"answers_hard":[..]}
std::string record_to_json(const QueryRecord& r, const Vocabulary& entities,
                           const Vocabulary& relations);
QueryRecord record_from_json(std::string_view line, const Vocabulary& entities,
                             const Vocabulary& relations);
void write_records(const std::filesystem::path& path,
                   std::span<const QueryRecord> records,
                   const Vocabulary& entities, const Vocabulary& relations);
std::vector<QueryRecord> read_records(const std::filesystem::path& path,
                                      const Vocabulary& entities,
                                      const Vocabulary& relations);

}  // namespace flex
