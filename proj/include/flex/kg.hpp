#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace flex {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

// Sorted, duplicate-free set of entity ids.
using EntitySet = std::vector<EntityId>;

class KgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;
  auto operator<=>(const Triple&) const = default;
};

// Dense 0-based ids assigned in first-appearance order.
class Vocabulary {
 public:
  std::int32_t intern(std::string_view name);
  std::optional<std::int32_t> find(std::string_view name) const;
  const std::string& name(std::int32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  // FNV-1a over the names in id order.
  std::uint64_t hash() const;
  bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> index_;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  KnowledgeGraph(Vocabulary entities, Vocabulary relations)
      : entities_(std::move(entities)), relations_(std::move(relations)) {}

  // Returns false (and stores nothing) for a duplicate triple.
  bool add(const Triple& t);

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  // Insertion order.
  const std::vector<Triple>& triples() const { return triples_; }
  bool contains(const Triple& t) const;

  // Sorted tails of (head, relation).
  std::span<const EntityId> tails(EntityId head, RelationId relation) const;
  // (relation, head) pairs for edges ending at tail, in insertion order.
  std::span<const std::pair<RelationId, EntityId>> in_edges(EntityId tail) const;

 private:
  static std::uint64_t key(EntityId h, RelationId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(h)) << 32) |
           static_cast<std::uint32_t>(r);
  }

  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> out_index_;
  std::unordered_map<EntityId, std::vector<std::pair<RelationId, EntityId>>>
      in_index_;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t triples = 0;
  std::size_t duplicates = 0;
};

// TSV `head<TAB>relation<TAB>tail` per line. Duplicates are dropped and
// counted; any other malformed line is an error naming the line number.
KnowledgeGraph load_triples(const std::filesystem::path& path,
                            LoadReport* report = nullptr);
void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path);
void save_triples(const KnowledgeGraph& kg, std::span<const Triple> triples,
                  const std::filesystem::path& path);

// train ⊆ valid ⊆ test, all over one shared vocabulary.
struct GraphSplits {
  KnowledgeGraph train;
  KnowledgeGraph valid;
  KnowledgeGraph test;

  const Vocabulary& entities() const { return test.entities(); }
  const Vocabulary& relations() const { return test.relations(); }
  const KnowledgeGraph& by_name(std::string_view split) const;
};

// Builds splits from the three new-edge lists; vocabulary ids follow first
// appearance across train, valid, test in that order.
struct RawTriple {
  std::string head, relation, tail;
};
GraphSplits build_splits(std::span<const RawTriple> train,
                         std::span<const RawTriple> valid,
                         std::span<const RawTriple> test);

// Reads train.txt / valid.txt / test.txt from a dataset directory.
GraphSplits load_splits(const std::filesystem::path& dir);

// Triples present in `outer` but not in `inner`, in `outer` insertion order.
std::vector<Triple> new_triples(const KnowledgeGraph& inner,
                                const KnowledgeGraph& outer);

EntitySet project_set(const KnowledgeGraph& kg, const EntitySet& s,
                      RelationId r);
EntitySet complement_set(const KnowledgeGraph& kg, const EntitySet& s);

}  // namespace flex
