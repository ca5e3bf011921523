#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <array>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "flex/dataset_gen.hpp"
#include "flex/embeddings.hpp"
#include "flex/kg.hpp"
#include "flex/operators.hpp"
#include "flex/query.hpp"

namespace flex::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "flex") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<double> uniform_vec(std::mt19937_64& rng, std::size_t n,
                                       double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

// A valid embedding held as tape constants: features in [-L, L], logic in
// [0, 1]. Occasionally pins entries to the range ends.
inline Embedding random_embedding(Tape& tape, const ModelConfig& c,
                                  std::mt19937_64& rng) {
  const double bound = c.unbounded ? 3.0 : c.boundary;
  Embedding e;
  for (std::size_t j = 0; j < c.feature_parts; ++j) {
    auto f = uniform_vec(rng, c.dim, -bound, bound);
    if (rng() % 8 == 0) f[rng() % c.dim] = (rng() % 2 ? bound : -bound);
    e.features.push_back(tape.constant(Tensor::row(std::move(f))));
  }
  if (c.logic_width() > 0) {
    auto l = uniform_vec(rng, c.dim, 0.0, 1.0);
    if (rng() % 8 == 0) l[rng() % c.dim] = (rng() % 2 ? 1.0 : 0.0);
    e.logic = tape.constant(Tensor::row(std::move(l)));
  }
  return e;
}

// Same values on a second tape.
inline Embedding copy_embedding(Tape& from, Tape& to, const Embedding& e) {
  Embedding out;
  for (Var f : e.features) out.features.push_back(to.constant(from.value(f)));
  if (e.logic.valid()) out.logic = to.constant(from.value(e.logic));
  return out;
}

inline double max_abs_diff(const EmbeddingValue& a, const EmbeddingValue& b) {
  double worst = 0.0;
  for (std::size_t j = 0; j < a.features.size(); ++j) {
    for (std::size_t i = 0; i < a.features[j].size(); ++i) {
      worst = std::max(worst, std::abs(a.features[j][i] - b.features[j][i]));
    }
  }
  for (std::size_t i = 0; i < a.logic.size(); ++i) {
    worst = std::max(worst, std::abs(a.logic[i] - b.logic[i]));
  }
  return worst;
}

// Small model with every operator allocated.
inline ModelConfig full_config(std::size_t dim, std::uint64_t seed = 7) {
  ModelConfig c;
  c.dim = dim;
  c.trainable_union = true;
  c.extra_connectives = true;
  c.seed = seed;
  return c;
}

// Triples given as "h r t" strings over fresh vocabularies.
inline KnowledgeGraph make_kg(const std::vector<std::array<std::string, 3>>& triples) {
  Vocabulary ents, rels;
  for (const auto& t : triples) {
    ents.intern(t[0]);
    rels.intern(t[1]);
    ents.intern(t[2]);
  }
  KnowledgeGraph kg(ents, rels);
  for (const auto& t : triples) {
    kg.add({*ents.find(t[0]), *rels.find(t[1]), *ents.find(t[2])});
  }
  return kg;
}

// Graph over entities "e0".."e{n-1}" and relations "r0".."r{m-1}" with
// roughly `edges` random distinct triples. Every name is interned up front.
inline KnowledgeGraph random_kg(std::size_t n, std::size_t m, std::size_t edges,
                                std::mt19937_64& rng) {
  Vocabulary ents, rels;
  for (std::size_t i = 0; i < n; ++i) ents.intern("e" + std::to_string(i));
  for (std::size_t i = 0; i < m; ++i) rels.intern("r" + std::to_string(i));
  KnowledgeGraph kg(ents, rels);
  for (std::size_t k = 0; k < edges; ++k) {
    kg.add({static_cast<EntityId>(rng() % n), static_cast<RelationId>(rng() % m),
            static_cast<EntityId>(rng() % n)});
  }
  return kg;
}

// Copy of a structure template with every anchor and relation id drawn
// uniformly at random.
inline QueryNode fill_template(QueryNode q, std::size_t n, std::size_t m,
                               std::mt19937_64& rng) {
  if (q.kind == NodeKind::kAnchor) q.id = static_cast<EntityId>(rng() % n);
  if (q.kind == NodeKind::kProjection) q.id = static_cast<RelationId>(rng() % m);
  for (auto& c : q.children) c = fill_template(std::move(c), n, m, rng);
  return q;
}

// A 20-entity generator spec; callers narrow the structures.
inline GenSpec tiny_spec(std::vector<std::string> structures, std::uint64_t seed = 1) {
  GenSpec s;
  s.entities = 20;
  s.relations = 2;
  s.train_edges = 120;
  s.valid_edges = 10;
  s.test_edges = 10;
  s.train_queries = 30;
  s.valid_queries = 8;
  s.test_queries = 8;
  s.structures = std::move(structures);
  s.seed = seed;
  return s;
}

}  // namespace flex::testing
