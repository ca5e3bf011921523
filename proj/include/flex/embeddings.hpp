#pragma once

// Model configuration, parameter tables, initialization, parameter
// accounting and checkpoint I/O.

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "flex/kg.hpp"
#include "flex/tensor.hpp"

namespace flex {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class IntersectionVariant { kProduct, kMin };
enum class UnionVariant { kInclusionExclusion, kMax };
enum class DnfAggregator { kVectorOr, kMin };
enum class LogicReduction { kSum, kMean };
enum class AttentionMode { kDimension, kScalar };

// Operators that own an attention network.
enum class DyadicKind { kIntersection = 0, kUnion, kImplication, kXor };
inline constexpr std::size_t kDyadicKinds = 4;
std::string_view dyadic_name(DyadicKind k);

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t feature_parts = 1;
  double boundary = 1.0;
  // Unbounded feature space: the tanh squashing is dropped everywhere.
  bool unbounded = false;
  // Projection hidden width; 0 means 2 * dim.
  std::size_t hidden = 0;
  IntersectionVariant intersection = IntersectionVariant::kProduct;
  UnionVariant union_variant = UnionVariant::kInclusionExclusion;
  DnfAggregator dnf_aggregator = DnfAggregator::kVectorOr;
  LogicReduction logic_reduction = LogicReduction::kSum;
  AttentionMode attention = AttentionMode::kDimension;
  // Drop logic parts entirely; dyadic operators become pure attention.
  bool ablate_logic = false;
  // Allocate the negation network.
  bool negation = true;
  // Evaluate disjunctions with the union operator instead of DNF.
  bool trainable_union = false;
  // Allocate attention networks for implication and exclusive-or.
  bool extra_connectives = false;

  double gamma = 3.0;
  double learning_rate = 1e-3;
  std::size_t batch = 64;
  std::size_t negatives = 16;
  std::size_t steps = 3000;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 1000;
  std::size_t log_every = 10;
  // Restrict training to these structure tags; empty means all.
  std::vector<std::string> train_structures;

  std::size_t hidden_dim() const { return hidden != 0 ? hidden : 2 * dim; }
  std::size_t logic_width() const { return ablate_logic ? 0 : dim; }
  bool has_attention(DyadicKind k) const;
  void validate() const;
};

nlohmann::ordered_json config_to_json(const ModelConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& j,
                             ModelConfig base = ModelConfig{});

// Two-layer perceptron: relu(x W1 + b1) W2 + b2.
struct Mlp {
  Param w1, b1, w2, b2;
  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, std::size_t hidden,
      std::size_t out);
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, std::size_t n_entities,
        std::size_t n_relations);

  const ModelConfig& config() const { return config_; }
  std::size_t num_entities() const { return n_entities_; }
  std::size_t num_relations() const { return n_relations_; }

  // Feature part j of the entity table (n_entities x dim).
  Param& entity_features(std::size_t j) { return entity_features_.at(j); }
  Param& relation_features(std::size_t j) { return relation_features_.at(j); }
  // Absent when the logic part is ablated.
  Param& relation_logic() { return relation_logic_; }
  Mlp& projection() { return projection_; }
  Mlp& negation();
  // Attention net of an operator for feature part j.
  Mlp& attention(DyadicKind kind, std::size_t j);

  // Every Param in a fixed order (checkpoints and the optimizer rely on it).
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::vector<Mlp*> mlps();
  std::size_t allocated_values() const;
  // Order-sensitive hash of all parameter values.
  std::uint64_t checksum() const;

  std::uint64_t entity_vocab_hash = 0;
  std::uint64_t relation_vocab_hash = 0;

 private:
  ModelConfig config_;
  std::size_t n_entities_ = 0;
  std::size_t n_relations_ = 0;
  std::vector<Param> entity_features_;
  std::vector<Param> relation_features_;
  Param relation_logic_;
  Mlp projection_;
  Mlp negation_;
  bool has_negation_ = false;
  std::array<std::vector<Mlp>, kDyadicKinds> attention_;
};

// Fully determined by config.seed.
Model init_model(const ModelConfig& config, std::size_t n_entities,
                 std::size_t n_relations);
Model init_model(const ModelConfig& config, const Vocabulary& entities,
                 const Vocabulary& relations);

struct ParamItem {
  std::string component;
  std::size_t weights = 0;
  std::size_t biases = 0;
};

struct ParamReport {
  std::vector<ParamItem> items;
  std::size_t weights() const;
  std::size_t biases() const;
  std::size_t total() const { return weights() + biases(); }
};

// Closed-form count of every parameter the architecture allocates.
ParamReport count_params(const ModelConfig& config, std::size_t n_entities,
                         std::size_t n_relations);

struct Checkpoint {
  Model model;
  Vocabulary entities;
  Vocabulary relations;
  std::size_t step = 0;
  std::size_t adam_step = 0;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Vocabulary& entities, const Vocabulary& relations,
                     std::size_t step, std::size_t adam_step);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also rejects a checkpoint whose vocabularies differ from the given ones.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const Vocabulary& entities,
                           const Vocabulary& relations);

}  // namespace flex
