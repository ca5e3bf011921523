#pragma once

// Command-line front end. dispatch() is the whole program minus main(), so
// tests can drive it with captured streams.

#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "flex/dataset_gen.hpp"
#include "flex/embeddings.hpp"

namespace flex {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  ModelConfig model;
  GenSpec gen;
};

// Flat TOML: `key = value` lines, `[table]` headers, `#` comments. Values are
// strings, integers, floats, booleans or single-line arrays of those.
nlohmann::json parse_toml(std::string_view text);

// .toml or .json. Top-level keys and a [model] table configure the model, a
// [gen] table the dataset generator.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j);

int dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace flex
