#include "flex/cli.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "flex/evaluation.hpp"
#include "flex/training.hpp"
#include "flex/vector_logic.hpp"

namespace flex {

namespace {

class TomlError : public ConfigError {
 public:
  TomlError(std::size_t line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what) {}
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

// Cuts a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

nlohmann::json parse_scalar(std::string_view v, std::size_t line) {
  if (v.empty()) throw TomlError(line, "missing value");
  if (v.front() == '"' || v.front() == '\'') {
    const char q = v.front();
    if (v.size() < 2 || v.back() != q) throw TomlError(line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      char c = v[i];
      if (q == '"' && c == '\\' && i + 2 < v.size()) {
        const char e = v[++i];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: throw TomlError(line, std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string digits;
  for (char c : v) {
    if (c != '_') digits += c;
  }
  const bool is_float = digits.find_first_of(".eE") != std::string::npos &&
                        digits.rfind("0x", 0) != 0;
  if (is_float) {
    char* end = nullptr;
    const double d = std::strtod(digits.c_str(), &end);
    if (end != digits.c_str() + digits.size()) {
      throw TomlError(line, "bad number '" + std::string(v) + "'");
    }
    return d;
  }
  long long i = 0;
  const char* first = digits.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, digits.data() + digits.size(), i);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw TomlError(line, "bad value '" + std::string(v) + "'");
  }
  if (i >= 0) return static_cast<std::uint64_t>(i);
  return i;
}

nlohmann::json parse_value(std::string_view v, std::size_t line) {
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw TomlError(line, "arrays must close on the same line");
    nlohmann::json arr = nlohmann::json::array();
    std::string_view body = trim(v.substr(1, v.size() - 2));
    while (!body.empty()) {
      std::size_t cut = 0;
      char quote = 0;
      for (; cut < body.size(); ++cut) {
        const char c = body[cut];
        if (quote) {
          if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
          quote = c;
        } else if (c == ',') {
          break;
        }
      }
      const std::string_view item = trim(body.substr(0, cut));
      if (!item.empty()) arr.push_back(parse_scalar(item, line));
      body = cut < body.size() ? trim(body.substr(cut + 1)) : std::string_view{};
    }
    return arr;
  }
  return parse_scalar(v, line);
}

}  // namespace

nlohmann::json parse_toml(std::string_view text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw TomlError(line_no, "bad table header");
      const std::string name(trim(line.substr(1, line.size() - 2)));
      if (!bare_key(name)) throw TomlError(line_no, "unsupported table name '" + name + "'");
      if (root.contains(name)) throw TomlError(line_no, "duplicate table '" + name + "'");
      root[name] = nlohmann::json::object();
      table = &root[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw TomlError(line_no, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (!bare_key(key)) throw TomlError(line_no, "unsupported key '" + key + "'");
    if (table->contains(key)) throw TomlError(line_no, "duplicate key '" + key + "'");
    (*table)[key] = parse_value(trim(line.substr(eq + 1)), line_no);
  }
  return root;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be an object");
  nlohmann::json model = nlohmann::json::object();
  RunConfig rc;
  for (const auto& [key, v] : j.items()) {
    if (key == "model") {
      if (!v.is_object()) throw ConfigError("'model' must be a table");
      for (const auto& [k2, v2] : v.items()) model[k2] = v2;
    } else if (key == "gen") {
      rc.gen = spec_from_json(v);
    } else {
      model[key] = v;
    }
  }
  rc.model = config_from_json(model);
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    if (path.extension() == ".toml") {
      return run_config_from_json(parse_toml(buf.str()));
    }
    return run_config_from_json(nlohmann::json::parse(buf.str()));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  } catch (const ConfigError& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  } catch (const GenError& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<double> parse_vector(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + item.size()) {
      throw std::invalid_argument("not a number: '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

void configure_logging(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("flex", sink);
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("FLEX_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") logger->set_level(spdlog::level::err);
  else if (level == "debug") logger->set_level(spdlog::level::debug);
  else logger->set_level(spdlog::level::info);
  spdlog::set_default_logger(logger);
}

struct Options {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;

  // gen
  std::string out;
  std::size_t entities = 0, relations = 0, train_edges = 0, valid_edges = 0,
              test_edges = 0, train_queries = 0, eval_queries = 0,
              union_train_queries = 0;
  bool union_train_set = false;
  std::string structures;

  // train
  std::string data;
  std::string resume;
  std::size_t steps = 0, dim = 0;
  bool trainable_union = false;

  // eval / answer / trace / oracle
  std::string model;
  std::string split = "test";
  std::size_t threads = 1;
  std::string query;
  std::size_t top = 10;

  // op
  std::string connective;
  std::string a, b;

  // summary
  std::string seeds;
};

RunConfig effective_config(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed_set) {
    rc.model.seed = o.seed;
    rc.gen.seed = o.seed;
  }
  return rc;
}

int cmd_gen(const Options& o, std::ostream& out) {
  GenSpec spec = effective_config(o).gen;
  if (o.entities) spec.entities = o.entities;
  if (o.relations) spec.relations = o.relations;
  if (o.train_edges) spec.train_edges = o.train_edges;
  if (o.valid_edges) spec.valid_edges = o.valid_edges;
  if (o.test_edges) spec.test_edges = o.test_edges;
  if (o.train_queries) spec.train_queries = o.train_queries;
  if (o.eval_queries) spec.valid_queries = spec.test_queries = o.eval_queries;
  if (o.union_train_set) spec.union_train_queries = o.union_train_queries;
  if (!o.structures.empty()) spec.structures = split_list(o.structures);
  spec.validate();
  const GraphSplits splits = generate_kg(spec);
  const QuerySets queries = generate_queries(splits, spec);
  write_dataset(o.out, splits, queries, spec);
  nlohmann::ordered_json j;
  j["out"] = o.out;
  j["spec"] = spec_to_json(spec);
  j["entities"] = splits.entities().size();
  j["relations"] = splits.relations().size();
  j["triples"] = {{"train", splits.train.triples().size()},
                  {"valid", splits.valid.triples().size() - splits.train.triples().size()},
                  {"test", splits.test.triples().size() - splits.valid.triples().size()}};
  j["queries"] = {{"train", queries.train.size()},
                  {"valid", queries.valid.size()},
                  {"test", queries.test.size()}};
  out << j.dump(2) << '\n';
  return kExitOk;
}

ModelConfig model_config(const Options& o) {
  ModelConfig c = effective_config(o).model;
  if (o.steps) c.steps = o.steps;
  if (o.dim) c.dim = o.dim;
  if (o.trainable_union) c.trainable_union = true;
  if (!o.structures.empty()) c.train_structures = split_list(o.structures);
  c.validate();
  return c;
}

int cmd_train(const Options& o, std::ostream& out) {
  const ModelConfig c = model_config(o);
  const Dataset data = load_dataset(o.data);
  if (data.queries.train.empty()) {
    throw TrainError(o.data + " has no training queries");
  }
  TrainOptions opt;
  opt.out_dir = o.out;
  opt.entities = &data.splits.entities();
  opt.relations = &data.splits.relations();
  if (!o.resume.empty()) opt.resume_from = o.resume;
  const TrainResult r = train(data.queries.train, c, data.splits.entities().size(),
                              data.splits.relations().size(), opt);
  nlohmann::ordered_json j;
  j["config"] = config_to_json(c);
  j["steps"] = r.adam.step;
  j["final_loss"] = r.trace.empty() ? 0.0 : r.trace.back().loss;
  j["checkpoint"] = (std::filesystem::path(o.out) / "final").string();
  out << j.dump(2) << '\n';
  return kExitOk;
}

const std::vector<QueryRecord>& split_records(const Dataset& d,
                                              const std::string& split) {
  if (split == "valid") return d.queries.valid;
  if (split == "test") return d.queries.test;
  if (split == "train") return d.queries.train;
  throw std::invalid_argument("unknown split '" + split + "'");
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Dataset data = load_dataset(o.data);
  Checkpoint ck = load_checkpoint(o.model, data.splits.entities(),
                                  data.splits.relations());
  EvalOptions opt;
  opt.threads = o.threads;
  opt.entities = &data.splits.entities();
  opt.relations = &data.splits.relations();
  const RankingReport report =
      evaluate_split(ck.model, split_records(data, o.split), opt);
  nlohmann::ordered_json j;
  j["split"] = o.split;
  j["checkpoint"] = o.model;
  j["config"] = config_to_json(ck.model.config());
  j["metrics"] = report_to_json(report);
  const std::string text = j.dump(2);
  const auto dir = o.out.empty() ? std::filesystem::path(o.model).parent_path()
                                 : std::filesystem::path(o.out);
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << text << '\n';
  std::ofstream(dir / "report.csv") << report_to_csv(report);
  out << text << '\n';
  return kExitOk;
}

int cmd_answer(const Options& o, std::ostream& out) {
  Checkpoint ck = load_checkpoint(o.model);
  const QueryNode q = parse_query(o.query, ck.entities, ck.relations);
  nlohmann::ordered_json j;
  j["query"] = print_query(q, ck.entities, ck.relations);
  j["structure"] = classify_structure(q);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  std::size_t rank = 1;
  for (const auto& [e, score] : answer_query(ck.model, q, o.top)) {
    list.push_back({{"rank", rank++}, {"entity", ck.entities.name(e)}, {"score", score}});
  }
  j["answers"] = std::move(list);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_oracle(const Options& o, std::ostream& out) {
  const GraphSplits splits = load_splits(o.data);
  const QueryNode q = parse_query(o.query, splits.entities(), splits.relations());
  const EntitySet answers = oracle_answer(splits.by_name(o.split), q);
  nlohmann::ordered_json j;
  j["query"] = print_query(q, splits.entities(), splits.relations());
  j["split"] = o.split;
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (EntityId e : answers) names.push_back(splits.entities().name(e));
  j["answers"] = std::move(names);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_trace(const Options& o, std::ostream& out) {
  Checkpoint ck = load_checkpoint(o.model);
  const QueryNode q = parse_query(o.query, ck.entities, ck.relations);
  const auto trace = trace_intermediate(ck.model, q, o.top);
  nlohmann::ordered_json j;
  j["query"] = print_query(q, ck.entities, ck.relations);
  j["nodes"] = trace_to_json(trace, ck.entities);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_op(const Options& o, std::ostream& out) {
  const logic::TruthVec a(parse_vector(o.a));
  auto need_b = [&] {
    if (o.b.empty()) throw std::invalid_argument(o.connective + " needs --b");
    return logic::TruthVec(parse_vector(o.b));
  };
  auto pair = [&] { return std::vector<logic::TruthVec>{a, need_b()}; };
  logic::TruthVec r;
  const std::string& c = o.connective;
  if (c == "not") r = logic::vnot(a);
  else if (c == "and") r = logic::vand(pair());
  else if (c == "or") r = logic::vor(pair());
  else if (c == "impl") r = logic::vimpl(a, need_b());
  else if (c == "xor") r = logic::vxor(a, need_b());
  else if (c == "min") r = logic::vmin(pair());
  else if (c == "max") r = logic::vmax(pair());
  else throw std::invalid_argument("unknown connective '" + c + "'");
  nlohmann::ordered_json j;
  j["connective"] = c;
  j["a"] = a.values();
  if (!o.b.empty()) j["b"] = parse_vector(o.b);
  j["result"] = r.values();
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_summary(const Options& o, std::ostream& out) {
  const ModelConfig c = model_config(o);
  const Dataset data = load_dataset(o.data);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(o.seeds)) seeds.push_back(std::stoull(s));
  const SeedSummary s = multi_seed_summary(
      data.queries.train, split_records(data, o.split), c,
      data.splits.entities().size(), data.splits.relations().size(), seeds,
      o.threads);
  nlohmann::ordered_json j;
  j["config"] = config_to_json(c);
  j["split"] = o.split;
  j["result"] = summary_to_json(s);
  out << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  configure_logging(err);
  Options o;
  CLI::App app{"Feature-logic embeddings for first-order queries over knowledge graphs",
               "flex"};
  app.require_subcommand(1);
  app.fallthrough();  // --seed may follow the subcommand
  app.add_option_function<std::uint64_t>(
      "--seed", [&o](std::uint64_t s) { o.seed = s; o.seed_set = true; },
      "Seed for every random choice");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--out", o.out, "Dataset directory")->required();
  gen->add_option("--config", o.config, "Run config (.toml or .json)");
  gen->add_option("--entities", o.entities);
  gen->add_option("--relations", o.relations, "Base relations (inverses added)");
  gen->add_option("--train-edges", o.train_edges);
  gen->add_option("--valid-edges", o.valid_edges);
  gen->add_option("--test-edges", o.test_edges);
  gen->add_option("--train-queries", o.train_queries, "Per training structure");
  gen->add_option("--eval-queries", o.eval_queries, "Per structure, valid and test");
  gen->add_option_function<std::size_t>(
      "--union-train-queries",
      [&o](std::size_t n) { o.union_train_queries = n; o.union_train_set = true; },
      "2u/up training records");
  gen->add_option("--structures", o.structures, "Comma-separated tags");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", o.data)->required();
  tr->add_option("--out", o.out, "Run directory")->required();
  tr->add_option("--config", o.config, "Run config (.toml or .json)");
  tr->add_option("--steps", o.steps);
  tr->add_option("--dim", o.dim);
  tr->add_option("--structures", o.structures, "Train only these tags");
  tr->add_flag("--trainable-union", o.trainable_union);
  tr->add_option("--resume", o.resume, "Checkpoint to continue from");

  auto* ev = app.add_subcommand("eval", "Filtered ranking metrics");
  ev->add_option("--data", o.data)->required();
  ev->add_option("--model", o.model)->required();
  ev->add_option("--split", o.split)->check(CLI::IsMember({"valid", "test"}));
  ev->add_option("--threads", o.threads)->check(CLI::PositiveNumber);
  ev->add_option("--out", o.out, "Directory for report.json (default: next to the model)");

  auto* an = app.add_subcommand("answer", "Rank entities for a query");
  an->add_option("--model", o.model)->required();
  an->add_option("--query", o.query)->required();
  an->add_option("--top", o.top);

  auto* orc = app.add_subcommand("oracle", "Exact answers of a query");
  orc->add_option("--data", o.data)->required();
  orc->add_option("--query", o.query)->required();
  orc->add_option("--split", o.split)->check(CLI::IsMember({"train", "valid", "test"}));

  auto* trc = app.add_subcommand("trace", "Top entities at every query node");
  trc->add_option("--model", o.model)->required();
  trc->add_option("--query", o.query)->required();
  trc->add_option("--top", o.top);

  auto* op = app.add_subcommand("op", "Apply a vector-logic connective");
  op->add_option("--connective", o.connective)
      ->required()
      ->check(CLI::IsMember({"not", "and", "or", "impl", "xor", "min", "max"}));
  op->add_option("--a", o.a, "Comma-separated truth values")->required();
  op->add_option("--b", o.b);

  auto* sm = app.add_subcommand("summary", "Train and evaluate over several seeds");
  sm->add_option("--data", o.data)->required();
  sm->add_option("--config", o.config);
  sm->add_option("--seeds", o.seeds, "Comma-separated, at least two")->required();
  sm->add_option("--split", o.split)->check(CLI::IsMember({"valid", "test"}));
  sm->add_option("--steps", o.steps);
  sm->add_option("--threads", o.threads)->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto sub = app.get_subcommands();
    err << (sub.empty() ? app.help() : sub.front()->help());
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (an->parsed()) return cmd_answer(o, out);
    if (orc->parsed()) return cmd_oracle(o, out);
    if (trc->parsed()) return cmd_trace(o, out);
    if (op->parsed()) return cmd_op(o, out);
    if (sm->parsed()) return cmd_summary(o, out);
  } catch (const std::exception& e) {
    nlohmann::ordered_json j;
    j["error"] = e.what();
    err << j.dump() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace flex
