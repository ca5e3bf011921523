#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "flex/cli.hpp"
#include "support.hpp"

namespace flex {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out, err;
  nlohmann::json json() const { return nlohmann::json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Usage, BadInvocationsExitTwo) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  const Outcome r = run({"gen", "--bogus", "1"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--out"), std::string::npos);
  EXPECT_EQ(run({"op", "--connective", "nand", "--a", "1"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Usage, RuntimeFailureExitsOneWithJson) {
  testing::TempDir dir;
  const Outcome r = run({"eval", "--data", (dir / "missing").string(), "--model",
                     (dir / "nothing").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  const auto j = nlohmann::json::parse(r.err.substr(r.err.find('{')));
  EXPECT_TRUE(j.contains("error"));
  EXPECT_EQ(run({"op", "--connective", "and", "--a", "0.5"}).code, kExitRuntime);
}

TEST(Op, ConnectivesOnLiteralVectors) {
  const Outcome imp = run({"op", "--connective", "impl", "--a", "1,0", "--b", "0,0.6"});
  ASSERT_EQ(imp.code, 0) << imp.err;
  EXPECT_EQ(imp.json()["result"], (std::vector<double>{0.0, 1.0}));
  const Outcome neg = run({"op", "--connective", "not", "--a", "0.25,1"});
  EXPECT_EQ(neg.json()["result"], (std::vector<double>{0.75, 0.0}));
  const Outcome x = run({"op", "--connective", "xor", "--a", "0.5", "--b", "0.5"});
  EXPECT_EQ(x.json()["result"], (std::vector<double>{0.5}));
  const Outcome o = run({"op", "--connective", "or", "--a", "0.5,0.2", "--b", "0.5,0.7"});
  EXPECT_NEAR(o.json()["result"][0].get<double>(), 0.75, 1e-15);
  EXPECT_NEAR(o.json()["result"][1].get<double>(), 0.76, 1e-15);
}

TEST(Toml, FlatSubset) {
  const auto j = parse_toml(R"t(
# comment
dim = 16
gamma = 6.0   # trailing comment
name = "a # not a comment"
[model]
trainable_union = true
train_structures = ["1p", "2i"]
[gen]
entities = -3
)t");
  EXPECT_EQ(j["dim"], 16);
  EXPECT_EQ(j["gamma"], 6.0);
  EXPECT_EQ(j["name"], "a # not a comment");
  EXPECT_EQ(j["model"]["trainable_union"], true);
  EXPECT_EQ(j["model"]["train_structures"], (std::vector<std::string>{"1p", "2i"}));
  EXPECT_EQ(j["gen"]["entities"], -3);
  EXPECT_ANY_THROW(parse_toml("dim = "));
  EXPECT_ANY_THROW(parse_toml("[model\n"));
  EXPECT_ANY_THROW(parse_toml("just words\n"));
}

TEST(Toml, RunConfigSections) {
  testing::TempDir dir;
  std::ofstream(dir / "run.toml") << "dim = 12\n[model]\nsteps = 7\n[gen]\nentities = 33\n";
  const RunConfig rc = load_run_config(dir / "run.toml");
  EXPECT_EQ(rc.model.dim, 12u);
  EXPECT_EQ(rc.model.steps, 7u);
  EXPECT_EQ(rc.gen.entities, 33u);
  std::ofstream(dir / "bad.toml") << "[model]\nwidth = 3\n";
  EXPECT_ANY_THROW(load_run_config(dir / "bad.toml"));
}

TEST(EndToEnd, GenTrainEvalTrace) {
  testing::TempDir dir;
  const std::string data = (dir / "data").string(), ckpt = (dir / "ckpt").string();
  std::ofstream(dir / "run.toml") << "[model]\ndim = 8\nsteps = 40\nbatch = 8\nnegatives = 4\n"
                                     "learning_rate = 0.01\ncheckpoint_every = 20\n";
  const std::vector<std::string> gen = {
      "gen",           "--out",          data, "--entities",      "20", "--relations", "2",
      "--train-edges", "120",            "--valid-edges", "10", "--test-edges",  "10",
      "--train-queries", "30", "--eval-queries", "8", "--structures", "1p,2i", "--seed", "1"};
  const Outcome g = run(gen);
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_EQ(g.json()["triples"]["train"], 120);
  for (const char* f : {"train.txt", "valid.txt", "test.txt", "train-queries.jsonl",
                        "valid-queries.jsonl", "test-queries.jsonl", "spec.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(data) / f)) << f;
  }
  testing::TempDir again;
  std::vector<std::string> gen2 = gen;
  gen2[2] = (again / "data").string();
  ASSERT_EQ(run(gen2).code, 0);
  EXPECT_EQ(slurp(fs::path(data) / "test-queries.jsonl"),
            slurp(again / "data" / "test-queries.jsonl"));

  const Outcome t = run({"train", "--data", data, "--config", (dir / "run.toml").string(), "--out",
                     ckpt, "--seed", "3"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(t.json()["steps"], 40);
  EXPECT_EQ(t.json()["config"]["seed"], 3);
  for (const char* f : {"config.json", "loss.csv", "final", "checkpoints/step-20"}) {
    EXPECT_TRUE(fs::exists(fs::path(ckpt) / f)) << f;
  }
  EXPECT_EQ(nlohmann::json::parse(slurp(fs::path(ckpt) / "config.json"))["dim"], 8);

  const std::string model = (fs::path(ckpt) / "final").string();
  const Outcome e = run({"eval", "--data", data, "--model", model, "--split", "test", "--threads",
                     "2"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = e.json();
  EXPECT_EQ(report["split"], "test");
  const double mrr = report["metrics"]["AVG"]["MRR"];
  EXPECT_GT(mrr, 0.0);
  EXPECT_LE(mrr, 1.0);
  EXPECT_TRUE(report["metrics"]["structures"].contains("2i"));
  EXPECT_EQ(slurp(fs::path(ckpt) / "report.json"), e.out);

  const Outcome tr = run({"trace", "--model", model, "--query",
                      "AND(P(r:+r0, e:e1), P(r:+r1, e:e2))", "--top", "2"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_EQ(tr.json()["nodes"].size(), 5u);
  EXPECT_EQ(run({"answer", "--model", model, "--query", "P(r:nope, e:e1)"}).code, kExitRuntime);
}

// Five entities; the 2i query asks for the religion shared by both anchors.
class Walkthrough : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = dir_ / "data";
    fs::create_directories(data_);
    std::ofstream(data_ / "train.txt") << "USA\tReligion\tChristianity\n"
                                          "USA\tReligion\tHinduism\n"
                                          "USA\tReligion\tIslam\n"
                                          "SunnyDeol\tReligion\tHinduism\n"
                                          "SunnyDeol\tVisited\tUSA\n";
    std::ofstream(data_ / "valid.txt") << "";
    std::ofstream(data_ / "test.txt") << "";
    std::ofstream q(data_ / "train-queries.jsonl");
    auto rec = [&q](const char* tag, const char* query, const char* answers) {
      q << "{\"tag\":\"" << tag << "\",\"query\":\"" << query
        << "\",\"answers_easy\":[],\"answers_hard\":" << answers << "}\n";
    };
    // ids follow first appearance: USA 0, Christianity 1, Hinduism 2, Islam 3, SunnyDeol 4
    rec("1p", "P(r:Religion, e:USA)", "[1,2,3]");
    rec("1p", "P(r:Religion, e:SunnyDeol)", "[2]");
    rec("1p", "P(r:Visited, e:SunnyDeol)", "[0]");
    rec("2i", kQuery, "[2]");
  }
  static constexpr const char* kQuery =
      "AND(P(r:Religion, e:USA), P(r:Religion, e:SunnyDeol))";
  testing::TempDir dir_;
  fs::path data_;
};

TEST_F(Walkthrough, OracleAndTrainedAnswerAgree) {
  const Outcome o = run({"oracle", "--data", data_.string(), "--query", kQuery, "--split", "train"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.json()["answers"], (std::vector<std::string>{"Hinduism"}));

  std::ofstream(dir_ / "run.toml") << "dim = 8\nsteps = 600\nbatch = 4\nnegatives = 2\n"
                                      "learning_rate = 0.02\ngamma = 2.0\n";
  const std::string ckpt = (dir_ / "ckpt").string();
  const Outcome t = run({"train", "--data", data_.string(), "--config",
                     (dir_ / "run.toml").string(), "--out", ckpt, "--seed", "1"});
  ASSERT_EQ(t.code, 0) << t.err;
  const std::string model = (fs::path(ckpt) / "final").string();

  const char* queries[] = {"P(r:Religion, e:USA)", "P(r:Religion, e:SunnyDeol)",
                           "P(r:Visited, e:SunnyDeol)", kQuery};
  for (const char* query : queries) {
    const auto exact = run({"oracle", "--data", data_.string(), "--query", query, "--split",
                            "train"}).json()["answers"];
    const Outcome a = run({"answer", "--model", model, "--query", query, "--top",
                       std::to_string(exact.size())});
    ASSERT_EQ(a.code, 0) << a.err;
    std::set<std::string> got, want;
    const nlohmann::json listed = a.json();
    for (const auto& x : listed["answers"]) got.insert(x["entity"].get<std::string>());
    for (const auto& x : exact) want.insert(x.get<std::string>());
    EXPECT_EQ(got, want) << query;
  }
  const Outcome a = run({"answer", "--model", model, "--query", kQuery, "--top", "3"});
  EXPECT_EQ(a.json()["structure"], "2i");
  EXPECT_EQ(a.json()["answers"][0]["entity"], "Hinduism");
  EXPECT_EQ(a.json()["answers"].size(), 3u);
}

}  // namespace
}  // namespace flex
