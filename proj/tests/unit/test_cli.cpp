#include <doctest.h>

#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "csguide/evaluation.hpp"
#include "csguide/pipeline.hpp"
#include "support.hpp"

using namespace csguide;
using namespace csguide::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "csguide");
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("csguide_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str(const std::string& leaf) const { return (path_ / leaf).string(); }

private:
  fs::path path_;
};

// Small models keep the end-to-end run quick.
std::string write_small_config(const TempDir& dir) {
  const json doc = {{"forest", {{"tree_count", 5}}}, {"mlp", {{"layer_widths", {16}}, {"epochs", 3}}}};
  const std::string path = dir.str("config.json");
  std::ofstream(path) << doc.dump(2);
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run_cli({}).code == cli::kUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kUsage);
  CHECK(run_cli({"ingest"}).code == cli::kUsage);
  CHECK(run_cli({"ingest", "--reports", "/nonexistent/reports.tsv"}).code == cli::kUsage);
  CHECK(run_cli({"--annotator", "oracle", "synth"}).code == cli::kUsage);
  CHECK(run_cli({"predict", "--corpus", "a", "--quant", "b", "--qual", "c", "--method", "magic"}).code == cli::kUsage);
}

TEST_CASE("help exits cleanly") {
  const auto r = run_cli({"--help"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("synth") != std::string::npos);
}

TEST_CASE("default config refers to existing files") {
  const auto c = cli::RunConfig::defaults();
  CHECK_NOTHROW(c.validate());
  CHECK(c.hash() == cli::RunConfig::defaults().hash());
  auto other = c;
  other.seed = 1;
  CHECK(other.hash() != c.hash());
  other.lexicon = "/nonexistent.json";
  CHECK_THROWS(other.validate());
}

TEST_CASE("bundled example config equals the defaults") {
  const auto loaded = cli::RunConfig::load(data_path("run_config.json"));
  CHECK_NOTHROW(loaded.validate());
  CHECK(loaded.to_json() == cli::RunConfig::defaults().to_json());
}

TEST_CASE("config errors are usage errors") {
  TempDir dir("cfg");
  const std::string bad = dir.str("bad.json");
  std::ofstream(bad) << R"({"mlp": {"optimizer": "rmsprop"}})";
  CHECK_THROWS_AS(cli::RunConfig::load(bad), cli::UsageError);
  CHECK(run_cli({"--config", bad, "synth"}).code == cli::kUsage);
  std::ofstream(bad) << R"({"lexicon": "missing.json"})";
  CHECK(run_cli({"--config", bad, "--out", dir.str("o"), "synth"}).code == cli::kUsage);
}

TEST_CASE("malformed reports exit with 2 and list issues") {
  TempDir dir("bad");
  const std::string reports = dir.str("reports.tsv");
  std::ofstream(reports) << "this is not a report file\n";
  const auto r = run_cli({"--out", dir.str("out"), "ingest", "--reports", reports});
  CHECK(r.code == cli::kDataError);
  CHECK(fs::exists(dir.path() / "out" / "issues.tsv"));
  CHECK_FALSE(fs::exists(dir.path() / "out" / "corpus.tsv"));
}

TEST_CASE("errors are reported as JSON records") {
  TempDir dir("err");
  const std::string corpus = dir.str("corpus.tsv");
  std::ofstream(corpus) << "garbage\n";
  const auto r = run_cli({"--out", dir.str("out"), "extract", "--corpus", corpus});
  CHECK(r.code != cli::kOk);
  bool found = false;
  std::istringstream lines(r.err);
  for (std::string line; std::getline(lines, line);) {
    const auto rec = json::parse(line, nullptr, false);
    REQUIRE_FALSE(rec.is_discarded());
    if (rec.value("event", "") == "fatal") found = true;
  }
  CHECK(found);
}

TEST_CASE("end-to-end pipeline writes every artifact and manifest") {
  TempDir dir("e2e");
  const std::string out = dir.str("out");
  const std::string config = write_small_config(dir);
  auto step = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"--config", config, "--seed", "5", "--workers", "2", "--out", out});
    const auto r = run_cli(args);
    INFO(r.err);
    REQUIRE(r.code == cli::kOk);
    return r;
  };
  const std::string corpus = out + "/corpus.tsv", quant = out + "/quant.tsv", qual = out + "/qual.tsv";
  const std::string labels = out + "/labels.tsv";
  step({"synth", "--students", "12"});
  step({"ingest", "--reports", out + "/reports.tsv"});
  step({"extract", "--corpus", corpus});
  step({"predict", "--corpus", corpus, "--quant", quant, "--qual", qual});
  step({"train", "--corpus", corpus, "--quant", quant, "--qual", qual, "--labels", labels});
  const auto eval = step({"evaluate", "--corpus", corpus, "--quant", quant, "--qual", qual, "--labels", labels,
                          "--models", out, "--resamples", "200"});
  CHECK(eval.out.find("rule_based") != std::string::npos);
  CHECK(eval.out.find("forest") != std::string::npos);

  for (const char* artifact : {"reports.tsv", "labels.tsv", "corpus.tsv", "issues.tsv", "quant.tsv", "qual.tsv",
                               "audit.jsonl", "decisions.jsonl", "model_cart.txt", "model_forest.txt",
                               "model_mlp.txt", "comparison.tsv", "comparison.json"})
    CHECK_MESSAGE(fs::exists(fs::path(out) / artifact), artifact);

  for (const char* cmd : {"synth", "ingest", "extract", "predict", "train", "evaluate"}) {
    const fs::path manifest = fs::path(out) / ("manifest_" + std::string(cmd) + ".json");
    REQUIRE_MESSAGE(fs::exists(manifest), cmd);
    const auto doc = json::parse(read_file(manifest));
    CHECK(doc["command"] == cmd);
    CHECK(doc["seed"] == 5);
    CHECK(doc.contains("config_hash"));
    CHECK(doc["outputs"].size() > 0);
  }

  // Rule predictions on clean synthetic data reproduce the labels exactly.
  const auto truth = read_labels(read_file(labels));
  const auto decisions = read_decisions(read_file(fs::path(out) / "decisions.jsonl"));
  REQUIRE(decisions.size() == truth.size());
  const auto m = metrics(confusion(decisions, truth).micro);
  CHECK(m.accuracy == 1.0);

  step({"predict", "--corpus", corpus, "--quant", quant, "--qual", qual, "--method", "model", "--model",
        out + "/model_cart.txt"});
  CHECK(read_decisions(read_file(fs::path(out) / "decisions.jsonl")).size() == truth.size());
}

TEST_CASE("model prediction without a model file is a usage error") {
  TempDir dir("nomodel");
  const std::string out = dir.str("out");
  REQUIRE(run_cli({"--out", out, "synth", "--students", "3"}).code == cli::kOk);
  REQUIRE(run_cli({"--out", out, "ingest", "--reports", out + "/reports.tsv"}).code == cli::kOk);
  REQUIRE(run_cli({"--out", out, "extract", "--corpus", out + "/corpus.tsv"}).code == cli::kOk);
  const auto r = run_cli({"--out", out, "predict", "--corpus", out + "/corpus.tsv", "--quant", out + "/quant.tsv",
                          "--qual", out + "/qual.tsv", "--method", "model"});
  CHECK(r.code == cli::kUsage);
}

namespace {

// synth -> ingest -> extract in fallback mode under `out`.
void prepare(const std::string& out, const std::string& students = "8") {
  REQUIRE(run_cli({"--out", out, "--seed", "3", "synth", "--students", students}).code == cli::kOk);
  REQUIRE(run_cli({"--out", out, "ingest", "--reports", out + "/reports.tsv"}).code == cli::kOk);
  REQUIRE(run_cli({"--out", out, "extract", "--corpus", out + "/corpus.tsv"}).code == cli::kOk);
}

bool has_event(const std::string& log, const std::string& event, const std::string& kind = "") {
  std::istringstream lines(log);
  for (std::string line; std::getline(lines, line);) {
    const auto rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || rec.value("event", "") != event) continue;
    if (kind.empty() || rec.value("kind", "") == kind) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("duplicate weeks fail unless the later report is kept") {
  TempDir dir("dup");
  const std::string out = dir.str("out");
  REQUIRE(run_cli({"--out", out, "synth", "--students", "2"}).code == cli::kOk);
  const std::string text = read_file(out + "/reports.tsv");
  const auto first_row_end = text.find('\n', text.find('\n') + 1);
  const std::string row = text.substr(text.find('\n') + 1, first_row_end - text.find('\n'));
  const std::string reports = dir.str("dup.tsv");
  std::ofstream(reports) << text << row;

  const auto strict = run_cli({"--out", dir.str("strict"), "ingest", "--reports", reports});
  CHECK(strict.code == cli::kDataError);
  const std::string student = row.substr(0, row.find('\t'));
  const std::string issues = read_file(dir.path() / "strict" / "issues.tsv");
  CHECK(issues.find("DuplicateWeek") != std::string::npos);
  CHECK(issues.find(student) != std::string::npos);

  const auto lenient = run_cli({"--out", dir.str("lenient"), "ingest", "--reports", reports, "--keep-latest"});
  CHECK(lenient.code == cli::kOk);
  CHECK(read_file(dir.path() / "lenient" / "issues.tsv").find("DuplicateWeek") != std::string::npos);
  CHECK(read_file(reports) == text + row);
}

TEST_CASE("fallback matrices match the generator ground truth") {
  TempDir dir("truth");
  const std::string out = dir.str("out");
  prepare(out, "20");
  CHECK(read_file(out + "/qual.tsv") == read_file(out + "/true_qual.tsv"));
  CHECK(read_file(out + "/quant.tsv") == read_file(out + "/true_quant.tsv"));
}

TEST_CASE("extract reruns reproduce their outputs") {
  TempDir dir("rerun");
  const std::string out = dir.str("out");
  prepare(out);
  const std::string quant = read_file(out + "/quant.tsv"), qual = read_file(out + "/qual.tsv");
  REQUIRE(run_cli({"--out", out, "extract", "--corpus", out + "/corpus.tsv"}).code == cli::kOk);
  CHECK(read_file(out + "/quant.tsv") == quant);
  CHECK(read_file(out + "/qual.tsv") == qual);
}

TEST_CASE("unreachable remote annotator degrades to the fallback") {
  TempDir dir("remote");
  const std::string out = dir.str("out");
  prepare(out);
  const std::string config = dir.str("remote.json");
  std::ofstream(config) << json{{"annotator",
                                 {{"mode", "remote"},
                                  {"endpoint", "http://127.0.0.1:1/api/generate"},
                                  {"max_retries", 0},
                                  {"timeout_ms", 200}}}}
                               .dump();
  const std::string remote_out = dir.str("remote_out");
  const auto r = run_cli({"--config", config, "--out", remote_out, "--workers", "2", "extract", "--corpus",
                          out + "/corpus.tsv"});
  CHECK(r.code == cli::kOk);
  CHECK(has_event(r.err, "extract.remote_failed"));
  CHECK(read_file(remote_out + "/qual.tsv") == read_file(out + "/qual.tsv"));
}

TEST_CASE("evaluate rejects labels that do not cover the predictions") {
  TempDir dir("keys");
  const std::string out = dir.str("out");
  prepare(out);
  std::string labels = read_file(out + "/labels.tsv");
  labels.pop_back();
  labels.erase(labels.rfind('\n') + 1);
  const std::string short_labels = dir.str("short_labels.tsv");
  std::ofstream(short_labels) << labels;
  const auto r = run_cli({"--out", out, "evaluate", "--corpus", out + "/corpus.tsv", "--quant", out + "/quant.tsv",
                          "--qual", out + "/qual.tsv", "--labels", short_labels, "--resamples", "100"});
  CHECK(r.code == cli::kDataError);
  CHECK(has_event(r.err, "fatal", "KeyMismatch"));
}
