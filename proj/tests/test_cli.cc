#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>

#include "narrative/corpus.h"
#include "narrative/util/files.h"
#include "test_util.h"

using namespace narrative;
using narrative::testing::TempDir;
using json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const TempDir& dir, const std::string& args) {
  const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = std::string(NARRATIVE_ARC_BIN) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

int lines(const std::string& text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("split") {
  TempDir dir;
  REQUIRE(run(dir, "synth --narratives 10 --out " + dir.file("c.jsonl")).code == 0);
  const Run r = run(dir, "split --corpus " + dir.file("c.jsonl") +
                             " --ratios 0.7,0.1,0.2 --seed 7 --out-dir " + dir.path().string());
  CHECK(r.code == 0);
  CHECK(lines(read_file(dir.file("train.ids"))) == 7);
  CHECK(lines(read_file(dir.file("validation.ids"))) == 1);
  CHECK(lines(read_file(dir.file("test.ids"))) == 2);
  CHECK(load_corpus(dir.file("train.jsonl")).size() == 7);

  const std::string first = read_file(dir.file("train.ids"));
  REQUIRE(run(dir, "split --corpus " + dir.file("c.jsonl") +
                       " --ratios 0.7,0.1,0.2 --seed 7 --out-dir " + dir.path().string())
              .code == 0);
  CHECK(read_file(dir.file("train.ids")) == first);

  CHECK(run(dir, "split --corpus " + dir.file("c.jsonl") + " --ratios 0.5,0.1,0.2").code == 1);
}

TEST_CASE("evaluate") {
  TempDir dir;
  REQUIRE(run(dir, "synth --narratives 6 --out " + dir.file("c.jsonl")).code == 0);
  const Run r = run(dir, "evaluate --pred " + dir.file("c.jsonl") + " --gold " + dir.file("c.jsonl") +
                             " --out " + dir.file("report.json"));
  REQUIRE(r.code == 0);
  const json report = json::parse(read_file(dir.file("report.json")));
  CHECK(report["climax"]["f1"] == 1.0);
  CHECK(report["resolution"]["f1"] == 1.0);
  CHECK(report["climax"]["distance"] == 0.0);
  CHECK(report.contains("config_hash"));
}

TEST_CASE("exit codes") {
  TempDir dir;
  CHECK(run(dir, "--help").code == 0);
  CHECK(run(dir, "frobnicate").code == 1);
  CHECK(run(dir, "split --corpus").code == 1);
  write_file_atomic(dir.file("broken.jsonl"), "{\"id\": \"x\", \"sentences\": 3}\n");
  const Run bad = run(dir, "stats --corpus " + dir.file("broken.jsonl"));
  CHECK(bad.code == 2);
  CHECK(bad.err.find("x") != std::string::npos);
  CHECK(run(dir, "stats --corpus " + dir.file("absent.jsonl")).code == 2);
}

TEST_CASE("train, predict and baselines") {
  TempDir dir;
  REQUIRE(run(dir, "synth --narratives 12 --out " + dir.file("c.jsonl")).code == 0);
  const std::string model_flags = " --width 16 --d 16 --heads 2 --layers 1 --max-epochs 2 --lr 1e-3";
  const Run trained = run(dir, "train --train " + dir.file("c.jsonl") + " --out " +
                                   dir.file("m.json") + " --history " + dir.file("h.tsv") +
                                   model_flags);
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  CHECK(lines(read_file(dir.file("h.tsv"))) == 3);

  const Run predicted = run(dir, "predict --model " + dir.file("m.json") + " --corpus " +
                                     dir.file("c.jsonl") + " --out " + dir.file("p.jsonl"));
  REQUIRE_MESSAGE(predicted.code == 0, predicted.err);
  const auto rows = read_lines(dir.file("p.jsonl"));
  REQUIRE(rows.size() == 12);
  const json first = json::parse(rows[0]);
  CHECK(first["labels"].size() == first["probabilities"].size());

  CHECK(run(dir, "evaluate --pred " + dir.file("p.jsonl") + " --gold " + dir.file("c.jsonl")).code ==
        0);
  CHECK(run(dir, "train --train " + dir.file("c.jsonl") + " --out " + dir.file("x.json") +
                     " --width 24 --d 16 --heads 2")
            .code == 1);

  for (const std::string name : {"random", "heuristic", "surprise:xsem"}) {
    const Run b = run(dir, "baseline --name " + name + " --corpus " + dir.file("c.jsonl") + " --width 16");
    CHECK_MESSAGE(b.code == 0, b.err);
    CHECK(json::parse(b.out)["system"] == name);
  }
  CHECK(run(dir, "baseline --name distribution --corpus " + dir.file("c.jsonl")).code == 1);
}
