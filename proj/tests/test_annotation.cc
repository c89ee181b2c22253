#include <doctest.h>

#include <thread>

#include "narrative/annotation.h"
#include "narrative/error.h"
#include "narrative/util/files.h"
#include "test_util.h"

#include <httplib.h>

using namespace narrative;
using namespace narrative::annotation;
using narrative::testing::TempDir;
using json = nlohmann::json;

namespace {

Corpus make_corpus(int narratives, int length = 3) {
  Corpus c;
  for (int k = 0; k < narratives; ++k) {
    std::vector<std::string> s;
    for (int i = 0; i < length; ++i) s.push_back("Line " + std::to_string(i) + ".");
    c.push_back({make_narrative("n" + std::to_string(k), "Title " + std::to_string(k), s),
                 std::nullopt});
  }
  return c;
}

AnnotationRecord rec(const std::string& narrative, const std::string& annotator,
                     std::set<int> climax, std::set<int> resolution) {
  AnnotationRecord r;
  r.narrative_id = narrative;
  r.annotator_id = annotator;
  r.climax_indices = std::move(climax);
  r.resolution_indices = std::move(resolution);
  r.no_climax = r.climax_indices.empty();
  r.no_resolution = r.resolution_indices.empty();
  return r;
}

// Runs an AnnotationServer on an ephemeral port for the lifetime of the object.
class LiveServer {
 public:
  explicit LiveServer(AnnotationStore& store) : server_(store) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.listen(); });
    while (!server_.running()) std::this_thread::yield();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  AnnotationServer server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("record JSON") {
  AnnotationRecord r = rec("n0", "ann", {1}, {});
  r.submitted_at = "2024-01-01T00:00:00Z";
  FieldErrors errors;
  const auto back = record_from_json(annotation::to_json(r), &errors);
  REQUIRE(back);
  CHECK(*back == r);

  errors.clear();
  CHECK_FALSE(record_from_json({{"narrative_id", "n0"}, {"annotator_id", 3}, {"climax_indices", "x"}},
                               &errors));
  std::set<std::string> fields;
  for (const auto& [f, m] : errors) fields.insert(f);
  CHECK(fields.count("annotator_id") == 1);
  CHECK(fields.count("climax_indices") == 1);

  const json task = task_payload(make_corpus(1, 5)[0].narrative);
  CHECK(task["id"] == "n0");
  CHECK(task["title"] == "Title 0");
  CHECK(task["sentences"].size() == 5);
}

TEST_CASE("task assignment") {
  SUBCASE("fresh corpus") {
    AnnotationStore store(make_corpus(4), "");
    const auto t = store.next_task("a");
    REQUIRE(t);
    CHECK(store.annotations_for(t->id).empty());
  }
  SUBCASE("finished annotator") {
    AnnotationStore store(make_corpus(2), "");
    for (const char* id : {"n0", "n1"}) {
      CHECK(store.submit(rec(id, "a", {0}, {2})).status == SubmitStatus::kAccepted);
    }
    CHECK_FALSE(store.next_task("a"));
    CHECK(store.next_task("b"));
  }
  SUBCASE("round robin balances coverage") {
    AnnotationStore store(make_corpus(9), "");
    bool progress = true;
    while (progress) {
      progress = false;
      for (const char* who : {"a", "b", "c"}) {
        const auto t = store.next_task(who);
        if (!t) continue;
        progress = true;
        CHECK(store.annotations_for(t->id).size() < 3);
        CHECK(store.submit(rec(t->id, who, {1}, {2})).status == SubmitStatus::kAccepted);
      }
    }
    for (int k = 0; k < 9; ++k) CHECK(store.annotations_for("n" + std::to_string(k)).size() == 3);
    CHECK(store.progress().fully_annotated == 9);
    CHECK_FALSE(store.next_task("d"));
  }
  SUBCASE("an outstanding task is served again") {
    AnnotationStore store(make_corpus(3), "");
    CHECK(store.next_task("a")->id == store.next_task("a")->id);
  }
}

TEST_CASE("submission") {
  TempDir dir;
  AnnotationStore store(make_corpus(3), dir.file("log.jsonl"));

  const SubmitResult ok = store.submit(rec("n0", "a", {1}, {2}));
  CHECK(ok.status == SubmitStatus::kAccepted);
  CHECK_FALSE(ok.stored.submitted_at.empty());
  REQUIRE(store.annotations_for("n0").size() == 1);
  CHECK(store.annotations_for("n0")[0].climax_indices == std::set<int>{1});

  SUBCASE("range and flag violations") {
    const SubmitResult bad = store.submit(rec("n0", "b", {3}, {}));
    CHECK(bad.status == SubmitStatus::kRejected);
    REQUIRE_FALSE(bad.errors.empty());
    CHECK(bad.errors[0].first == "climax_indices");
    AnnotationRecord flagged = rec("n0", "b", {1}, {2});
    flagged.no_climax = true;
    CHECK(store.submit(flagged).status == SubmitStatus::kRejected);
    CHECK(store.submit(rec("zzz", "b", {0}, {})).status == SubmitStatus::kRejected);
  }
  SUBCASE("resubmission") {
    CHECK(store.submit(rec("n0", "a", {1}, {2})).status == SubmitStatus::kDuplicate);
    CHECK(store.log().size() == 1);
    CHECK(store.submit(rec("n0", "a", {0}, {2})).status == SubmitStatus::kAccepted);
    CHECK(store.log().size() == 2);
    CHECK(store.annotations_for("n0")[0].climax_indices == std::set<int>{0});
    CHECK(merge_annotations(store.annotations_for("n0"), 3).labels[0] == Label::kClimax);
  }
  SUBCASE("quota") {
    CHECK(store.submit(rec("n0", "b", {1}, {})).status == SubmitStatus::kAccepted);
    CHECK(store.submit(rec("n0", "c", {1}, {})).status == SubmitStatus::kAccepted);
    CHECK(store.submit(rec("n0", "d", {1}, {})).status == SubmitStatus::kRejected);
  }
  SUBCASE("the log replays to the same index") {
    Rng rng(3);
    for (int k = 0; k < 60; ++k) {
      const std::string n = "n" + std::to_string(rng.below(3));
      const std::string who = std::string(1, static_cast<char>('a' + rng.below(3)));
      std::set<int> c, r;
      if (rng.below(2)) c.insert(static_cast<int>(rng.below(3)));
      if (rng.below(2)) r.insert(static_cast<int>(rng.below(3)));
      store.submit(rec(n, who, c, r));
    }
    const AnnotationStore reloaded(make_corpus(3), dir.file("log.jsonl"));
    CHECK(reloaded.log() == store.log());
    const auto index = replay(store.log());
    for (int k = 0; k < 3; ++k) {
      const std::string n = "n" + std::to_string(k);
      std::vector<AnnotationRecord> expected;
      if (index.count(n)) {
        for (const auto& [who, r] : index.at(n)) expected.push_back(r);
      }
      CHECK(reloaded.annotations_for(n) == expected);
      CHECK(store.annotations_for(n) == expected);
    }
  }
}

TEST_CASE("agreement snapshot") {
  SUBCASE("identical annotators") {
    AnnotationStore store(make_corpus(2), "");
    for (const char* who : {"a", "b", "c"}) {
      store.submit(rec("n0", who, {1}, {2}));
      store.submit(rec("n1", who, {0}, {}));
    }
    const auto report = store.agreement();
    REQUIRE(report);
    CHECK(report->climax.kappa == 1.0);
    CHECK(report->climax.percentage_agreement == 1.0);
    CHECK(report->climax.distance == 0.0);
    CHECK(report->resolution.kappa == 1.0);
  }
  SUBCASE("scripted disagreement") {
    AnnotationStore store(make_corpus(3), "");
    store.submit(rec("n0", "x", {1}, {2}));
    store.submit(rec("n0", "y", {1}, {2}));
    store.submit(rec("n0", "z", {2}, {}));
    store.submit(rec("n1", "x", {0}, {2}));
    store.submit(rec("n1", "y", {0}, {1}));
    store.submit(rec("n1", "z", {0}, {2}));
    store.submit(rec("n2", "x", {0}, {}));  // partial, left out
    const auto report = store.agreement();
    REQUIRE(report);
    CHECK(report->narratives == 2);
    // Climax votes per sentence (yes of 3): 0 2 1 | 3 0 0.
    // P = 7/9, p_yes = 1/3, Pe = 5/9, kappa = (7/9 - 5/9) / (4/9).
    CHECK(report->climax.kappa == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(report->climax.percentage_agreement == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  }
  SUBCASE("nothing complete") {
    AnnotationStore store(make_corpus(2), "");
    store.submit(rec("n0", "a", {0}, {}));
    CHECK_FALSE(store.agreement());
  }
}

TEST_CASE("HTTP service") {
  AnnotationStore store(make_corpus(2, 4), "", 2);
  LiveServer live(store);
  auto client = live.client();

  auto next = client.Get("/api/tasks/next?annotator_id=alice");
  REQUIRE(next);
  CHECK(next->status == 200);
  const json task = json::parse(next->body);
  const std::string id = task["id"];
  CHECK(task["sentences"].size() == 4);

  CHECK(client.Get("/api/tasks/next")->status == 400);

  const json record = {{"narrative_id", id},          {"annotator_id", "alice"},
                       {"climax_indices", {1, 2}},   {"resolution_indices", {3}},
                       {"no_climax", false},         {"no_resolution", false}};
  auto posted = client.Post("/api/annotations", record.dump(), "application/json");
  REQUIRE(posted);
  CHECK(posted->status == 201);
  const json stored = json::parse(posted->body);
  CHECK(stored["climax_indices"] == record["climax_indices"]);
  CHECK(stored["resolution_indices"] == record["resolution_indices"]);

  json bad = record;
  bad["climax_indices"] = {4};
  bad["annotator_id"] = "bob";
  auto rejected = client.Post("/api/annotations", bad.dump(), "application/json");
  CHECK(rejected->status == 422);
  const json errors = json::parse(rejected->body)["errors"];
  REQUIRE(errors.size() >= 1);
  CHECK(errors[0]["field"] == "climax_indices");
  CHECK(client.Post("/api/annotations", "{nope", "application/json")->status == 422);

  auto listed = client.Get("/api/annotations?narrative_id=" + id);
  CHECK(listed->status == 200);
  const json list = json::parse(listed->body)["annotations"];
  REQUIRE(list.size() == 1);
  CHECK(list[0]["annotator_id"] == "alice");
  CHECK(client.Get("/api/annotations?narrative_id=missing")->status == 404);
  CHECK(client.Get("/api/annotations")->status == 400);

  CHECK(json::parse(client.Get("/api/agreement")->body)["status"] == "insufficient_data");

  json second = record;
  second["annotator_id"] = "bob";
  CHECK(client.Post("/api/annotations", second.dump(), "application/json")->status == 201);
  const json agreement = json::parse(client.Get("/api/agreement")->body);
  CHECK(agreement["status"] == "ok");
  CHECK(agreement["climax"]["fleiss_kappa"] == 1.0);
  CHECK(agreement["climax"]["percentage_agreement"] == 1.0);
  CHECK(agreement["climax"]["mean_annotation_distance"] == 0.0);

  const json progress = json::parse(client.Get("/api/progress")->body);
  CHECK(progress["fully_annotated"] == 1);
  CHECK(progress["records"] == 2);

  // alice still has the other narrative, then nothing.
  auto again = client.Get("/api/tasks/next?annotator_id=alice");
  REQUIRE(again->status == 200);
  const std::string other = json::parse(again->body)["id"];
  CHECK(other != id);
  json last = record;
  last["narrative_id"] = other;
  last["climax_indices"] = json::array();
  last["no_climax"] = true;
  CHECK(client.Post("/api/annotations", last.dump(), "application/json")->status == 201);
  CHECK(client.Get("/api/tasks/next?annotator_id=alice")->status == 204);
}
