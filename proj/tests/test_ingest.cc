#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "narrative/error.h"
#include "narrative/ingest.h"
#include "narrative/util/files.h"
#include "test_util.h"

// After Eigen: resolv.h defines a macro that collides with Eigen internals.
#include <httplib.h>

using namespace narrative;
using namespace narrative::ingest;
using narrative::testing::TempDir;

namespace {

RawPost post(const std::string& id, int sentences, int64_t created = 0) {
  RawPost p;
  p.id = id;
  p.title = "Post " + id;
  for (int i = 0; i < sentences; ++i) p.body += "This is sentence " + std::to_string(i) + ". ";
  p.subreddit = "offmychest";
  p.created_utc = created;
  return p;
}

std::string dump(const std::vector<RawPost>& posts) {
  std::string out;
  for (const auto& p : posts) out += ingest::to_json(p).dump() + "\n";
  return out;
}

// Serves GET /posts newest first with exclusive before/after bounds.
class MockArchive {
 public:
  explicit MockArchive(std::vector<RawPost> posts, int failures = 0)
      : posts_(std::move(posts)), failures_(failures) {
    std::sort(posts_.begin(), posts_.end(),
              [](const RawPost& a, const RawPost& b) { return a.created_utc > b.created_utc; });
    server_.Get("/posts", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      if (failures_ > 0) {
        --failures_;
        res.status = 503;
        return;
      }
      const int size = std::stoi(req.get_param_value("size"));
      nlohmann::json data = nlohmann::json::array();
      for (const auto& p : posts_) {
        if (req.has_param("before") && p.created_utc >= std::stoll(req.get_param_value("before"))) continue;
        if (req.has_param("after") && p.created_utc <= std::stoll(req.get_param_value("after"))) continue;
        if (req.has_param("subreddit") && p.subreddit != req.get_param_value("subreddit")) continue;
        if (static_cast<int>(data.size()) == size) break;
        data.push_back(nlohmann::json(ingest::to_json(p)));
      }
      res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockArchive() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> requests{0};

 private:
  std::vector<RawPost> posts_;
  std::atomic<int> failures_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::shared_ptr<const encoders::SentenceEncoder> sentence_encoder() {
  return std::make_shared<encoders::ReferenceSentenceEncoder>(
      encoders::EncoderConfig{encoders::EncoderKind::kSentenceLevel, 16, 3});
}

// Stories use first-person narrative words, the rest use listing words.
std::vector<std::pair<std::string, bool>> toy_set(int n, uint64_t seed) {
  const std::vector<std::string> story = {"yesterday", "i", "walked", "my", "friend", "then", "we",
                                          "laughed", "remember", "felt"};
  const std::vector<std::string> other = {"price", "specs", "question", "anyone", "recommend",
                                          "buy", "model", "version", "link", "sale"};
  Rng rng(seed);
  std::vector<std::pair<std::string, bool>> out;
  for (int k = 0; k < n; ++k) {
    const bool label = k % 2 == 0;
    const auto& words = label ? story : other;
    std::string text;
    for (int w = 0; w < 8; ++w) text += words[rng.below(words.size())] + (w == 7 ? "." : " ");
    out.emplace_back(text, label);
  }
  return out;
}

void set_constant(StoryClassifier& c, double p) {
  for (const auto& name : c.params().names()) c.params().value(name).setZero();
  c.params().value("b2")(0, 0) = std::log(p / (1.0 - p));
}

}  // namespace

TEST_CASE("post records") {
  const RawPost p = post("x1", 3, 99);
  const RawPost back = post_from_json(ingest::to_json(p));
  CHECK(back.id == p.id);
  CHECK(back.body == p.body);
  CHECK(back.created_utc == 99);
  CHECK(post_from_json({{"id", "s"}, {"selftext", "Hi there."}}).body == "Hi there.");
  CHECK_THROWS_AS(post_from_json({{"title", "no id"}}), DataError);
  CHECK_THROWS_AS(post_from_json({{"id", "a"}, {"created_utc", "soon"}}), DataError);
}

TEST_CASE("local dumps") {
  TempDir dir;
  std::vector<RawPost> posts;
  for (int i = 0; i < 5; ++i) posts.push_back(post("p" + std::to_string(i), 3, i));
  write_file_atomic(dir.file("d.jsonl"), dump(posts));
  CHECK(fetch_posts(dir.file("d.jsonl"), {}).size() == 5);

  posts.push_back(post("p2", 4, 10));
  write_file_atomic(dir.file("dup.jsonl"), dump(posts) + "not json\n");
  const auto read = read_dump(dir.file("dup.jsonl"));
  REQUIRE(read.size() == 5);
  CHECK(read[2].created_utc == 2);  // first instance kept

  Query q;
  q.after = 1;
  q.before = 4;
  CHECK(read_dump(dir.file("d.jsonl"), q).size() == 2);
  q = {};
  q.subreddit = "elsewhere";
  CHECK(read_dump(dir.file("d.jsonl"), q).empty());
  CHECK_THROWS_AS(read_dump(dir.file("missing.jsonl")), IoError);
}

TEST_CASE("paginated archive") {
  std::vector<RawPost> posts;
  for (int i = 1; i <= 30; ++i) posts.push_back(post("h" + std::to_string(i), 3, 1000 + i));
  MockArchive archive(posts);
  Query q;
  q.page_size = 10;
  const auto got = fetch_posts(archive.url(), q);
  CHECK(got.size() == 30);
  std::set<std::string> ids;
  for (const auto& p : got) ids.insert(p.id);
  CHECK(ids.size() == 30);
  CHECK(archive.requests == 4);  // three full pages and an empty one

  q.after = 1020;
  CHECK(fetch_posts(archive.url(), q).size() == 10);
}

TEST_CASE("archive retries") {
  std::vector<RawPost> posts = {post("a", 3, 5), post("b", 3, 6)};
  SUBCASE("recovers after transient failures") {
    MockArchive archive(posts, 2);
    FetchOptions opts;
    opts.retries = 3;
    opts.backoff_ms = 1;
    CHECK(fetch_posts(archive.url(), {}, opts).size() == 2);
  }
  SUBCASE("gives up") {
    MockArchive archive(posts, 100);
    FetchOptions opts;
    opts.retries = 2;
    opts.backoff_ms = 1;
    CHECK_THROWS_AS(fetch_posts(archive.url(), {}, opts), IoError);
    CHECK(archive.requests == 3);
  }
}

TEST_CASE("filter_posts") {
  FilterConfig config;
  RawPost tagged = post("t", 5);
  tagged.tags = {"NSFW"};
  RawPost adult = post("a", 5);
  adult.over_18 = true;
  RawPost deleted = post("d", 5);
  deleted.title = "[deleted]";
  const RawPost short_post = post("s", 2);
  CHECK(filter_posts({tagged, adult, deleted, short_post}, config).empty());

  std::vector<RawPost> clean;
  for (int i = 0; i < 10; ++i) clean.push_back(post("c" + std::to_string(i), 3 + i));
  const auto kept = filter_posts(clean, config);
  REQUIRE(kept.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(kept[i].id == clean[i].id);

  // Fewer banned tags never keeps fewer posts.
  FilterConfig loose = config;
  loose.banned_tags = {"deleted"};
  CHECK(filter_posts({tagged, deleted}, loose).size() == 1);
}

TEST_CASE("story classifier") {
  const auto encoder = sentence_encoder();
  const auto data = toy_set(40, 1);

  SUBCASE("separable toy set") {
    ClassifierTraining t;
    t.epochs = 50;
    t.lr = 1e-2;
    t.validation_fraction = 0.0;
    const StoryClassifier c = train_story_classifier(data, encoder, t);
    int correct = 0;
    for (const auto& [text, label] : data) correct += (classify_story(text, c) >= 0.5) == label;
    CHECK(correct == 40);
  }
  SUBCASE("zero epochs keeps the initial weights") {
    ClassifierTraining t;
    t.epochs = 0;
    const StoryClassifier c = train_story_classifier(data, encoder, t);
    CHECK(c.params().same_values(StoryClassifier(encoder, t.seed).params()));
  }
  SUBCASE("deterministic") {
    ClassifierTraining t;
    t.epochs = 5;
    CHECK(train_story_classifier(data, encoder, t)
              .params()
              .same_values(train_story_classifier(data, encoder, t).params()));
  }
  SUBCASE("single class rejected") {
    CHECK_THROWS_AS(train_story_classifier({{"a.", true}, {"b.", true}}, encoder, {}), DataError);
  }
  SUBCASE("probabilities") {
    StoryClassifier c(encoder, 4);
    for (const auto& [text, label] : data) {
      const double p = classify_story(text, c);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      CHECK(classify_story(text, c) == p);
    }
    set_constant(c, 0.5);
    CHECK(classify_story("Anything at all.", c) == 0.5);
  }
  SUBCASE("serialization") {
    const StoryClassifier c(encoder, 4);
    const StoryClassifier back = StoryClassifier::from_json(c.to_json(), encoder);
    CHECK(back.params().same_values(c.params()));
    const auto other = std::make_shared<encoders::ReferenceSentenceEncoder>(
        encoders::EncoderConfig{encoders::EncoderKind::kSentenceLevel, 8, 3});
    CHECK_THROWS_AS(StoryClassifier::from_json(c.to_json(), other), DataError);
  }
  SUBCASE("held-out F1 against a threshold sweep") {
    ClassifierTraining t;
    t.epochs = 30;
    t.lr = 1e-2;
    const StoryClassifier c = train_story_classifier(data, encoder, t);
    const auto held = toy_set(30, 2);
    std::vector<RawPost> posts;
    std::map<std::string, bool> truth;
    for (size_t i = 0; i < held.size(); ++i) {
      RawPost p;
      p.id = "h" + std::to_string(i);
      p.body = held[i].first;
      truth[p.id] = held[i].second;
      posts.push_back(p);
    }
    FilterConfig f;
    f.story_threshold = 0.5;
    std::set<std::string> kept;
    for (const auto& e : gate_corpus(posts, c, f)) kept.insert(e.narrative.id);

    double tp = 0, fp = 0, fn = 0;
    for (const auto& p : posts) {
      const bool predicted = classify_story(p.body, c) >= 0.5;
      CHECK(predicted == (kept.count(p.id) == 1));
      tp += predicted && truth[p.id];
      fp += predicted && !truth[p.id];
      fn += !predicted && truth[p.id];
    }
    double gate_tp = 0, gate_fp = 0;
    for (const auto& id : kept) (truth[id] ? gate_tp : gate_fp) += 1;
    CHECK(gate_tp == tp);
    CHECK(gate_fp == fp);
    const double f1 = 2 * tp / (2 * tp + fp + fn);
    CHECK(f1 >= 0.9);
  }
}

TEST_CASE("gate_corpus") {
  const auto encoder = sentence_encoder();
  std::vector<RawPost> posts;
  for (int i = 0; i < 12; ++i) posts.push_back(post("g" + std::to_string(i), 3 + i % 4));
  posts[3].title = "Kept title";

  StoryClassifier c(encoder, 1);
  set_constant(c, 0.6);
  FilterConfig f;
  CHECK(f.story_threshold == 0.75);
  CHECK(gate_corpus(posts, c, f).empty());
  f.story_threshold = 0.6;
  CHECK(gate_corpus(posts, c, f).size() == 12);

  StoryClassifier random(encoder, 9);
  f.story_threshold = 0.0;
  const Corpus all = gate_corpus(posts, random, f);
  REQUIRE(all.size() == 12);
  CHECK(all[3].narrative.title == "Kept title");
  CHECK(all[3].narrative.length() == 6);
  CHECK(!all[3].gold.has_value());

  std::vector<double> probs;
  for (const auto& p : posts) probs.push_back(classify_story(p.body, random));
  size_t previous = all.size();
  for (double delta : {0.2, 0.4, 0.45, 0.5, 0.55, 0.6, 0.8, 1.0}) {
    f.story_threshold = delta;
    const Corpus kept = gate_corpus(posts, random, f);
    std::vector<std::string> expected;
    for (size_t i = 0; i < posts.size(); ++i) {
      if (probs[i] >= delta) expected.push_back(posts[i].id);
    }
    std::vector<std::string> got;
    for (const auto& e : kept) got.push_back(e.narrative.id);
    CHECK(got == expected);
    CHECK(kept.size() <= previous);
    previous = kept.size();
  }
  f.story_threshold = 1.5;
  CHECK_THROWS_AS(gate_corpus(posts, random, f), ArgumentError);
}
