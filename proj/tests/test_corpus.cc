#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <doctest.h>

#include "narrative/corpus.h"
#include "narrative/error.h"
#include "narrative/util/files.h"
#include "test_util.h"

using namespace narrative;
using narrative::testing::TempDir;

namespace {

Corpus random_corpus(int n, uint64_t seed, bool labelled = true) {
  Rng rng(seed);
  Corpus c;
  for (int k = 0; k < n; ++k) {
    const int length = 1 + static_cast<int>(rng.below(8));
    std::vector<std::string> sentences;
    for (int i = 0; i < length; ++i) {
      sentences.push_back("Sentence " + std::to_string(i) + " of story \"" + std::to_string(k) +
                          "\", with punctuation!");
    }
    CorpusEntry e{make_narrative("n" + std::to_string(k), "Title " + std::to_string(k), sentences,
                                 {{"subreddit", "r" + std::to_string(k % 3)}}),
                  std::nullopt};
    if (labelled) {
      LabelSequence s{e.narrative.id, std::vector<Label>(length, Label::kNone)};
      for (auto& l : s.labels) l = static_cast<Label>(rng.below(3));
      e.gold = s;
    }
    c.push_back(std::move(e));
  }
  return c;
}

std::string strip_space(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

AnnotationRecord record(const std::string& annotator, std::set<int> climax,
                        std::set<int> resolution = {}) {
  AnnotationRecord r;
  r.narrative_id = "n";
  r.annotator_id = annotator;
  r.climax_indices = std::move(climax);
  r.resolution_indices = std::move(resolution);
  return r;
}

}  // namespace

TEST_CASE("load_corpus") {
  TempDir dir;
  SUBCASE("two records") {
    write_file_atomic(dir.file("c.jsonl"),
                      R"({"id":"a","title":"A","sentences":["One.","Two."],"labels":["none","climax"]})"
                      "\n"
                      R"({"id":"b","title":"B","sentences":["Only."]})"
                      "\n");
    const Corpus c = load_corpus(dir.file("c.jsonl"));
    REQUIRE(c.size() == 2);
    CHECK(c[0].narrative.id == "a");
    CHECK(c[0].gold->labels == std::vector<Label>{Label::kNone, Label::kClimax});
    CHECK_FALSE(c[1].gold.has_value());
    CHECK(c[1].narrative.sentences[0].index == 0);
  }
  SUBCASE("short label list names the narrative") {
    write_file_atomic(dir.file("c.jsonl"),
                      R"({"id":"story7","title":"","sentences":["a.","b.","c."],"labels":["none","none"]})"
                      "\n");
    try {
      load_corpus(dir.file("c.jsonl"));
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("story7") != std::string::npos);
    }
  }
  SUBCASE("malformed line names the line") {
    write_file_atomic(dir.file("c.jsonl"),
                      R"({"id":"a","title":"","sentences":["x."]})"
                      "\n{not json\n");
    try {
      load_corpus(dir.file("c.jsonl"));
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("duplicate ids rejected") {
    write_file_atomic(dir.file("c.jsonl"),
                      R"({"id":"a","title":"","sentences":["x."]})"
                      "\n"
                      R"({"id":"a","title":"","sentences":["y."]})"
                      "\n");
    CHECK_THROWS_AS(load_corpus(dir.file("c.jsonl")), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_corpus(dir.file("absent.jsonl")), IoError); }
}

TEST_CASE("save_corpus") {
  TempDir dir;
  SUBCASE("empty corpus gives an empty file") {
    save_corpus({}, dir.file("e.jsonl"));
    CHECK(read_file(dir.file("e.jsonl")).empty());
  }
  SUBCASE("one narrative gives one line") {
    save_corpus(random_corpus(1, 3), dir.file("one.jsonl"));
    CHECK(read_lines(dir.file("one.jsonl")).size() == 1);
  }
  SUBCASE("round trip of 50 narratives") {
    const Corpus c = random_corpus(50, 4);
    save_corpus(c, dir.file("c.jsonl"));
    CHECK(load_corpus(dir.file("c.jsonl")) == c);
  }
  SUBCASE("byte-stable") {
    const Corpus c = random_corpus(20, 5);
    save_corpus(c, dir.file("a.jsonl"));
    save_corpus(c, dir.file("b.jsonl"));
    CHECK(read_file(dir.file("a.jsonl")) == read_file(dir.file("b.jsonl")));
    CHECK(serialize_corpus(c) == read_file(dir.file("a.jsonl")));
  }
}

TEST_CASE("segment_sentences") {
  CHECK(segment_sentences("I ran. I fell.").size() == 2);
  CHECK(segment_sentences("Dr. Smith left.").size() == 1);
  CHECK(segment_sentences("Mr. and Mrs. Jones came, e.g. on Friday. Then i.e. nothing.").size() == 2);
  CHECK(segment_sentences("Really? Yes! Fine.").size() == 3);
  CHECK(segment_sentences("the value is 3.5 today. ok").size() == 1);

  const auto blank = segment_sentences("   ");
  REQUIRE(blank.size() == 1);
  CHECK(blank[0].tokens.empty());

  SUBCASE("twenty sentences reconstruct the text") {
    Rng rng(6);
    std::string text;
    const char* ends[] = {".", "!", "?"};
    for (int i = 0; i < 20; ++i) {
      if (i) text += i % 4 == 0 ? "  " : " ";
      text += "Word" + std::to_string(i) + " goes " + std::to_string(rng.below(100)) + " far" +
              ends[rng.below(3)];
    }
    const auto sentences = segment_sentences(text);
    REQUIRE(sentences.size() == 20);
    std::string joined;
    for (size_t i = 0; i < sentences.size(); ++i) {
      CHECK(sentences[i].index == static_cast<int>(i));
      joined += sentences[i].text;
    }
    CHECK(strip_space(joined) == strip_space(text));
  }
}

TEST_CASE("tokenize") {
  CHECK(tokenize("Hello, world!") == std::vector<std::string>{"Hello", ",", "world", "!"});
  CHECK(tokenize("don't over-think (it)") ==
        std::vector<std::string>{"don't", "over-think", "(", "it", ")"});
  CHECK(tokenize("  ").empty());
}

TEST_CASE("split_corpus") {
  SUBCASE("sizes for ten narratives") {
    const CorpusSplit s = split_corpus(random_corpus(10, 1), {0.7, 0.1, 0.2}, 7);
    CHECK(s.train.size() == 7);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 2);
  }
  SUBCASE("deterministic per seed") {
    const Corpus c = random_corpus(30, 2);
    const CorpusSplit a = split_corpus(c, {0.7, 0.1, 0.2}, 11);
    const CorpusSplit b = split_corpus(c, {0.7, 0.1, 0.2}, 11);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(split_corpus(c, {0.7, 0.1, 0.2}, 12).train != a.train);
  }
  SUBCASE("partition of 1000 narratives") {
    const Corpus c = random_corpus(1000, 3, false);
    for (uint64_t seed : {0, 1, 99}) {
      for (std::array<double, 3> r : {std::array<double, 3>{0.7, 0.1, 0.2},
                                      std::array<double, 3>{0.333, 0.333, 0.334},
                                      std::array<double, 3>{0.0, 0.5, 0.5}}) {
        const CorpusSplit s = split_corpus(c, r, seed);
        std::multiset<std::string> all;
        all.insert(s.train.begin(), s.train.end());
        all.insert(s.validation.begin(), s.validation.end());
        all.insert(s.test.begin(), s.test.end());
        CHECK(all.size() == 1000);
        for (const auto& e : c) CHECK(all.count(e.narrative.id) == 1);
        CHECK(std::abs(static_cast<double>(s.train.size()) - r[0] * 1000) <= 1.0);
        CHECK(std::abs(static_cast<double>(s.validation.size()) - r[1] * 1000) <= 1.0);
        CHECK(std::abs(static_cast<double>(s.test.size()) - r[2] * 1000) <= 1.0);
      }
    }
  }
  SUBCASE("bad ratios") {
    CHECK_THROWS_AS(split_corpus(random_corpus(10, 1), {0.7, 0.2, 0.2}, 1), ArgumentError);
    CHECK_THROWS_AS(split_corpus(random_corpus(2, 1), {0.7, 0.1, 0.2}, 1), ArgumentError);
  }
}

TEST_CASE("merge_annotations") {
  const int length = 8;
  SUBCASE("unanimity") {
    const auto s = merge_annotations({record("a", {5}), record("b", {5}), record("c", {5})}, length);
    CHECK(s.labels[5] == Label::kClimax);
  }
  SUBCASE("two of three") {
    const auto s = merge_annotations({record("a", {5}), record("b", {5}), record("c", {})}, length);
    CHECK(s.labels[5] == Label::kClimax);
  }
  SUBCASE("one of three") {
    const auto s = merge_annotations({record("a", {5}), record("b", {}), record("c", {})}, length);
    CHECK(s.labels[5] == Label::kNone);
  }
  SUBCASE("climax wins over resolution") {
    const auto s = merge_annotations(
        {record("a", {2}, {}), record("b", {2}, {}), record("c", {}, {2}), record("d", {}, {2}),
         record("e", {2}, {2 + 1})},
        length);
    CHECK(s.labels[2] == Label::kClimax);
  }
  SUBCASE("random majority oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(6));
      const int len = 1 + static_cast<int>(rng.below(10));
      std::vector<AnnotationRecord> records;
      for (int a = 0; a < n; ++a) {
        AnnotationRecord r = record("a" + std::to_string(a), {});
        for (int i = 0; i < len; ++i) {
          const auto u = rng.below(3);
          if (u == 1) r.climax_indices.insert(i);
          if (u == 2) r.resolution_indices.insert(i);
        }
        records.push_back(r);
      }
      const LabelSequence s = merge_annotations(records, len);
      REQUIRE(s.length() == len);
      for (int i = 0; i < len; ++i) {
        int c = 0, r = 0;
        for (const auto& rec : records) {
          c += rec.climax_indices.count(i);
          r += rec.resolution_indices.count(i);
        }
        const Label expected =
            2 * c > n ? Label::kClimax : (2 * r > n ? Label::kResolution : Label::kNone);
        CHECK(s.labels[i] == expected);
      }
    }
  }
  SUBCASE("mixed narratives rejected") {
    AnnotationRecord other = record("b", {1});
    other.narrative_id = "m";
    CHECK_THROWS_AS(merge_annotations({record("a", {1}), other}, length), DataError);
  }
}

TEST_CASE("validate_annotation") {
  CHECK(validate_annotation(record("a", {1}, {2}), 3).empty());
  CHECK_FALSE(validate_annotation(record("a", {3}), 3).empty());
  CHECK_FALSE(validate_annotation(record("a", {1}, {1}), 3).empty());
  AnnotationRecord flagged = record("a", {1});
  flagged.no_climax = true;
  CHECK_FALSE(validate_annotation(flagged, 3).empty());
  CHECK_FALSE(validate_annotation(record("a", {-1}), 3).empty());
}

TEST_CASE("corpus_stats") {
  SUBCASE("single narrative") {
    Corpus c = {{make_narrative("a", "", {"a.", "b.", "c.", "d.", "e."}), std::nullopt}};
    c[0].gold = LabelSequence{"a", {Label::kNone, Label::kNone, Label::kClimax, Label::kNone,
                                    Label::kResolution}};
    const CorpusStats s = corpus_stats(c);
    CHECK(*s.mean_climax_position == doctest::Approx(0.5));
    CHECK(*s.mean_resolution_position == doctest::Approx(1.0));
    CHECK(s.climax_sentences + s.resolution_sentences <= s.sentences);
  }
  SUBCASE("climax always last") {
    Corpus c;
    Rng rng(9);
    for (int k = 0; k < 100; ++k) {
      const int len = 2 + static_cast<int>(rng.below(10));
      std::vector<std::string> sentences(len, "Text.");
      CorpusEntry e{make_narrative("n" + std::to_string(k), "", sentences), std::nullopt};
      LabelSequence l{e.narrative.id, std::vector<Label>(len, Label::kNone)};
      l.labels.back() = Label::kClimax;
      e.gold = l;
      c.push_back(e);
    }
    const CorpusStats s = corpus_stats(c);
    CHECK(*s.mean_climax_position == 1.0);
    CHECK(s.climax_histogram.back() == 100);
    CHECK_FALSE(s.mean_resolution_position.has_value());
  }
  SUBCASE("counts bounded by sentences") {
    const CorpusStats s = corpus_stats(random_corpus(40, 10));
    CHECK(s.climax_sentences + s.resolution_sentences <= s.sentences);
    CHECK(s.narratives == 40);
  }
  SUBCASE("unlabelled narrative") {
    CHECK_THROWS_AS(corpus_stats(random_corpus(3, 11, false)), DataError);
  }
}

TEST_CASE("normalized_position") {
  CHECK(normalized_position(0, 1) == 0.0);
  CHECK(normalized_position(2, 5) == 0.5);
  CHECK(position_bin(1.0) == kPositionBins - 1);
  CHECK(position_bin(0.0) == 0);
  CHECK(position_bin(0.6) == 12);
}
