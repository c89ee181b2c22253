#include <doctest.h>

#include <algorithm>

#include "narrative/baselines.h"
#include "narrative/error.h"
#include "narrative/synthetic.h"
#include "test_util.h"

using namespace narrative;
using namespace narrative::baselines;
using narrative::nn::Tensor;
using narrative::testing::random_tensor;

namespace {

Narrative text(const std::string& id, int length, const std::string& title = "") {
  std::vector<std::string> sentences;
  for (int i = 0; i < length; ++i) sentences.push_back("Sentence " + std::to_string(i) + ".");
  return make_narrative(id, title, sentences);
}

CorpusEntry labelled(const std::string& id, int length, int climax, int resolution) {
  CorpusEntry e{text(id, length), LabelSequence{id, std::vector<Label>(length, Label::kNone)}};
  e.gold->labels[resolution] = Label::kResolution;
  e.gold->labels[climax] = Label::kClimax;
  return e;
}

int count(const LabelSequence& s, Label c) {
  return static_cast<int>(std::count(s.labels.begin(), s.labels.end(), c));
}

int index_of(const LabelSequence& s, Label c) {
  const auto it = std::find(s.labels.begin(), s.labels.end(), c);
  return it == s.labels.end() ? -1 : static_cast<int>(it - s.labels.begin());
}

encoders::EmbeddingMatrix embeddings(Tensor rows) {
  return {encoders::Channel::kSem, std::move(rows)};
}

}  // namespace

TEST_CASE("random baseline") {
  const Narrative n = text("a", 12);
  CHECK(random_baseline(n, 5).labels == random_baseline(n, 5).labels);
  CHECK(random_baseline(n, 5).labels != random_baseline(n, 6).labels);
  CHECK(random_baseline(text("one", 1), 3).labels.size() == 1);

  std::array<int, 3> freq{};
  int total = 0;
  for (uint64_t seed = 0; total < 30000; ++seed) {
    for (Label l : random_baseline(text("x", 30), seed).labels) ++freq[static_cast<int>(l)];
    total += 30;
  }
  for (int f : freq) CHECK(std::abs(static_cast<double>(f) / total - 1.0 / 3.0) <= 0.01);

  // Precision of a uniform guess equals the prior, recall is 1/3.
  const double prior = 0.1, q = 1.0 / 3.0;
  CHECK(random_expected_f1(prior) == doctest::Approx(2 * prior * q / (prior + q)));
}

TEST_CASE("positional baseline") {
  SUBCASE("peak at 0.6") {
    Corpus training;
    // index 3 of 6 sentences and index 6 of 11 both sit at normalized 0.6
    for (int k = 0; k < 5; ++k) training.push_back(labelled("a" + std::to_string(k), 6, 3, 5));
    for (int k = 0; k < 5; ++k) training.push_back(labelled("b" + std::to_string(k), 11, 6, 10));
    const PositionalModel m = fit_positional(training);
    const int bin = std::min(static_cast<int>(0.6 * 20), 19);
    CHECK(m.climax_histogram[bin] == 10);
    CHECK(m.climax_peak == doctest::Approx((bin + 0.5) / 20));
    CHECK(m.resolution_peak == doctest::Approx(19.5 / 20));
  }
  SUBCASE("uniform positions fall to the earliest bin") {
    Corpus training;
    for (int i = 0; i < 20; ++i) training.push_back(labelled("u" + std::to_string(i), 20, i, i == 0 ? 1 : 0));
    const PositionalModel m = fit_positional(training);
    CHECK(m.climax_peak == doctest::Approx(0.5 / 20));
  }
  SUBCASE("missing class") {
    Corpus training = {labelled("a", 5, 2, 4)};
    for (auto& l : training[0].gold->labels) {
      if (l == Label::kResolution) l = Label::kNone;
    }
    CHECK_THROWS_AS(fit_positional(training), DataError);
  }
  SUBCASE("apply") {
    PositionalModel m;
    m.climax_peak = 0.6;
    m.resolution_peak = 0.9;
    const LabelSequence s = apply_positional(m, text("a", 10));
    CHECK(index_of(s, Label::kClimax) == 5);
    CHECK(index_of(s, Label::kResolution) == 8);
    CHECK(count(s, Label::kClimax) == 1);
    CHECK(count(s, Label::kResolution) == 1);

    m.resolution_peak = 0.6;
    const LabelSequence collide = apply_positional(m, text("a", 10));
    CHECK(count(collide, Label::kClimax) == 1);
    CHECK(count(collide, Label::kResolution) == 0);

    CHECK(apply_positional(m, text("b", 1)).labels == std::vector<Label>{Label::kClimax});
    CHECK(apply_positional(m, text("c", 7)).labels == apply_positional(m, text("d", 7)).labels);
  }
}

TEST_CASE("heuristic baseline") {
  encoders::ReferenceSentenceEncoder encoder({encoders::EncoderKind::kSentenceLevel, 32, 1});
  Narrative n = make_narrative("h", "The storm broke the old fence.",
                               {"We went out.", "It was windy.", "Rain started.",
                                "The storm broke the old fence.", "We fixed it.", "All done."});
  const LabelSequence s = heuristic_baseline(n, encoder);
  CHECK(index_of(s, Label::kClimax) == 3);
  CHECK(index_of(s, Label::kResolution) == 5);
  CHECK(count(s, Label::kClimax) == 1);
  CHECK(count(s, Label::kResolution) == 1);

  const LabelSequence one = heuristic_baseline(make_narrative("o", "Title.", {"Only."}), encoder);
  CHECK(one.labels == std::vector<Label>{Label::kClimax});

  n.title = "  ";
  CHECK_THROWS_AS(heuristic_baseline(n, encoder), DataError);
}

TEST_CASE("surprise series") {
  Rng rng(1);
  const Tensor v = random_tensor(1, 8, rng), u = random_tensor(1, 8, rng);
  Tensor rows(3, 8);
  rows << v, v, v + u;
  const auto series = surprise_series(embeddings(rows));
  REQUIRE(series.size() == 3);
  CHECK(series[0] == 0.0);
  CHECK(series[1] == 0.0);
  CHECK(series[2] == doctest::Approx(u.squaredNorm() / 8).epsilon(1e-12));

  const Tensor constant = Tensor::Constant(5, 4, 0.7);
  for (double s : surprise_series(embeddings(constant))) CHECK(s == 0.0);

  const Tensor x = random_tensor(9, 6, rng);
  const auto base = surprise_series(embeddings(x));
  const auto scaled = surprise_series(embeddings(2.0 * x));
  for (size_t i = 0; i < base.size(); ++i) CHECK(scaled[i] == doctest::Approx(4.0 * base[i]));
  CHECK(surprise_baseline(embeddings(x)).labels == surprise_baseline(embeddings(3.5 * x)).labels);
}

TEST_CASE("surprise decoding") {
  SUBCASE("single jump") {
    for (int jump = 1; jump < 12; ++jump) {
      const auto m = synthetic::step_embeddings(12, 16, jump, 40 + jump);
      CHECK(index_of(surprise_baseline(m), Label::kClimax) == jump);
    }
  }
  SUBCASE("monotone series") {
    const LabelSequence s = surprise_decode({0.0, 1.0, 2.0, 3.0});
    CHECK(index_of(s, Label::kClimax) == 3);
    CHECK(count(s, Label::kResolution) == 0);
  }
  SUBCASE("ties") {
    const LabelSequence s = surprise_decode({0.0, 5.0, 1.0, 5.0, 2.0, 1.0});
    CHECK(index_of(s, Label::kClimax) == 1);
    // drops after the peak: 4, -4, 3, 1 -> steepest at index 2
    CHECK(index_of(s, Label::kResolution) == 2);
    const LabelSequence late = surprise_decode({0.0, 4.0, 2.0, 2.0, 0.0});
    CHECK(index_of(late, Label::kResolution) == 4);  // equal drops, later wins
  }
  SUBCASE("short input") {
    CHECK(surprise_decode({0.0}).labels == std::vector<Label>{Label::kNone});
    CHECK(surprise_decode({}).labels.empty());
  }
  SUBCASE("at most one of each on random series") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const int len = 2 + static_cast<int>(rng.below(15));
      std::vector<double> series(len, 0.0);
      for (int i = 1; i < len; ++i) series[i] = rng.uniform();
      const LabelSequence s = surprise_decode(series);
      CHECK(s.labels.size() == static_cast<size_t>(len));
      CHECK(count(s, Label::kClimax) == 1);
      CHECK(count(s, Label::kResolution) <= 1);
      const int c = index_of(s, Label::kClimax);
      CHECK(series[c] == *std::max_element(series.begin(), series.end()));
      const int r = index_of(s, Label::kResolution);
      if (r >= 0) CHECK(r > c);
    }
  }
}

TEST_CASE("labeler adapters") {
  const auto suite = encoders::make_reference_suite(16, 3);
  Corpus training = {labelled("a", 6, 3, 5), labelled("b", 8, 4, 7)};
  for (auto& e : training) e.narrative.title = "A title.";
  for (const std::string name :
       {"random", "distribution", "heuristic", "surprise:xsem", "surprise:xintent", "surprise:xreact"}) {
    const auto labeler = make_labeler(name, training, suite);
    CHECK(labeler->name() == name);
    const LabelSequence s = labeler->label(training[1].narrative, 1);
    CHECK(s.labels.size() == 8);
    CHECK(s.narrative_id == "b");
    if (name != "random") {
      CHECK(count(s, Label::kClimax) <= 1);
      CHECK(count(s, Label::kResolution) <= 1);
    }
  }
  CHECK_THROWS_AS(make_labeler("oracle", training, suite), ArgumentError);
}
