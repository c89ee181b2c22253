#ifndef NARRATIVE_INGEST_H_
#define NARRATIVE_INGEST_H_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "narrative/corpus.h"
#include "narrative/encoders.h"
#include "narrative/nn/tensor.h"

namespace narrative::ingest {

struct RawPost {
  std::string id;
  std::string title;
  std::string body;
  std::set<std::string> tags;
  bool over_18 = false;
  std::string subreddit;
  int64_t created_utc = 0;
};

// Throws DataError on a record without an id or with wrongly typed fields.
RawPost post_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RawPost& post);

struct Query {
  std::string subreddit;  // empty matches any
  std::optional<int64_t> after;
  std::optional<int64_t> before;
  int page_size = 100;
};

struct FetchOptions {
  int retries = 3;
  int backoff_ms = 200;  // doubled after each failed attempt
  int timeout_s = 30;
};

// `source` is either an http(s) base URL serving
//   GET /posts?subreddit=&after=&before=&size=  ->  {"data": [posts...]}
// (newest first, paged by moving `before` to the oldest timestamp seen)
// or the path of a JSON-lines dump. Duplicates keep their first instance.
std::vector<RawPost> fetch_posts(const std::string& source, const Query& query,
                                 const FetchOptions& options = {});
std::vector<RawPost> read_dump(const std::string& path, const Query& query = {});

struct FilterConfig {
  int min_sentences = 3;
  std::set<std::string> banned_tags = {"deleted", "nsfw", "over_18"};
  double story_threshold = 0.75;

  void validate() const;
};

std::vector<RawPost> filter_posts(const std::vector<RawPost>& posts, const FilterConfig& config);

// Two linear layers with a relu between them and a sigmoid output.
class StoryClassifier {
 public:
  StoryClassifier() = default;
  StoryClassifier(std::shared_ptr<const encoders::SentenceEncoder> encoder, uint64_t seed);

  double probability(const std::string& text) const;
  double probability_from_features(const nn::Tensor& features) const;
  nn::Tensor features(const std::string& text) const;

  const nn::ParameterSet& params() const { return params_; }
  nn::ParameterSet& params() { return params_; }
  const encoders::SentenceEncoder& encoder() const { return *encoder_; }

  nlohmann::json to_json() const;
  static StoryClassifier from_json(const nlohmann::json& j,
                                   std::shared_ptr<const encoders::SentenceEncoder> encoder);

 private:
  std::shared_ptr<const encoders::SentenceEncoder> encoder_;
  nn::ParameterSet params_;
};

struct ClassifierTraining {
  double lr = 1e-3;
  int epochs = 50;
  int batch = 16;
  uint64_t seed = 0;
  double validation_fraction = 0.1;
};

struct ClassifierHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = 0;  // 0: the initial weights
};

StoryClassifier train_story_classifier(
    const std::vector<std::pair<std::string, bool>>& labeled,
    std::shared_ptr<const encoders::SentenceEncoder> encoder, const ClassifierTraining& options,
    ClassifierHistory* history = nullptr);

double classify_story(const std::string& text, const StoryClassifier& classifier);

// Keeps posts with p >= threshold, segmented into narratives.
Corpus gate_corpus(const std::vector<RawPost>& posts, const StoryClassifier& classifier,
                   const FilterConfig& config);

Narrative post_to_narrative(const RawPost& post);

}  // namespace narrative::ingest

#endif  // NARRATIVE_INGEST_H_
