#include "narrative/ingest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>
#include <unordered_set>

#include <httplib.h>

#include "narrative/error.h"
#include "narrative/nn/adam.h"
#include "narrative/nn/ops.h"
#include "narrative/util/files.h"
#include "narrative/util/rng.h"

namespace narrative::ingest {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool matches(const RawPost& post, const Query& query) {
  if (!query.subreddit.empty() && lower(post.subreddit) != lower(query.subreddit)) return false;
  if (query.after && post.created_utc <= *query.after) return false;
  if (query.before && post.created_utc >= *query.before) return false;
  return true;
}

void append_unique(std::vector<RawPost>& out, std::unordered_set<std::string>& seen,
                   RawPost post) {
  if (seen.insert(post.id).second) out.push_back(std::move(post));
}

bool is_url(const std::string& source) {
  return source.rfind("http://", 0) == 0 || source.rfind("https://", 0) == 0;
}

// Returns the page body, retrying transport failures and non-200 replies.
std::string get_page(httplib::Client& client, const httplib::Params& params,
                     const FetchOptions& options) {
  std::string last_error;
  int delay = options.backoff_ms;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
    auto res = client.Get("/posts", params, httplib::Headers{});
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    last_error = "HTTP status " + std::to_string(res->status);
  }
  throw IoError("archive request failed after " + std::to_string(options.retries + 1) +
                " attempts (" + last_error + ")");
}

std::vector<RawPost> fetch_http(const std::string& url, const Query& query,
                                const FetchOptions& options) {
  httplib::Client client(url);
  if (!client.is_valid()) throw ArgumentError("unsupported archive URL: " + url);
  client.set_connection_timeout(options.timeout_s);
  client.set_read_timeout(options.timeout_s);

  std::vector<RawPost> out;
  std::unordered_set<std::string> seen;
  std::optional<int64_t> before = query.before;
  while (true) {
    httplib::Params params;
    if (!query.subreddit.empty()) params.emplace("subreddit", query.subreddit);
    if (query.after) params.emplace("after", std::to_string(*query.after));
    if (before) params.emplace("before", std::to_string(*before));
    params.emplace("size", std::to_string(query.page_size));

    nlohmann::json page;
    try {
      page = nlohmann::json::parse(get_page(client, params, options));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("archive returned malformed JSON: " + std::string(e.what()));
    }
    if (!page.contains("data") || !page["data"].is_array()) {
      throw DataError("archive page has no data array");
    }
    if (page["data"].empty()) break;
    std::optional<int64_t> oldest;
    for (const auto& record : page["data"]) {
      try {
        RawPost post = post_from_json(record);
        if (!oldest || post.created_utc < *oldest) oldest = post.created_utc;
        if (matches(post, query)) append_unique(out, seen, std::move(post));
      } catch (const DataError& e) {
        log_warning(std::string("skipping archive record: ") + e.what());
      }
    }
    // A page that does not move the cursor would repeat forever.
    if (!oldest || (before && *oldest >= *before)) break;
    before = oldest;
  }
  return out;
}

double bce(double p, double target) {
  const double eps = 1e-12;
  return -(target * std::log(p + eps) + (1.0 - target) * std::log(1.0 - p + eps));
}

}  // namespace

RawPost post_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("post record is not an object");
  try {
    RawPost p;
    p.id = j.value("id", std::string());
    if (p.id.empty()) throw DataError("post record has no id");
    p.title = j.value("title", std::string());
    if (j.contains("body")) {
      p.body = j.at("body").get<std::string>();
    } else {
      p.body = j.value("selftext", std::string());
    }
    if (j.contains("tags")) {
      for (const auto& t : j.at("tags")) p.tags.insert(t.get<std::string>());
    }
    p.over_18 = j.value("over_18", false);
    p.subreddit = j.value("subreddit", std::string());
    p.created_utc = j.value("created_utc", int64_t{0});
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("post record has a malformed field: ") + e.what());
  }
}

nlohmann::ordered_json to_json(const RawPost& post) {
  nlohmann::ordered_json j;
  j["id"] = post.id;
  j["title"] = post.title;
  j["body"] = post.body;
  j["tags"] = post.tags;
  j["over_18"] = post.over_18;
  j["subreddit"] = post.subreddit;
  j["created_utc"] = post.created_utc;
  return j;
}

std::vector<RawPost> read_dump(const std::string& path, const Query& query) {
  std::vector<RawPost> out;
  std::unordered_set<std::string> seen;
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      RawPost post = post_from_json(nlohmann::json::parse(line));
      if (matches(post, query)) append_unique(out, seen, std::move(post));
    } catch (const nlohmann::json::exception&) {
      log_warning(path + ": line " + std::to_string(line_no) + ": malformed record skipped");
    } catch (const DataError& e) {
      log_warning(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RawPost> fetch_posts(const std::string& source, const Query& query,
                                 const FetchOptions& options) {
  if (query.page_size < 1) throw ArgumentError("page size must be positive");
  if (is_url(source)) return fetch_http(source, query, options);
  return read_dump(source, query);
}

void FilterConfig::validate() const {
  if (min_sentences < 1) throw ArgumentError("min_sentences must be at least 1");
  if (story_threshold < 0.0 || story_threshold > 1.0) {
    throw ArgumentError("story threshold must be in [0, 1]");
  }
}

std::vector<RawPost> filter_posts(const std::vector<RawPost>& posts, const FilterConfig& config) {
  config.validate();
  std::vector<std::string> banned;
  for (const auto& t : config.banned_tags) banned.push_back(lower(t));
  std::vector<RawPost> out;
  for (const auto& post : posts) {
    if (post.over_18) continue;
    bool drop = false;
    for (const auto& tag : post.tags) {
      const std::string t = lower(tag);
      for (const auto& b : banned) drop = drop || t.find(b) != std::string::npos;
    }
    const std::string title = lower(post.title);
    const std::string body = lower(post.body);
    for (const auto& b : banned) {
      const std::string marker = "[" + b + "]";
      drop = drop || title.find(marker) != std::string::npos ||
             body.find(marker) != std::string::npos;
    }
    if (drop) continue;
    int sentences = 0;
    for (const auto& s : segment_sentences(post.body)) {
      if (!s.tokens.empty()) ++sentences;
    }
    if (sentences < config.min_sentences) continue;
    out.push_back(post);
  }
  return out;
}

StoryClassifier::StoryClassifier(std::shared_ptr<const encoders::SentenceEncoder> encoder,
                                 uint64_t seed)
    : encoder_(std::move(encoder)) {
  if (!encoder_) throw ArgumentError("story classifier needs an encoder");
  const int d_in = encoder_->classifier_feature_width();
  const int d_h = std::max(1, d_in / 2);
  Rng rng(derive_seed({seed, 0x73746f7279ULL}));
  params_.add("w1", nn::xavier_uniform(d_in, d_h, rng));
  params_.add("b1", nn::Tensor::Zero(1, d_h));
  params_.add("w2", nn::xavier_uniform(d_h, 1, rng));
  params_.add("b2", nn::Tensor::Zero(1, 1));
}

nn::Tensor StoryClassifier::features(const std::string& text) const {
  return encoder_->classifier_features(text);
}

double StoryClassifier::probability_from_features(const nn::Tensor& x) const {
  const nn::Tensor h = nn::relu(nn::linear(x, params_.value("w1"), params_.value("b1")));
  const double z = nn::linear(h, params_.value("w2"), params_.value("b2"))(0, 0);
  return 1.0 / (1.0 + std::exp(-z));
}

double StoryClassifier::probability(const std::string& text) const {
  return probability_from_features(features(text));
}

nlohmann::json StoryClassifier::to_json() const {
  nlohmann::json j;
  j["encoder"] = encoder_->key();
  j["width"] = encoder_->width();
  j["seed"] = encoder_->seed();
  j["parameters"] = params_.to_json();
  return j;
}

StoryClassifier StoryClassifier::from_json(
    const nlohmann::json& j, std::shared_ptr<const encoders::SentenceEncoder> encoder) {
  if (!encoder) throw ArgumentError("story classifier needs an encoder");
  StoryClassifier c;
  c.encoder_ = std::move(encoder);
  try {
    if (j.at("encoder").get<std::string>() != c.encoder_->key() ||
        j.at("width").get<int>() != c.encoder_->width()) {
      throw DataError("story classifier was trained with encoder " +
                      j.at("encoder").get<std::string>());
    }
    c.params_ = nn::ParameterSet::from_json(j.at("parameters"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed story classifier: ") + e.what());
  }
  if (!c.params_.contains("w1") || c.params_.value("w1").rows() !=
                                       c.encoder_->classifier_feature_width()) {
    throw DataError("story classifier weights do not match the encoder");
  }
  return c;
}

StoryClassifier train_story_classifier(
    const std::vector<std::pair<std::string, bool>>& labeled,
    std::shared_ptr<const encoders::SentenceEncoder> encoder, const ClassifierTraining& options,
    ClassifierHistory* history) {
  bool has_pos = false, has_neg = false;
  for (const auto& [text, label] : labeled) (label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DataError("story classifier needs both story and non-story examples");
  if (options.batch < 1 || options.epochs < 0) throw ArgumentError("bad classifier training options");

  StoryClassifier model(encoder, options.seed);
  std::vector<nn::Tensor> features;
  std::vector<double> targets;
  for (const auto& [text, label] : labeled) {
    features.push_back(model.features(text));
    targets.push_back(label ? 1.0 : 0.0);
  }

  std::vector<size_t> order(labeled.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed({options.seed, 1}));
  split_rng.shuffle(order);
  const size_t n_val =
      static_cast<size_t>(std::floor(options.validation_fraction * static_cast<double>(order.size())));
  std::vector<size_t> val(order.begin(), order.begin() + n_val);
  std::vector<size_t> train(order.begin() + n_val, order.end());
  const std::vector<size_t>& monitor = val.empty() ? train : val;

  auto mean_loss = [&](const StoryClassifier& m, const std::vector<size_t>& idx) {
    double total = 0.0;
    for (size_t i : idx) total += bce(m.probability_from_features(features[i]), targets[i]);
    return idx.empty() ? 0.0 : total / static_cast<double>(idx.size());
  };

  StoryClassifier best = model;
  double best_loss = mean_loss(model, monitor);
  ClassifierHistory local;
  ClassifierHistory& h = history ? *history : local;
  h = {};
  nn::AdamState adam;
  nn::ParameterSet& p = model.params();

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng order_rng(derive_seed({options.seed, 2, static_cast<uint64_t>(epoch)}));
    order_rng.shuffle(train);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < train.size(); start += options.batch) {
      const size_t end = std::min(train.size(), start + options.batch);
      p.zero_grad();
      for (size_t b = start; b < end; ++b) {
        const size_t i = train[b];
        const nn::Tensor& x = features[i];
        const nn::Tensor pre = nn::linear(x, p.value("w1"), p.value("b1"));
        const nn::Tensor hid = nn::relu(pre);
        const double z = nn::linear(hid, p.value("w2"), p.value("b2"))(0, 0);
        const double prob = 1.0 / (1.0 + std::exp(-z));
        epoch_loss += bce(prob, targets[i]);
        const double scale = 1.0 / static_cast<double>(end - start);
        nn::Tensor dz(1, 1);
        dz(0, 0) = (prob - targets[i]) * scale;
        nn::Tensor dh;
        nn::linear_backward(hid, p.value("w2"), dz, &dh, &p.grad("w2"), &p.grad("b2"));
        const nn::Tensor dpre = dh.array() * (pre.array() > 0.0).cast<double>();
        nn::linear_backward(x, p.value("w1"), dpre, nullptr, &p.grad("w1"), &p.grad("b1"));
      }
      nn::adam_step(p, adam, options.lr);
    }
    h.train_loss.push_back(train.empty() ? 0.0 : epoch_loss / static_cast<double>(train.size()));
    const double v = mean_loss(model, monitor);
    h.validation_loss.push_back(v);
    if (v < best_loss) {
      best_loss = v;
      best = model;
      h.best_epoch = epoch;
    }
  }
  return best;
}

double classify_story(const std::string& text, const StoryClassifier& classifier) {
  return classifier.probability(text);
}

Narrative post_to_narrative(const RawPost& post) {
  std::vector<std::string> sentences;
  for (const auto& s : segment_sentences(post.body)) {
    if (!s.tokens.empty()) sentences.push_back(s.text);
  }
  std::map<std::string, std::string> meta;
  if (!post.subreddit.empty()) meta["subreddit"] = post.subreddit;
  return make_narrative(post.id, post.title, sentences, std::move(meta));
}

Corpus gate_corpus(const std::vector<RawPost>& posts, const StoryClassifier& classifier,
                   const FilterConfig& config) {
  config.validate();
  Corpus out;
  for (const auto& post : posts) {
    if (classifier.probability(post.body) >= config.story_threshold) {
      out.push_back(CorpusEntry{post_to_narrative(post), std::nullopt});
    }
  }
  return out;
}

}  // namespace narrative::ingest
