#include "narrative/cli.h"

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "narrative/annotation.h"
#include "narrative/baselines.h"
#include "narrative/corpus.h"
#include "narrative/encoders.h"
#include "narrative/error.h"
#include "narrative/eval.h"
#include "narrative/ingest.h"
#include "narrative/msense.h"
#include "narrative/synthetic.h"
#include "narrative/util/files.h"
#include "narrative/util/hash.h"
#include "narrative/util/rng.h"

namespace narrative {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct EncoderFlags {
  std::string semantic = "xsem.token";
  std::string mental = "mental.reference";
  int width = 96;
  uint64_t seed = 0;
  int max_tokens = 512;
  std::string embeddings;
  bool no_reference_fallback = false;

  void add(CLI::App* app) {
    app->add_option("--semantic", semantic, "Sentence encoder adapter")->capture_default_str();
    app->add_option("--mental", mental, "Mental-state encoder adapter")->capture_default_str();
    app->add_option("--width", width, "Embedding width")->capture_default_str();
    app->add_option("--encoder-seed", seed, "Seed of the reference encoders")
        ->capture_default_str();
    app->add_option("--max-tokens", max_tokens, "Token capacity of token-level encoders")
        ->capture_default_str();
    app->add_option("--embeddings", embeddings, "Precomputed embeddings for pretrained adapters");
    app->add_flag("--no-reference-fallback", no_reference_fallback,
                  "Fail instead of using reference encoders when embeddings are missing");
  }

  encoders::AdapterOptions options() const {
    encoders::AdapterOptions o;
    o.width = width;
    o.seed = seed;
    o.max_tokens = max_tokens;
    o.embeddings_path = embeddings;
    o.reference_fallback = !no_reference_fallback;
    return o;
  }

  ordered_json to_json() const {
    ordered_json j;
    j["semantic"] = semantic;
    j["mental"] = mental;
    j["width"] = width;
    j["seed"] = seed;
    j["max_tokens"] = max_tokens;
    j["embeddings"] = embeddings;
    return j;
  }

  static EncoderFlags from_json(const json& j) {
    EncoderFlags f;
    f.semantic = j.value("semantic", f.semantic);
    f.mental = j.value("mental", f.mental);
    f.width = j.value("width", f.width);
    f.seed = j.value("seed", f.seed);
    f.max_tokens = j.value("max_tokens", f.max_tokens);
    f.embeddings = j.value("embeddings", f.embeddings);
    return f;
  }
};

struct Suite {
  encoders::EncoderSuite suite;
  std::unique_ptr<encoders::EmbeddingCache> cache;
};

std::unique_ptr<Suite> make_suite(const EncoderFlags& flags) {
  auto s = std::make_unique<Suite>();
  const encoders::AdapterOptions o = flags.options();
  s->suite.semantic = encoders::make_semantic_encoder(flags.semantic, o);
  s->suite.mental = encoders::make_mental_encoder(flags.mental, o);
  encoders::AdapterOptions fallback = o;
  fallback.reference_kind = encoders::EncoderKind::kSentenceLevel;
  fallback.embeddings_path.clear();
  s->suite.fallback = encoders::make_semantic_encoder("xsem.reference", fallback);
  s->cache = encoders::EmbeddingCache::from_environment();
  s->suite.cache = s->cache.get();
  return s;
}

std::string hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::string& path) { return hex(fnv1a(read_file(path))); }

void write_json(const std::string& path, const ordered_json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ArgumentError("bad ratio '" + part + "'");
    }
  }
  if (out.size() != 3) throw ArgumentError("--ratios needs three comma-separated values");
  double sum = 0.0;
  for (double r : out) {
    if (r < 0.0) throw ArgumentError("ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ArgumentError("ratios must sum to 1");
  return out;
}

std::vector<AnnotationRecord> load_annotation_log(const std::string& path) {
  std::vector<AnnotationRecord> out;
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    annotation::FieldErrors errors;
    std::optional<AnnotationRecord> r;
    try {
      r = annotation::record_from_json(json::parse(line), &errors);
    } catch (const json::exception&) {
    }
    if (!r) throw DataError(path + ": line " + std::to_string(line_no) + ": malformed annotation");
    out.push_back(std::move(*r));
  }
  return out;
}

Corpus require_gold(const std::string& path) {
  Corpus c = load_corpus(path);
  for (const auto& e : c) {
    if (!e.gold) throw DataError(path + ": narrative " + e.narrative.id + " has no labels");
  }
  return c;
}

// ---- synth ----------------------------------------------------------------

struct SynthFlags {
  std::string out, posts_out, annotations_out, gate_data_out;
  int narratives = 200;
  int min_length = 5;
  int max_length = 15;
};

std::string filler_text(Rng& rng, int sentences) {
  static const char* words[] = {"selling", "price", "offer", "link", "shipping", "discount",
                                "question", "anyone", "recommend", "review", "update", "rules",
                                "thread", "weekly", "moderator", "posting", "subscribe", "deal"};
  std::string text;
  for (int s = 0; s < sentences; ++s) {
    const int n = 4 + static_cast<int>(rng.below(5));
    std::string sentence;
    for (int i = 0; i < n; ++i) {
      std::string w = words[rng.below(std::size(words))];
      if (i == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
      sentence += (i ? " " : "") + w;
    }
    text += (s ? " " : "") + sentence + ".";
  }
  return text;
}

std::string body_of(const Narrative& n) {
  std::string body;
  for (const auto& s : n.sentences) body += (body.empty() ? "" : " ") + s.text;
  return body;
}

int cmd_synth(const SynthFlags& f, uint64_t seed, std::ostream& out) {
  synthetic::Options o;
  o.narratives = f.narratives;
  o.min_length = f.min_length;
  o.max_length = f.max_length;
  o.seed = seed;
  const Corpus corpus = synthetic::make_marked_corpus(o);
  if (!f.out.empty()) save_corpus(corpus, f.out);

  Rng rng(derive_seed({seed, 0x706f737473ULL}));
  if (!f.posts_out.empty()) {
    std::vector<std::string> lines;
    int64_t t = 1600000000;
    for (const auto& e : corpus) {
      ingest::RawPost p;
      p.id = e.narrative.id;
      p.title = e.narrative.title;
      p.body = body_of(e.narrative);
      p.subreddit = "synthetic";
      p.created_utc = t += 60;
      lines.push_back(ingest::to_json(p).dump());
    }
    for (int k = 0; k < std::max(1, f.narratives / 10); ++k) {
      ingest::RawPost p;
      p.id = "other" + std::to_string(k);
      p.title = "Weekly thread";
      p.body = filler_text(rng, 3 + static_cast<int>(rng.below(3)));
      p.subreddit = "synthetic";
      p.created_utc = t += 60;
      if (k % 3 == 1) p.tags.insert("NSFW");
      if (k % 3 == 2) p.body = "[deleted]";
      lines.push_back(ingest::to_json(p).dump());
    }
    write_file_atomic(f.posts_out, join_lines(lines));
  }
  if (!f.annotations_out.empty()) {
    std::vector<std::string> lines;
    for (const auto& e : corpus) {
      for (const char* annotator : {"a1", "a2", "a3"}) {
        AnnotationRecord r;
        r.narrative_id = e.narrative.id;
        r.annotator_id = annotator;
        for (int i : e.gold->indices_of(Label::kClimax)) r.climax_indices.insert(i);
        for (int i : e.gold->indices_of(Label::kResolution)) r.resolution_indices.insert(i);
        r.submitted_at = "2020-01-01T00:00:00Z";
        lines.push_back(annotation::to_json(r).dump());
      }
    }
    write_file_atomic(f.annotations_out, join_lines(lines));
  }
  if (!f.gate_data_out.empty()) {
    std::vector<std::string> lines;
    const size_t half = std::max<size_t>(1, corpus.size() / 2);
    for (size_t i = 0; i < half; ++i) {
      ordered_json j;
      j["text"] = body_of(corpus[i].narrative);
      j["story"] = true;
      lines.push_back(j.dump());
      ordered_json k;
      k["text"] = filler_text(rng, 3 + static_cast<int>(rng.below(3)));
      k["story"] = false;
      lines.push_back(k.dump());
    }
    write_file_atomic(f.gate_data_out, join_lines(lines));
  }
  out << "generated " << corpus.size() << " narratives\n";
  return kExitOk;
}

// ---- train-gate / ingest --------------------------------------------------

struct GateFlags {
  std::string data, out;
  ingest::ClassifierTraining training;
  EncoderFlags encoder;
};

std::shared_ptr<const encoders::SentenceEncoder> gate_encoder(const EncoderFlags& f) {
  return encoders::make_semantic_encoder(f.semantic, f.options());
}

int cmd_train_gate(const GateFlags& f, uint64_t seed, std::ostream& out) {
  std::vector<std::pair<std::string, bool>> labeled;
  int line_no = 0;
  for (const auto& line : read_lines(f.data)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      labeled.emplace_back(j.at("text").get<std::string>(), j.at("story").get<bool>());
    } catch (const json::exception&) {
      throw DataError(f.data + ": line " + std::to_string(line_no) + ": expected {text, story}");
    }
  }
  ingest::ClassifierTraining t = f.training;
  t.seed = seed;
  ingest::ClassifierHistory history;
  const auto classifier = ingest::train_story_classifier(labeled, gate_encoder(f.encoder), t,
                                                         &history);
  json j = classifier.to_json();
  j["adapter"] = f.encoder.semantic;
  j["best_epoch"] = history.best_epoch;
  write_file_atomic(f.out, j.dump() + "\n");
  out << "story classifier: best epoch " << history.best_epoch << " of " << t.epochs << "\n";
  return kExitOk;
}

struct IngestFlags {
  std::string source, out, classifier, annotations, posts_out, subreddit, embeddings;
  std::optional<int64_t> after, before;
  int page_size = 100;
  ingest::FilterConfig filter;
  std::vector<std::string> banned_tags = {"deleted", "nsfw", "over_18"};
  int retries = 3;
  int backoff_ms = 200;
};

int cmd_ingest(const IngestFlags& f, std::ostream& out) {
  ingest::Query q;
  q.subreddit = f.subreddit;
  q.after = f.after;
  q.before = f.before;
  q.page_size = f.page_size;
  ingest::FetchOptions fo;
  fo.retries = f.retries;
  fo.backoff_ms = f.backoff_ms;
  const auto posts = ingest::fetch_posts(f.source, q, fo);

  ingest::FilterConfig filter = f.filter;
  filter.banned_tags = {f.banned_tags.begin(), f.banned_tags.end()};
  const auto kept = ingest::filter_posts(posts, filter);

  Corpus corpus;
  if (!f.classifier.empty()) {
    json j;
    try {
      j = json::parse(read_file(f.classifier));
    } catch (const json::exception& e) {
      throw DataError(f.classifier + ": malformed classifier (" + e.what() + ")");
    }
    EncoderFlags ef;
    ef.semantic = j.value("adapter", std::string("xsem.token"));
    ef.width = j.value("width", 96);
    ef.seed = j.value("seed", uint64_t{0});
    ef.embeddings = f.embeddings;
    const auto classifier = ingest::StoryClassifier::from_json(j, gate_encoder(ef));
    corpus = ingest::gate_corpus(kept, classifier, filter);
  } else {
    log_warning("no story classifier given; keeping every filtered post");
    for (const auto& p : kept) corpus.push_back({ingest::post_to_narrative(p), std::nullopt});
  }

  if (!f.annotations.empty()) {
    std::map<std::string, std::map<std::string, AnnotationRecord>> latest;
    for (auto& r : load_annotation_log(f.annotations)) {
      latest[r.narrative_id][r.annotator_id] = std::move(r);
    }
    for (auto& e : corpus) {
      auto it = latest.find(e.narrative.id);
      if (it == latest.end()) continue;
      std::vector<AnnotationRecord> records;
      for (auto& [annotator, record] : it->second) {
        if (!validate_annotation(record, e.narrative.length()).empty()) {
          throw DataError("annotation by " + annotator + " does not fit narrative " +
                          e.narrative.id);
        }
        records.push_back(record);
      }
      LabelSequence merged = merge_annotations(records, e.narrative.length());
      merged.narrative_id = e.narrative.id;
      e.gold = std::move(merged);
    }
  }

  if (!f.posts_out.empty()) {
    std::vector<std::string> lines;
    for (const auto& p : kept) lines.push_back(ingest::to_json(p).dump());
    write_file_atomic(f.posts_out, join_lines(lines));
  }
  save_corpus(corpus, f.out);
  out << "fetched " << posts.size() << ", filtered " << kept.size() << ", kept "
      << corpus.size() << "\n";
  return kExitOk;
}

// ---- split / stats --------------------------------------------------------

int cmd_split(const std::string& corpus_path, const std::string& ratios,
              const std::string& out_dir, uint64_t seed, std::ostream& out) {
  const auto r = parse_ratios(ratios);
  const Corpus corpus = load_corpus(corpus_path);
  const CorpusSplit split = split_corpus(corpus, {r[0], r[1], r[2]}, seed);
  const std::string dir = out_dir.empty() ? "." : out_dir;
  const std::pair<const char*, const std::vector<std::string>*> parts[] = {
      {"train", &split.train}, {"validation", &split.validation}, {"test", &split.test}};
  for (const auto& [name, ids] : parts) {
    write_file_atomic(dir + "/" + name + ".ids", join_lines(*ids));
    save_corpus(select_entries(corpus, *ids), dir + "/" + name + ".jsonl");
  }
  out << "train " << split.train.size() << ", validation " << split.validation.size()
      << ", test " << split.test.size() << "\n";
  return kExitOk;
}

int cmd_stats(const std::string& corpus_path, const std::string& out_path,
              const std::string& histogram_path, int bins, std::ostream& out) {
  const Corpus corpus = load_corpus(corpus_path);
  const CorpusStats s = corpus_stats(corpus, bins);
  ordered_json j;
  j["narratives"] = s.narratives;
  j["sentences"] = s.sentences;
  j["climax_sentences"] = s.climax_sentences;
  j["resolution_sentences"] = s.resolution_sentences;
  j["mean_climax_position"] =
      s.mean_climax_position ? ordered_json(*s.mean_climax_position) : ordered_json();
  j["mean_resolution_position"] =
      s.mean_resolution_position ? ordered_json(*s.mean_resolution_position) : ordered_json();
  j["climax_histogram"] = s.climax_histogram;
  j["resolution_histogram"] = s.resolution_histogram;
  if (out_path.empty()) {
    out << j.dump(2) << "\n";
  } else {
    write_json(out_path, j);
  }
  if (!histogram_path.empty()) {
    std::ostringstream tsv;
    tsv << "bin\tlow\thigh\tclimax\tresolution\n";
    for (int b = 0; b < bins; ++b) {
      tsv << b << '\t' << static_cast<double>(b) / bins << '\t'
          << static_cast<double>(b + 1) / bins << '\t' << s.climax_histogram[b] << '\t'
          << s.resolution_histogram[b] << '\n';
    }
    write_file_atomic(histogram_path, tsv.str());
  }
  return kExitOk;
}

// ---- annotation -----------------------------------------------------------

struct ServeFlags {
  std::string corpus, log, host = "127.0.0.1", static_dir;
  int port = 8080;
  int quota = 3;
};

int cmd_serve(const ServeFlags& f, std::ostream& out) {
  annotation::AnnotationStore store(load_corpus(f.corpus), f.log, f.quota);
  annotation::AnnotationServer server(store, f.static_dir);
  const int port = server.bind(f.host, f.port);
  out << "listening on http://" << f.host << ":" << port << std::endl;
  server.listen();
  return kExitOk;
}

int cmd_agreement(const std::string& corpus_path, const std::string& log_path, int annotators,
                  const std::string& out_path, std::ostream& out) {
  if (annotators < 2) throw ArgumentError("--annotators must be at least 2");
  const Corpus corpus = load_corpus(corpus_path);
  std::set<std::string> known;
  for (const auto& e : corpus) known.insert(e.narrative.id);
  std::vector<AnnotationRecord> records;
  int skipped = 0;
  for (auto& r : load_annotation_log(log_path)) {
    if (known.count(r.narrative_id)) {
      records.push_back(std::move(r));
    } else {
      ++skipped;
    }
  }
  if (skipped > 0) {
    log_warning(std::to_string(skipped) + " annotations refer to narratives outside the corpus");
  }
  auto grouped = eval::group_annotations(records, corpus);
  std::vector<eval::AnnotatedNarrative> data;
  for (auto& n : grouped) {
    if (static_cast<int>(n.records.size()) < annotators) continue;
    n.records.resize(annotators);
    for (const auto& r : n.records) {
      if (!validate_annotation(r, n.length).empty()) {
        throw DataError("annotation by " + r.annotator_id + " does not fit narrative " +
                        n.narrative_id);
      }
    }
    data.push_back(std::move(n));
  }
  if (data.empty()) {
    throw DataError("no narrative has " + std::to_string(annotators) + " annotators");
  }
  const ordered_json j = eval::to_json(eval::agreement_report(data));
  if (out_path.empty()) {
    out << j.dump(2) << "\n";
  } else {
    write_json(out_path, j);
  }
  return kExitOk;
}

// ---- model ----------------------------------------------------------------

struct ModelFlags {
  msense::MSenseConfig config;
  bool no_fusion = false, no_intent = false, no_emotion = false, no_interaction = false,
       no_story_encoder = false;
  std::vector<double> class_weights;

  void add(CLI::App* app) {
    app->add_option("--d", config.d, "Model width")->capture_default_str();
    app->add_option("--heads", config.n_heads, "Attention heads")->capture_default_str();
    app->add_option("--layers", config.n_layers, "Story encoder layers")->capture_default_str();
    app->add_option("--window", config.window, "Interaction window")->capture_default_str();
    app->add_option("--dropout", config.dropout, "Dropout rate")->capture_default_str();
    app->add_option("--lr", config.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--batch", config.batch_narratives, "Narratives per batch")
        ->capture_default_str();
    app->add_option("--max-epochs", config.max_epochs, "Epoch limit")->capture_default_str();
    app->add_option("--patience", config.patience, "Early-stopping patience")
        ->capture_default_str();
    app->add_option("--augment", config.augment_fraction,
                    "Largest fraction of sentences replaced by paraphrases")
        ->capture_default_str();
    app->add_option("--class-weights", class_weights, "Weights for None, Climax, Resolution")
        ->delimiter(',')
        ->expected(3);
    app->add_flag("--no-fusion", no_fusion, "Use the semantic channel alone");
    app->add_flag("--no-intent", no_intent, "Drop the intent channel");
    app->add_flag("--no-emotion", no_emotion, "Drop the reaction channel");
    app->add_flag("--no-interaction", no_interaction, "Zero the similarity features");
    app->add_flag("--no-story-encoder", no_story_encoder, "Skip the story encoder");
  }

  msense::MSenseConfig resolve(uint64_t seed) const {
    msense::MSenseConfig c = config;
    c.use_fusion = !no_fusion;
    c.use_intent = !no_intent;
    c.use_emotion = !no_emotion;
    c.use_interaction = !no_interaction;
    c.use_story_encoder = !no_story_encoder;
    c.class_weights = class_weights;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::string train, validation, out, history, paraphrases, entity = "I";
  bool allow_fallback = false;
  ModelFlags model;
  EncoderFlags encoder;
};

std::vector<msense::TrainingExample> encode_examples(const Corpus& corpus,
                                                     const encoders::EncoderSuite& suite,
                                                     const std::string& entity,
                                                     bool allow_fallback) {
  std::vector<msense::TrainingExample> out;
  for (const auto& e : corpus) {
    out.push_back({e.narrative, e.gold ? e.gold->labels : std::vector<Label>(),
                   encoders::encode_channels(e.narrative, entity, suite, allow_fallback)});
  }
  return out;
}

struct LoadedModel {
  msense::MSenseModel model;
  EncoderFlags encoder;
  std::string entity = "I";
  bool allow_fallback = false;
};

LoadedModel load_cli_model(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed model snapshot (" + e.what() + ")");
  }
  LoadedModel m;
  m.model = msense::model_from_json(j);
  if (j.contains("encoders")) {
    m.encoder = EncoderFlags::from_json(j["encoders"]);
    m.entity = j["encoders"].value("entity", std::string("I"));
    m.allow_fallback = j["encoders"].value("allow_fallback", false);
  }
  return m;
}

int cmd_train(const TrainFlags& f, uint64_t seed, std::ostream& out) {
  const msense::MSenseConfig config = f.model.resolve(seed);
  if (f.encoder.width != config.d) {
    throw ArgumentError("--width must equal --d (" + std::to_string(f.encoder.width) + " vs " +
                        std::to_string(config.d) + ")");
  }
  const auto suite = make_suite(f.encoder);
  const Corpus train = require_gold(f.train);
  const Corpus validation = f.validation.empty() ? Corpus{} : require_gold(f.validation);
  const auto train_ex = encode_examples(train, suite->suite, f.entity, f.allow_fallback);
  const auto val_ex = encode_examples(validation, suite->suite, f.entity, f.allow_fallback);

  msense::TrainOptions opts;
  std::unique_ptr<msense::TableParaphraseProvider> provider;
  if (!f.paraphrases.empty()) {
    provider = std::make_unique<msense::TableParaphraseProvider>(f.paraphrases);
    opts.paraphrases = provider.get();
    opts.encoder = [&](const Narrative& n) {
      return encoders::encode_channels(n, f.entity, suite->suite, f.allow_fallback);
    };
  }
  const msense::TrainResult result = msense::train(config, train_ex, val_ex, opts);

  json snapshot = msense::snapshot_json(result.model);
  json enc = f.encoder.to_json();
  enc["entity"] = f.entity;
  enc["allow_fallback"] = f.allow_fallback;
  snapshot["encoders"] = enc;
  write_file_atomic(f.out, snapshot.dump() + "\n");

  if (!f.history.empty()) {
    std::ostringstream tsv;
    tsv << std::setprecision(10) << "epoch\ttrain_loss\tvalidation_macro_f1\n";
    for (const auto& e : result.history.epochs) {
      tsv << e.epoch << '\t' << e.train_loss << '\t' << e.validation_macro_f1 << '\n';
    }
    write_file_atomic(f.history, tsv.str());
  }
  out << "best epoch " << result.history.best_epoch << " of "
      << result.history.epochs.size() << ", validation macro-F1 "
      << result.history.best_macro_f1 << "\n";
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& corpus_path,
                const std::string& out_path, std::ostream& out) {
  const LoadedModel m = load_cli_model(model_path);
  const auto suite = make_suite(m.encoder);
  const Corpus corpus = load_corpus(corpus_path);
  std::vector<std::string> lines;
  for (const auto& e : corpus) {
    const auto channels =
        encoders::encode_channels(e.narrative, m.entity, suite->suite, m.allow_fallback);
    const nn::Tensor probs = msense::forward(channels, m.model);
    ordered_json j;
    j["id"] = e.narrative.id;
    ordered_json labels = ordered_json::array();
    for (Label l : msense::decode(probs)) labels.push_back(std::string(label_name(l)));
    j["labels"] = labels;
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      rows.push_back({probs(i, 0), probs(i, 1), probs(i, 2)});
    }
    j["probabilities"] = rows;
    lines.push_back(j.dump());
  }
  write_file_atomic(out_path, join_lines(lines));
  out << "predicted " << lines.size() << " narratives\n";
  return kExitOk;
}

std::map<std::string, LabelSequence> load_predictions(const std::string& path) {
  std::map<std::string, LabelSequence> out;
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      LabelSequence s;
      s.narrative_id = j.at("id").get<std::string>();
      for (const auto& l : j.at("labels")) s.labels.push_back(parse_label(l.get<std::string>()));
      if (!out.emplace(s.narrative_id, s).second) {
        throw DataError("duplicate prediction for " + s.narrative_id);
      }
    } catch (const json::exception&) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": malformed prediction");
    }
  }
  return out;
}

void emit_report(const ordered_json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << j.dump(2) << "\n";
    return;
  }
  write_json(out_path, j);
  std::ostringstream line;
  line << std::fixed << std::setprecision(3);
  if (j.contains("climax") && j["climax"].contains("f1")) {
    line << "climax F1 " << j["climax"]["f1"].get<double>() << " D "
         << j["climax"]["distance"].get<double>() << "%, resolution F1 "
         << j["resolution"]["f1"].get<double>() << " D "
         << j["resolution"]["distance"].get<double>() << "%";
  } else if (j.contains("tp4_distance")) {
    line << "TP4 D " << j["tp4_distance"].get<double>() << "%, TP5 D "
         << j["tp5_distance"].get<double>() << "%";
  }
  out << line.str() << "\n";
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                 const std::string& out_path, std::ostream& out) {
  const Corpus gold = require_gold(gold_path);
  const auto predictions = load_predictions(pred_path);
  std::vector<LabelSequence> preds, golds;
  for (const auto& e : gold) {
    auto it = predictions.find(e.narrative.id);
    if (it == predictions.end()) throw DataError("no prediction for narrative " + e.narrative.id);
    preds.push_back(it->second);
    golds.push_back(*e.gold);
  }
  if (predictions.size() != gold.size()) {
    throw DataError("predictions cover narratives missing from the gold corpus");
  }
  json config;
  config["predictions_hash"] = file_hash(pred_path);
  config["gold_hash"] = file_hash(gold_path);
  emit_report(eval::to_json(eval::evaluate_predictions(preds, golds), config), out_path, out);
  return kExitOk;
}

struct BaselineFlags {
  std::string name, train, corpus, out, series, entity = "I";
  int runs = 3;
  EncoderFlags encoder;
};

int cmd_baseline(const BaselineFlags& f, uint64_t seed, std::ostream& out) {
  const auto suite = make_suite(f.encoder);
  const Corpus corpus = require_gold(f.corpus);
  const Corpus train = f.train.empty() ? Corpus{} : require_gold(f.train);
  if (f.name == "distribution" && f.train.empty()) {
    throw ArgumentError("the distribution baseline needs --train");
  }
  const auto labeler = baselines::make_labeler(f.name, train, suite->suite, f.entity);
  const eval::EvaluationReport report = eval::evaluate(*labeler, corpus, f.runs, seed);
  json config;
  config["baseline"] = f.name;
  config["corpus_hash"] = file_hash(f.corpus);
  if (!f.train.empty()) config["train_hash"] = file_hash(f.train);
  config["encoders"] = f.encoder.to_json();
  emit_report(eval::to_json(report, config), f.out, out);

  if (!f.series.empty()) {
    const std::string prefix = "surprise:";
    if (f.name.rfind(prefix, 0) != 0) throw ArgumentError("--series needs a surprise baseline");
    const encoders::Channel channel = encoders::parse_channel(f.name.substr(prefix.size()));
    std::ostringstream tsv;
    tsv << std::setprecision(10) << "id\tindex\tposition\tsurprise\n";
    for (const auto& e : corpus) {
      encoders::EmbeddingMatrix m;
      if (channel == encoders::Channel::kSem) {
        m = encoders::encode_semantic(e.narrative, *suite->suite.semantic);
      } else {
        m = suite->suite.mental->encode_story(
            e.narrative, f.entity,
            channel == encoders::Channel::kIntent ? encoders::MentalAttribute::kIntent
                                                  : encoders::MentalAttribute::kReact);
      }
      const auto series = baselines::surprise_series(m);
      for (size_t i = 0; i < series.size(); ++i) {
        tsv << e.narrative.id << '\t' << i << '\t'
            << normalized_position(static_cast<int>(i), e.narrative.length()) << '\t'
            << series[i] << '\n';
      }
    }
    write_file_atomic(f.series, tsv.str());
  }
  return kExitOk;
}

class ModelProtagonistLabeler : public eval::ProtagonistLabeler {
 public:
  ModelProtagonistLabeler(const LoadedModel& model, const encoders::EncoderSuite& suite)
      : model_(model), suite_(suite) {}
  LabelSequence label(const Narrative& n, const std::string& protagonist) const override {
    // Synopses often exceed token-level capacity.
    const auto channels = encoders::encode_channels(n, protagonist, suite_, true);
    return msense::predict(model_.model, n, channels);
  }

 private:
  const LoadedModel& model_;
  const encoders::EncoderSuite& suite_;
};

int cmd_tripod(const std::string& synopses_path, const std::string& model_path,
               const std::string& out_path, std::ostream& out) {
  const LoadedModel m = load_cli_model(model_path);
  const auto suite = make_suite(m.encoder);
  const auto synopses = eval::load_synopses(synopses_path);
  ModelProtagonistLabeler labeler(m, suite->suite);
  emit_report(eval::to_json(eval::evaluate_turning_points(labeler, synopses)), out_path, out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Narrative turning-point toolkit: corpus ingestion, annotation, "
               "M-SENSE training and evaluation",
               "narrative-arc"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read flags from a TOML/INI file (flags on the command line win)");
  app.allow_config_extras(false);
  uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  // Subcommands inherit this, so --seed may follow the subcommand name.
  app.fallthrough();

  SynthFlags synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
  c_synth->add_option("--out", synth.out, "Corpus output");
  c_synth->add_option("--posts-out", synth.posts_out, "Raw post dump output");
  c_synth->add_option("--annotations-out", synth.annotations_out, "Annotation log output");
  c_synth->add_option("--gate-data-out", synth.gate_data_out, "Story/non-story training texts");
  c_synth->add_option("--narratives", synth.narratives)->capture_default_str();
  c_synth->add_option("--min-length", synth.min_length)->capture_default_str();
  c_synth->add_option("--max-length", synth.max_length)->capture_default_str();

  GateFlags gate;
  auto* c_gate = app.add_subcommand("train-gate", "Train the story classifier");
  c_gate->add_option("--data", gate.data, "JSON lines {text, story}")->required();
  c_gate->add_option("--out", gate.out, "Classifier output")->required();
  c_gate->add_option("--epochs", gate.training.epochs)->capture_default_str();
  c_gate->add_option("--lr", gate.training.lr)->capture_default_str();
  c_gate->add_option("--batch", gate.training.batch)->capture_default_str();
  gate.encoder.add(c_gate);

  IngestFlags ing;
  auto* c_ingest = app.add_subcommand("ingest", "Fetch, filter and gate posts into a corpus");
  c_ingest->add_option("--source", ing.source, "Archive URL or JSON-lines dump")->required();
  c_ingest->add_option("--out", ing.out, "Corpus output")->required();
  c_ingest->add_option("--subreddit", ing.subreddit);
  c_ingest->add_option("--after", ing.after, "Earliest created_utc (exclusive)");
  c_ingest->add_option("--before", ing.before, "Latest created_utc (exclusive)");
  c_ingest->add_option("--page-size", ing.page_size)->capture_default_str();
  c_ingest->add_option("--classifier", ing.classifier, "Story classifier from train-gate");
  c_ingest->add_option("--embeddings", ing.embeddings, "Embeddings for a pretrained adapter");
  c_ingest->add_option("--threshold", ing.filter.story_threshold)->capture_default_str();
  c_ingest->add_option("--min-sentences", ing.filter.min_sentences)->capture_default_str();
  c_ingest->add_option("--banned-tags", ing.banned_tags)->delimiter(',')->capture_default_str();
  c_ingest->add_option("--annotations", ing.annotations, "Annotation log to merge as gold");
  c_ingest->add_option("--posts-out", ing.posts_out, "Filtered posts output");
  c_ingest->add_option("--retries", ing.retries)->capture_default_str();
  c_ingest->add_option("--backoff-ms", ing.backoff_ms)->capture_default_str();

  std::string split_corpus_path, split_ratios = "0.7,0.1,0.2", split_dir;
  auto* c_split = app.add_subcommand("split", "Seeded train/validation/test split");
  c_split->add_option("--corpus", split_corpus_path)->required();
  c_split->add_option("--ratios", split_ratios)->capture_default_str();
  c_split->add_option("--out-dir", split_dir, "Directory for the id lists and sub-corpora");

  std::string stats_corpus, stats_out, stats_hist;
  int stats_bins = kPositionBins;
  auto* c_stats = app.add_subcommand("stats", "Corpus statistics and positional histograms");
  c_stats->add_option("--corpus", stats_corpus)->required();
  c_stats->add_option("--out", stats_out);
  c_stats->add_option("--histogram", stats_hist, "Histogram columns (TSV)");
  c_stats->add_option("--bins", stats_bins)->capture_default_str();

  ServeFlags serve;
  auto* c_annotate = app.add_subcommand("annotate", "Annotation service");
  c_annotate->require_subcommand(1);
  auto* c_serve = c_annotate->add_subcommand("serve", "Start the annotation HTTP service");
  c_serve->add_option("--corpus", serve.corpus)->required();
  c_serve->add_option("--log", serve.log, "Append-only annotation log")->required();
  c_serve->add_option("--host", serve.host)->capture_default_str();
  c_serve->add_option("--port", serve.port)->capture_default_str();
  c_serve->add_option("--quota", serve.quota, "Annotators per narrative")->capture_default_str();
  c_serve->add_option("--static-dir", serve.static_dir, "Directory served at /");

  std::string agr_corpus, agr_log, agr_out;
  int agr_annotators = 3;
  auto* c_agr = app.add_subcommand("agreement", "Inter-annotator agreement");
  c_agr->add_option("--corpus", agr_corpus)->required();
  c_agr->add_option("--annotations", agr_log)->required();
  c_agr->add_option("--annotators", agr_annotators)->capture_default_str();
  c_agr->add_option("--out", agr_out);

  TrainFlags tr;
  auto* c_train = app.add_subcommand("train", "Train M-SENSE");
  c_train->add_option("--train", tr.train, "Labelled training corpus")->required();
  c_train->add_option("--validation", tr.validation, "Labelled validation corpus");
  c_train->add_option("--out", tr.out, "Model snapshot output")->required();
  c_train->add_option("--history", tr.history, "Per-epoch history (TSV)");
  c_train->add_option("--paraphrases", tr.paraphrases, "Paraphrase table for augmentation");
  c_train->add_option("--entity", tr.entity, "Protagonist")->capture_default_str();
  c_train->add_flag("--allow-fallback", tr.allow_fallback,
                    "Use the sentence-level encoder for narratives over capacity");
  tr.model.add(c_train);
  tr.encoder.add(c_train);

  std::string pred_model, pred_corpus, pred_out;
  auto* c_pred = app.add_subcommand("predict", "Label a corpus with a trained model");
  c_pred->add_option("--model", pred_model)->required();
  c_pred->add_option("--corpus", pred_corpus)->required();
  c_pred->add_option("--out", pred_out)->required();

  std::string ev_pred, ev_gold, ev_out;
  auto* c_eval = app.add_subcommand("evaluate", "Score predictions against gold labels");
  c_eval->add_option("--pred", ev_pred)->required();
  c_eval->add_option("--gold", ev_gold)->required();
  c_eval->add_option("--out", ev_out);

  BaselineFlags base;
  auto* c_base = app.add_subcommand("baseline", "Run and score a baseline");
  c_base->add_option("--name", base.name,
                     "random, distribution, heuristic or surprise:<xsem|xintent|xreact>")
      ->required();
  c_base->add_option("--corpus", base.corpus, "Labelled evaluation corpus")->required();
  c_base->add_option("--train", base.train, "Labelled training corpus");
  c_base->add_option("--runs", base.runs, "Runs for stochastic baselines")->capture_default_str();
  c_base->add_option("--out", base.out);
  c_base->add_option("--series", base.series, "Surprise series (TSV)");
  c_base->add_option("--entity", base.entity)->capture_default_str();
  base.encoder.add(c_base);

  std::string tp_syn, tp_model, tp_out;
  auto* c_tripod = app.add_subcommand("tripod", "Score TP4/TP5 on movie synopses");
  c_tripod->add_option("--synopses", tp_syn)->required();
  c_tripod->add_option("--model", tp_model)->required();
  c_tripod->add_option("--out", tp_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*c_synth) return cmd_synth(synth, seed, out);
    if (*c_gate) return cmd_train_gate(gate, seed, out);
    if (*c_ingest) return cmd_ingest(ing, out);
    if (*c_split) return cmd_split(split_corpus_path, split_ratios, split_dir, seed, out);
    if (*c_stats) return cmd_stats(stats_corpus, stats_out, stats_hist, stats_bins, out);
    if (*c_serve) return cmd_serve(serve, out);
    if (*c_agr) return cmd_agreement(agr_corpus, agr_log, agr_annotators, agr_out, out);
    if (*c_train) return cmd_train(tr, seed, out);
    if (*c_pred) return cmd_predict(pred_model, pred_corpus, pred_out, out);
    if (*c_eval) return cmd_evaluate(ev_pred, ev_gold, ev_out, out);
    if (*c_base) return cmd_baseline(base, seed, out);
    if (*c_tripod) return cmd_tripod(tp_syn, tp_model, tp_out, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace narrative
