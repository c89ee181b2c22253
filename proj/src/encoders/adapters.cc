#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "narrative/encoders.h"
#include "narrative/util/files.h"
#include "narrative/util/hash.h"

namespace narrative::encoders {

using nlohmann::json;

uint64_t content_hash(const std::vector<std::string>& sentences) {
  uint64_t h = kFnvOffset;
  for (const auto& s : sentences) {
    h = fnv1a(s, h);
    h = fnv1a("\x1e", h);
  }
  return h;
}

uint64_t narrative_hash(const Narrative& narrative) {
  std::vector<std::string> texts;
  texts.reserve(narrative.sentences.size());
  for (const auto& s : narrative.sentences) texts.push_back(s.text);
  return content_hash(texts);
}

namespace {

Tensor matrix_from_json(const json& rows, int* width, const std::string& where) {
  const auto data = rows.get<std::vector<std::vector<double>>>();
  if (data.empty()) throw DataError(where + ": empty embedding matrix");
  const int d = static_cast<int>(data.front().size());
  if (*width == 0) *width = d;
  if (d != *width) throw DataError(where + ": inconsistent embedding width");
  Tensor t(static_cast<Eigen::Index>(data.size()), d);
  for (size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(data[i].size()) != d) throw DataError(where + ": ragged matrix");
    for (int k = 0; k < d; ++k) t(static_cast<Eigen::Index>(i), k) = data[i][k];
  }
  return t;
}

uint64_t mental_key(const std::string& entity, MentalAttribute attribute,
                    const std::vector<std::string>& prior, const std::string& sentence) {
  std::vector<std::string> parts = prior;
  parts.push_back(sentence);
  return fnv1a(mental_salt(entity, attribute), content_hash(parts));
}

}  // namespace

PrecomputedSentenceEncoder::PrecomputedSentenceEncoder(std::string key, EncoderKind kind,
                                                       const std::string& path)
    : key_(std::move(key)), kind_(kind) {
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      if (!j.contains("xsem")) continue;
      const auto sentences = j.at("sentences").get<std::vector<std::string>>();
      Tensor rows = matrix_from_json(j.at("xsem"), &width_, where);
      if (rows.rows() != static_cast<Eigen::Index>(sentences.size())) {
        throw DataError(where + ": row count does not match sentences");
      }
      by_content_[content_hash(sentences)] = std::move(rows);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  if (width_ == 0) throw DataError(path + ": no embeddings");
}

EmbeddingMatrix PrecomputedSentenceEncoder::encode(const Narrative& narrative) const {
  auto it = by_content_.find(narrative_hash(narrative));
  if (it == by_content_.end()) {
    throw DataError(key_ + ": no precomputed embeddings for narrative " + narrative.id);
  }
  return EmbeddingMatrix{Channel::kSem, it->second};
}

Tensor PrecomputedSentenceEncoder::encode_text(std::string_view text) const {
  auto it = by_content_.find(content_hash({std::string(text)}));
  if (it == by_content_.end() || it->second.rows() != 1) {
    throw DataError(key_ + ": no precomputed embedding for text");
  }
  return it->second;
}

PrecomputedMentalEncoder::PrecomputedMentalEncoder(const std::string& path) {
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      const auto sentences = j.at("sentences").get<std::vector<std::string>>();
      const std::string entity = j.value("entity", std::string(kDefaultEntity));
      for (auto attribute : {MentalAttribute::kIntent, MentalAttribute::kReact}) {
        const char* field = attribute == MentalAttribute::kIntent ? "xintent" : "xreact";
        if (!j.contains(field)) continue;
        Tensor rows = matrix_from_json(j.at(field), &width_, where);
        if (rows.rows() != static_cast<Eigen::Index>(sentences.size())) {
          throw DataError(where + ": row count does not match sentences");
        }
        std::vector<std::string> prior;
        for (size_t i = 0; i < sentences.size(); ++i) {
          rows_[mental_key(entity, attribute, prior, sentences[i])] =
              rows.row(static_cast<Eigen::Index>(i));
          prior.push_back(sentences[i]);
        }
      }
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  if (width_ == 0) throw DataError(path + ": no embeddings");
}

Tensor PrecomputedMentalEncoder::encode(const MentalStateRequest& request) const {
  auto it = rows_.find(mental_key(request.entity, request.attribute, request.prior,
                                  request.sentence));
  if (it == rows_.end()) {
    throw DataError("mental.pretrained: no precomputed state for request");
  }
  return it->second;
}

std::vector<std::string> adapter_keys() {
  return {"xsem.token", "xsem.sentence", "xsem.reference", "mental.reference",
          "mental.pretrained"};
}

std::unique_ptr<SentenceEncoder> make_semantic_encoder(std::string_view key,
                                                       const AdapterOptions& options) {
  EncoderConfig config{options.reference_kind, options.width, options.seed, options.max_tokens};
  if (key == "xsem.reference") return std::make_unique<ReferenceSentenceEncoder>(config);
  if (key == "xsem.token" || key == "xsem.sentence") {
    const EncoderKind kind =
        key == "xsem.token" ? EncoderKind::kTokenContextual : EncoderKind::kSentenceLevel;
    if (!options.embeddings_path.empty()) {
      return std::make_unique<PrecomputedSentenceEncoder>(std::string(key), kind,
                                                          options.embeddings_path);
    }
    if (!options.reference_fallback) {
      throw ArgumentError("adapter " + std::string(key) +
                          " has no embeddings and the reference encoder is disabled");
    }
    config.kind = kind;
    return std::make_unique<ReferenceSentenceEncoder>(config);
  }
  throw ArgumentError("unknown semantic adapter '" + std::string(key) + "'");
}

std::unique_ptr<MentalStateEncoder> make_mental_encoder(std::string_view key,
                                                        const AdapterOptions& options) {
  if (key == "mental.reference") {
    return std::make_unique<ReferenceMentalEncoder>(options.width, options.seed);
  }
  if (key == "mental.pretrained") {
    if (!options.embeddings_path.empty()) {
      return std::make_unique<PrecomputedMentalEncoder>(options.embeddings_path);
    }
    if (!options.reference_fallback) {
      throw ArgumentError("adapter mental.pretrained has no embeddings and the reference "
                          "encoder is disabled");
    }
    return std::make_unique<ReferenceMentalEncoder>(options.width, options.seed);
  }
  throw ArgumentError("unknown mental-state adapter '" + std::string(key) + "'");
}

EmbeddingCache::EmbeddingCache(std::string directory) : directory_(std::move(directory)) {
  std::error_code ec;
  std::filesystem::create_directories(directory_, ec);
  if (ec) throw IoError("cannot create cache directory " + directory_);
}

std::unique_ptr<EmbeddingCache> EmbeddingCache::from_environment() {
  const char* dir = std::getenv("NARRATIVE_ARC_CACHE");
  if (dir == nullptr || *dir == '\0') return nullptr;
  return std::make_unique<EmbeddingCache>(dir);
}

std::string EmbeddingCache::sidecar_path(const std::string& adapter, int width,
                                         uint64_t seed) const {
  return (std::filesystem::path(directory_) /
          (adapter + "_d" + std::to_string(width) + "_s" + std::to_string(seed) + ".jsonl"))
      .string();
}

namespace {

std::string entry_key(const std::string& path, const std::string& tag, const std::string& id,
                      uint64_t hash) {
  return path + "|" + tag + "|" + id + "|" + std::to_string(hash);
}

}  // namespace

void EmbeddingCache::load(const std::string& path) {
  if (loaded_[path]) return;
  loaded_[path] = true;
  if (!std::filesystem::exists(path)) return;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      int width = 0;
      entries_[entry_key(path, j.at("tag").get<std::string>(), j.at("id").get<std::string>(),
                         j.at("hash").get<uint64_t>())] =
          matrix_from_json(j.at("rows"), &width, path);
    } catch (const std::exception& e) {
      log_warning("skipping unreadable cache line in " + path + ": " + e.what());
    }
  }
}

bool EmbeddingCache::lookup(const std::string& adapter, int width, uint64_t seed,
                            const std::string& tag, const Narrative& narrative, Tensor* out) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string path = sidecar_path(adapter, width, seed);
  load(path);
  auto it = entries_.find(entry_key(path, tag, narrative.id, narrative_hash(narrative)));
  if (it == entries_.end()) return false;
  *out = it->second;
  return true;
}

void EmbeddingCache::store(const std::string& adapter, int width, uint64_t seed,
                           const std::string& tag, const Narrative& narrative,
                           const Tensor& rows) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string path = sidecar_path(adapter, width, seed);
  load(path);
  const uint64_t hash = narrative_hash(narrative);
  entries_[entry_key(path, tag, narrative.id, hash)] = rows;
  json j;
  j["id"] = narrative.id;
  j["hash"] = hash;
  j["tag"] = tag;
  std::vector<std::vector<double>> data(static_cast<size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    data[static_cast<size_t>(i)].assign(rows.row(i).data(), rows.row(i).data() + rows.cols());
  }
  j["rows"] = data;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to cache file " + path);
  out << j.dump() << '\n';
}

EmbeddingMatrix encode_semantic(const Narrative& narrative, const SentenceEncoder& encoder) {
  EmbeddingMatrix m = encoder.encode(narrative);
  if (m.length() != narrative.length()) {
    throw ShapeError("semantic encoder returned wrong row count for " + narrative.id);
  }
  return m;
}

Tensor encode_mental_state(const MentalStateRequest& request,
                           const MentalStateEncoder& encoder) {
  if (request.entity.empty()) throw ArgumentError("mental-state entity must be nonempty");
  return encoder.encode(request);
}

ChannelSet encode_channels(const Narrative& narrative, const std::string& entity,
                           const EncoderSuite& suite, bool allow_fallback) {
  if (!suite.semantic || !suite.mental) throw ArgumentError("encoder suite is incomplete");
  if (suite.semantic->width() != suite.mental->width()) {
    throw ShapeError("semantic width " + std::to_string(suite.semantic->width()) +
                     " differs from mental-state width " +
                     std::to_string(suite.mental->width()));
  }
  const std::string who = entity.empty() ? std::string(kDefaultEntity) : entity;

  auto cached = [&](const std::string& adapter, int width, uint64_t seed,
                    const std::string& tag, auto&& compute) -> Tensor {
    Tensor rows;
    if (suite.cache && suite.cache->lookup(adapter, width, seed, tag, narrative, &rows)) {
      return rows;
    }
    rows = compute();
    if (suite.cache) suite.cache->store(adapter, width, seed, tag, narrative, rows);
    return rows;
  };

  ChannelSet set;
  set.sem.channel = Channel::kSem;
  try {
    set.sem.rows = cached(suite.semantic->key(), suite.semantic->width(),
                          suite.semantic->seed(), "xsem",
                          [&] { return encode_semantic(narrative, *suite.semantic).rows; });
  } catch (const CapacityError&) {
    if (!allow_fallback || !suite.fallback) throw;
    set.sem.rows = cached(suite.fallback->key(), suite.fallback->width(),
                          suite.fallback->seed(), "xsem",
                          [&] { return encode_semantic(narrative, *suite.fallback).rows; });
  }
  for (auto attribute : {MentalAttribute::kIntent, MentalAttribute::kReact}) {
    const std::string tag = mental_salt(who, attribute);
    Tensor rows = cached(suite.mental->key(), suite.mental->width(), suite.mental->seed(), tag,
                         [&] { return suite.mental->encode_story(narrative, who, attribute).rows; });
    if (attribute == MentalAttribute::kIntent) {
      set.intent = EmbeddingMatrix{Channel::kIntent, std::move(rows)};
    } else {
      set.react = EmbeddingMatrix{Channel::kReact, std::move(rows)};
    }
  }
  return set;
}

EncoderSuite make_reference_suite(int width, uint64_t seed, EncoderKind kind) {
  EncoderSuite suite;
  suite.semantic = std::make_shared<ReferenceSentenceEncoder>(EncoderConfig{kind, width, seed});
  suite.mental = std::make_shared<ReferenceMentalEncoder>(width, seed);
  suite.fallback = std::make_shared<ReferenceSentenceEncoder>(
      EncoderConfig{EncoderKind::kSentenceLevel, width, seed});
  return suite;
}

}  // namespace narrative::encoders
