#ifndef NARRATIVE_ENCODERS_H_
#define NARRATIVE_ENCODERS_H_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "narrative/corpus.h"
#include "narrative/error.h"
#include "narrative/nn/tensor.h"

namespace narrative::encoders {

using nn::Tensor;

enum class Channel { kSem, kIntent, kReact };

std::string_view channel_name(Channel channel);  // "xsem", "xintent", "xreact"
Channel parse_channel(std::string_view name);

// L x d per-sentence vectors for one feature channel.
struct EmbeddingMatrix {
  Channel channel = Channel::kSem;
  Tensor rows;

  int length() const { return static_cast<int>(rows.rows()); }
  int width() const { return static_cast<int>(rows.cols()); }
};

enum class MentalAttribute { kIntent, kReact };

std::string_view attribute_name(MentalAttribute attribute);

inline constexpr std::string_view kDefaultEntity = "I";

struct MentalStateRequest {
  std::string sentence;            // S_i
  std::vector<std::string> prior;  // S_0 .. S_{i-1}
  std::string entity = std::string(kDefaultEntity);
  MentalAttribute attribute = MentalAttribute::kIntent;
};

enum class EncoderKind { kTokenContextual, kSentenceLevel, kReference };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kTokenContextual;
  int width = 96;
  uint64_t seed = 0;
  int max_tokens = 512;  // context capacity of token-level encoders
};

// Raised when a narrative does not fit a token-level encoder's context.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& narrative_id, int needed, int limit);
  int limit() const { return limit_; }

 private:
  int limit_;
};

// Token-level input: [CLS] w.. [SEP] per sentence with alternating segment
// ids (A = 0, B = 1) across sentences.
struct TokenInput {
  std::vector<std::string> tokens;
  std::vector<int> segments;
  std::vector<int> cls_positions;
};

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";

TokenInput build_token_input(const Narrative& narrative);

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::string key() const = 0;
  virtual int width() const = 0;
  virtual uint64_t seed() const = 0;
  virtual EncoderKind kind() const = 0;
  // One xSem row per sentence.
  virtual EmbeddingMatrix encode(const Narrative& narrative) const = 0;
  // A single vector for free text (titles, whole posts), 1 x d.
  virtual Tensor encode_text(std::string_view text) const = 0;
  // Layers whose [CLS] states can be stacked for classification features.
  virtual int num_layers() const { return 1; }
  // Concatenated final-four-layer [CLS] states when the encoder exposes at
  // least four layers, otherwise the single text vector.
  virtual Tensor classifier_features(std::string_view text) const { return encode_text(text); }
  int classifier_feature_width() const;
};

class MentalStateEncoder {
 public:
  virtual ~MentalStateEncoder() = default;
  virtual std::string key() const = 0;
  virtual int width() const = 0;
  virtual uint64_t seed() const = 0;
  // Classification-marker state for one request, 1 x d.
  virtual Tensor encode(const MentalStateRequest& request) const = 0;
  // Rows for every sentence of a narrative, each conditioned on exactly the
  // sentences before it.
  virtual EmbeddingMatrix encode_story(const Narrative& narrative, const std::string& entity,
                                       MentalAttribute attribute) const;
};

// Deterministic offline encoder. A token's vector is a seeded
// pseudo-random projection of its bytes with unit-variance entries; a
// sentence's base vector is the mean of its token vectors.
class ReferenceSentenceEncoder : public SentenceEncoder {
 public:
  explicit ReferenceSentenceEncoder(EncoderConfig config);

  std::string key() const override;
  int width() const override { return config_.width; }
  uint64_t seed() const override { return config_.seed; }
  EncoderKind kind() const override { return config_.kind; }
  EmbeddingMatrix encode(const Narrative& narrative) const override;
  Tensor encode_text(std::string_view text) const override;

  static constexpr double kSelfWeight = 0.9;
  static constexpr double kContextWeight = 0.1;

 private:
  EncoderConfig config_;
};

// Reference mental-state encoder: the base vector of S_i with the
// (entity, attribute) pair salted into every token hash, mixed 0.9 / 0.1
// with the mean token vector of the prior context (zero for S_0).
class ReferenceMentalEncoder : public MentalStateEncoder {
 public:
  ReferenceMentalEncoder(int width, uint64_t seed);

  std::string key() const override { return "mental.reference"; }
  int width() const override { return width_; }
  uint64_t seed() const override { return seed_; }
  Tensor encode(const MentalStateRequest& request) const override;
  EmbeddingMatrix encode_story(const Narrative& narrative, const std::string& entity,
                               MentalAttribute attribute) const override;

 private:
  int width_;
  uint64_t seed_;
};

// Reference building blocks, exposed so their contract can be checked.
Tensor reference_token_vector(std::string_view token, std::string_view salt, int width,
                              uint64_t seed);
Tensor reference_base_vector(const std::vector<std::string>& tokens, std::string_view salt,
                             int width, uint64_t seed);
std::string mental_salt(std::string_view entity, MentalAttribute attribute);

// Adapters over embeddings produced offline by a pretrained model. Each
// line of the file holds one narrative's sentences plus its matrices:
//   {"sentences": [...], "xsem": [[...], ...]}
//   {"sentences": [...], "entity": "I", "xintent": [[...]], "xreact": [[...]]}
// Lookups are by content, so the same file serves any corpus.
class PrecomputedSentenceEncoder : public SentenceEncoder {
 public:
  PrecomputedSentenceEncoder(std::string key, EncoderKind kind, const std::string& path);

  std::string key() const override { return key_; }
  int width() const override { return width_; }
  uint64_t seed() const override { return 0; }
  EncoderKind kind() const override { return kind_; }
  EmbeddingMatrix encode(const Narrative& narrative) const override;
  Tensor encode_text(std::string_view text) const override;

 private:
  std::string key_;
  EncoderKind kind_;
  int width_ = 0;
  std::map<uint64_t, Tensor> by_content_;
};

class PrecomputedMentalEncoder : public MentalStateEncoder {
 public:
  explicit PrecomputedMentalEncoder(const std::string& path);

  std::string key() const override { return "mental.pretrained"; }
  int width() const override { return width_; }
  uint64_t seed() const override { return 0; }
  Tensor encode(const MentalStateRequest& request) const override;

 private:
  int width_ = 0;
  std::map<uint64_t, Tensor> rows_;
};

// Content hash of a sentence sequence.
uint64_t content_hash(const std::vector<std::string>& sentences);
uint64_t narrative_hash(const Narrative& narrative);

struct AdapterOptions {
  int width = 96;
  uint64_t seed = 0;
  int max_tokens = 512;
  EncoderKind reference_kind = EncoderKind::kTokenContextual;
  std::string embeddings_path;    // for pretrained adapters
  bool reference_fallback = true;  // substitute the reference encoder when
                                   // a pretrained adapter has no embeddings
};

// Registry keys: xsem.token, xsem.sentence, xsem.reference,
// mental.reference, mental.pretrained.
std::vector<std::string> adapter_keys();
std::unique_ptr<SentenceEncoder> make_semantic_encoder(std::string_view key,
                                                       const AdapterOptions& options);
std::unique_ptr<MentalStateEncoder> make_mental_encoder(std::string_view key,
                                                        const AdapterOptions& options);

// Persists per-narrative matrices in sidecar files named after
// (adapter, width, seed) under one directory.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::string directory);

  // Directory from NARRATIVE_ARC_CACHE, or null when unset.
  static std::unique_ptr<EmbeddingCache> from_environment();

  bool lookup(const std::string& adapter, int width, uint64_t seed, const std::string& tag,
              const Narrative& narrative, Tensor* out);
  void store(const std::string& adapter, int width, uint64_t seed, const std::string& tag,
             const Narrative& narrative, const Tensor& rows);

  std::string sidecar_path(const std::string& adapter, int width, uint64_t seed) const;

 private:
  void load(const std::string& path);

  std::string directory_;
  std::mutex mu_;
  std::map<std::string, bool> loaded_;
  std::map<std::string, Tensor> entries_;  // "path|tag|id|hash" -> rows
};

struct EncoderSuite {
  std::shared_ptr<const SentenceEncoder> semantic;
  std::shared_ptr<const MentalStateEncoder> mental;
  // Sentence-level stand-in used when a narrative exceeds the semantic
  // encoder's capacity and the caller allows falling back.
  std::shared_ptr<const SentenceEncoder> fallback;
  EmbeddingCache* cache = nullptr;
};

struct ChannelSet {
  EmbeddingMatrix sem;
  EmbeddingMatrix intent;
  EmbeddingMatrix react;

  int length() const { return sem.length(); }
  int width() const { return sem.width(); }
};

EmbeddingMatrix encode_semantic(const Narrative& narrative, const SentenceEncoder& encoder);
Tensor encode_mental_state(const MentalStateRequest& request, const MentalStateEncoder& encoder);

ChannelSet encode_channels(const Narrative& narrative, const std::string& entity,
                           const EncoderSuite& suite, bool allow_fallback = false);

EncoderSuite make_reference_suite(int width, uint64_t seed,
                                  EncoderKind kind = EncoderKind::kTokenContextual);

}  // namespace narrative::encoders

#endif  // NARRATIVE_ENCODERS_H_
