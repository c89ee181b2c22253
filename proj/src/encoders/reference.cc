#include <cmath>

#include "narrative/encoders.h"
#include "narrative/util/hash.h"
#include "narrative/util/rng.h"

namespace narrative::encoders {

std::string_view channel_name(Channel channel) {
  switch (channel) {
    case Channel::kSem:
      return "xsem";
    case Channel::kIntent:
      return "xintent";
    case Channel::kReact:
      return "xreact";
  }
  return "xsem";
}

Channel parse_channel(std::string_view name) {
  if (name == "xsem") return Channel::kSem;
  if (name == "xintent") return Channel::kIntent;
  if (name == "xreact") return Channel::kReact;
  throw ArgumentError("unknown channel '" + std::string(name) + "'");
}

std::string_view attribute_name(MentalAttribute attribute) {
  return attribute == MentalAttribute::kIntent ? "xIntent" : "xReact";
}

CapacityError::CapacityError(const std::string& narrative_id, int needed, int limit)
    : Error("narrative " + narrative_id + " needs " + std::to_string(needed) +
            " tokens; token-level encoder capacity is " + std::to_string(limit)),
      limit_(limit) {}

TokenInput build_token_input(const Narrative& narrative) {
  TokenInput input;
  for (const auto& s : narrative.sentences) {
    const int segment = s.index % 2;
    input.cls_positions.push_back(static_cast<int>(input.tokens.size()));
    input.tokens.emplace_back(kClsToken);
    input.segments.push_back(segment);
    for (const auto& t : s.tokens) {
      input.tokens.push_back(t);
      input.segments.push_back(segment);
    }
    input.tokens.emplace_back(kSepToken);
    input.segments.push_back(segment);
  }
  return input;
}

int SentenceEncoder::classifier_feature_width() const {
  return num_layers() >= 4 ? 4 * width() : width();
}

EmbeddingMatrix MentalStateEncoder::encode_story(const Narrative& narrative,
                                                 const std::string& entity,
                                                 MentalAttribute attribute) const {
  EmbeddingMatrix out;
  out.channel = attribute == MentalAttribute::kIntent ? Channel::kIntent : Channel::kReact;
  out.rows.resize(narrative.length(), width());
  MentalStateRequest req;
  req.entity = entity;
  req.attribute = attribute;
  for (const auto& s : narrative.sentences) {
    req.sentence = s.text;
    out.rows.row(s.index) = encode(req);
    req.prior.push_back(s.text);
  }
  return out;
}

Tensor reference_token_vector(std::string_view token, std::string_view salt, int width,
                              uint64_t seed) {
  uint64_t h = fnv1a_u64(seed);
  h = fnv1a(salt, h);
  h = fnv1a("\x1f", h);
  h = fnv1a(token, h);
  uint64_t state = h;
  // Uniform on [-sqrt(3), sqrt(3)] has unit variance.
  const double half_width = std::sqrt(3.0);
  Tensor v(1, width);
  for (int k = 0; k < width; ++k) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v(0, k) = (2.0 * u - 1.0) * half_width;
  }
  return v;
}

Tensor reference_base_vector(const std::vector<std::string>& tokens, std::string_view salt,
                             int width, uint64_t seed) {
  Tensor sum = Tensor::Zero(1, width);
  for (const auto& t : tokens) sum += reference_token_vector(t, salt, width, seed);
  if (!tokens.empty()) sum /= static_cast<double>(tokens.size());
  return sum;
}

std::string mental_salt(std::string_view entity, MentalAttribute attribute) {
  std::string salt = "mental|";
  salt += entity;
  salt += '|';
  salt += attribute_name(attribute);
  return salt;
}

namespace {

constexpr std::string_view kSemanticSalt = "xsem";

}  // namespace

ReferenceSentenceEncoder::ReferenceSentenceEncoder(EncoderConfig config) : config_(config) {
  if (config_.width <= 0) throw ArgumentError("encoder width must be positive");
  if (config_.kind == EncoderKind::kReference) config_.kind = EncoderKind::kTokenContextual;
}

std::string ReferenceSentenceEncoder::key() const {
  return config_.kind == EncoderKind::kSentenceLevel ? "xsem.reference.sentence"
                                                     : "xsem.reference";
}

EmbeddingMatrix ReferenceSentenceEncoder::encode(const Narrative& narrative) const {
  const int d = config_.width;
  EmbeddingMatrix out;
  out.channel = Channel::kSem;
  out.rows.resize(narrative.length(), d);
  for (const auto& s : narrative.sentences) {
    out.rows.row(s.index) = reference_base_vector(s.tokens, kSemanticSalt, d, config_.seed);
  }
  if (config_.kind == EncoderKind::kSentenceLevel) return out;

  const TokenInput input = build_token_input(narrative);
  const int needed = static_cast<int>(input.tokens.size());
  if (needed > config_.max_tokens) throw CapacityError(narrative.id, needed, config_.max_tokens);
  Tensor context = Tensor::Zero(1, d);
  int count = 0;
  for (const auto& s : narrative.sentences) {
    for (const auto& t : s.tokens) {
      context += reference_token_vector(t, kSemanticSalt, d, config_.seed);
      ++count;
    }
  }
  if (count > 0) context /= static_cast<double>(count);
  for (Eigen::Index i = 0; i < out.rows.rows(); ++i) {
    out.rows.row(i) = kSelfWeight * out.rows.row(i) + kContextWeight * context;
  }
  return out;
}

Tensor ReferenceSentenceEncoder::encode_text(std::string_view text) const {
  return reference_base_vector(tokenize(text), kSemanticSalt, config_.width, config_.seed);
}

ReferenceMentalEncoder::ReferenceMentalEncoder(int width, uint64_t seed)
    : width_(width), seed_(seed) {
  if (width <= 0) throw ArgumentError("encoder width must be positive");
}

Tensor ReferenceMentalEncoder::encode(const MentalStateRequest& request) const {
  if (request.entity.empty()) throw ArgumentError("mental-state entity must be nonempty");
  const std::string salt = mental_salt(request.entity, request.attribute);
  Tensor base = reference_base_vector(tokenize(request.sentence), salt, width_, seed_);
  Tensor prior = Tensor::Zero(1, width_);
  int count = 0;
  for (const auto& s : request.prior) {
    for (const auto& t : tokenize(s)) {
      prior += reference_token_vector(t, salt, width_, seed_);
      ++count;
    }
  }
  if (count > 0) prior /= static_cast<double>(count);
  return ReferenceSentenceEncoder::kSelfWeight * base +
         ReferenceSentenceEncoder::kContextWeight * prior;
}

EmbeddingMatrix ReferenceMentalEncoder::encode_story(const Narrative& narrative,
                                                     const std::string& entity,
                                                     MentalAttribute attribute) const {
  if (entity.empty()) throw ArgumentError("mental-state entity must be nonempty");
  const std::string salt = mental_salt(entity, attribute);
  EmbeddingMatrix out;
  out.channel = attribute == MentalAttribute::kIntent ? Channel::kIntent : Channel::kReact;
  out.rows.resize(narrative.length(), width_);
  Tensor prior_sum = Tensor::Zero(1, width_);
  int prior_count = 0;
  for (const auto& s : narrative.sentences) {
    Tensor sum = Tensor::Zero(1, width_);
    for (const auto& t : s.tokens) sum += reference_token_vector(t, salt, width_, seed_);
    const Tensor base = s.tokens.empty() ? sum : Tensor(sum / static_cast<double>(s.tokens.size()));
    const Tensor prior = prior_count > 0 ? Tensor(prior_sum / static_cast<double>(prior_count))
                                         : Tensor(Tensor::Zero(1, width_));
    out.rows.row(s.index) = ReferenceSentenceEncoder::kSelfWeight * base +
                            ReferenceSentenceEncoder::kContextWeight * prior;
    prior_sum += sum;
    prior_count += static_cast<int>(s.tokens.size());
  }
  return out;
}

}  // namespace narrative::encoders
