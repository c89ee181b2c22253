#include "narrative/synthetic.h"

#include <cctype>
#include <cmath>
#include <cstdio>

#include "narrative/error.h"
#include "narrative/util/rng.h"

namespace narrative::synthetic {

namespace {

const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
const char* kVowels[] = {"a", "e", "i", "o", "u"};

std::string make_word(Rng& rng) {
  std::string w;
  const int syllables = 1 + static_cast<int>(rng.below(3));
  for (int s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kVowels[rng.below(std::size(kVowels))];
  }
  return w;
}

std::string make_sentence(Rng& rng, const Options& o,
                          const std::vector<std::string>* vocabulary = nullptr) {
  const int words = o.min_words + static_cast<int>(rng.below(o.max_words - o.min_words + 1));
  std::vector<bool> marked(words, false);
  if (vocabulary) {
    std::vector<int> slots(words);
    for (int i = 0; i < words; ++i) slots[i] = i;
    rng.shuffle(slots);
    for (int k = 0; k < (words + 1) / 2; ++k) marked[slots[k]] = true;
  }
  std::string s;
  for (int i = 0; i < words; ++i) {
    if (i) s += ' ';
    std::string w = marked[i] ? (*vocabulary)[rng.below(vocabulary->size())] : make_word(rng);
    if (i == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    s += w;
  }
  return s + ".";
}

void check(const Options& o) {
  if (o.narratives < 1) throw ArgumentError("need at least one narrative");
  if (o.min_length < 3 || o.max_length < o.min_length) {
    throw ArgumentError("narrative lengths must satisfy 3 <= min <= max");
  }
  if (o.min_words < 1 || o.max_words < o.min_words) throw ArgumentError("bad word counts");
  if (o.width < 2 || o.width % 2) throw ArgumentError("width must be even");
}

nn::Tensor unit_direction(Rng& rng, int width) {
  nn::Tensor v(1, width);
  for (int k = 0; k < width; ++k) v(0, k) = rng.normal();
  return v / v.norm();
}

Corpus generate(const Options& o, bool marked) {
  check(o);
  Rng rng(derive_seed({o.seed, 0x73796e7468ULL}));
  const std::vector<std::string> climax_words = {"suddenly", "crash", "shouted", "exploded"};
  const std::vector<std::string> resolution_words = {"finally", "relieved", "calm", "afterwards"};
  Corpus corpus;
  for (int n = 0; n < o.narratives; ++n) {
    const int len = o.min_length + static_cast<int>(rng.below(o.max_length - o.min_length + 1));
    const int c = 1 + static_cast<int>(rng.below(len - 2));
    const int r = c + 1 + static_cast<int>(rng.below(len - 1 - c));
    std::vector<std::string> sentences;
    LabelSequence gold;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%04d", n);
    gold.narrative_id = id;
    for (int i = 0; i < len; ++i) {
      const std::vector<std::string>* vocabulary = nullptr;
      Label label = Label::kNone;
      if (i == c) {
        label = Label::kClimax;
        if (marked) vocabulary = &climax_words;
      } else if (i == r) {
        label = Label::kResolution;
        if (marked) vocabulary = &resolution_words;
      }
      sentences.push_back(make_sentence(rng, o, vocabulary));
      gold.labels.push_back(label);
    }
    CorpusEntry entry;
    entry.narrative = make_narrative(id, make_sentence(rng, o), sentences);
    entry.gold = std::move(gold);
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

}  // namespace

Corpus make_corpus(const Options& options) { return generate(options, false); }

Corpus make_marked_corpus(const Options& options) { return generate(options, true); }

Dataset make_dataset(const Options& options) {
  Dataset data;
  data.corpus = make_corpus(options);
  Rng rng(derive_seed({options.seed, 0x646972ULL}));
  data.climax_direction = unit_direction(rng, options.width);
  data.resolution_direction = unit_direction(rng, options.width);
  const encoders::EncoderSuite suite = encoders::make_reference_suite(options.width, options.seed);
  for (const auto& e : data.corpus) {
    encoders::ChannelSet ch = encoders::encode_channels(e.narrative, "I", suite);
    for (int i = 0; i < e.gold->length(); ++i) {
      if (e.gold->labels[i] == Label::kClimax) {
        ch.intent.rows.row(i) += options.amplitude * data.climax_direction;
      } else if (e.gold->labels[i] == Label::kResolution) {
        auto& target = options.intent_only ? ch.intent.rows : ch.react.rows;
        target.row(i) += options.amplitude * data.resolution_direction;
      }
    }
    data.channels.push_back(std::move(ch));
  }
  return data;
}

std::vector<msense::TrainingExample> Dataset::examples(const std::vector<int>& indices) const {
  std::vector<msense::TrainingExample> out;
  out.reserve(indices.size());
  for (int i : indices) {
    out.push_back({corpus.at(i).narrative, corpus.at(i).gold->labels, channels.at(i)});
  }
  return out;
}

std::vector<msense::TrainingExample> Dataset::examples() const {
  std::vector<int> all(corpus.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return examples(all);
}

encoders::EmbeddingMatrix step_embeddings(int length, int width, int jump, uint64_t seed) {
  if (jump < 1 || jump >= length) throw ArgumentError("jump must be in [1, length)");
  Rng rng(seed);
  encoders::EmbeddingMatrix m;
  m.rows.resize(length, width);
  nn::Tensor before(1, width), after(1, width);
  for (int k = 0; k < width; ++k) {
    before(0, k) = rng.normal();
    after(0, k) = before(0, k) + 1.0 + rng.uniform();
  }
  for (int i = 0; i < length; ++i) m.rows.row(i) = i < jump ? before : after;
  return m;
}

}  // namespace narrative::synthetic
