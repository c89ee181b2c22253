#include "narrative/baselines.h"

#include <cmath>

#include "narrative/error.h"
#include "narrative/util/hash.h"
#include "narrative/util/rng.h"

namespace narrative::baselines {

namespace {

LabelSequence empty_labels(const Narrative& narrative) {
  return LabelSequence{narrative.id,
                       std::vector<Label>(narrative.length(), Label::kNone)};
}

int peak_bin(const std::vector<int>& histogram) {
  int best = 0;
  for (int b = 1; b < static_cast<int>(histogram.size()); ++b) {
    if (histogram[b] > histogram[best]) best = b;
  }
  return best;
}

double cosine(const nn::Tensor& a, const nn::Tensor& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cwiseProduct(b).sum() / (na * nb);
}

class RandomLabeler : public eval::Labeler {
 public:
  std::string name() const override { return "random"; }
  bool stochastic() const override { return true; }
  LabelSequence label(const Narrative& n, uint64_t seed) const override {
    return random_baseline(n, derive_seed({seed, fnv1a(n.id)}));
  }
};

class PositionalLabeler : public eval::Labeler {
 public:
  explicit PositionalLabeler(PositionalModel model) : model_(std::move(model)) {}
  std::string name() const override { return "distribution"; }
  LabelSequence label(const Narrative& n, uint64_t) const override {
    return apply_positional(model_, n);
  }

 private:
  PositionalModel model_;
};

class HeuristicLabeler : public eval::Labeler {
 public:
  explicit HeuristicLabeler(const encoders::SentenceEncoder& encoder) : encoder_(encoder) {}
  std::string name() const override { return "heuristic"; }
  LabelSequence label(const Narrative& n, uint64_t) const override {
    return heuristic_baseline(n, encoder_);
  }

 private:
  const encoders::SentenceEncoder& encoder_;
};

class SurpriseLabeler : public eval::Labeler {
 public:
  SurpriseLabeler(encoders::Channel channel, const encoders::EncoderSuite& suite,
                  std::string entity)
      : channel_(channel), suite_(suite), entity_(std::move(entity)) {}
  std::string name() const override {
    return "surprise:" + std::string(encoders::channel_name(channel_));
  }
  LabelSequence label(const Narrative& n, uint64_t) const override {
    using encoders::Channel;
    if (channel_ == Channel::kSem) {
      return surprise_baseline(encoders::encode_semantic(n, *suite_.semantic), n.id);
    }
    const auto attribute = channel_ == Channel::kIntent ? encoders::MentalAttribute::kIntent
                                                        : encoders::MentalAttribute::kReact;
    encoders::EmbeddingMatrix m = suite_.mental->encode_story(n, entity_, attribute);
    m.channel = channel_;
    return surprise_baseline(m, n.id);
  }

 private:
  encoders::Channel channel_;
  const encoders::EncoderSuite& suite_;
  std::string entity_;
};

}  // namespace

LabelSequence random_baseline(const Narrative& narrative, uint64_t seed) {
  Rng rng(seed);
  LabelSequence out = empty_labels(narrative);
  for (auto& l : out.labels) l = static_cast<Label>(rng.below(kNumLabels));
  return out;
}

PositionalModel fit_positional(const Corpus& training, int bins) {
  if (bins < 1) throw ArgumentError("positional model needs at least one bin");
  PositionalModel model;
  model.bins = bins;
  model.climax_histogram.assign(bins, 0);
  model.resolution_histogram.assign(bins, 0);
  int climaxes = 0, resolutions = 0;
  for (const auto& e : training) {
    if (!e.gold) continue;
    const int len = e.gold->length();
    for (int i = 0; i < len; ++i) {
      const int bin = position_bin(normalized_position(i, len), bins);
      if (e.gold->labels[i] == Label::kClimax) {
        ++model.climax_histogram[bin];
        ++climaxes;
      } else if (e.gold->labels[i] == Label::kResolution) {
        ++model.resolution_histogram[bin];
        ++resolutions;
      }
    }
  }
  if (climaxes == 0) throw DataError("no climax sentences in the training data");
  if (resolutions == 0) throw DataError("no resolution sentences in the training data");
  model.climax_peak = (peak_bin(model.climax_histogram) + 0.5) / bins;
  model.resolution_peak = (peak_bin(model.resolution_histogram) + 0.5) / bins;
  return model;
}

LabelSequence apply_positional(const PositionalModel& model, const Narrative& narrative) {
  LabelSequence out = empty_labels(narrative);
  const int len = narrative.length();
  if (len == 0) return out;
  const int r = static_cast<int>(std::lround(model.resolution_peak * (len - 1)));
  const int c = static_cast<int>(std::lround(model.climax_peak * (len - 1)));
  out.labels[r] = Label::kResolution;
  out.labels[c] = Label::kClimax;
  return out;
}

LabelSequence heuristic_baseline(const Narrative& narrative,
                                 const encoders::SentenceEncoder& encoder) {
  if (narrative.title.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw DataError("narrative " + narrative.id + " has an empty title");
  }
  LabelSequence out = empty_labels(narrative);
  const int len = narrative.length();
  if (len == 0) return out;
  const nn::Tensor title = encoder.encode_text(narrative.title);
  int best = 0;
  double best_sim = -2.0;
  for (int i = 0; i < len; ++i) {
    const double sim = cosine(title, encoder.encode_text(narrative.sentences[i].text));
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  out.labels[len - 1] = Label::kResolution;
  out.labels[best] = Label::kClimax;
  return out;
}

std::vector<double> surprise_series(const encoders::EmbeddingMatrix& embeddings) {
  const int len = embeddings.length();
  const double d = embeddings.width();
  std::vector<double> series(len, 0.0);
  for (int i = 1; i < len; ++i) {
    series[i] = (embeddings.rows.row(i) - embeddings.rows.row(i - 1)).squaredNorm() / d;
  }
  return series;
}

LabelSequence surprise_decode(const std::vector<double>& series, const std::string& id) {
  const int len = static_cast<int>(series.size());
  LabelSequence out{id, std::vector<Label>(len, Label::kNone)};
  if (len < 2) return out;
  int peak = 0;
  for (int i = 1; i < len; ++i) {
    if (series[i] > series[peak]) peak = i;
  }
  out.labels[peak] = Label::kClimax;
  if (peak == len - 1) return out;
  int drop_at = peak + 1;
  double steepest = series[peak] - series[peak + 1];
  for (int j = peak + 2; j < len; ++j) {
    const double drop = series[j - 1] - series[j];
    if (drop >= steepest) {
      steepest = drop;
      drop_at = j;
    }
  }
  out.labels[drop_at] = Label::kResolution;
  return out;
}

LabelSequence surprise_baseline(const encoders::EmbeddingMatrix& embeddings,
                                const std::string& id) {
  return surprise_decode(surprise_series(embeddings), id);
}

std::unique_ptr<eval::Labeler> make_labeler(const std::string& name, const Corpus& training,
                                            const encoders::EncoderSuite& suite,
                                            const std::string& entity) {
  if (name == "random") return std::make_unique<RandomLabeler>();
  if (name == "distribution") {
    return std::make_unique<PositionalLabeler>(fit_positional(training));
  }
  if (name == "heuristic") {
    if (!suite.semantic) throw ArgumentError("heuristic baseline needs a sentence encoder");
    return std::make_unique<HeuristicLabeler>(*suite.semantic);
  }
  const std::string prefix = "surprise:";
  if (name.rfind(prefix, 0) == 0) {
    const encoders::Channel channel = encoders::parse_channel(name.substr(prefix.size()));
    if (channel == encoders::Channel::kSem ? !suite.semantic : !suite.mental) {
      throw ArgumentError("baseline " + name + " needs an encoder for its channel");
    }
    return std::make_unique<SurpriseLabeler>(channel, suite, entity);
  }
  throw ArgumentError("unknown baseline: " + name +
                      " (expected random, distribution, heuristic or surprise:<channel>)");
}

double random_expected_f1(double prior) {
  const double q = 1.0 / kNumLabels;
  if (prior + q <= 0.0) return 0.0;
  return 2.0 * prior * q / (prior + q);
}

}  // namespace narrative::baselines
