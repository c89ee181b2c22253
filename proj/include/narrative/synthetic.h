#ifndef NARRATIVE_SYNTHETIC_H_
#define NARRATIVE_SYNTHETIC_H_

#include <cstdint>
#include <string>
#include <vector>

#include "narrative/corpus.h"
#include "narrative/encoders.h"
#include "narrative/msense.h"

namespace narrative::synthetic {

// Random-word narratives with one climax and one resolution each. The
// climax sits in [1, L-2] and the resolution after it.
struct Options {
  int narratives = 200;
  int min_length = 5;
  int max_length = 15;
  int min_words = 4;
  int max_words = 10;
  int width = 96;
  uint64_t seed = 0;
  // Norm of the class signal added to the labelled rows.
  double amplitude = 4.0;
  // Put both signals in the intent channel and leave the reaction channel
  // uninformative.
  bool intent_only = false;
};

struct Dataset {
  Corpus corpus;
  std::vector<encoders::ChannelSet> channels;
  nn::Tensor climax_direction;      // unit 1 x d
  nn::Tensor resolution_direction;  // unit 1 x d

  std::vector<msense::TrainingExample> examples(const std::vector<int>& indices) const;
  std::vector<msense::TrainingExample> examples() const;
};

// Text plus gold labels only.
Corpus make_corpus(const Options& options);

// Text corpus encoded with the reference encoders, then the climax signal
// is added to the intent row of the climax sentence and the resolution
// signal to the reaction row of the resolution sentence.
Dataset make_dataset(const Options& options);

// Text-level variant for the command line: at least half the words of a
// labelled sentence come from a small class vocabulary, so any encoder sees
// the signal.
Corpus make_marked_corpus(const Options& options);

// Narratives whose sentence embeddings are constant apart from a single
// jump at `jump` (1 <= jump < length).
encoders::EmbeddingMatrix step_embeddings(int length, int width, int jump, uint64_t seed);

}  // namespace narrative::synthetic

#endif  // NARRATIVE_SYNTHETIC_H_
