#ifndef NARRATIVE_BASELINES_H_
#define NARRATIVE_BASELINES_H_

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "narrative/corpus.h"
#include "narrative/encoders.h"
#include "narrative/eval.h"

namespace narrative::baselines {

// Uniform label per sentence.
LabelSequence random_baseline(const Narrative& narrative, uint64_t seed);

struct PositionalModel {
  int bins = kPositionBins;
  std::vector<int> climax_histogram;
  std::vector<int> resolution_histogram;
  double climax_peak = 0.0;  // bin centre in [0, 1]
  double resolution_peak = 0.0;
};

// Throws DataError when a class never occurs in the gold labels.
PositionalModel fit_positional(const Corpus& training, int bins = kPositionBins);
LabelSequence apply_positional(const PositionalModel& model, const Narrative& narrative);

// Climax: sentence nearest the title; resolution: last sentence.
LabelSequence heuristic_baseline(const Narrative& narrative,
                                 const encoders::SentenceEncoder& encoder);

// s_0 = 0, s_i = |e_i - e_{i-1}|^2 / d.
std::vector<double> surprise_series(const encoders::EmbeddingMatrix& embeddings);

// Climax at the surprise peak, resolution at the steepest drop after it.
LabelSequence surprise_decode(const std::vector<double>& series, const std::string& id = "");
LabelSequence surprise_baseline(const encoders::EmbeddingMatrix& embeddings,
                                const std::string& id = "");

// Labeler adapters for evaluation. `suite` must outlive the labeler.
std::unique_ptr<eval::Labeler> make_labeler(const std::string& name, const Corpus& training,
                                            const encoders::EncoderSuite& suite,
                                            const std::string& entity = "I");

// Closed-form expected F1 of the random baseline for a class with prior pi.
double random_expected_f1(double prior);

}  // namespace narrative::baselines

#endif  // NARRATIVE_BASELINES_H_
