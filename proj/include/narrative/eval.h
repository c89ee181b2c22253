#ifndef NARRATIVE_EVAL_H_
#define NARRATIVE_EVAL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrative/corpus.h"

namespace narrative::eval {

struct ClassScores {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct F1Report {
  ClassScores climax;
  ClassScores resolution;

  const ClassScores& of(Label label) const {
    return label == Label::kClimax ? climax : resolution;
  }
  double macro() const { return 0.5 * (climax.f1 + resolution.f1); }
};

// Sentence-level one-vs-rest F1 per class, micro-aggregated over every
// sentence of every narrative. Zero denominators give 0.
F1Report per_class_f1(const std::vector<LabelSequence>& predictions,
                      const std::vector<LabelSequence>& golds);

// Distance between two index sets of one class in a narrative of length L,
// as a fraction: 0 when both empty, 1 when exactly one is empty, otherwise
// the closest pair's |p - g| / L.
double set_distance(const std::vector<int>& predicted, const std::vector<int>& gold, int length);

// Mean set_distance over narratives, in percent.
double mean_annotation_distance(const std::vector<LabelSequence>& predictions,
                                const std::vector<LabelSequence>& golds, Label label);

// All annotators' records for one narrative.
struct AnnotatedNarrative {
  std::string narrative_id;
  int length = 0;
  std::vector<AnnotationRecord> records;
};

// Per sentence, the fraction of annotator pairs agreeing on membership in
// the class, averaged over all sentences.
double percentage_agreement(const std::vector<AnnotatedNarrative>& data, Label label);

// Fleiss' kappa from an items x categories count matrix. Every item must
// have the same number of raters (at least 2).
double fleiss_kappa_counts(const std::vector<std::vector<int>>& counts);

// Items are sentences. Each annotator's record resolves to one of
// {None, Climax, Resolution} per sentence, climax first.
double fleiss_kappa(const std::vector<AnnotatedNarrative>& data);

// Binary (in class / not in class) kappa for one label.
double fleiss_kappa(const std::vector<AnnotatedNarrative>& data, Label label);

// Mean pairwise set distance between annotators, in percent.
double annotator_distance(const std::vector<AnnotatedNarrative>& data, Label label);

struct ClassAgreement {
  double percentage_agreement = 0.0;
  double kappa = 0.0;
  double distance = 0.0;  // percent
};

struct AgreementReport {
  ClassAgreement climax;
  ClassAgreement resolution;
  double kappa_all_labels = 0.0;
  int narratives = 0;
  int annotators_per_narrative = 0;
};

AgreementReport agreement_report(const std::vector<AnnotatedNarrative>& data);
nlohmann::ordered_json to_json(const AgreementReport& report);

// Groups records by narrative, keeping the latest submission per annotator.
std::vector<AnnotatedNarrative> group_annotations(const std::vector<AnnotationRecord>& records,
                                                  const Corpus& corpus);

// A labeling system under evaluation.
class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual std::string name() const = 0;
  // Runs with different seeds give different outputs.
  virtual bool stochastic() const { return false; }
  virtual LabelSequence label(const Narrative& narrative, uint64_t run_seed) const = 0;
};

struct ClassResult {
  double f1 = 0.0;
  double f1_std = 0.0;
  double distance = 0.0;  // percent
  double distance_std = 0.0;
  int gold_sentences = 0;
  int predicted_sentences = 0;
};

struct NarrativeResult {
  std::string id;
  double climax_distance = 0.0;
  double resolution_distance = 0.0;
};

struct EvaluationReport {
  std::string system;
  ClassResult climax;
  ClassResult resolution;
  int narratives = 0;
  int runs = 1;
  std::vector<uint64_t> seeds;
  std::vector<NarrativeResult> per_narrative;  // from the first run

  const ClassResult& of(Label label) const {
    return label == Label::kClimax ? climax : resolution;
  }
};

EvaluationReport evaluate_predictions(const std::vector<LabelSequence>& predictions,
                                      const std::vector<LabelSequence>& golds,
                                      const std::string& system = "predictions");

// Runs the system over the corpus; stochastic systems are run `runs` times
// with seeds base_seed, base_seed + 1, ... and reported as mean and
// population standard deviation.
EvaluationReport evaluate(const Labeler& system, const Corpus& corpus, int runs = 1,
                          uint64_t base_seed = 0);

// `config` is echoed into the report along with its hash.
nlohmann::ordered_json to_json(const EvaluationReport& report,
                               const nlohmann::json& config = nlohmann::json::object());

// Hex FNV-1a of the config's canonical dump.
std::string config_hash(const nlohmann::json& config);

struct Synopsis {
  Narrative narrative;
  std::vector<int> tp4;
  std::vector<int> tp5;
  std::vector<std::string> cast;  // ranked, top-billed first
};

// One synopsis per line: {"id", "title"?, "sentences", "tp4", "tp5", "cast"}.
std::vector<Synopsis> load_synopses(const std::string& path);

// Chooses the protagonist: first cast member, or "I" with a warning.
std::string protagonist_of(const Synopsis& synopsis);

class ProtagonistLabeler {
 public:
  virtual ~ProtagonistLabeler() = default;
  virtual LabelSequence label(const Narrative& narrative, const std::string& protagonist) const = 0;
};

struct TurningPointReport {
  double tp4_distance = 0.0;  // percent
  double tp5_distance = 0.0;
  int synopses = 0;
  std::vector<NarrativeResult> per_synopsis;
};

// Climax predictions are scored against TP4, resolution against TP5.
TurningPointReport evaluate_turning_points(const ProtagonistLabeler& system,
                                           const std::vector<Synopsis>& synopses);

nlohmann::ordered_json to_json(const TurningPointReport& report);

}  // namespace narrative::eval

#endif  // NARRATIVE_EVAL_H_
