#ifndef NARRATIVE_MSENSE_H_
#define NARRATIVE_MSENSE_H_

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrative/corpus.h"
#include "narrative/encoders.h"
#include "narrative/nn/attention.h"
#include "narrative/nn/tensor.h"

namespace narrative::msense {

using encoders::ChannelSet;
using nn::GradientBuffer;
using nn::ParameterSet;
using nn::Tensor;

struct MSenseConfig {
  int d = 96;
  int n_heads = 12;
  int n_layers = 2;  // story encoder depth
  int window = 2;
  double dropout = 0.2;
  double lr = 1e-4;
  int batch_narratives = 32;
  bool use_fusion = true;
  bool use_intent = true;
  bool use_emotion = true;
  bool use_interaction = true;
  bool use_story_encoder = true;
  int max_epochs = 300;
  int patience = 20;
  uint64_t seed = 0;
  double augment_fraction = 0.2;
  std::vector<double> class_weights;  // empty: inverse training frequency

  // Number of feature channels feeding the fusion layer.
  int channels() const { return 1 + (use_intent ? 1 : 0) + (use_emotion ? 1 : 0); }
  void validate() const;  // throws ArgumentError
};

nlohmann::ordered_json to_json(const MSenseConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
MSenseConfig config_from_json(const nlohmann::json& j);

// Fusion slot roles, in slot order.
enum Slot { kFuseSlot = 0, kSemSlot = 1, kIntentSlot = 2, kReactSlot = 3 };
constexpr int kNumSlots = 4;

struct MSenseModel {
  MSenseConfig config;
  ParameterSet params;
};

// Fresh parameters drawn from config.seed.
MSenseModel init_model(const MSenseConfig& config);

// Slot roles present under the config's ablation switches.
std::vector<Slot> active_slots(const MSenseConfig& config);

struct ForwardCache {
  std::vector<Slot> slots;
  nn::TransformerCache fusion;
  Tensor fuse_mask;  // dropout after fusion (empty if none)
  Tensor fused;      // H_sents after dropout
  std::vector<nn::TransformerCache> story;
  Tensor story_out;  // C_sents
  Tensor features;   // E_sents
  Tensor logits;
  Tensor probs;
};

// Fused rows for every sentence, L x d.
Tensor fuse_rows(const ChannelSet& channels, const MSenseConfig& config,
                 const ParameterSet& params, nn::TransformerCache* cache = nullptr,
                 nn::DropoutSpec dropout = {});

// Single-sentence fusion of three 1 x d vectors.
Tensor fuse(const Tensor& h_sem, const Tensor& h_int, const Tensor& h_emo,
            const MSenseModel& model);

Tensor encode_story(const Tensor& fused, const MSenseConfig& config, const ParameterSet& params,
                    std::vector<nn::TransformerCache>* caches = nullptr,
                    nn::DropoutSpec dropout = {});

// [c_i, cos(c_i, left), cos(c_i, right), cos(left, right)] per row, with
// truncated windows of up to `window` rows on each side.
Tensor interaction_features(const Tensor& story, int window, bool enabled = true);

// dL/d(story) contributed through the three similarity columns.
Tensor interaction_features_backward(const Tensor& story, int window, const Tensor& dfeatures);

Tensor classify(const Tensor& features, const ParameterSet& params);

// L x 3 probabilities, inference mode.
Tensor forward(const ChannelSet& channels, const MSenseConfig& config,
               const ParameterSet& params);
Tensor forward(const ChannelSet& channels, const MSenseModel& model);

// Class-weighted cross entropy summed over sentences. Writes the gradient
// into `grads` (accumulating) when non-null. A non-null `dropout_rng`
// selects training mode.
double narrative_loss(const ChannelSet& channels, const std::vector<Label>& labels,
                      const std::vector<double>& class_weights, const MSenseConfig& config,
                      const ParameterSet& params, GradientBuffer* grads,
                      Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr);

// Argmax per row; ties go to the earlier label.
std::vector<Label> decode(const Tensor& probs);

// Normalized inverse frequency, mean 1. Absent classes count as one.
std::vector<double> inverse_frequency_weights(const std::vector<std::vector<Label>>& labels);

// Supplies paraphrases of a sentence; empty when none are known.
class ParaphraseProvider {
 public:
  virtual ~ParaphraseProvider() = default;
  virtual std::vector<std::string> paraphrases(const std::string& sentence) const = 0;
};

// Lookup table read from JSON lines {"sentence": ..., "paraphrases": [...]}.
class TableParaphraseProvider : public ParaphraseProvider {
 public:
  TableParaphraseProvider() = default;
  explicit TableParaphraseProvider(const std::string& path);
  void add(const std::string& sentence, std::vector<std::string> paraphrases);
  std::vector<std::string> paraphrases(const std::string& sentence) const override;

 private:
  std::map<std::string, std::vector<std::string>> table_;
};

struct TrainingExample {
  Narrative narrative;
  std::vector<Label> labels;
  ChannelSet channels;
};

using ChannelEncoder = std::function<ChannelSet(const Narrative&)>;

// Rewrites at most floor(fraction * L) None-labelled sentences with
// paraphrases. Returns the number replaced.
int augment_narrative(Narrative& narrative, const std::vector<Label>& labels,
                      const ParaphraseProvider& provider, double fraction, Rng& rng);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_macro_f1 = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_macro_f1 = 0.0;
  bool stopped_early = false;
};

struct TrainResult {
  MSenseModel model;  // best-validation snapshot
  TrainingHistory history;
};

struct TrainOptions {
  const ParaphraseProvider* paraphrases = nullptr;
  ChannelEncoder encoder;  // needed to re-encode paraphrased narratives
  // Stop as soon as validation macro-F1 reaches this value.
  std::optional<double> target_macro_f1;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Validation falls back to the training set when `validation` is empty.
TrainResult train(const MSenseConfig& config, const std::vector<TrainingExample>& training,
                  const std::vector<TrainingExample>& validation, const TrainOptions& options = {});

LabelSequence predict(const MSenseModel& model, const Narrative& narrative,
                      const ChannelSet& channels);
std::vector<LabelSequence> predict_all(const MSenseModel& model,
                                       const std::vector<TrainingExample>& examples);

// Per sentence, the [FUSE] query's attention over the four slot roles,
// averaged over heads. Disabled channel slots carry weight 0.
struct FusionAttentionMap {
  std::vector<std::array<double, kNumSlots>> rows;
};

FusionAttentionMap extract_fusion_attention(const MSenseModel& model, const ChannelSet& channels);

// Snapshot: {"config": {...}, "parameters": <parameter file>}.
nlohmann::json snapshot_json(const MSenseModel& model);
MSenseModel model_from_json(const nlohmann::json& j);
void save_model(const MSenseModel& model, const std::string& path);
MSenseModel load_model(const std::string& path);

}  // namespace narrative::msense

#endif  // NARRATIVE_MSENSE_H_
