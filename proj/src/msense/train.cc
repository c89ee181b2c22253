#include <algorithm>
#include <cmath>
#include <numeric>

#include "narrative/error.h"
#include "narrative/eval.h"
#include "narrative/msense.h"
#include "narrative/nn/adam.h"
#include "narrative/util/files.h"
#include "narrative/util/rng.h"

namespace narrative::msense {

TableParaphraseProvider::TableParaphraseProvider(const std::string& path) {
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      add(j.at("sentence").get<std::string>(),
          j.at("paraphrases").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception&) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": malformed paraphrase record");
    }
  }
}

void TableParaphraseProvider::add(const std::string& sentence,
                                  std::vector<std::string> paraphrases) {
  auto& entry = table_[sentence];
  for (auto& p : paraphrases) {
    if (!p.empty() && p != sentence) entry.push_back(std::move(p));
  }
}

std::vector<std::string> TableParaphraseProvider::paraphrases(const std::string& sentence) const {
  auto it = table_.find(sentence);
  return it == table_.end() ? std::vector<std::string>{} : it->second;
}

int augment_narrative(Narrative& narrative, const std::vector<Label>& labels,
                      const ParaphraseProvider& provider, double fraction, Rng& rng) {
  const int budget = static_cast<int>(std::floor(fraction * narrative.length()));
  if (budget <= 0) return 0;
  std::vector<int> candidates;
  for (int i = 0; i < narrative.length(); ++i) {
    if (labels[i] == Label::kNone) candidates.push_back(i);
  }
  rng.shuffle(candidates);
  int replaced = 0;
  for (int i : candidates) {
    if (replaced >= budget) break;
    Sentence& s = narrative.sentences[i];
    const std::vector<std::string> options = provider.paraphrases(s.text);
    if (options.empty()) continue;
    s.text = options[rng.below(options.size())];
    s.tokens = tokenize(s.text);
    ++replaced;
  }
  return replaced;
}

namespace {

double macro_f1(const MSenseModel& model, const std::vector<TrainingExample>& examples) {
  std::vector<LabelSequence> golds;
  golds.reserve(examples.size());
  for (const auto& e : examples) golds.push_back(LabelSequence{e.narrative.id, e.labels});
  return eval::per_class_f1(predict_all(model, examples), golds).macro();
}

}  // namespace

TrainResult train(const MSenseConfig& config, const std::vector<TrainingExample>& training,
                  const std::vector<TrainingExample>& validation, const TrainOptions& options) {
  config.validate();
  if (training.empty()) throw ArgumentError("training set is empty");
  for (const auto& e : training) {
    if (static_cast<int>(e.labels.size()) != e.narrative.length() ||
        e.channels.length() != e.narrative.length()) {
      throw ShapeError("training narrative " + e.narrative.id + " is misaligned");
    }
  }
  const bool augment = options.paraphrases != nullptr && static_cast<bool>(options.encoder);
  if (options.paraphrases != nullptr && !options.encoder) {
    log_warning("paraphrase provider given without an encoder; augmentation skipped");
  }

  std::vector<double> weights = config.class_weights;
  if (weights.empty()) {
    std::vector<std::vector<Label>> all;
    for (const auto& e : training) all.push_back(e.labels);
    weights = inverse_frequency_weights(all);
  }

  TrainResult result;
  MSenseModel model = init_model(config);
  result.model = model;
  const std::vector<TrainingExample>& monitor = validation.empty() ? training : validation;
  nn::AdamState adam;
  GradientBuffer batch_grads = model.params.make_gradient_buffer();

  std::vector<size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -1.0;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng order_rng(derive_seed({config.seed, 1, static_cast<uint64_t>(epoch)}));
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_narratives) {
      const size_t end = std::min(order.size(), start + config.batch_narratives);
      batch_grads.set_zero();
      for (size_t b = start; b < end; ++b) {
        const size_t idx = order[b];
        const TrainingExample& ex = training[idx];
        Rng drop_rng(derive_seed({config.seed, 2, static_cast<uint64_t>(epoch), idx}));
        if (augment) {
          Rng aug_rng(derive_seed({config.seed, 3, static_cast<uint64_t>(epoch), idx}));
          Narrative variant = ex.narrative;
          if (augment_narrative(variant, ex.labels, *options.paraphrases,
                                config.augment_fraction, aug_rng) > 0) {
            const ChannelSet channels = options.encoder(variant);
            epoch_loss += narrative_loss(channels, ex.labels, weights, config, model.params,
                                         &batch_grads, &drop_rng);
            continue;
          }
        }
        epoch_loss += narrative_loss(ex.channels, ex.labels, weights, config, model.params,
                                     &batch_grads, &drop_rng);
      }
      model.params.zero_grad();
      model.params.accumulate(batch_grads);
      nn::adam_step(model.params, adam, config.lr);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss;
    record.validation_macro_f1 = macro_f1(model, monitor);
    result.history.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);

    if (record.validation_macro_f1 > best) {
      best = record.validation_macro_f1;
      since_best = 0;
      result.model = model;
      result.history.best_epoch = epoch;
      result.history.best_macro_f1 = best;
    } else if (++since_best >= config.patience) {
      result.history.stopped_early = true;
      break;
    }
    if (options.target_macro_f1 && best >= *options.target_macro_f1) {
      result.history.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  return result;
}

}  // namespace narrative::msense
