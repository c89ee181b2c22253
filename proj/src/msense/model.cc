#include <algorithm>
#include <cmath>

#include "narrative/error.h"
#include "narrative/msense.h"
#include "narrative/nn/ops.h"
#include "narrative/util/files.h"
#include "narrative/util/rng.h"

namespace narrative::msense {

namespace {

const char* kFusionPrefix = "fusion.";

std::string story_prefix(int layer) { return "story." + std::to_string(layer) + "."; }

const Tensor& channel_rows(const ChannelSet& channels, Slot slot) {
  switch (slot) {
    case kSemSlot:
      return channels.sem.rows;
    case kIntentSlot:
      return channels.intent.rows;
    default:
      return channels.react.rows;
  }
}

void check_channels(const ChannelSet& channels, const MSenseConfig& config) {
  const Eigen::Index rows = channels.sem.rows.rows();
  if (rows < 1) throw ShapeError("narrative has no sentences");
  for (Slot slot : active_slots(config)) {
    if (slot == kFuseSlot) continue;
    const Tensor& t = channel_rows(channels, slot);
    if (t.rows() != rows) {
      throw ShapeError("channel rows misaligned: " + std::to_string(t.rows()) + " vs " +
                       std::to_string(rows));
    }
    if (t.cols() != config.d) {
      throw ShapeError("channel width " + std::to_string(t.cols()) + " does not match d = " +
                       std::to_string(config.d));
    }
  }
}

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

// Adds g * d cos(a, b) / da and / db.
void cosine_backward(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double g,
                     Eigen::RowVectorXd& da, Eigen::RowVectorXd& db) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0 || g == 0.0) return;
  const double c = a.dot(b) / (na * nb);
  da += g * (b / (na * nb) - c * a / (na * na));
  db += g * (a / (na * nb) - c * b / (nb * nb));
}

struct Window {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
};

Window left_window(int i, int window) { return {std::max(0, i - window), i}; }
Window right_window(int i, int window, int length) {
  return {i + 1, std::min(length, i + window + 1)};
}

Eigen::RowVectorXd window_mean(const Tensor& rows, Window w) {
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(rows.cols());
  if (w.size() <= 0) return mean;
  for (int r = w.begin; r < w.end; ++r) mean += rows.row(r);
  return mean / static_cast<double>(w.size());
}

// Stacks the per-sentence slot sequences into (L * S) x d rows.
Tensor slot_input(const ChannelSet& channels, const std::vector<Slot>& slots,
                  const ParameterSet& params) {
  const Tensor& fuse_vector = params.value("fuse_vector");
  const Tensor& types = params.value("slot_type");
  const int length = static_cast<int>(channels.sem.rows.rows());
  const int s = static_cast<int>(slots.size());
  Tensor x(length * s, fuse_vector.cols());
  for (int i = 0; i < length; ++i) {
    for (int k = 0; k < s; ++k) {
      const Slot slot = slots[k];
      if (slot == kFuseSlot) {
        x.row(i * s + k) = fuse_vector.row(0) + types.row(slot);
      } else {
        x.row(i * s + k) = channel_rows(channels, slot).row(i) + types.row(slot);
      }
    }
  }
  return x;
}

}  // namespace

void MSenseConfig::validate() const {
  if (d <= 0 || d % 2 != 0) throw ArgumentError("d must be a positive even number");
  if (n_heads <= 0 || d % n_heads != 0) throw ArgumentError("d must be divisible by n_heads");
  if (n_layers < 0) throw ArgumentError("n_layers must be nonnegative");
  if (window < 1) throw ArgumentError("window must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("dropout must be in [0, 1)");
  if (lr < 0.0) throw ArgumentError("lr must be nonnegative");
  if (batch_narratives < 1) throw ArgumentError("batch_narratives must be at least 1");
  if (max_epochs < 0) throw ArgumentError("max_epochs must be nonnegative");
  if (patience < 1) throw ArgumentError("patience must be at least 1");
  if (augment_fraction <= 0.0 || augment_fraction > 1.0) {
    throw ArgumentError("augment_fraction must be in (0, 1]");
  }
  if (!class_weights.empty() && class_weights.size() != kNumLabels) {
    throw ArgumentError("class_weights needs one value per label");
  }
  for (double w : class_weights) {
    if (!(w > 0.0)) throw ArgumentError("class weights must be positive");
  }
}

nlohmann::ordered_json to_json(const MSenseConfig& c) {
  nlohmann::ordered_json j;
  j["d"] = c.d;
  j["n_heads"] = c.n_heads;
  j["n_layers"] = c.n_layers;
  j["window"] = c.window;
  j["dropout"] = c.dropout;
  j["lr"] = c.lr;
  j["batch_narratives"] = c.batch_narratives;
  j["use_fusion"] = c.use_fusion;
  j["use_intent"] = c.use_intent;
  j["use_emotion"] = c.use_emotion;
  j["use_interaction"] = c.use_interaction;
  j["use_story_encoder"] = c.use_story_encoder;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["augment_fraction"] = c.augment_fraction;
  j["class_weights"] = c.class_weights;
  return j;
}

MSenseConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("model config must be an object");
  MSenseConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "d") c.d = value.get<int>();
      else if (key == "n_heads") c.n_heads = value.get<int>();
      else if (key == "n_layers") c.n_layers = value.get<int>();
      else if (key == "window") c.window = value.get<int>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "batch_narratives") c.batch_narratives = value.get<int>();
      else if (key == "use_fusion") c.use_fusion = value.get<bool>();
      else if (key == "use_intent") c.use_intent = value.get<bool>();
      else if (key == "use_emotion") c.use_emotion = value.get<bool>();
      else if (key == "use_interaction") c.use_interaction = value.get<bool>();
      else if (key == "use_story_encoder") c.use_story_encoder = value.get<bool>();
      else if (key == "max_epochs") c.max_epochs = value.get<int>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else if (key == "augment_fraction") c.augment_fraction = value.get<double>();
      else if (key == "class_weights") c.class_weights = value.get<std::vector<double>>();
      else throw DataError("unknown model config key: " + key);
    } catch (const nlohmann::json::exception&) {
      throw DataError("model config key " + key + " has the wrong type");
    }
  }
  c.validate();
  return c;
}

std::vector<Slot> active_slots(const MSenseConfig& config) {
  std::vector<Slot> slots = {kFuseSlot, kSemSlot};
  if (config.use_intent) slots.push_back(kIntentSlot);
  if (config.use_emotion) slots.push_back(kReactSlot);
  return slots;
}

MSenseModel init_model(const MSenseConfig& config) {
  config.validate();
  MSenseModel model;
  model.config = config;
  Rng rng(derive_seed({config.seed, 0x6d73656e7365ULL}));
  const int d = config.d;
  model.params.add("fuse_vector", nn::normal_init(1, d, 0.1, rng));
  model.params.add("slot_type", nn::normal_init(kNumSlots, d, 0.1, rng));
  nn::add_transformer_params(model.params, kFusionPrefix, d, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    nn::add_transformer_params(model.params, story_prefix(l), d, rng);
  }
  model.params.add("classifier.w", nn::xavier_uniform(d + 3, kNumLabels, rng));
  model.params.add("classifier.b", Tensor::Zero(1, kNumLabels));
  return model;
}

Tensor fuse_rows(const ChannelSet& channels, const MSenseConfig& config,
                 const ParameterSet& params, nn::TransformerCache* cache,
                 nn::DropoutSpec dropout) {
  check_channels(channels, config);
  if (!config.use_fusion) return channels.sem.rows;
  const std::vector<Slot> slots = active_slots(config);
  const int length = static_cast<int>(channels.sem.rows.rows());
  const int s = static_cast<int>(slots.size());
  const Tensor out =
      nn::transformer_layer(slot_input(channels, slots, params),
                            nn::transformer_weights(params, kFusionPrefix), config.n_heads,
                            cache, length, dropout);
  Tensor fused(length, config.d);
  for (int i = 0; i < length; ++i) fused.row(i) = out.row(i * s);
  return fused;
}

Tensor fuse(const Tensor& h_sem, const Tensor& h_int, const Tensor& h_emo,
            const MSenseModel& model) {
  const int d = model.config.d;
  for (const Tensor* t : {&h_sem, &h_int, &h_emo}) {
    if (t->rows() != 1 || t->cols() != d) {
      throw ShapeError("fuse expects 1 x " + std::to_string(d) + " inputs");
    }
  }
  ChannelSet channels;
  channels.sem.rows = h_sem;
  channels.intent.rows = h_int;
  channels.react.rows = h_emo;
  return fuse_rows(channels, model.config, model.params);
}

Tensor encode_story(const Tensor& fused, const MSenseConfig& config, const ParameterSet& params,
                    std::vector<nn::TransformerCache>* caches, nn::DropoutSpec dropout) {
  if (fused.rows() < 1) throw ShapeError("story encoder needs at least one sentence");
  if (!config.use_story_encoder || config.n_layers == 0) return fused;
  Tensor x = fused + nn::positional_encoding(static_cast<int>(fused.rows()), config.d);
  if (caches) caches->assign(config.n_layers, {});
  for (int l = 0; l < config.n_layers; ++l) {
    x = nn::transformer_layer(x, nn::transformer_weights(params, story_prefix(l)),
                              config.n_heads, caches ? &(*caches)[l] : nullptr, 1, dropout);
  }
  return x;
}

Tensor interaction_features(const Tensor& story, int window, bool enabled) {
  if (window < 1) throw ArgumentError("window must be at least 1");
  const int length = static_cast<int>(story.rows());
  const int d = static_cast<int>(story.cols());
  Tensor out = Tensor::Zero(length, d + 3);
  out.leftCols(d) = story;
  if (!enabled) return out;
  for (int i = 0; i < length; ++i) {
    const Eigen::RowVectorXd c = story.row(i);
    const Eigen::RowVectorXd left = window_mean(story, left_window(i, window));
    const Eigen::RowVectorXd right = window_mean(story, right_window(i, window, length));
    out(i, d) = cosine(c, left);
    out(i, d + 1) = cosine(c, right);
    out(i, d + 2) = cosine(left, right);
  }
  return out;
}

Tensor interaction_features_backward(const Tensor& story, int window, const Tensor& dfeatures) {
  const int length = static_cast<int>(story.rows());
  const int d = static_cast<int>(story.cols());
  Tensor dstory = Tensor::Zero(length, d);
  for (int i = 0; i < length; ++i) {
    const Window lw = left_window(i, window);
    const Window rw = right_window(i, window, length);
    const Eigen::RowVectorXd c = story.row(i);
    const Eigen::RowVectorXd left = window_mean(story, lw);
    const Eigen::RowVectorXd right = window_mean(story, rw);
    Eigen::RowVectorXd dc = Eigen::RowVectorXd::Zero(d);
    Eigen::RowVectorXd dl = Eigen::RowVectorXd::Zero(d);
    Eigen::RowVectorXd dr = Eigen::RowVectorXd::Zero(d);
    cosine_backward(c, left, dfeatures(i, 0), dc, dl);
    cosine_backward(c, right, dfeatures(i, 1), dc, dr);
    cosine_backward(left, right, dfeatures(i, 2), dl, dr);
    dstory.row(i) += dc;
    for (int r = lw.begin; r < lw.end; ++r) dstory.row(r) += dl / lw.size();
    for (int r = rw.begin; r < rw.end; ++r) dstory.row(r) += dr / rw.size();
  }
  return dstory;
}

Tensor classify(const Tensor& features, const ParameterSet& params) {
  return nn::softmax(nn::linear(features, params.value("classifier.w"),
                                params.value("classifier.b")));
}

Tensor forward(const ChannelSet& channels, const MSenseConfig& config,
               const ParameterSet& params) {
  const Tensor fused = fuse_rows(channels, config, params);
  const Tensor story = encode_story(fused, config, params);
  return classify(interaction_features(story, config.window, config.use_interaction), params);
}

Tensor forward(const ChannelSet& channels, const MSenseModel& model) {
  return forward(channels, model.config, model.params);
}

double narrative_loss(const ChannelSet& channels, const std::vector<Label>& labels,
                      const std::vector<double>& class_weights, const MSenseConfig& config,
                      const ParameterSet& params, GradientBuffer* grads, Rng* dropout_rng,
                      ForwardCache* cache) {
  check_channels(channels, config);
  const int length = static_cast<int>(channels.sem.rows.rows());
  if (static_cast<int>(labels.size()) != length) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " vs " +
                     std::to_string(length) + " sentences");
  }
  if (class_weights.size() != kNumLabels) throw ArgumentError("need one weight per label");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const nn::DropoutSpec drop{config.dropout, dropout_rng};
  c.slots = active_slots(config);

  Tensor fused = fuse_rows(channels, config, params, &c.fusion, drop);
  if (drop.active()) {
    c.fuse_mask = nn::dropout_mask(fused.rows(), fused.cols(), config.dropout, *dropout_rng);
    fused = fused.cwiseProduct(c.fuse_mask);
  } else {
    c.fuse_mask.resize(0, 0);
  }
  c.fused = fused;
  c.story_out = encode_story(fused, config, params, &c.story, drop);
  c.features = interaction_features(c.story_out, config.window, config.use_interaction);
  c.logits = nn::linear(c.features, params.value("classifier.w"), params.value("classifier.b"));

  std::vector<int> targets(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) targets[i] = static_cast<int>(labels[i]);
  Tensor dlogits;
  const double loss = nn::softmax_cross_entropy_sum(c.logits, targets, class_weights, &c.probs,
                                                    grads ? &dlogits : nullptr);
  if (!grads) return loss;

  GradientBuffer& g = *grads;
  Tensor dfeatures;
  nn::linear_backward(c.features, params.value("classifier.w"), dlogits, &dfeatures,
                      &g["classifier.w"], &g["classifier.b"]);
  Tensor dstory = dfeatures.leftCols(config.d);
  if (config.use_interaction) {
    dstory += interaction_features_backward(c.story_out, config.window,
                                            dfeatures.rightCols(3));
  }

  Tensor dfused = dstory;
  if (config.use_story_encoder && config.n_layers > 0) {
    for (int l = config.n_layers - 1; l >= 0; --l) {
      const std::string prefix = story_prefix(l);
      dfused = nn::transformer_layer_backward(c.story[l], nn::transformer_weights(params, prefix),
                                              dfused, nn::transformer_grads(g, prefix));
    }
  }
  if (!config.use_fusion) return loss;
  if (c.fuse_mask.size()) dfused = dfused.cwiseProduct(c.fuse_mask);

  const int s = static_cast<int>(c.slots.size());
  Tensor dout = Tensor::Zero(length * s, config.d);
  for (int i = 0; i < length; ++i) dout.row(i * s) = dfused.row(i);
  const Tensor dslots = nn::transformer_layer_backward(
      c.fusion, nn::transformer_weights(params, kFusionPrefix), dout,
      nn::transformer_grads(g, kFusionPrefix));
  Tensor& dfuse_vector = g["fuse_vector"];
  Tensor& dtypes = g["slot_type"];
  for (int i = 0; i < length; ++i) {
    for (int k = 0; k < s; ++k) {
      const Slot slot = c.slots[k];
      dtypes.row(slot) += dslots.row(i * s + k);
      if (slot == kFuseSlot) dfuse_vector.row(0) += dslots.row(i * s + k);
    }
  }
  return loss;
}

std::vector<Label> decode(const Tensor& probs) {
  std::vector<Label> labels(probs.rows(), Label::kNone);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < probs.cols(); ++k) {
      if (probs(i, k) > probs(i, best)) best = k;
    }
    labels[i] = static_cast<Label>(best);
  }
  return labels;
}

std::vector<double> inverse_frequency_weights(const std::vector<std::vector<Label>>& labels) {
  std::array<double, kNumLabels> counts{};
  for (const auto& seq : labels) {
    for (Label l : seq) counts[static_cast<int>(l)] += 1.0;
  }
  std::vector<double> w(kNumLabels);
  double sum = 0.0;
  for (int k = 0; k < kNumLabels; ++k) {
    w[k] = 1.0 / std::max(counts[k], 1.0);
    sum += w[k];
  }
  for (double& x : w) x *= kNumLabels / sum;
  return w;
}

LabelSequence predict(const MSenseModel& model, const Narrative& narrative,
                      const ChannelSet& channels) {
  if (channels.length() != narrative.length()) {
    throw ShapeError("narrative " + narrative.id + ": channel rows do not match sentences");
  }
  return LabelSequence{narrative.id, decode(forward(channels, model))};
}

std::vector<LabelSequence> predict_all(const MSenseModel& model,
                                       const std::vector<TrainingExample>& examples) {
  std::vector<LabelSequence> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(predict(model, e.narrative, e.channels));
  return out;
}

FusionAttentionMap extract_fusion_attention(const MSenseModel& model, const ChannelSet& channels) {
  const MSenseConfig& config = model.config;
  if (!config.use_fusion) throw ArgumentError("fusion attention requires the fusion layer");
  nn::TransformerCache cache;
  fuse_rows(channels, config, model.params, &cache);
  const std::vector<Slot> slots = active_slots(config);
  const int heads = cache.attn.heads;
  FusionAttentionMap map;
  for (int i = 0; i < cache.attn.blocks; ++i) {
    std::array<double, kNumSlots> row{};
    for (int h = 0; h < heads; ++h) {
      const Tensor& p = cache.attn.probs[i * heads + h];
      for (size_t k = 0; k < slots.size(); ++k) row[slots[k]] += p(0, k) / heads;
    }
    map.rows.push_back(row);
  }
  return map;
}

nlohmann::json snapshot_json(const MSenseModel& model) {
  nlohmann::json j;
  j["config"] = to_json(model.config);
  j["parameters"] = model.params.to_json();
  return j;
}

MSenseModel model_from_json(const nlohmann::json& j) {
  if (!j.contains("config") || !j.contains("parameters")) {
    throw DataError("model snapshot needs config and parameters");
  }
  MSenseModel model;
  model.config = config_from_json(j.at("config"));
  model.params = ParameterSet::from_json(j.at("parameters"));
  const MSenseModel reference = init_model(model.config);
  for (const auto& name : reference.params.names()) {
    if (!model.params.contains(name)) throw DataError("snapshot is missing parameter " + name);
    const Tensor& a = model.params.value(name);
    const Tensor& b = reference.params.value(name);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw DataError("snapshot parameter " + name + " has the wrong shape");
    }
  }
  if (model.params.size() != reference.params.size()) {
    throw DataError("snapshot has unexpected parameters");
  }
  return model;
}

void save_model(const MSenseModel& model, const std::string& path) {
  write_file_atomic(path, snapshot_json(model).dump() + "\n");
}

MSenseModel load_model(const std::string& path) {
  try {
    return model_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed model snapshot (" + e.what() + ")");
  }
}

}  // namespace narrative::msense
