#include <cmath>
#include <cstdio>
#include <tuple>

#include "narrative/error.h"
#include "narrative/eval.h"
#include "narrative/util/files.h"
#include "narrative/util/hash.h"

namespace narrative::eval {

namespace {

struct RunScores {
  F1Report f1;
  double climax_distance = 0.0;
  double resolution_distance = 0.0;
};

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

int count_label(const std::vector<LabelSequence>& seqs, Label label) {
  int n = 0;
  for (const auto& s : seqs) n += static_cast<int>(s.indices_of(label).size());
  return n;
}

std::vector<NarrativeResult> per_narrative(const std::vector<LabelSequence>& predictions,
                                           const std::vector<LabelSequence>& golds) {
  std::vector<NarrativeResult> out;
  for (size_t i = 0; i < golds.size(); ++i) {
    NarrativeResult r;
    r.id = golds[i].narrative_id;
    const int len = golds[i].length();
    r.climax_distance = 100.0 * set_distance(predictions[i].indices_of(Label::kClimax),
                                             golds[i].indices_of(Label::kClimax), len);
    r.resolution_distance = 100.0 * set_distance(predictions[i].indices_of(Label::kResolution),
                                                 golds[i].indices_of(Label::kResolution), len);
    out.push_back(std::move(r));
  }
  return out;
}

void fill(EvaluationReport& report, const std::vector<RunScores>& runs,
          const std::vector<LabelSequence>& first_predictions,
          const std::vector<LabelSequence>& golds) {
  for (Label label : {Label::kClimax, Label::kResolution}) {
    std::vector<double> f1, dist;
    for (const auto& r : runs) {
      f1.push_back(r.f1.of(label).f1);
      dist.push_back(label == Label::kClimax ? r.climax_distance : r.resolution_distance);
    }
    ClassResult& c = label == Label::kClimax ? report.climax : report.resolution;
    std::tie(c.f1, c.f1_std) = mean_std(f1);
    std::tie(c.distance, c.distance_std) = mean_std(dist);
    c.gold_sentences = count_label(golds, label);
    c.predicted_sentences = count_label(first_predictions, label);
  }
  report.narratives = static_cast<int>(golds.size());
  report.runs = static_cast<int>(runs.size());
  report.per_narrative = per_narrative(first_predictions, golds);
}

RunScores score_run(const std::vector<LabelSequence>& predictions,
                    const std::vector<LabelSequence>& golds) {
  RunScores s;
  s.f1 = per_class_f1(predictions, golds);
  s.climax_distance = mean_annotation_distance(predictions, golds, Label::kClimax);
  s.resolution_distance = mean_annotation_distance(predictions, golds, Label::kResolution);
  return s;
}

nlohmann::ordered_json class_json(const ClassResult& c) {
  nlohmann::ordered_json j;
  j["f1"] = c.f1;
  j["f1_std"] = c.f1_std;
  j["distance"] = c.distance;
  j["distance_std"] = c.distance_std;
  j["gold_sentences"] = c.gold_sentences;
  j["predicted_sentences"] = c.predicted_sentences;
  return j;
}

nlohmann::ordered_json per_narrative_json(const std::vector<NarrativeResult>& rows,
                                          const char* climax_key, const char* resolution_key) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j[climax_key] = r.climax_distance;
    j[resolution_key] = r.resolution_distance;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

EvaluationReport evaluate_predictions(const std::vector<LabelSequence>& predictions,
                                      const std::vector<LabelSequence>& golds,
                                      const std::string& system) {
  EvaluationReport report;
  report.system = system;
  fill(report, {score_run(predictions, golds)}, predictions, golds);
  return report;
}

EvaluationReport evaluate(const Labeler& system, const Corpus& corpus, int runs,
                          uint64_t base_seed) {
  std::vector<LabelSequence> golds;
  for (const auto& e : corpus) {
    if (!e.gold) throw DataError("narrative " + e.narrative.id + " has no gold labels");
    golds.push_back(*e.gold);
  }
  if (!system.stochastic()) runs = 1;
  if (runs < 1) throw ArgumentError("evaluate: runs must be at least 1");

  EvaluationReport report;
  report.system = system.name();
  std::vector<RunScores> scores;
  std::vector<LabelSequence> first;
  for (int r = 0; r < runs; ++r) {
    const uint64_t seed = base_seed + static_cast<uint64_t>(r);
    report.seeds.push_back(seed);
    std::vector<LabelSequence> predictions;
    predictions.reserve(corpus.size());
    for (const auto& e : corpus) predictions.push_back(system.label(e.narrative, seed));
    scores.push_back(score_run(predictions, golds));
    if (r == 0) first = std::move(predictions);
  }
  fill(report, scores, first, golds);
  return report;
}

std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

nlohmann::ordered_json to_json(const EvaluationReport& report, const nlohmann::json& config) {
  nlohmann::ordered_json j;
  j["system"] = report.system;
  j["narratives"] = report.narratives;
  j["runs"] = report.runs;
  j["seeds"] = report.seeds;
  j["climax"] = class_json(report.climax);
  j["resolution"] = class_json(report.resolution);
  j["config"] = config;
  j["config_hash"] = config_hash(config);
  j["per_narrative"] = per_narrative_json(report.per_narrative, "climax_distance",
                                          "resolution_distance");
  return j;
}

std::vector<Synopsis> load_synopses(const std::string& path) {
  std::vector<Synopsis> out;
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Synopsis s;
      std::vector<std::string> sentences = j.at("sentences").get<std::vector<std::string>>();
      s.narrative = make_narrative(j.at("id").get<std::string>(), j.value("title", std::string()),
                                   sentences);
      s.tp4 = j.value("tp4", std::vector<int>{});
      s.tp5 = j.value("tp5", std::vector<int>{});
      s.cast = j.value("cast", std::vector<std::string>{});
      for (const auto* tp : {&s.tp4, &s.tp5}) {
        for (int i : *tp) {
          if (i < 0 || i >= s.narrative.length()) {
            throw DataError("turning point index " + std::to_string(i) + " out of range");
          }
        }
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": malformed synopsis (" +
                      e.what() + ")");
    } catch (const DataError& e) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string protagonist_of(const Synopsis& synopsis) {
  if (synopsis.cast.empty() || synopsis.cast.front().empty()) {
    log_warning("synopsis " + synopsis.narrative.id + " has no cast list; using \"I\"");
    return "I";
  }
  return synopsis.cast.front();
}

TurningPointReport evaluate_turning_points(const ProtagonistLabeler& system,
                                           const std::vector<Synopsis>& synopses) {
  TurningPointReport report;
  report.synopses = static_cast<int>(synopses.size());
  double tp4 = 0.0, tp5 = 0.0;
  for (const auto& s : synopses) {
    const LabelSequence pred = system.label(s.narrative, protagonist_of(s));
    if (pred.length() != s.narrative.length()) {
      throw DataError("synopsis " + s.narrative.id + ": prediction length mismatch");
    }
    NarrativeResult r;
    r.id = s.narrative.id;
    const int len = s.narrative.length();
    r.climax_distance = 100.0 * set_distance(pred.indices_of(Label::kClimax), s.tp4, len);
    r.resolution_distance = 100.0 * set_distance(pred.indices_of(Label::kResolution), s.tp5, len);
    tp4 += r.climax_distance;
    tp5 += r.resolution_distance;
    report.per_synopsis.push_back(std::move(r));
  }
  if (!synopses.empty()) {
    report.tp4_distance = tp4 / static_cast<double>(synopses.size());
    report.tp5_distance = tp5 / static_cast<double>(synopses.size());
  }
  return report;
}

nlohmann::ordered_json to_json(const TurningPointReport& report) {
  nlohmann::ordered_json j;
  j["synopses"] = report.synopses;
  j["tp4_distance"] = report.tp4_distance;
  j["tp5_distance"] = report.tp5_distance;
  j["per_synopsis"] = per_narrative_json(report.per_synopsis, "tp4_distance", "tp5_distance");
  return j;
}

}  // namespace narrative::eval
