#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "narrative/error.h"
#include "narrative/eval.h"

namespace narrative::eval {

namespace {

void check_aligned(const std::vector<LabelSequence>& predictions,
                   const std::vector<LabelSequence>& golds) {
  if (predictions.size() != golds.size()) {
    throw DataError("prediction/gold narrative counts differ: " +
                    std::to_string(predictions.size()) + " vs " + std::to_string(golds.size()));
  }
  for (size_t i = 0; i < golds.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = golds[i];
    if (!p.narrative_id.empty() && !g.narrative_id.empty() && p.narrative_id != g.narrative_id) {
      throw DataError("misaligned narratives: " + p.narrative_id + " vs " + g.narrative_id);
    }
    if (p.length() != g.length()) {
      throw DataError("narrative " + g.narrative_id + ": predicted " +
                      std::to_string(p.length()) + " labels for " +
                      std::to_string(g.length()) + " gold labels");
    }
  }
}

ClassScores score(int tp, int fp, int fn) {
  ClassScores s;
  s.true_positives = tp;
  s.false_positives = fp;
  s.false_negatives = fn;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

}  // namespace

F1Report per_class_f1(const std::vector<LabelSequence>& predictions,
                      const std::vector<LabelSequence>& golds) {
  check_aligned(predictions, golds);
  int tp[3] = {0, 0, 0}, fp[3] = {0, 0, 0}, fn[3] = {0, 0, 0};
  for (size_t n = 0; n < golds.size(); ++n) {
    for (int i = 0; i < golds[n].length(); ++i) {
      const int p = static_cast<int>(predictions[n].labels[i]);
      const int g = static_cast<int>(golds[n].labels[i]);
      if (p == g) {
        ++tp[g];
      } else {
        ++fp[p];
        ++fn[g];
      }
    }
  }
  F1Report report;
  report.climax = score(tp[1], fp[1], fn[1]);
  report.resolution = score(tp[2], fp[2], fn[2]);
  return report;
}

double set_distance(const std::vector<int>& predicted, const std::vector<int>& gold,
                    int length) {
  if (predicted.empty() && gold.empty()) return 0.0;
  if (predicted.empty() || gold.empty()) return 1.0;
  if (length <= 0) throw ArgumentError("set_distance: length must be positive");
  std::vector<int> a = predicted, b = gold;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  int best = std::abs(a[0] - b[0]);
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size() && best > 0) {
    best = std::min(best, std::abs(a[i] - b[j]));
    if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(best) / static_cast<double>(length);
}

double mean_annotation_distance(const std::vector<LabelSequence>& predictions,
                                const std::vector<LabelSequence>& golds, Label label) {
  check_aligned(predictions, golds);
  if (golds.empty()) return 0.0;
  double total = 0.0;
  for (size_t n = 0; n < golds.size(); ++n) {
    total += set_distance(predictions[n].indices_of(label), golds[n].indices_of(label),
                          golds[n].length());
  }
  return 100.0 * total / static_cast<double>(golds.size());
}

}  // namespace narrative::eval
