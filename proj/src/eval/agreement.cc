#include <cmath>
#include <map>

#include "narrative/error.h"
#include "narrative/eval.h"

namespace narrative::eval {

namespace {

void require_pairs(const std::vector<AnnotatedNarrative>& data) {
  for (const auto& n : data) {
    if (n.records.size() < 2) {
      throw ArgumentError("narrative " + n.narrative_id + " has fewer than 2 annotators");
    }
  }
}

const std::set<int>& indices(const AnnotationRecord& r, Label label) {
  return label == Label::kClimax ? r.climax_indices : r.resolution_indices;
}

Label resolve(const AnnotationRecord& r, int sentence) {
  if (r.climax_indices.count(sentence)) return Label::kClimax;
  if (r.resolution_indices.count(sentence)) return Label::kResolution;
  return Label::kNone;
}

std::vector<int> as_vector(const std::set<int>& s) { return {s.begin(), s.end()}; }

}  // namespace

double percentage_agreement(const std::vector<AnnotatedNarrative>& data, Label label) {
  require_pairs(data);
  double total = 0.0;
  long items = 0;
  for (const auto& n : data) {
    const double raters = static_cast<double>(n.records.size());
    const double pairs = raters * (raters - 1.0) / 2.0;
    for (int i = 0; i < n.length; ++i) {
      double in = 0.0;
      for (const auto& r : n.records) in += indices(r, label).count(i) ? 1.0 : 0.0;
      const double out = raters - in;
      total += (in * (in - 1.0) / 2.0 + out * (out - 1.0) / 2.0) / pairs;
      ++items;
    }
  }
  return items > 0 ? total / static_cast<double>(items) : 0.0;
}

double fleiss_kappa_counts(const std::vector<std::vector<int>>& counts) {
  if (counts.empty()) throw ArgumentError("fleiss_kappa: no items");
  const size_t categories = counts.front().size();
  int raters = -1;
  for (const auto& row : counts) {
    if (row.size() != categories) throw ArgumentError("fleiss_kappa: ragged count matrix");
    int n = 0;
    for (int c : row) n += c;
    if (raters < 0) raters = n;
    if (n != raters) throw ArgumentError("fleiss_kappa: items rated by different numbers of annotators");
  }
  if (raters < 2) throw ArgumentError("fleiss_kappa: needs at least 2 raters per item");

  const double n = raters;
  const double items = static_cast<double>(counts.size());
  std::vector<double> column(categories, 0.0);
  double agreement_sum = 0.0;
  for (const auto& row : counts) {
    double sq = 0.0;
    for (size_t j = 0; j < categories; ++j) {
      sq += static_cast<double>(row[j]) * row[j];
      column[j] += row[j];
    }
    agreement_sum += (sq - n) / (n * (n - 1.0));
  }
  const double observed = agreement_sum / items;
  double expected = 0.0;
  for (double c : column) {
    const double p = c / (items * n);
    expected += p * p;
  }
  if (std::abs(1.0 - expected) < 1e-12) return std::abs(1.0 - observed) < 1e-12 ? 1.0 : 0.0;
  return (observed - expected) / (1.0 - expected);
}

double fleiss_kappa(const std::vector<AnnotatedNarrative>& data) {
  require_pairs(data);
  std::vector<std::vector<int>> counts;
  for (const auto& n : data) {
    for (int i = 0; i < n.length; ++i) {
      std::vector<int> row(kNumLabels, 0);
      for (const auto& r : n.records) ++row[static_cast<int>(resolve(r, i))];
      counts.push_back(std::move(row));
    }
  }
  return fleiss_kappa_counts(counts);
}

double fleiss_kappa(const std::vector<AnnotatedNarrative>& data, Label label) {
  require_pairs(data);
  std::vector<std::vector<int>> counts;
  for (const auto& n : data) {
    for (int i = 0; i < n.length; ++i) {
      int in = 0;
      for (const auto& r : n.records) in += resolve(r, i) == label ? 1 : 0;
      counts.push_back({in, static_cast<int>(n.records.size()) - in});
    }
  }
  return fleiss_kappa_counts(counts);
}

double annotator_distance(const std::vector<AnnotatedNarrative>& data, Label label) {
  require_pairs(data);
  double total = 0.0;
  long pairs = 0;
  for (const auto& n : data) {
    for (size_t a = 0; a < n.records.size(); ++a) {
      for (size_t b = a + 1; b < n.records.size(); ++b) {
        total += set_distance(as_vector(indices(n.records[a], label)),
                              as_vector(indices(n.records[b], label)), n.length);
        ++pairs;
      }
    }
  }
  return pairs > 0 ? 100.0 * total / static_cast<double>(pairs) : 0.0;
}

AgreementReport agreement_report(const std::vector<AnnotatedNarrative>& data) {
  AgreementReport report;
  report.narratives = static_cast<int>(data.size());
  if (!data.empty()) report.annotators_per_narrative = static_cast<int>(data.front().records.size());
  for (Label label : {Label::kClimax, Label::kResolution}) {
    ClassAgreement& c = label == Label::kClimax ? report.climax : report.resolution;
    c.percentage_agreement = percentage_agreement(data, label);
    c.kappa = fleiss_kappa(data, label);
    c.distance = annotator_distance(data, label);
  }
  report.kappa_all_labels = fleiss_kappa(data);
  return report;
}

nlohmann::ordered_json to_json(const AgreementReport& report) {
  nlohmann::ordered_json j;
  for (Label label : {Label::kClimax, Label::kResolution}) {
    const ClassAgreement& c = label == Label::kClimax ? report.climax : report.resolution;
    nlohmann::ordered_json cj;
    cj["percentage_agreement"] = c.percentage_agreement;
    cj["fleiss_kappa"] = c.kappa;
    cj["mean_annotation_distance"] = c.distance;
    j[std::string(label_name(label))] = cj;
  }
  j["fleiss_kappa_all_labels"] = report.kappa_all_labels;
  j["narratives"] = report.narratives;
  j["annotators_per_narrative"] = report.annotators_per_narrative;
  return j;
}

std::vector<AnnotatedNarrative> group_annotations(const std::vector<AnnotationRecord>& records,
                                                  const Corpus& corpus) {
  std::map<std::string, int> lengths;
  for (const auto& e : corpus) lengths[e.narrative.id] = e.narrative.length();
  // Later records replace earlier ones from the same annotator.
  std::map<std::string, std::map<std::string, AnnotationRecord>> latest;
  for (const auto& r : records) {
    if (!lengths.count(r.narrative_id)) {
      throw DataError("annotation for unknown narrative " + r.narrative_id);
    }
    latest[r.narrative_id][r.annotator_id] = r;
  }
  std::vector<AnnotatedNarrative> out;
  for (const auto& e : corpus) {
    auto it = latest.find(e.narrative.id);
    if (it == latest.end()) continue;
    AnnotatedNarrative n;
    n.narrative_id = e.narrative.id;
    n.length = e.narrative.length();
    for (auto& [annotator, record] : it->second) n.records.push_back(record);
    out.push_back(std::move(n));
  }
  return out;
}

}  // namespace narrative::eval
