#include "narrative/corpus.h"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "narrative/error.h"
#include "narrative/util/files.h"
#include "narrative/util/rng.h"

namespace narrative {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view label_name(Label label) {
  switch (label) {
    case Label::kNone:
      return "none";
    case Label::kClimax:
      return "climax";
    case Label::kResolution:
      return "resolution";
  }
  return "none";
}

Label parse_label(std::string_view name) {
  if (name == "none") return Label::kNone;
  if (name == "climax") return Label::kClimax;
  if (name == "resolution") return Label::kResolution;
  throw DataError("unknown label '" + std::string(name) + "'");
}

std::vector<int> LabelSequence::indices_of(Label label) const {
  std::vector<int> out;
  for (int i = 0; i < length(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

Narrative make_narrative(std::string id, std::string title,
                         const std::vector<std::string>& sentences,
                         std::map<std::string, std::string> meta) {
  Narrative n;
  n.id = std::move(id);
  n.title = std::move(title);
  n.meta = std::move(meta);
  n.sentences.reserve(sentences.size());
  for (size_t i = 0; i < sentences.size(); ++i) {
    n.sentences.push_back(
        Sentence{static_cast<int>(i), sentences[i], tokenize(sentences[i])});
  }
  return n;
}

std::vector<std::pair<std::string, std::string>> validate_annotation(
    const AnnotationRecord& record, int length) {
  std::vector<std::pair<std::string, std::string>> errors;
  if (record.narrative_id.empty()) {
    errors.emplace_back("narrative_id", "must be nonempty");
  }
  if (record.annotator_id.empty()) {
    errors.emplace_back("annotator_id", "must be nonempty");
  }
  auto check_range = [&](const std::set<int>& idx, const char* field) {
    for (int i : idx) {
      if (i < 0 || i >= length) {
        errors.emplace_back(field, "index " + std::to_string(i) +
                                       " outside [0, " + std::to_string(length) +
                                       ")");
      }
    }
  };
  check_range(record.climax_indices, "climax_indices");
  check_range(record.resolution_indices, "resolution_indices");
  if (record.no_climax && !record.climax_indices.empty()) {
    errors.emplace_back("no_climax", "set while climax_indices is nonempty");
  }
  if (record.no_resolution && !record.resolution_indices.empty()) {
    errors.emplace_back("no_resolution", "set while resolution_indices is nonempty");
  }
  for (int i : record.climax_indices) {
    if (record.resolution_indices.count(i)) {
      errors.emplace_back("resolution_indices",
                          "sentence " + std::to_string(i) + " also marked climax");
    }
  }
  return errors;
}

namespace {

CorpusEntry parse_entry(const std::string& line, int line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(where + "malformed record (" + e.what() + ")");
  }
  if (!j.is_object()) throw DataError(where + "record is not an object");
  CorpusEntry entry;
  try {
    std::map<std::string, std::string> meta;
    if (j.contains("meta") && !j["meta"].is_null()) {
      meta = j["meta"].get<std::map<std::string, std::string>>();
    }
    entry.narrative = make_narrative(
        j.at("id").get<std::string>(), j.value("title", std::string()),
        j.at("sentences").get<std::vector<std::string>>(), std::move(meta));
  } catch (const json::exception& e) {
    throw DataError(where + "malformed record (" + e.what() + ")");
  }
  const Narrative& n = entry.narrative;
  if (n.id.empty()) throw DataError(where + "empty id");
  if (n.sentences.empty()) throw DataError(where + "narrative " + n.id + " has no sentences");
  if (j.contains("labels") && !j["labels"].is_null()) {
    LabelSequence seq;
    seq.narrative_id = n.id;
    try {
      for (const auto& l : j["labels"]) seq.labels.push_back(parse_label(l.get<std::string>()));
    } catch (const json::exception& e) {
      throw DataError(where + "malformed labels (" + e.what() + ")");
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (seq.length() != n.length()) {
      throw DataError("narrative " + n.id + ": " + std::to_string(seq.length()) +
                      " labels for " + std::to_string(n.length()) + " sentences");
    }
    entry.gold = std::move(seq);
  }
  return entry;
}

}  // namespace

Corpus parse_corpus(std::string_view contents) {
  Corpus corpus;
  std::set<std::string> seen;
  size_t start = 0;
  int line_no = 0;
  while (start < contents.size()) {
    size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string line(contents.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    CorpusEntry entry = parse_entry(line, line_no);
    if (!seen.insert(entry.narrative.id).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate id " +
                      entry.narrative.id);
    }
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) { return parse_corpus(read_file(path)); }

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& entry : corpus) {
    const Narrative& n = entry.narrative;
    ordered_json j;
    j["id"] = n.id;
    j["title"] = n.title;
    json sentences = json::array();
    for (const auto& s : n.sentences) sentences.push_back(s.text);
    j["sentences"] = sentences;
    if (entry.gold) {
      if (entry.gold->length() != n.length()) {
        throw DataError("narrative " + n.id + ": label/sentence length mismatch");
      }
      json labels = json::array();
      for (Label l : entry.gold->labels) labels.push_back(std::string(label_name(l)));
      j["labels"] = labels;
    }
    if (!n.meta.empty()) j["meta"] = n.meta;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

CorpusSplit split_corpus(const Corpus& corpus, std::array<double, 3> ratios,
                         uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ArgumentError("split ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("split ratios must sum to 1");
  if (corpus.size() < 3) throw ArgumentError("split needs at least 3 narratives");

  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& e : corpus) ids.push_back(e.narrative.id);
  Rng rng(seed);
  rng.shuffle(ids);

  const double n = static_cast<double>(ids.size());
  const size_t cut1 = static_cast<size_t>(std::llround(ratios[0] * n));
  const size_t cut2 =
      std::max(cut1, static_cast<size_t>(std::llround((ratios[0] + ratios[1]) * n)));
  CorpusSplit split;
  split.train.assign(ids.begin(), ids.begin() + cut1);
  split.validation.assign(ids.begin() + cut1, ids.begin() + cut2);
  split.test.assign(ids.begin() + cut2, ids.end());
  return split;
}

LabelSequence merge_annotations(const std::vector<AnnotationRecord>& records,
                                int length) {
  if (records.empty()) throw ArgumentError("merge_annotations needs at least one record");
  const std::string& id = records.front().narrative_id;
  std::vector<int> climax(length, 0), resolution(length, 0);
  for (const auto& r : records) {
    if (r.narrative_id != id) {
      throw DataError("annotations mix narratives " + id + " and " + r.narrative_id);
    }
    for (int i : r.climax_indices) {
      if (i >= 0 && i < length) ++climax[i];
    }
    for (int i : r.resolution_indices) {
      if (i >= 0 && i < length) ++resolution[i];
    }
  }
  const int n = static_cast<int>(records.size());
  LabelSequence seq;
  seq.narrative_id = id;
  seq.labels.assign(length, Label::kNone);
  for (int i = 0; i < length; ++i) {
    // Strictly more than half: 2 * votes > n.
    if (2 * climax[i] > n) {
      seq.labels[i] = Label::kClimax;
    } else if (2 * resolution[i] > n) {
      seq.labels[i] = Label::kResolution;
    }
  }
  return seq;
}

double normalized_position(int index, int length) {
  if (length <= 1) return 0.0;
  return static_cast<double>(index) / static_cast<double>(length - 1);
}

int position_bin(double position, int bins) {
  int b = static_cast<int>(std::floor(position * bins));
  return std::clamp(b, 0, bins - 1);
}

CorpusStats corpus_stats(const Corpus& corpus, int bins) {
  CorpusStats stats;
  stats.climax_histogram.assign(bins, 0);
  stats.resolution_histogram.assign(bins, 0);
  double climax_sum = 0.0, resolution_sum = 0.0;
  for (const auto& entry : corpus) {
    if (!entry.gold) {
      throw DataError("corpus_stats: narrative " + entry.narrative.id + " has no gold labels");
    }
    ++stats.narratives;
    const int len = entry.narrative.length();
    stats.sentences += len;
    for (int i = 0; i < len; ++i) {
      const double pos = normalized_position(i, len);
      switch (entry.gold->labels[i]) {
        case Label::kClimax:
          ++stats.climax_sentences;
          climax_sum += pos;
          ++stats.climax_histogram[position_bin(pos, bins)];
          break;
        case Label::kResolution:
          ++stats.resolution_sentences;
          resolution_sum += pos;
          ++stats.resolution_histogram[position_bin(pos, bins)];
          break;
        case Label::kNone:
          break;
      }
    }
  }
  if (stats.climax_sentences > 0) {
    stats.mean_climax_position = climax_sum / stats.climax_sentences;
  }
  if (stats.resolution_sentences > 0) {
    stats.mean_resolution_position = resolution_sum / stats.resolution_sentences;
  }
  return stats;
}

Corpus select_entries(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::map<std::string, const CorpusEntry*> by_id;
  for (const auto& e : corpus) by_id[e.narrative.id] = &e;
  Corpus out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown narrative id " + id);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace narrative
