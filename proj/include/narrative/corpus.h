#ifndef NARRATIVE_CORPUS_H_
#define NARRATIVE_CORPUS_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace narrative {

// Sentence labels in their fixed tie-break order.
enum class Label : uint8_t { kNone = 0, kClimax = 1, kResolution = 2 };

constexpr int kNumLabels = 3;

std::string_view label_name(Label label);
Label parse_label(std::string_view name);  // throws DataError

struct Sentence {
  int index = 0;
  std::string text;
  std::vector<std::string> tokens;

  bool operator==(const Sentence&) const = default;
};

struct Narrative {
  std::string id;
  std::string title;
  std::vector<Sentence> sentences;
  std::map<std::string, std::string> meta;

  int length() const { return static_cast<int>(sentences.size()); }
  bool operator==(const Narrative&) const = default;
};

// Builds a narrative from raw sentence strings; tokens come from tokenize().
Narrative make_narrative(std::string id, std::string title,
                         const std::vector<std::string>& sentences,
                         std::map<std::string, std::string> meta = {});

struct LabelSequence {
  std::string narrative_id;
  std::vector<Label> labels;

  int length() const { return static_cast<int>(labels.size()); }
  std::vector<int> indices_of(Label label) const;
  bool operator==(const LabelSequence&) const = default;
};

// One annotator's highlights for one narrative.
struct AnnotationRecord {
  std::string narrative_id;
  std::string annotator_id;
  std::set<int> climax_indices;
  std::set<int> resolution_indices;
  bool no_climax = false;
  bool no_resolution = false;
  std::string submitted_at;  // ISO-8601 UTC

  bool operator==(const AnnotationRecord&) const = default;
};

// Returns field-level violations of the record invariants against a
// narrative of `length` sentences; empty when valid.
std::vector<std::pair<std::string, std::string>> validate_annotation(
    const AnnotationRecord& record, int length);

struct CorpusEntry {
  Narrative narrative;
  std::optional<LabelSequence> gold;

  bool operator==(const CorpusEntry&) const = default;
};

using Corpus = std::vector<CorpusEntry>;

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

// Corpus line format: one JSON object per line with `id`, `title`,
// `sentences`, optional `labels` and optional `meta`.
Corpus load_corpus(const std::string& path);
Corpus parse_corpus(std::string_view contents);
void save_corpus(const Corpus& corpus, const std::string& path);
std::string serialize_corpus(const Corpus& corpus);

// Splits on terminal punctuation followed by whitespace and an uppercase
// letter (or end of text). A few common abbreviations never end a sentence.
std::vector<Sentence> segment_sentences(std::string_view text);

// Whitespace split with leading/trailing punctuation peeled into separate
// tokens. Word-internal apostrophes and hyphens stay attached.
std::vector<std::string> tokenize(std::string_view text);

// Seeded shuffle, then cuts at cumulative ratio boundaries.
CorpusSplit split_corpus(const Corpus& corpus, std::array<double, 3> ratios,
                         uint64_t seed);

// Strict per-sentence majority vote over annotators. Climax takes
// precedence when a sentence clears both thresholds.
LabelSequence merge_annotations(const std::vector<AnnotationRecord>& records,
                                int length);

// Normalized position of sentence i in a narrative of length L.
double normalized_position(int index, int length);

constexpr int kPositionBins = 20;

int position_bin(double position, int bins = kPositionBins);

struct CorpusStats {
  int narratives = 0;
  int sentences = 0;
  int climax_sentences = 0;
  int resolution_sentences = 0;
  std::optional<double> mean_climax_position;
  std::optional<double> mean_resolution_position;
  std::vector<int> climax_histogram;
  std::vector<int> resolution_histogram;
};

CorpusStats corpus_stats(const Corpus& corpus, int bins = kPositionBins);

// Selects entries by id, in the order of `ids`.
Corpus select_entries(const Corpus& corpus, const std::vector<std::string>& ids);

}  // namespace narrative

#endif  // NARRATIVE_CORPUS_H_
