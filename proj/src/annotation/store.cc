#include <chrono>
#include <ctime>
#include <fstream>
#include <sys/stat.h>

#include "narrative/annotation.h"
#include "narrative/error.h"
#include "narrative/util/files.h"

namespace narrative::annotation {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool same_content(const AnnotationRecord& a, const AnnotationRecord& b) {
  return a.narrative_id == b.narrative_id && a.annotator_id == b.annotator_id &&
         a.climax_indices == b.climax_indices && a.resolution_indices == b.resolution_indices &&
         a.no_climax == b.no_climax && a.no_resolution == b.no_resolution;
}

bool file_exists(const std::string& path) {
  struct stat st;
  return ::stat(path.c_str(), &st) == 0;
}

template <typename T>
void read_field(const nlohmann::json& j, const char* name, T* out, FieldErrors* errors,
                bool required) {
  if (!j.contains(name) || j[name].is_null()) {
    if (required) errors->emplace_back(name, "is required");
    return;
  }
  try {
    *out = j[name].get<T>();
  } catch (const nlohmann::json::exception&) {
    errors->emplace_back(name, "has the wrong type");
  }
}

}  // namespace

nlohmann::ordered_json to_json(const AnnotationRecord& r) {
  nlohmann::ordered_json j;
  j["narrative_id"] = r.narrative_id;
  j["annotator_id"] = r.annotator_id;
  j["climax_indices"] = r.climax_indices;
  j["resolution_indices"] = r.resolution_indices;
  j["no_climax"] = r.no_climax;
  j["no_resolution"] = r.no_resolution;
  j["submitted_at"] = r.submitted_at;
  return j;
}

std::optional<AnnotationRecord> record_from_json(const nlohmann::json& j, FieldErrors* errors) {
  FieldErrors local;
  FieldErrors& errs = errors ? *errors : local;
  if (!j.is_object()) {
    errs.emplace_back("body", "must be a JSON object");
    return std::nullopt;
  }
  const size_t before = errs.size();
  AnnotationRecord r;
  std::vector<int> climax, resolution;
  read_field(j, "narrative_id", &r.narrative_id, &errs, true);
  read_field(j, "annotator_id", &r.annotator_id, &errs, true);
  read_field(j, "climax_indices", &climax, &errs, false);
  read_field(j, "resolution_indices", &resolution, &errs, false);
  read_field(j, "no_climax", &r.no_climax, &errs, false);
  read_field(j, "no_resolution", &r.no_resolution, &errs, false);
  read_field(j, "submitted_at", &r.submitted_at, &errs, false);
  if (errs.size() != before) return std::nullopt;
  r.climax_indices.insert(climax.begin(), climax.end());
  r.resolution_indices.insert(resolution.begin(), resolution.end());
  return r;
}

nlohmann::ordered_json task_payload(const Narrative& narrative) {
  nlohmann::ordered_json j;
  j["id"] = narrative.id;
  j["title"] = narrative.title;
  nlohmann::ordered_json sentences = nlohmann::ordered_json::array();
  for (const auto& s : narrative.sentences) sentences.push_back(s.text);
  j["sentences"] = sentences;
  return j;
}

nlohmann::ordered_json to_json(const Progress& p) {
  nlohmann::ordered_json j;
  j["narratives"] = p.narratives;
  j["quota"] = p.quota;
  j["fully_annotated"] = p.fully_annotated;
  j["records"] = p.records;
  j["per_annotator"] = p.per_annotator;
  return j;
}

std::map<std::string, std::map<std::string, AnnotationRecord>> replay(
    const std::vector<AnnotationRecord>& log) {
  std::map<std::string, std::map<std::string, AnnotationRecord>> index;
  for (const auto& r : log) index[r.narrative_id][r.annotator_id] = r;
  return index;
}

AnnotationStore::AnnotationStore(Corpus corpus, std::string log_path, int quota)
    : corpus_(std::move(corpus)), log_path_(std::move(log_path)), quota_(quota) {
  if (corpus_.empty()) throw DataError("annotation corpus is empty");
  if (quota_ < 1) throw ArgumentError("annotator quota must be at least 1");
  for (const auto& e : corpus_) lengths_[e.narrative.id] = e.narrative.length();
  if (log_path_.empty() || !file_exists(log_path_)) return;
  int line_no = 0;
  for (const auto& line : read_lines(log_path_)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    FieldErrors errors;
    std::optional<AnnotationRecord> r;
    try {
      r = record_from_json(nlohmann::json::parse(line), &errors);
    } catch (const nlohmann::json::exception&) {
    }
    auto it = r ? lengths_.find(r->narrative_id) : lengths_.end();
    if (!r || it == lengths_.end() || !validate_annotation(*r, it->second).empty()) {
      log_warning(log_path_ + ": line " + std::to_string(line_no) + ": record skipped");
      continue;
    }
    apply(*r);
  }
}

void AnnotationStore::apply(const AnnotationRecord& record) {
  log_.push_back(record);
  latest_[record.narrative_id][record.annotator_id] = record;
  outstanding_[record.narrative_id].erase(record.annotator_id);
}

int AnnotationStore::completed(const std::string& narrative_id) const {
  auto it = latest_.find(narrative_id);
  return it == latest_.end() ? 0 : static_cast<int>(it->second.size());
}

bool AnnotationStore::has_narrative(const std::string& narrative_id) const {
  return lengths_.count(narrative_id) > 0;
}

std::optional<Narrative> AnnotationStore::next_task(const std::string& annotator_id) {
  if (annotator_id.empty()) throw ArgumentError("annotator id must be nonempty");
  std::lock_guard<std::mutex> lock(mu_);
  auto done_by = [&](const std::string& id) {
    auto it = latest_.find(id);
    return it != latest_.end() && it->second.count(annotator_id) > 0;
  };
  for (const auto& e : corpus_) {
    const auto& id = e.narrative.id;
    if (outstanding_[id].count(annotator_id) && !done_by(id)) return e.narrative;
  }
  const Narrative* best = nullptr;
  int best_load = 0;
  for (const auto& e : corpus_) {
    const auto& id = e.narrative.id;
    if (done_by(id)) continue;
    const int load = completed(id) + static_cast<int>(outstanding_[id].size());
    if (load >= quota_) continue;
    if (!best || load < best_load) {
      best = &e.narrative;
      best_load = load;
    }
  }
  if (!best) return std::nullopt;
  outstanding_[best->id].insert(annotator_id);
  return *best;
}

SubmitResult AnnotationStore::submit(AnnotationRecord record) {
  SubmitResult result;
  auto len = lengths_.find(record.narrative_id);
  if (len == lengths_.end()) {
    result.errors.emplace_back("narrative_id", "unknown narrative");
    return result;
  }
  result.errors = validate_annotation(record, len->second);
  if (!result.errors.empty()) return result;

  std::lock_guard<std::mutex> lock(mu_);
  auto& annotators = latest_[record.narrative_id];
  auto prior = annotators.find(record.annotator_id);
  if (prior != annotators.end()) {
    const bool identical = record.submitted_at.empty()
                               ? same_content(record, prior->second)
                               : record == prior->second;
    if (identical) {
      result.status = SubmitStatus::kDuplicate;
      result.stored = prior->second;
      return result;
    }
  } else if (static_cast<int>(annotators.size()) >= quota_) {
    result.errors.emplace_back("narrative_id", "annotation quota of " + std::to_string(quota_) +
                                                   " already reached");
    return result;
  }
  if (record.submitted_at.empty()) record.submitted_at = utc_now();
  if (!log_path_.empty()) {
    std::ofstream out(log_path_, std::ios::app | std::ios::binary);
    out << to_json(record).dump() << '\n';
    out.flush();
    if (!out) throw IoError("cannot append to " + log_path_);
  }
  apply(record);
  result.status = SubmitStatus::kAccepted;
  result.stored = record;
  return result;
}

std::vector<AnnotationRecord> AnnotationStore::annotations_for(
    const std::string& narrative_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<AnnotationRecord> out;
  auto it = latest_.find(narrative_id);
  if (it == latest_.end()) return out;
  for (const auto& [annotator, record] : it->second) out.push_back(record);
  return out;
}

std::vector<AnnotationRecord> AnnotationStore::log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

std::optional<eval::AgreementReport> AnnotationStore::agreement() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<eval::AnnotatedNarrative> data;
  for (const auto& e : corpus_) {
    auto it = latest_.find(e.narrative.id);
    if (it == latest_.end() || static_cast<int>(it->second.size()) < quota_) continue;
    eval::AnnotatedNarrative n;
    n.narrative_id = e.narrative.id;
    n.length = e.narrative.length();
    for (const auto& [annotator, record] : it->second) n.records.push_back(record);
    data.push_back(std::move(n));
  }
  if (data.empty() || quota_ < 2) return std::nullopt;
  return eval::agreement_report(data);
}

Progress AnnotationStore::progress() const {
  std::lock_guard<std::mutex> lock(mu_);
  Progress p;
  p.narratives = static_cast<int>(corpus_.size());
  p.quota = quota_;
  p.records = static_cast<int>(log_.size());
  for (const auto& [id, annotators] : latest_) {
    if (static_cast<int>(annotators.size()) >= quota_) ++p.fully_annotated;
    for (const auto& [annotator, record] : annotators) ++p.per_annotator[annotator];
  }
  return p;
}

}  // namespace narrative::annotation
