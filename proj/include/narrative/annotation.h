#ifndef NARRATIVE_ANNOTATION_H_
#define NARRATIVE_ANNOTATION_H_

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "narrative/corpus.h"
#include "narrative/eval.h"

namespace httplib {
class Server;
}

namespace narrative::annotation {

using FieldErrors = std::vector<std::pair<std::string, std::string>>;

nlohmann::ordered_json to_json(const AnnotationRecord& record);
// Type problems are reported per field instead of thrown.
std::optional<AnnotationRecord> record_from_json(const nlohmann::json& j, FieldErrors* errors);

nlohmann::ordered_json task_payload(const Narrative& narrative);

enum class SubmitStatus { kAccepted, kDuplicate, kRejected };

struct SubmitResult {
  SubmitStatus status = SubmitStatus::kRejected;
  FieldErrors errors;
  AnnotationRecord stored;
};

struct Progress {
  int narratives = 0;
  int quota = 0;
  int fully_annotated = 0;
  int records = 0;  // log entries
  std::map<std::string, int> per_annotator;  // distinct narratives done
};

nlohmann::ordered_json to_json(const Progress& progress);

// Append-only record log with a latest-wins index per (narrative,
// annotator). Every method is safe to call from several threads.
class AnnotationStore {
 public:
  // Replays `log_path` when it exists. An empty path keeps the log in
  // memory only.
  AnnotationStore(Corpus corpus, std::string log_path, int quota = 3);

  // The narrative to serve next, or nullopt when this annotator has
  // nothing left.
  std::optional<Narrative> next_task(const std::string& annotator_id);

  SubmitResult submit(AnnotationRecord record);

  // Latest record per annotator, ordered by annotator id.
  std::vector<AnnotationRecord> annotations_for(const std::string& narrative_id) const;
  std::vector<AnnotationRecord> log() const;
  bool has_narrative(const std::string& narrative_id) const;

  // Over narratives that reached the quota; nullopt when there are none.
  std::optional<eval::AgreementReport> agreement() const;
  Progress progress() const;
  int quota() const { return quota_; }

 private:
  void apply(const AnnotationRecord& record);
  int completed(const std::string& narrative_id) const;

  Corpus corpus_;
  std::map<std::string, int> lengths_;
  std::string log_path_;
  int quota_;
  mutable std::mutex mu_;
  std::vector<AnnotationRecord> log_;
  std::map<std::string, std::map<std::string, AnnotationRecord>> latest_;
  std::map<std::string, std::set<std::string>> outstanding_;  // narrative -> annotators
};

// Rebuilds the latest-wins index from a record sequence.
std::map<std::string, std::map<std::string, AnnotationRecord>> replay(
    const std::vector<AnnotationRecord>& log);

// Registers the /api routes on `server`.
void install_routes(httplib::Server& server, AnnotationStore& store);

// Blocking HTTP service around a store. `static_dir`, when set, is served
// at "/".
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationStore& store, std::string static_dir = "");
  ~AnnotationServer();

  // Binds, returning the port (an ephemeral one when `port` is 0).
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();
  bool running() const;

 private:
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace narrative::annotation

#endif  // NARRATIVE_ANNOTATION_H_
