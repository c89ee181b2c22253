#include <httplib.h>

#include "narrative/annotation.h"
#include "narrative/error.h"

namespace narrative::annotation {

namespace {

const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void error_reply(httplib::Response& res, int status, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = message;
  reply(res, status, j);
}

nlohmann::ordered_json errors_json(const FieldErrors& errors) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [field, message] : errors) {
    nlohmann::ordered_json e;
    e["field"] = field;
    e["message"] = message;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

void install_routes(httplib::Server& server, AnnotationStore& store) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  server.Get("/api/tasks/next", [&store](const httplib::Request& req, httplib::Response& res) {
    const std::string annotator = req.get_param_value("annotator_id");
    if (annotator.empty()) return error_reply(res, 400, "annotator_id is required");
    const auto task = store.next_task(annotator);
    if (!task) {
      res.status = 204;
      return;
    }
    reply(res, 200, task_payload(*task));
  });

  server.Post("/api/annotations", [&store](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      nlohmann::ordered_json j;
      j["errors"] = errors_json({{"body", "is not valid JSON"}});
      return reply(res, 422, j);
    }
    FieldErrors errors;
    const auto record = record_from_json(body, &errors);
    if (!record) {
      nlohmann::ordered_json j;
      j["errors"] = errors_json(errors);
      return reply(res, 422, j);
    }
    const SubmitResult result = store.submit(*record);
    if (result.status == SubmitStatus::kRejected) {
      nlohmann::ordered_json j;
      j["errors"] = errors_json(result.errors);
      return reply(res, 422, j);
    }
    reply(res, 201, to_json(result.stored));
  });

  server.Get("/api/annotations", [&store](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.get_param_value("narrative_id");
    if (id.empty()) return error_reply(res, 400, "narrative_id is required");
    if (!store.has_narrative(id)) return error_reply(res, 404, "unknown narrative " + id);
    nlohmann::ordered_json j;
    j["narrative_id"] = id;
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& r : store.annotations_for(id)) records.push_back(to_json(r));
    j["annotations"] = records;
    reply(res, 200, j);
  });

  server.Get("/api/agreement", [&store](const httplib::Request&, httplib::Response& res) {
    const auto report = store.agreement();
    nlohmann::ordered_json j;
    if (!report) {
      j["status"] = "insufficient_data";
      j["narratives"] = 0;
      return reply(res, 200, j);
    }
    j["status"] = "ok";
    const nlohmann::ordered_json body = eval::to_json(*report);
    for (const auto& [key, value] : body.items()) j[key] = value;
    reply(res, 200, j);
  });

  server.Get("/api/progress", [&store](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, to_json(store.progress()));
  });

  server.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
          std::rethrow_exception(ep);
        } catch (const ArgumentError& e) {
          error_reply(res, 400, e.what());
        } catch (const std::exception& e) {
          error_reply(res, 500, e.what());
        }
      });
}

AnnotationServer::AnnotationServer(AnnotationStore& store, std::string static_dir)
    : server_(std::make_unique<httplib::Server>()) {
  install_routes(*server_, store);
  if (!static_dir.empty() && !server_->set_mount_point("/", static_dir)) {
    throw IoError("cannot serve static files from " + static_dir);
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host)
                              : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void AnnotationServer::listen() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_) server_->stop();
}

bool AnnotationServer::running() const { return server_->is_running(); }

}  // namespace narrative::annotation
