#pragma once

// HTTP front end for SessionManager. JSON in, JSON out. Errors are
//   {"error": {"code": "<code>", "message": "...", "fields": [{"field", "message"}]}}
// with codes invalid_config, pending_assignment, no_pending_assignment,
// session_stopped, not_found, duplicate_id, invalid_request.
//
//   POST /sessions                   {"config": {...}, "id"?: str, "simulated"?: bool}
//   GET  /sessions/{id}              summary
//   POST /sessions/{id}/assignment   {"override"?: bool}
//   POST /sessions/{id}/outcome      {"value": number}; omit value in simulated mode
//   GET  /sessions/{id}/state        full state with per-stage history
//   GET  /sessions/{id}/log          event log

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "mpb/error.hpp"
#include "mpb/session.hpp"

namespace mpb {

inline int http_status(ErrorCode c) {
    switch (c) {
        case ErrorCode::not_found: return 404;
        case ErrorCode::pending_assignment:
        case ErrorCode::no_pending_assignment:
        case ErrorCode::session_stopped:
        case ErrorCode::duplicate_id: return 409;
        case ErrorCode::io_error: return 500;
        default: return 400;
    }
}

/// Public error code; internal argument errors are reported as invalid_request.
inline std::string wire_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::invalid_config:
        case ErrorCode::pending_assignment:
        case ErrorCode::no_pending_assignment:
        case ErrorCode::session_stopped:
        case ErrorCode::not_found:
        case ErrorCode::duplicate_id: return std::string(to_string(c));
        case ErrorCode::io_error: return "internal";
        default: return "invalid_request";
    }
}

inline json error_body(const Error& e) {
    json fields = json::array();
    for (const auto& f : e.fields()) fields.push_back({{"field", f.field}, {"message", f.message}});
    return {{"error", {{"code", wire_code(e.code())}, {"message", e.what()}, {"fields", std::move(fields)}}}};
}

class Service {
public:
    explicit Service(SessionManager& sessions) : sessions_(sessions) { routes(); }

    httplib::Server& server() { return server_; }

    /// Serves static files (the operator console build) under "/".
    bool mount_static(const std::string& dir) { return server_.set_mount_point("/", dir); }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    SessionManager& sessions_;
    httplib::Server server_;

    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static json body_of(const httplib::Request& req) {
        if (req.body.empty()) return json::object();
        try {
            json j = json::parse(req.body);
            if (!j.is_object()) fail(ErrorCode::invalid_argument, "request body must be a JSON object");
            return j;
        } catch (const json::parse_error&) {
            fail(ErrorCode::invalid_argument, "request body is not valid JSON");
        }
    }

    template <class F>
    static void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const Error& e) {
            reply(res, http_status(e.code()), error_body(e));
        } catch (const json::exception& e) {
            reply(res, 400, error_body(Error(ErrorCode::invalid_argument, e.what())));
        } catch (const std::exception& e) {
            reply(res, 500, error_body(Error(ErrorCode::io_error, e.what())));
        }
    }

    void routes() {
        server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json b = body_of(req);
                const json& cfg = b.contains("config") ? b["config"] : b;
                std::optional<std::string> id;
                if (b.contains("id")) {
                    if (!b["id"].is_string()) fail(ErrorCode::invalid_argument, "id must be a string");
                    id = b["id"].get<std::string>();
                }
                const bool sim = b.contains("simulated") && b["simulated"].is_boolean() && b["simulated"].get<bool>();
                const std::string sid = sessions_.create(cfg, id, sim);
                json out = sessions_.state(sid);
                reply(res, 201, out);
            });
        });
        server_.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, sessions_.summary(req.matches[1])); });
        });
        server_.Get(R"(/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, sessions_.state(req.matches[1])); });
        });
        server_.Get(R"(/sessions/([^/]+)/log)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, sessions_.log(req.matches[1])); });
        });
        server_.Post(R"(/sessions/([^/]+)/assignment)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json b = body_of(req);
                const bool ov = b.contains("override") && b["override"].is_boolean() && b["override"].get<bool>();
                reply(res, 200, to_json(sessions_.next_assignment(req.matches[1], ov)));
            });
        });
        server_.Post(R"(/sessions/([^/]+)/outcome)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json b = body_of(req);
                std::optional<double> v;
                if (b.contains("value") && !b["value"].is_null()) {
                    if (!b["value"].is_number()) fail(ErrorCode::invalid_argument, "value must be a number");
                    v = b["value"].get<double>();
                }
                reply(res, 200, sessions_.report_outcome(req.matches[1], v));
            });
        });
    }
};

}  // namespace mpb
