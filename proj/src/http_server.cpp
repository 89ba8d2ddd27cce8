#include "policylab/http_server.hpp"

#include <httplib.h>

#include <functional>

namespace policylab::gateway {

namespace {

using Request = httplib::Request;
using Response = httplib::Response;

constexpr const char* kJson = "application/json";

struct Reply {
  int status = 200;
  Json body;
};

void send(Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump() + "\n", kJson);
}

std::string param(const Request& req, const char* name, bool required) {
  if (!req.has_param(name)) {
    if (required) throw Error(ErrorCode::BadRequest, std::string("query parameter '") + name + "' is required", name);
    return {};
  }
  return req.get_param_value(name);
}

std::optional<std::string> optional_param(const Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

Json body_json(const Request& req, bool allow_empty) {
  if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) {
    if (allow_empty) return Json::object();
    throw Error(ErrorCode::ParseError, "request body is empty", "$");
  }
  return parse_json(req.body, "request body");
}

registry::ListFilter list_filter(const Request& req, std::optional<std::string> type) {
  registry::ListFilter f;
  f.type = type ? type : optional_param(req, "type");
  f.kind = optional_param(req, "kind");
  f.name_substring = optional_param(req, "name");
  return f;
}

}  // namespace

struct HttpServer::Impl {
  Workbench& workbench;
  TokenMap tokens;
  httplib::Server server;

  using Handler = std::function<Reply(const abac::SubjectAttrs&, const Request&)>;

  const abac::SubjectAttrs& authenticate(const Request& req) const {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view scheme = "Bearer ";
    if (!std::string_view(header).starts_with(scheme)) {
      throw Error(ErrorCode::Unauthenticated, "missing bearer token", "Authorization");
    }
    const auto it = tokens.find(std::string_view(header).substr(scheme.size()));
    if (it == tokens.end()) throw Error(ErrorCode::Unauthenticated, "unknown token", "Authorization");
    return it->second;
  }

  void route(const char* method, const std::string& pattern, bool registration, Handler handler) {
    auto wrapped = [this, registration, handler = std::move(handler)](const Request& req, Response& res) {
      try {
        const auto& subject = authenticate(req);
        auto reply = handler(subject, req);
        send(res, reply.status, reply.body);
      } catch (const Error& e) {
        send(res, http_status(e.code(), registration), error_body(e));
      } catch (const Json::exception& e) {
        send(res, 400, error_body(Error(ErrorCode::BadRequest, e.what())));
      } catch (const std::exception& e) {
        send(res, 500, error_body(Error(ErrorCode::Internal, e.what())));
      }
    };
    const std::string m = method;
    if (m == "GET") server.Get(pattern, wrapped);
    else if (m == "POST") server.Post(pattern, wrapped);
    else if (m == "PUT") server.Put(pattern, wrapped);
    else server.Delete(pattern, wrapped);
  }

  Impl(Workbench& wb, TokenMap t) : workbench(wb), tokens(std::move(t)) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS"}});
    server.Options(R"(/api/v1/.*)", [](const Request&, Response& res) { res.status = 204; });
    server.set_error_handler([](const Request&, Response& res) {
      if (res.body.empty()) {
        const auto code = res.status == 404 ? ErrorCode::NotFound : ErrorCode::BadRequest;
        send(res, res.status, error_body(Error(code, "no such endpoint")));
      }
    });
    server.Get("/api/v1/health", [](const Request&, Response& res) { send(res, 200, Json{{"status", "ok"}}); });

    const std::string id = "([A-Za-z0-9_-]+)";
    route("POST", "/api/v1/functions", true, [this](auto& s, auto& req) {
      return Reply{201, workbench.register_function(s, body_json(req, false))};
    });
    route("GET", "/api/v1/functions", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.list(s, list_filter(req, "function"))};
    });
    route("POST", "/api/v1/datasets", true, [this](auto& s, auto& req) {
      return Reply{201, workbench.register_dataset(s, body_json(req, false))};
    });
    route("GET", "/api/v1/datasets", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.list(s, list_filter(req, "dataset"))};
    });
    route("GET", "/api/v1/artifacts", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.list(s, list_filter(req, std::nullopt))};
    });
    route("GET", "/api/v1/artifacts/" + id, false, [this](auto& s, auto& req) {
      return Reply{200, workbench.artifact(s, req.matches[1])};
    });
    route("PUT", "/api/v1/artifacts/" + id, true, [this](auto& s, auto& req) {
      return Reply{201, workbench.update_artifact(s, req.matches[1], body_json(req, false))};
    });
    route("DELETE", "/api/v1/artifacts/" + id, false, [this](auto& s, auto& req) {
      return Reply{200, workbench.delete_artifact(s, req.matches[1])};
    });
    route("POST", "/api/v1/datasets/" + id + "/ingest", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.ingest(s, req.matches[1], req.body)};
    });
    route("POST", "/api/v1/datasets/" + id + "/records", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.push(s, req.matches[1], body_json(req, false))};
    });
    route("GET", "/api/v1/datasets/" + id + "/records", false, [this](auto& s, auto& req) {
      FindQuery q;
      q.field = optional_param(req, "field");
      if (q.field) q.value = param(req, "value", true);
      return Reply{200, workbench.find_records(s, req.matches[1], q)};
    });
    route("DELETE", "/api/v1/datasets/" + id + "/subject", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.erase_subject(s, req.matches[1], param(req, "field", true),
                                                Json(param(req, "value", true)), param(req, "mode", true))};
    });
    route("POST", "/api/v1/retention/enforce", false, [this](auto& s, auto& req) {
      auto now_text = optional_param(req, "now");
      if (!now_text) {
        const auto body = body_json(req, true);
        if (body.contains("now")) now_text = require_string(body, "now", "");
      }
      std::optional<TimestampMs> now;
      if (now_text) {
        now = parse_rfc3339(*now_text);
        if (!now) throw Error(ErrorCode::BadRequest, "now: expected RFC 3339 timestamp", "now");
      }
      return Reply{200, workbench.enforce_retention(s, now)};
    });
    route("POST", "/api/v1/analytics/" + id + "/apply", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.apply_analytic(s, req.matches[1], param(req, "dataset", true), body_json(req, true))};
    });
    route("POST", "/api/v1/policies/runs", false, [this](auto& s, auto& req) {
      return Reply{202, workbench.start_run(s, body_json(req, false))};
    });
    route("GET", "/api/v1/policies/runs/" + id, false, [this](auto& s, auto& req) {
      return Reply{200, workbench.run_status(s, req.matches[1])};
    });
    route("GET", "/api/v1/policies/runs/" + id + "/results", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.run_results(s, req.matches[1])};
    });
    route("GET", "/api/v1/policies/runs/" + id + "/ranking", false, [this](auto& s, auto& req) {
      return Reply{200, workbench.run_ranking(s, req.matches[1])};
    });
  }
};

HttpServer::HttpServer(Workbench& workbench, TokenMap tokens) : impl_(std::make_unique<Impl>(workbench, std::move(tokens))) {}

HttpServer::~HttpServer() { stop(); }

void HttpServer::bind(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::Internal, "cannot bind " + host + ":" + std::to_string(port));
  }
}

int HttpServer::bind_any_port(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) throw Error(ErrorCode::Internal, "cannot bind " + host);
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace policylab::gateway
